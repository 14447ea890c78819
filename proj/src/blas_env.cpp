#include "csinet/blas_env.hpp"

#include <cstdlib>
#include <unistd.h>

namespace csinet {

void ensure_blas_coretype(char** argv) {
#if defined(__x86_64__) && defined(__linux__)
    if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
    if (!__builtin_cpu_supports("avx512f")) return;
    ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
    ::execv("/proc/self/exe", argv);
    // execv only returns on failure; continue with the slow kernels.
#else
    (void)argv;
#endif
}

}  // namespace csinet
