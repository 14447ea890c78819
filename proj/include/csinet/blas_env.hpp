#pragma once

namespace csinet {

/// OpenBLAS picks its kernel family from the CPU model string, which many
/// hypervisors mask; on masked AVX-512 machines it silently falls back to a
/// ~4x slower kernel. The selection is read from OPENBLAS_CORETYPE before
/// main() runs, so when the variable is unset and the CPU reports AVX-512,
/// this sets it and re-execs the current process once. Call it first thing
/// in main(), passing argv through. No-op everywhere else.
void ensure_blas_coretype(char** argv);

}  // namespace csinet
