#pragma once

#include <cstdint>
#include <string_view>

namespace csinet {

/// Deterministic 64-bit generator (splitmix64 core). Streams are derived by
/// hashing (seed, name, index), so independently generated samples do not
/// depend on generation order and every run is reproducible from the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal, Box-Muller (pairs cached).
    double gaussian();

    /// Zero-mean Laplace with the given scale parameter b (variance 2b^2).
    double laplace(double scale);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a over bytes; also used for config fingerprints.
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ull);

}  // namespace csinet
