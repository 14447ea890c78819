#pragma once

// Synthetic clustered-multipath OFDM channel generation, the unitary
// 2D DFT to the angular-delay domain with delay truncation, normalization,
// and the dataset file format.

#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csinet/tensor.hpp"

namespace csinet::chan {

using cplx = std::complex<double>;

// Dense row-major complex matrix in double precision. Transform workspace
// only; network data lives in float32 Tensors.
struct CMat {
    int rows = 0, cols = 0;
    std::vector<cplx> v;

    CMat() = default;
    CMat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c)) {}

    cplx& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const cplx& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double fro_sq() const;  // squared Frobenius norm, accumulated in double
    bool all_finite() const;
};

// Generator scenario. Delay values are expressed in delay-bin units
// (tau * bandwidth), so the physical bandwidth never appears: path delays are
// uniform in [0, max_delay_fraction * n_delay] bins.
struct ScenarioParams {
    int n_tx = 32;     // transmit antennas (ULA, half-wavelength spacing)
    int n_sub = 1024;  // OFDM subcarriers
    int n_delay = 32;  // retained delay rows after truncation
    int cluster_count = 8;
    int paths_per_cluster = 6;
    double max_delay_fraction = 0.25;  // fraction of the n_delay-tap window
    double angular_spread_deg = 5.0;   // Laplacian scale of path angles about the cluster center
    std::uint64_t rng_seed = 1;

    void validate() const;  // throws ConfigError naming the offending field

    // "indoor-like" (small cell: short delay spread, many clusters) or
    // "outdoor-like" (large cell: long delay spread, few clusters).
    static ScenarioParams preset(const std::string& name);
};

// Accumulate one propagation path onto the spatial-frequency channel:
//   h[n,k] += gain * exp(+j*2*pi*delay_bins*n/n_sub) * exp(-j*pi*k*sin_theta)
// (half-wavelength ULA steering across antennas k, linear phase across
// subcarriers n so that a delay of d bins lands at delay-domain row d).
void add_path(CMat& h, cplx gain, double sin_theta, double delay_bins);

// Clustered multipath draw: cluster centers uniform in angle over
// (-pi/2, pi/2), one delay per cluster uniform in the delay window shared by
// its paths, path angles = center + Laplacian(angular_spread), i.i.d. complex
// Gaussian path gains with total average power 1. Deterministic in
// (params.rng_seed, sample_index).
CMat generate_channel(const ScenarioParams& p, std::int64_t sample_index);

// H = F_d * h * F_a^H with unitary DFT matrices, keeping rows 0..n_delay-1.
// n_delay == h.rows gives the full (energy-preserving) transform.
CMat dft2_truncate(const CMat& h, int n_delay);

// Inverse: zero-pad rows n_delay..n_sub-1, then h = F_d^H * H_padded * F_a.
CMat reconstruct_full(const CMat& h_trunc, int n_sub);

// -------------------------------------------------------------------------
// Datasets: float32 samples shaped [count, 2, rows, cols] with the real
// plane at channel 0 and the imaginary plane at channel 1. Files store raw
// (unnormalized) values; the normalization constants in the header come from
// the training split of the owning experiment.

namespace domain {
inline constexpr std::uint32_t angular_delay = 0;
inline constexpr std::uint32_t spatial_freq = 1;
}  // namespace domain

struct Dataset {
    std::uint32_t n_sub = 0;
    std::uint32_t n_tx = 0;
    std::uint32_t n_delay = 0;
    std::uint32_t domain_flag = domain::angular_delay;
    double norm_lo = 0.0;
    double norm_hi = 0.0;
    Tensor samples;  // [count, 2, rows(), n_tx]

    int rows() const {
        return static_cast<int>(domain_flag == domain::angular_delay ? n_delay : n_sub);
    }
    int cols() const { return static_cast<int>(n_tx); }
    std::int64_t count() const { return samples.rank() == 0 ? 0 : samples.dim(0); }
};

// Copy a complex matrix into sample slot `index` of d.samples.
void store_sample(Dataset& d, std::int64_t index, const CMat& m);
// Rebuild the complex matrix from sample slot `index` (raw, unnormalized).
CMat load_sample(const Dataset& d, std::int64_t index);

// Pooled min/max over real and imaginary parts of every sample.
std::pair<double, double> value_range(const Dataset& d);

// Affine map onto [0,1] using constants from the training split; values from
// other splits may land outside [0,1] and are left unclamped. Throws
// DataError when hi == lo.
Tensor normalize_values(const Tensor& raw, double lo, double hi);
Tensor denormalize_values(const Tensor& normed, double lo, double hi);

// File format (all integers little-endian):
//   16-byte magic "CSIDATASET" + six NUL bytes
//   u32 version (currently 1)
//   u32 n_sub, n_tx, n_delay, sample_count, domain_flag
//   f64 norm_lo, norm_hi
//   sample_count * rows * cols complex entries, row-major, each as
//   (re, im) float32 pairs.
void dataset_write(const std::string& path, const Dataset& d);
Dataset dataset_read(const std::string& path);

// Deterministic split generation: sample indices are global across splits
// (train gets [0, n_train), validation and test follow), so enlarging one
// split never changes another. Norm constants are computed on the training
// split and copied to the others.
struct SplitSpec {
    std::int64_t train = 0, val = 0, test = 0;
};
struct Splits {
    Dataset train, val, test;
};
Splits generate_splits(const ScenarioParams& p, const SplitSpec& sizes, std::uint32_t domain_flag,
                       int threads = 1);

}  // namespace csinet::chan
