#include "csinet/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "csinet/binio.hpp"
#include "csinet/errors.hpp"
#include "csinet/rng.hpp"

namespace csinet::chan {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kMagic[16] = {'C', 'S', 'I', 'D', 'A', 'T', 'A', 'S',
                             'E', 'T', 0,   0,   0,   0,   0,   0};

// roots[j] = exp(-i*2*pi*j/n); forward DFT twiddles by exact index reduction.
std::vector<cplx> dft_roots(int n) {
    std::vector<cplx> r(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double ang = -2.0 * kPi * static_cast<double>(j) / static_cast<double>(n);
        r[static_cast<size_t>(j)] = {std::cos(ang), std::sin(ang)};
    }
    return r;
}

[[noreturn]] void bad_scenario(const std::string& field, const std::string& why) {
    throw ConfigError("scenario." + field + " " + why);
}

}  // namespace

double CMat::fro_sq() const {
    double acc = 0.0;
    for (const cplx& z : v) acc += std::norm(z);
    return acc;
}

bool CMat::all_finite() const {
    for (const cplx& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

void ScenarioParams::validate() const {
    if (n_tx < 1) bad_scenario("n_tx", "must be >= 1");
    if (n_sub < 1) bad_scenario("n_sub", "must be >= 1");
    if (n_delay < 1 || n_delay > n_sub) bad_scenario("n_delay", "must satisfy 1 <= n_delay <= n_sub");
    if (cluster_count < 1) bad_scenario("cluster_count", "must be >= 1");
    if (paths_per_cluster < 1) bad_scenario("paths_per_cluster", "must be >= 1");
    if (!(max_delay_fraction > 0.0) || max_delay_fraction > 1.0)
        bad_scenario("max_delay_fraction", "must lie in (0, 1]");
    if (angular_spread_deg < 0.0) bad_scenario("angular_spread_deg", "must be >= 0");
}

ScenarioParams ScenarioParams::preset(const std::string& name) {
    ScenarioParams p;  // defaults are the indoor-like preset
    if (name == "indoor-like") return p;
    if (name == "outdoor-like") {
        p.cluster_count = 3;
        p.paths_per_cluster = 10;
        p.max_delay_fraction = 0.85;
        p.angular_spread_deg = 2.0;
        return p;
    }
    throw ConfigError("unknown scenario preset '" + name +
                      "' (expected indoor-like or outdoor-like)");
}

void add_path(CMat& h, cplx gain, double sin_theta, double delay_bins) {
    const int N = h.rows, K = h.cols;
    // antenna steering a[k] = exp(-i*pi*k*sin_theta) by recurrence
    std::vector<cplx> steer(static_cast<size_t>(K));
    const cplx wa{std::cos(kPi * sin_theta), -std::sin(kPi * sin_theta)};
    cplx a{1.0, 0.0};
    for (int k = 0; k < K; ++k) {
        steer[static_cast<size_t>(k)] = a;
        a *= wa;
    }
    // subcarrier phase u^n with u = exp(+i*2*pi*delay_bins/N)
    const double step = 2.0 * kPi * delay_bins / static_cast<double>(N);
    const cplx wu{std::cos(step), std::sin(step)};
    cplx u = gain;
    for (int n = 0; n < N; ++n) {
        cplx* row = &h.at(n, 0);
        for (int k = 0; k < K; ++k) row[k] += u * steer[static_cast<size_t>(k)];
        u *= wu;
    }
}

CMat generate_channel(const ScenarioParams& p, std::int64_t sample_index) {
    p.validate();
    Rng rng = Rng::stream(p.rng_seed, "channel-sample", static_cast<std::uint64_t>(sample_index));
    CMat h(p.n_sub, p.n_tx);

    const int total_paths = p.cluster_count * p.paths_per_cluster;
    const double gain_scale = std::sqrt(1.0 / (2.0 * static_cast<double>(total_paths)));
    const double delay_window = p.max_delay_fraction * static_cast<double>(p.n_delay);
    const double spread_rad = p.angular_spread_deg * kPi / 180.0;

    for (int c = 0; c < p.cluster_count; ++c) {
        const double center = rng.uniform(-kPi / 2.0, kPi / 2.0);
        const double cluster_delay = rng.uniform(0.0, delay_window);
        for (int q = 0; q < p.paths_per_cluster; ++q) {
            const double theta = center + rng.laplace(spread_rad);
            const cplx gain{rng.gaussian() * gain_scale, rng.gaussian() * gain_scale};
            add_path(h, gain, std::sin(theta), cluster_delay);
        }
    }
    return h;
}

CMat dft2_truncate(const CMat& h, int n_delay) {
    const int N = h.rows, K = h.cols;
    if (n_delay < 1 || n_delay > N)
        throw ShapeError("dft2_truncate: n_delay " + std::to_string(n_delay) +
                         " outside [1, " + std::to_string(N) + "]");
    const std::vector<cplx> rk = dft_roots(K);
    const std::vector<cplx> rn = dft_roots(N);
    const double inv_sk = 1.0 / std::sqrt(static_cast<double>(K));
    const double inv_sn = 1.0 / std::sqrt(static_cast<double>(N));

    // Delay axis first so only the retained rows are ever computed:
    // G[m,k] = (1/sqrt(N)) sum_n exp(-i*2*pi*m*n/N) h[n,k], m < n_delay.
    CMat g(n_delay, K);
    for (int m = 0; m < n_delay; ++m) {
        cplx* grow = &g.at(m, 0);
        for (int n = 0; n < N; ++n) {
            const cplx w = rn[static_cast<size_t>((static_cast<std::int64_t>(m) * n) % N)];
            const cplx* row = &h.at(n, 0);
            for (int k = 0; k < K; ++k) grow[k] += w * row[k];
        }
        for (int k = 0; k < K; ++k) grow[k] *= inv_sn;
    }
    // Angular axis: H[m,q] = (1/sqrt(K)) sum_k G[m,k] * exp(+i*2*pi*k*q/K).
    CMat out(n_delay, K);
    for (int m = 0; m < n_delay; ++m) {
        const cplx* grow = &g.at(m, 0);
        for (int q = 0; q < K; ++q) {
            cplx acc{0.0, 0.0};
            for (int k = 0; k < K; ++k)
                acc += grow[k] * std::conj(rk[static_cast<size_t>((k * q) % K)]);
            out.at(m, q) = acc * inv_sk;
        }
    }
    return out;
}

CMat reconstruct_full(const CMat& h_trunc, int n_sub) {
    const int M = h_trunc.rows, K = h_trunc.cols;
    if (n_sub < M)
        throw ShapeError("reconstruct_full: n_sub " + std::to_string(n_sub) +
                         " smaller than retained rows " + std::to_string(M));
    const std::vector<cplx> rk = dft_roots(K);
    const std::vector<cplx> rn = dft_roots(n_sub);
    const double inv_sk = 1.0 / std::sqrt(static_cast<double>(K));
    const double inv_sn = 1.0 / std::sqrt(static_cast<double>(n_sub));

    // stage 1: G[m,k] = (1/sqrt(K)) sum_q H[m,q] * exp(-i*2*pi*q*k/K)
    CMat g(M, K);
    for (int m = 0; m < M; ++m) {
        const cplx* row = &h_trunc.at(m, 0);
        for (int k = 0; k < K; ++k) {
            cplx acc{0.0, 0.0};
            for (int q = 0; q < K; ++q) acc += row[q] * rk[static_cast<size_t>((q * k) % K)];
            g.at(m, k) = acc * inv_sk;
        }
    }
    // stage 2: h[n,k] = (1/sqrt(n_sub)) sum_{m<M} exp(+i*2*pi*m*n/n_sub) G[m,k]
    CMat out(n_sub, K);
    for (int n = 0; n < n_sub; ++n) {
        cplx* orow = &out.at(n, 0);
        for (int m = 0; m < M; ++m) {
            const cplx w =
                std::conj(rn[static_cast<size_t>((static_cast<std::int64_t>(m) * n) % n_sub)]);
            const cplx* grow = &g.at(m, 0);
            for (int k = 0; k < K; ++k) orow[k] += w * grow[k];
        }
        for (int k = 0; k < K; ++k) orow[k] *= inv_sn;
    }
    return out;
}

void store_sample(Dataset& d, std::int64_t index, const CMat& m) {
    const int R = d.rows(), C = d.cols();
    if (m.rows != R || m.cols != C)
        throw ShapeError("store_sample: matrix " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols) + " does not match dataset " + std::to_string(R) +
                         "x" + std::to_string(C));
    const std::int64_t plane = static_cast<std::int64_t>(R) * C;
    float* base = d.samples.data() + index * 2 * plane;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            const cplx z = m.at(r, c);
            base[static_cast<std::int64_t>(r) * C + c] = static_cast<float>(z.real());
            base[plane + static_cast<std::int64_t>(r) * C + c] = static_cast<float>(z.imag());
        }
}

CMat load_sample(const Dataset& d, std::int64_t index) {
    const int R = d.rows(), C = d.cols();
    const std::int64_t plane = static_cast<std::int64_t>(R) * C;
    const float* base = d.samples.data() + index * 2 * plane;
    CMat m(R, C);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            m.at(r, c) = {static_cast<double>(base[static_cast<std::int64_t>(r) * C + c]),
                          static_cast<double>(base[plane + static_cast<std::int64_t>(r) * C + c])};
    return m;
}

std::pair<double, double> value_range(const Dataset& d) {
    if (d.count() == 0) throw DataError("value_range: empty dataset");
    double lo = d.samples[0], hi = d.samples[0];
    for (std::int64_t i = 1; i < d.samples.numel(); ++i) {
        const double v = d.samples[i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

Tensor normalize_values(const Tensor& raw, double lo, double hi) {
    if (!(hi > lo)) throw DataError("normalize: degenerate range lo=" + std::to_string(lo) +
                                    " hi=" + std::to_string(hi));
    const double scale = 1.0 / (hi - lo);
    Tensor out = raw;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<float>((static_cast<double>(out[i]) - lo) * scale);
    return out;
}

Tensor denormalize_values(const Tensor& normed, double lo, double hi) {
    if (!(hi > lo)) throw DataError("denormalize: degenerate range lo=" + std::to_string(lo) +
                                    " hi=" + std::to_string(hi));
    Tensor out = normed;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<float>(static_cast<double>(out[i]) * (hi - lo) + lo);
    return out;
}

void dataset_write(const std::string& path, const Dataset& d) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open dataset for writing: " + path);
    os.write(kMagic, 16);
    binio::put_u32(os, kDatasetVersion);
    binio::put_u32(os, d.n_sub);
    binio::put_u32(os, d.n_tx);
    binio::put_u32(os, d.n_delay);
    binio::put_u32(os, static_cast<std::uint32_t>(d.count()));
    binio::put_u32(os, d.domain_flag);
    binio::put_f64(os, d.norm_lo);
    binio::put_f64(os, d.norm_hi);

    const int R = d.rows(), C = d.cols();
    const std::int64_t plane = static_cast<std::int64_t>(R) * C;
    std::vector<float> staging(static_cast<size_t>(plane) * 2);
    for (std::int64_t s = 0; s < d.count(); ++s) {
        const float* base = d.samples.data() + s * 2 * plane;
        for (std::int64_t e = 0; e < plane; ++e) {
            staging[static_cast<size_t>(2 * e)] = base[e];           // re
            staging[static_cast<size_t>(2 * e + 1)] = base[plane + e];  // im
        }
        binio::put_f32_array(os, staging.data(), staging.size());
    }
    os.flush();
    if (!os) throw DataError("failed writing dataset: " + path);
}

Dataset dataset_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset: " + path);

    char magic[16];
    if (!is.read(magic, 16) || !std::equal(magic, magic + 16, kMagic))
        throw FormatError("dataset: bad magic", 0);
    std::uint32_t version = 0;
    if (!binio::get_u32(is, version)) throw FormatError("dataset: truncated header", 16);
    if (version != kDatasetVersion)
        throw FormatError("dataset: unsupported version " + std::to_string(version), 16);

    Dataset d;
    std::uint32_t count = 0;
    std::uint32_t* fields[5] = {&d.n_sub, &d.n_tx, &d.n_delay, &count, &d.domain_flag};
    for (int i = 0; i < 5; ++i)
        if (!binio::get_u32(is, *fields[i]))
            throw FormatError("dataset: truncated header", 20 + 4 * i);
    if (!binio::get_f64(is, d.norm_lo) || !binio::get_f64(is, d.norm_hi))
        throw FormatError("dataset: truncated header", 40);

    if (d.n_sub == 0 || d.n_tx == 0 || d.n_delay == 0 || d.n_delay > d.n_sub)
        throw FormatError("dataset: implausible dimensions", 20);
    if (d.domain_flag != domain::angular_delay && d.domain_flag != domain::spatial_freq)
        throw FormatError("dataset: unknown domain flag " + std::to_string(d.domain_flag), 36);
    if (d.n_tx > 4096 || d.n_sub > (1u << 20) || count > (1u << 24))
        throw FormatError("dataset: implausible dimensions", 20);

    const int R = d.rows(), C = d.cols();
    const std::int64_t plane = static_cast<std::int64_t>(R) * C;
    d.samples = Tensor::zeros({static_cast<int>(count), 2, R, C});
    std::vector<float> staging(static_cast<size_t>(plane) * 2);
    const std::int64_t header_bytes = 56;
    for (std::uint32_t s = 0; s < count; ++s) {
        if (!binio::get_f32_array(is, staging.data(), staging.size()))
            throw FormatError("dataset: truncated at sample " + std::to_string(s),
                              header_bytes + static_cast<std::int64_t>(s) * plane * 8);
        float* base = d.samples.data() + static_cast<std::int64_t>(s) * 2 * plane;
        for (std::int64_t e = 0; e < plane; ++e) {
            base[e] = staging[static_cast<size_t>(2 * e)];
            base[plane + e] = staging[static_cast<size_t>(2 * e + 1)];
        }
    }
    char extra;
    if (is.read(&extra, 1))
        throw FormatError("dataset: trailing bytes after last sample",
                          header_bytes + static_cast<std::int64_t>(count) * plane * 8);
    return d;
}

Splits generate_splits(const ScenarioParams& p, const SplitSpec& sizes,
                       std::uint32_t domain_flag, int threads) {
    p.validate();
    if (sizes.train < 1) throw ConfigError("split.train must be >= 1 (norm constants come from it)");
    if (sizes.val < 0 || sizes.test < 0) throw ConfigError("split sizes must be >= 0");
    if (domain_flag != domain::angular_delay && domain_flag != domain::spatial_freq)
        throw ConfigError("unknown domain flag " + std::to_string(domain_flag));
    threads = std::max(1, threads);

    auto make_dataset = [&](std::int64_t n) {
        Dataset d;
        d.n_sub = static_cast<std::uint32_t>(p.n_sub);
        d.n_tx = static_cast<std::uint32_t>(p.n_tx);
        d.n_delay = static_cast<std::uint32_t>(p.n_delay);
        d.domain_flag = domain_flag;
        d.samples = Tensor::zeros({static_cast<int>(n), 2, d.rows(), d.cols()});
        return d;
    };
    Splits out{make_dataset(sizes.train), make_dataset(sizes.val), make_dataset(sizes.test)};

    // Global sample indices: train, then val, then test.
    auto fill_range = [&](Dataset& d, std::int64_t index_base, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const CMat h = generate_channel(p, index_base + i);
            if (d.domain_flag == domain::angular_delay)
                store_sample(d, i, dft2_truncate(h, p.n_delay));
            else
                store_sample(d, i, h);
        }
    };
    auto fill_split = [&](Dataset& d, std::int64_t index_base) {
        const std::int64_t n = d.count();
        if (n == 0) return;
        const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
        if (workers <= 1) {
            fill_range(d, index_base, 0, n);
            return;
        }
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        const std::int64_t chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::int64_t lo = w * chunk, hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(fill_range, std::ref(d), index_base, lo, hi);
        }
        for (auto& t : pool) t.join();
    };

    fill_split(out.train, 0);
    fill_split(out.val, sizes.train);
    fill_split(out.test, sizes.train + sizes.val);

    const auto [lo, hi] = value_range(out.train);
    for (Dataset* d : {&out.train, &out.val, &out.test}) {
        d->norm_lo = lo;
        d->norm_hi = hi;
    }
    return out;
}

}  // namespace csinet::chan
