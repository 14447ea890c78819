// Metric tests: hand-computed NMSE cases, cosine similarity against an
// independent double-precision reference, benchmark timing behavior, and the
// report renderers.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csinet/baselines.hpp"
#include "csinet/channel.hpp"
#include "csinet/errors.hpp"
#include "csinet/metrics.hpp"
#include "csinet/rng.hpp"
#include "csinet/tensor.hpp"
#include "doctest.h"

using namespace csinet;
using chan::CMat;
using chan::cplx;

namespace {

CMat random_cmat(int rows, int cols, std::uint64_t seed) {
    CMat m(rows, cols);
    Rng rng = Rng::stream(seed, "metrics-cmat");
    for (auto& z : m.v) z = cplx(rng.gaussian(), rng.gaussian());
    return m;
}

// Independent direct-summation reference for the cosine similarity, with
// separate real/imaginary accumulators (no std::complex arithmetic shared
// with the implementation).
double rho_reference(const std::vector<CMat>& truth, const std::vector<CMat>& est,
                     std::int64_t* excluded_out) {
    double sample_acc = 0.0;
    std::int64_t excluded = 0;
    for (size_t s = 0; s < truth.size(); ++s) {
        const CMat& t = truth[s];
        const CMat& e = est[s];
        double row_acc = 0.0;
        int used = 0;
        for (int n = 0; n < t.rows; ++n) {
            double re = 0.0, im = 0.0, tn = 0.0, en = 0.0;
            for (int k = 0; k < t.cols; ++k) {
                const double tr = t.at(n, k).real(), ti = t.at(n, k).imag();
                const double er = e.at(n, k).real(), ei = e.at(n, k).imag();
                // conj(e) * t summed
                re += er * tr + ei * ti;
                im += er * ti - ei * tr;
                tn += tr * tr + ti * ti;
                en += er * er + ei * ei;
            }
            if (tn <= 0.0 || en <= 0.0) {
                ++excluded;
                continue;
            }
            row_acc += std::sqrt(re * re + im * im) / (std::sqrt(tn) * std::sqrt(en));
            ++used;
        }
        sample_acc += row_acc / used;
    }
    if (excluded_out) *excluded_out = excluded;
    return sample_acc / static_cast<double>(truth.size());
}

}  // namespace

TEST_CASE("nmse handles the hand-computed cases") {
    // Perfect reconstruction hits the finite floor.
    Tensor h({1, 2, 2, 2}, {1, 0, 0, 1, 0, 0, 0, 0});
    CHECK(metrics::nmse_db(h, h) == metrics::kNmseFloorDb);

    // Zero estimate: ratio is exactly 1, so 0 dB.
    Tensor zero({1, 2, 2, 2});
    CHECK(metrics::nmse_db(h, zero) == 0.0);

    // diag(1,1) truth, estimate missing one unit entry: ratio 1/2.
    Tensor miss({1, 2, 2, 2}, {1, 0, 0, 0, 0, 0, 0, 0});
    CHECK(std::abs(metrics::nmse_db(h, miss) - (-3.0103)) < 1e-4);

    // Mean of per-sample ratios, not mean of per-sample dBs: ratios {1, 1/4}
    // average to 0.625 -> -2.0412 dB (a dB-mean would give -3.01).
    Tensor t2({2, 2, 1, 1}, {1, 0, 2, 0});
    Tensor e2({2, 2, 1, 1}, {0, 0, 1, 0});
    CHECK(std::abs(metrics::nmse_db(t2, e2) - 10.0 * std::log10(0.625)) < 1e-12);

    // Scale covariance: both inputs scaled by c > 0 leave the dB unchanged.
    // All values and the scale are exact binary fractions, so the scaled
    // ratios are bitwise identical to the originals.
    Tensor ts({2, 2, 1, 1}, {1.0f, -0.5f, 2.0f, 0.25f});
    Tensor es({2, 2, 1, 1}, {0.75f, -0.125f, 1.5f, 0.5f});
    Tensor tsc = ts, esc = es;
    for (std::int64_t i = 0; i < tsc.numel(); ++i) {
        tsc[i] *= 4.0f;
        esc[i] *= 4.0f;
    }
    CHECK(metrics::nmse_db(ts, es) == metrics::nmse_db(tsc, esc));

    // Errors.
    Tensor zt({2, 2, 1, 1}, {1, 0, 0, 0});  // second sample all-zero truth
    CHECK_THROWS_AS((void)metrics::nmse_db(zt, Tensor({2, 2, 1, 1})), DataError);
    CHECK_THROWS_AS((void)metrics::nmse_db(h, Tensor({1, 2, 2, 3})), ShapeError);
    CHECK_THROWS_AS((void)metrics::nmse_db(Tensor({4}), Tensor({4})), ShapeError);
}

TEST_CASE("cosine similarity is scale and phase invariant") {
    const CMat h = random_cmat(6, 4, 1);
    CMat scaled(6, 4);
    const cplx c(0.3, -1.7);
    for (size_t i = 0; i < h.v.size(); ++i) scaled.v[i] = c * h.v[i];
    const metrics::RhoResult r = metrics::cosine_similarity({h}, {scaled});
    CHECK(std::abs(r.rho - 1.0) < 1e-12);
    CHECK(r.excluded_rows == 0);
}

TEST_CASE("cosine similarity of orthogonal rows is zero") {
    CMat t(3, 4), e(3, 4);
    for (int n = 0; n < 3; ++n) {
        t.at(n, 0) = cplx(1.0, 0.0);
        e.at(n, 1) = cplx(0.0, 2.0);
    }
    const metrics::RhoResult r = metrics::cosine_similarity({t}, {e});
    CHECK(r.rho == 0.0);
}

TEST_CASE("cosine similarity matches the direct-summation reference") {
    std::vector<CMat> truth, est;
    for (int s = 0; s < 7; ++s) {
        truth.push_back(random_cmat(16, 8, 100 + static_cast<std::uint64_t>(s)));
        est.push_back(random_cmat(16, 8, 200 + static_cast<std::uint64_t>(s)));
    }
    const metrics::RhoResult r = metrics::cosine_similarity(truth, est);
    std::int64_t ref_excluded = 0;
    const double ref = rho_reference(truth, est, &ref_excluded);
    CHECK(std::abs(r.rho - ref) < 1e-9);
    CHECK(r.excluded_rows == ref_excluded);
    CHECK(r.rho >= 0.0);
    CHECK(r.rho <= 1.0 + 1e-12);

    // Parallel evaluation returns the identical result.
    const metrics::RhoResult r4 = metrics::cosine_similarity(truth, est, 4);
    CHECK(r4.rho == r.rho);
    CHECK(r4.excluded_rows == r.excluded_rows);
}

TEST_CASE("zero-norm subcarrier rows are excluded and counted") {
    CMat t = random_cmat(4, 3, 300);
    CMat e = random_cmat(4, 3, 301);
    for (int k = 0; k < 3; ++k) e.at(2, k) = cplx(0.0, 0.0);  // kill one estimate row

    const metrics::RhoResult r = metrics::cosine_similarity({t}, {e});
    CHECK(r.excluded_rows == 1);

    // Equals the mean over the three surviving rows.
    double acc = 0.0;
    for (int n : {0, 1, 3}) {
        cplx inner{0, 0};
        double tn = 0, en = 0;
        for (int k = 0; k < 3; ++k) {
            inner += std::conj(e.at(n, k)) * t.at(n, k);
            tn += std::norm(t.at(n, k));
            en += std::norm(e.at(n, k));
        }
        acc += std::abs(inner) / (std::sqrt(tn) * std::sqrt(en));
    }
    CHECK(std::abs(r.rho - acc / 3.0) < 1e-12);

    // A sample with no usable rows is a data error.
    CMat dead(4, 3);
    CHECK_THROWS_AS((void)metrics::cosine_similarity({t}, {dead}), DataError);
    CHECK_THROWS_AS((void)metrics::cosine_similarity({t}, {t, t}), ShapeError);
}

TEST_CASE("rho is 1 across the truncation round-trip on band-limited channels") {
    // A channel whose delay content lives entirely in the retained rows is
    // reconstructed exactly, so the full-channel similarity is 1.
    const int n_sub = 64, n_delay = 16, n_tx = 8;
    CMat trunc = random_cmat(n_delay, n_tx, 400);
    const CMat full = chan::reconstruct_full(trunc, n_sub);
    const CMat round = chan::reconstruct_full(chan::dft2_truncate(full, n_delay), n_sub);
    const metrics::RhoResult r = metrics::cosine_similarity({full}, {round});
    CHECK(std::abs(r.rho - 1.0) < 1e-9);
    CHECK(r.excluded_rows == 0);
}

TEST_CASE("benchmark excludes warm-up and reports spread") {
    // First call burns ~30 ms; later calls are nearly free.
    int calls = 0;
    const auto fn = [&calls]() {
        ++calls;
        if (calls == 1) {
            const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(30);
            while (std::chrono::steady_clock::now() < until) {
            }
        }
    };

    calls = 0;
    const metrics::BenchmarkResult cold = metrics::benchmark_decode(fn, 3, /*warmup=*/0);
    calls = 0;
    const metrics::BenchmarkResult warm = metrics::benchmark_decode(fn, 3, /*warmup=*/5);
    CHECK(cold.mean_seconds > warm.mean_seconds);
    CHECK(cold.mean_seconds >= 0.030 / 3.0 * 0.5);  // the spike is inside the stats
    CHECK(warm.mean_seconds < 0.005);               // and absent here
    CHECK(cold.max_seconds >= cold.min_seconds);
    CHECK(cold.variance_seconds2 > 0.0);

    // A single repetition is one timed run.
    calls = 1;  // spike already consumed
    const metrics::BenchmarkResult one = metrics::benchmark_decode(fn, 1, 0);
    CHECK(one.repetitions == 1);
    CHECK(one.variance_seconds2 == 0.0);
    CHECK(one.mean_seconds == one.min_seconds);
    CHECK(one.mean_seconds == one.max_seconds);

    CHECK_THROWS_AS((void)metrics::benchmark_decode(fn, 0, 0), UsageError);
}

TEST_CASE("solver time grows with the iteration budget") {
    const cs::SensingMatrix A = cs::make_sensing_matrix(128, 512, 7);
    Tensor y({128, 4});
    Rng rng = Rng::stream(8, "bench-y");
    for (auto& v : y.values()) v = static_cast<float>(rng.gaussian());

    const auto timed = [&](int iters) {
        cs::SolverConfig cfg;
        cfg.max_iters = iters;
        cfg.tolerance = 1e-300;  // unreachable: every run uses the full budget
        const auto fn = [&]() { (void)cs::fista_lasso(y, A, 0.005, cfg); };
        return metrics::benchmark_decode(fn, 3, /*warmup=*/1).mean_seconds;
    };
    const double t50 = timed(50), t100 = timed(100), t500 = timed(500);
    CHECK(t50 < t100);
    CHECK(t100 < t500);
}

TEST_CASE("best-in-cell marking and report rendering") {
    std::vector<metrics::EvalRow> rows(5);
    rows[0] = {"csinet", "indoor-like", 0.25, -17.3, 0.99, 0, 1e-3, 1000, 0xabcdULL, false, false};
    rows[1] = {"lasso", "indoor-like", 0.25, -7.1, 0.90, 0, 2e-1, 1000, 0xabcdULL, false, false};
    rows[2] = {"csinet", "indoor-like", 0.0625, -8.6, 0.93, 0, 1e-3, 1000, 0xabcdULL, false, false};
    rows[3] = {"lasso", "indoor-like", 0.0625, -2.7, 0.80, 0, 2e-1, 1000, 0xabcdULL, false, false};
    rows[4] = {"amp", "indoor-like", 0.0625, 0, 0, 0, 0, 0, 0xabcdULL, false, true};  // absent

    metrics::mark_best(rows);
    // Agrees with a direct argmin per cell.
    for (const auto& r : rows) {
        if (r.absent) {
            CHECK_FALSE(r.best_in_cell);
            continue;
        }
        double best = r.nmse_db;
        for (const auto& o : rows)
            if (!o.absent && o.scenario == r.scenario && o.gamma == r.gamma)
                best = std::min(best, o.nmse_db);
        CHECK(r.best_in_cell == (r.nmse_db == best));
    }
    CHECK(rows[0].best_in_cell);
    CHECK_FALSE(rows[1].best_in_cell);
    CHECK(rows[2].best_in_cell);

    const std::string csv = metrics::report_csv(rows);
    CHECK(csv.find("method,scenario,gamma,nmse_db,rho,excluded_rows,mean_decode_seconds,"
                   "sample_count,fingerprint,best,status\n") == 0);
    CHECK(csv.find("csinet,indoor-like,1/4,-17.3000,0.990000,0,1.000000e-03,1000,"
                   "000000000000abcd,1,ok\n") != std::string::npos);
    CHECK(csv.find("amp,indoor-like,1/16,,,,,0,000000000000abcd,0,absent\n") != std::string::npos);
    // Deterministic rendering.
    CHECK(metrics::report_csv(rows) == csv);

    const std::string table = metrics::report_table(rows);
    CHECK(table.find("csinet") != std::string::npos);
    CHECK(table.find('*') != std::string::npos);
    CHECK(table.find("absent") != std::string::npos);
}
