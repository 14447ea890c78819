#include "csinet/baselines.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "csinet/errors.hpp"
#include "csinet/rng.hpp"

namespace csinet::cs {

namespace {

// C [r, cols] = op(A) * op(B) in row-major float32.
void gemm(bool ta, bool tb, int r, int cols, int inner, const float* a, int lda, const float* b,
          int ldb, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, r,
                cols, inner, 1.0f, a, lda, b, ldb, 0.0f, c, ldc);
}

void check_measurements(const Tensor& y, const SensingMatrix& A) {
    if (A.a.rank() != 2 || A.a.dim(0) != A.m || A.a.dim(1) != A.n)
        throw ShapeError("sensing matrix tensor does not match its declared dims");
    if (y.rank() != 2 || y.dim(0) != A.m)
        throw ShapeError("measurements must be [m, B] with m=" + std::to_string(A.m) + ", got " +
                         y.shape_str());
}

double column_sq(const Tensor& t, int j) {
    const int rows = t.dim(0), B = t.dim(1);
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        const double v = t[static_cast<std::int64_t>(i) * B + j];
        acc += v * v;
    }
    return acc;
}

}  // namespace

SensingMatrix make_sensing_matrix(int m, int n, std::uint64_t seed) {
    if (m < 1 || n < 1) throw ConfigError("sensing matrix dims must be positive");
    SensingMatrix A;
    A.m = m;
    A.n = n;
    A.seed = seed;
    A.a = Tensor::zeros({m, n});
    Rng rng = Rng::stream(seed, "sensing-matrix");
    const double sigma = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::int64_t i = 0; i < A.a.numel(); ++i)
        A.a[i] = static_cast<float>(rng.gaussian() * sigma);
    return A;
}

float soft_threshold(float x, float t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0f;
}

double lipschitz_estimate(const SensingMatrix& A) {
    Rng rng = Rng::stream(A.seed, "power-iteration");
    Tensor v = Tensor::zeros({A.n, 1});
    for (int i = 0; i < A.n; ++i) v[i] = static_cast<float>(rng.gaussian());
    Tensor av = Tensor::zeros({A.m, 1});
    Tensor atav = Tensor::zeros({A.n, 1});
    double eig = 0.0;
    for (int it = 0; it < 30; ++it) {
        gemm(false, false, A.m, 1, A.n, A.a.data(), A.n, v.data(), 1, av.data(), 1);
        gemm(true, false, A.n, 1, A.m, A.a.data(), A.n, av.data(), 1, atav.data(), 1);
        double nrm = std::sqrt(atav.sum_squares());
        if (nrm == 0.0) return 1.0;  // A == 0; any step works
        eig = nrm / std::max(1e-300, std::sqrt(v.sum_squares()));
        for (int i = 0; i < A.n; ++i) v[i] = static_cast<float>(atav[i] / nrm);
    }
    return eig * 1.02;
}

FistaResult fista_lasso(const Tensor& y, const SensingMatrix& A, double lambda,
                        const SolverConfig& cfg) {
    check_measurements(y, A);
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (cfg.tolerance <= 0.0) throw ConfigError("solver tolerance must be > 0");
    const int m = A.m, n = A.n, B = y.dim(1);
    const double L = lipschitz_estimate(A);
    const float step = static_cast<float>(1.0 / L);
    const float thresh = static_cast<float>(lambda / L);

    // Monotone FISTA: z is the accelerated candidate, x keeps the best-so-far
    // iterate per column, y_pt the extrapolation point. The products A*x and
    // A*z are tracked so each iteration costs two GEMMs.
    Tensor x = Tensor::zeros({n, B}), x_prev = x, z = x, y_pt = x;
    Tensor ax = Tensor::zeros({m, B}), ax_prev = ax, az = ax, ay = ax;
    Tensor resid = Tensor::zeros({m, B});
    Tensor grad = Tensor::zeros({n, B});
    std::vector<double> obj(static_cast<size_t>(B), std::numeric_limits<double>::infinity());
    double t_k = 1.0;

    FistaResult out;
    for (int it = 0; it < cfg.max_iters; ++it) {
        // gradient at the extrapolation point
        for (std::int64_t i = 0; i < resid.numel(); ++i) resid[i] = ay[i] - y[i];
        gemm(true, false, n, B, m, A.a.data(), n, resid.data(), B, grad.data(), B);
        for (std::int64_t i = 0; i < z.numel(); ++i)
            z[i] = soft_threshold(y_pt[i] - step * grad[i], thresh);
        gemm(false, false, m, B, n, A.a.data(), n, z.data(), B, az.data(), B);
        ax_prev = ax;  // A * x_{k-1}: x_prev is the pre-update x

        // per-column objective of the candidate; keep only improvements
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
        double max_rel_change = 0.0;
        for (int j = 0; j < B; ++j) {
            double fit = 0.0, l1 = 0.0;
            for (int i = 0; i < m; ++i) {
                const double r = static_cast<double>(az[static_cast<std::int64_t>(i) * B + j]) -
                                 y[static_cast<std::int64_t>(i) * B + j];
                fit += r * r;
            }
            for (int i = 0; i < n; ++i)
                l1 += std::abs(static_cast<double>(z[static_cast<std::int64_t>(i) * B + j]));
            const double cand = 0.5 * fit + lambda * l1;
            const bool accept = cand <= obj[static_cast<size_t>(j)] + 1e-12;

            // movement of the candidate relative to the kept iterate; rejected
            // candidates still count, so stagnation is only declared when the
            // underlying sequence settles
            double delta_sq = 0.0, base_sq = 0.0;
            for (int i = 0; i < n; ++i) {
                const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
                const float xo = x[k];
                const float d = z[k] - xo;
                delta_sq += static_cast<double>(d) * d;
                base_sq += static_cast<double>(xo) * xo;
                x_prev[k] = xo;
                if (accept) x[k] = z[k];
            }
            if (accept) {
                obj[static_cast<size_t>(j)] = cand;
                for (int i = 0; i < m; ++i) {
                    const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
                    ax[k] = az[k];
                }
            }
            const double rel = std::sqrt(delta_sq) / std::max(std::sqrt(base_sq), 1e-12);
            max_rel_change = std::max(max_rel_change, rel);
        }
        if (cfg.record_objective) out.objective_trace.push_back(obj);

        // extrapolation: y = x + (t/t+)(z - x) + ((t-1)/t+)(x - x_prev), and
        // A*y from the tracked products by linearity
        const float c1 = static_cast<float>(t_k / t_next);
        const float c2 = static_cast<float>((t_k - 1.0) / t_next);
        for (std::int64_t i = 0; i < x.numel(); ++i)
            y_pt[i] = x[i] + c1 * (z[i] - x[i]) + c2 * (x[i] - x_prev[i]);
        for (std::int64_t i = 0; i < ax.numel(); ++i)
            ay[i] = ax[i] + c1 * (az[i] - ax[i]) + c2 * (ax[i] - ax_prev[i]);
        t_k = t_next;
        out.iters = it + 1;

        if (it > 0 && max_rel_change < cfg.tolerance) {
            out.converged = true;
            break;
        }
    }
    out.x = std::move(x);
    return out;
}

AmpResult amp_recover(const Tensor& y, const SensingMatrix& A, const SolverConfig& cfg) {
    check_measurements(y, A);
    if (cfg.tolerance <= 0.0) throw ConfigError("solver tolerance must be > 0");
    const int m = A.m, n = A.n, B = y.dim(1);

    Tensor x = Tensor::zeros({n, B});
    Tensor x_best = x;
    Tensor ax = Tensor::zeros({m, B});
    Tensor resid = y;  // r_0 = y - A*0
    Tensor resid_prev = Tensor::zeros({m, B});
    Tensor pseudo = Tensor::zeros({n, B});
    std::vector<double> best_res(static_cast<size_t>(B), std::numeric_limits<double>::infinity());
    std::vector<double> prev_res(static_cast<size_t>(B), std::numeric_limits<double>::infinity());
    std::vector<int> grow_count(static_cast<size_t>(B), 0);
    std::vector<double> nnz(static_cast<size_t>(B), 0.0);
    std::vector<char> frozen(static_cast<size_t>(B), 0);

    AmpResult out;
    for (int it = 0; it < cfg.max_iters; ++it) {
        // pseudo-data x + A^T r
        gemm(true, false, n, B, m, A.a.data(), n, resid.data(), B, pseudo.data(), B);
        for (std::int64_t i = 0; i < pseudo.numel(); ++i) pseudo[i] += x[i];

        double max_rel_change = 0.0;
        for (int j = 0; j < B; ++j) {
            if (frozen[static_cast<size_t>(j)]) continue;
            // threshold from the residual standard deviation of this column
            const double res_sq = column_sq(resid, j);
            const double tau = cfg.amp_threshold_mult * std::sqrt(res_sq / m);
            double delta_sq = 0.0, base_sq = 0.0, count = 0.0;
            for (int i = 0; i < n; ++i) {
                const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
                const float xn = soft_threshold(pseudo[k], static_cast<float>(tau));
                const float d = xn - x[k];
                delta_sq += static_cast<double>(d) * d;
                base_sq += static_cast<double>(x[k]) * x[k];
                x[k] = xn;
                if (xn != 0.0f) count += 1.0;
            }
            nnz[static_cast<size_t>(j)] = count;
            const double rel = std::sqrt(delta_sq) / std::max(std::sqrt(base_sq), 1e-12);
            max_rel_change = std::max(max_rel_change, rel);
        }

        // residual with Onsager correction: r = y - A x + (nnz/m) * r_prev
        resid_prev = resid;
        gemm(false, false, m, B, n, A.a.data(), n, x.data(), B, ax.data(), B);
        for (int j = 0; j < B; ++j) {
            if (frozen[static_cast<size_t>(j)]) continue;
            const float onsager = static_cast<float>(nnz[static_cast<size_t>(j)] / m);
            for (int i = 0; i < m; ++i) {
                const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
                resid[k] = y[k] - ax[k] + onsager * resid_prev[k];
            }
        }
        out.iters = it + 1;

        // track best iterates, detect divergence
        bool all_settled = true;
        for (int j = 0; j < B; ++j) {
            if (frozen[static_cast<size_t>(j)]) continue;
            const double res = std::sqrt(column_sq(resid, j));
            if (res < best_res[static_cast<size_t>(j)]) {
                best_res[static_cast<size_t>(j)] = res;
                for (int i = 0; i < n; ++i) {
                    const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
                    x_best[k] = x[k];
                }
            }
            if (res > prev_res[static_cast<size_t>(j)]) {
                if (++grow_count[static_cast<size_t>(j)] >= cfg.amp_divergence_patience) {
                    frozen[static_cast<size_t>(j)] = 1;
                    ++out.diverged_columns;
                }
            } else {
                grow_count[static_cast<size_t>(j)] = 0;
            }
            prev_res[static_cast<size_t>(j)] = res;
            if (!frozen[static_cast<size_t>(j)]) all_settled = false;
        }

        if (max_rel_change < cfg.tolerance && it > 0) {
            out.converged = true;
            break;
        }
        if (all_settled) break;
    }
    out.x = std::move(x_best);
    return out;
}

double vec_nmse_db(const Tensor& estimate, const Tensor& truth) {
    require_same_shape(estimate, truth, "nmse inputs");
    if (estimate.rank() != 2) throw ShapeError("vec_nmse_db expects [n, B] tensors");
    const int n = estimate.dim(0), B = estimate.dim(1);
    double ratio_sum = 0.0;
    for (int j = 0; j < B; ++j) {
        double err = 0.0, ref = 0.0;
        for (int i = 0; i < n; ++i) {
            const std::int64_t k = static_cast<std::int64_t>(i) * B + j;
            const double d = static_cast<double>(estimate[k]) - truth[k];
            err += d * d;
            ref += static_cast<double>(truth[k]) * truth[k];
        }
        if (ref == 0.0) throw DataError("vec_nmse_db: zero-norm truth column " + std::to_string(j));
        ratio_sum += err / ref;
    }
    const double mean_ratio = ratio_sum / B;
    if (mean_ratio <= 1e-30) return -300.0;
    return std::max(-300.0, 10.0 * std::log10(mean_ratio));
}

OracleResult lambda_oracle(const Tensor& y, const SensingMatrix& A, const Tensor& truth,
                           const SolverConfig& cfg) {
    check_measurements(y, A);
    if (cfg.lambda_grid.empty()) throw UsageError("lambda_oracle: empty lambda grid");
    if (truth.rank() != 2 || truth.dim(0) != A.n || truth.dim(1) != y.dim(1))
        throw ShapeError("lambda_oracle: truth must be [n, B] matching the measurements");

    // lambda_max = max column-wise ||A^T y||_inf: smallest weight whose
    // solution is identically zero.
    const int n = A.n, B = y.dim(1);
    Tensor aty = Tensor::zeros({n, B});
    gemm(true, false, n, B, A.m, A.a.data(), A.n, y.data(), B, aty.data(), B);
    double lambda_max = 0.0;
    for (std::int64_t i = 0; i < aty.numel(); ++i)
        lambda_max = std::max(lambda_max, std::abs(static_cast<double>(aty[i])));
    if (lambda_max == 0.0) lambda_max = 1.0;  // y == 0; any weight returns 0

    OracleResult best;
    best.nmse_db = std::numeric_limits<double>::infinity();
    for (const double mult : cfg.lambda_grid) {
        if (mult < 0.0) throw ConfigError("lambda grid entries must be >= 0");
        const double lambda = mult * lambda_max;
        FistaResult r = fista_lasso(y, A, lambda, cfg);
        const double nmse = vec_nmse_db(r.x, truth);
        if (nmse < best.nmse_db) {
            best.nmse_db = nmse;
            best.lambda = lambda;
            best.multiplier = mult;
            best.x = std::move(r.x);
        }
    }
    return best;
}

}  // namespace csinet::cs
