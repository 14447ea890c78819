#pragma once

// Classical compressive-sensing recovery baselines: FISTA for the LASSO with
// an oracle-swept regularization weight, and scalar AMP with the Onsager
// correction. All methods share one Gaussian sensing matrix (also used by the
// CS-CsiNet encoder) and operate on real stacked [re; im] vectors.

#include <cstdint>
#include <vector>

#include "csinet/tensor.hpp"

namespace csinet::cs {

// Entries i.i.d. N(0, 1/m); deterministic in (m, n, seed).
struct SensingMatrix {
    int m = 0;  // measurements
    int n = 0;  // signal dimension
    std::uint64_t seed = 0;
    Tensor a;  // [m, n]
};
SensingMatrix make_sensing_matrix(int m, int n, std::uint64_t seed);

struct SolverConfig {
    int max_iters = 500;
    double tolerance = 1e-6;  // on the relative iterate change, per column
    // Oracle sweep grid. Entries are multipliers of lambda_max = max_j
    // ||A^T y_j||_inf (the smallest weight with an all-zero solution), so one
    // grid serves any data scale; fista_lasso itself takes absolute lambda.
    std::vector<double> lambda_grid = {1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1};
    double amp_threshold_mult = 2.5;  // threshold = mult * per-column residual std
    int amp_divergence_patience = 10;  // consecutive residual increases before aborting a column
    bool record_objective = false;     // keep the per-iteration FISTA objectives (tests)
};

// Proximal operator of t*|x|: sign(x) * max(|x| - t, 0).
float soft_threshold(float x, float t);

// Largest eigenvalue of A^T A by 30 power iterations (deterministic), padded
// by 2% so 1/L is a safe step size.
double lipschitz_estimate(const SensingMatrix& A);

struct FistaResult {
    Tensor x;  // [n, B], one recovered column per measurement column
    int iters = 0;
    bool converged = false;  // all columns met the tolerance before max_iters
    // objective_trace[it][j]: 0.5*||y_j - A x_j||^2 + lambda*||x_j||_1 of the
    // retained iterate; filled only when cfg.record_objective is set
    std::vector<std::vector<double>> objective_trace;
};

// Minimizes 0.5*||y - A x||^2 + lambda*||x||_1 per column of y [m, B].
// Monotone variant: each iterate is kept only if it does not increase the
// objective, so the per-column objective is non-increasing by construction.
FistaResult fista_lasso(const Tensor& y, const SensingMatrix& A, double lambda,
                        const SolverConfig& cfg);

struct AmpResult {
    Tensor x;  // [n, B]
    int iters = 0;
    bool converged = false;
    int diverged_columns = 0;  // columns aborted at their best-residual iterate
};

// Iterative soft-thresholding with the Onsager correction; the threshold is
// amp_threshold_mult times the per-column residual standard deviation. A
// column whose residual grows amp_divergence_patience times in a row is
// frozen at its best iterate and counted in diverged_columns.
AmpResult amp_recover(const Tensor& y, const SensingMatrix& A, const SolverConfig& cfg);

struct OracleResult {
    double lambda = 0.0;      // absolute weight actually used
    double multiplier = 0.0;  // the grid entry that won
    Tensor x;                 // [n, B] estimate at the winning weight
    double nmse_db = 0.0;     // batch NMSE of that estimate
};

// Runs fista_lasso at every grid weight and keeps the estimate minimizing the
// true batch NMSE against `truth` [n, B]. Evaluation-only (needs the truth).
OracleResult lambda_oracle(const Tensor& y, const SensingMatrix& A, const Tensor& truth,
                           const SolverConfig& cfg);

// Mean over columns of ||x - t||^2 / ||t||^2 in dB (guarded at -300 dB).
// Shared by the oracle and the solver tests.
double vec_nmse_db(const Tensor& estimate, const Tensor& truth);

}  // namespace csinet::cs
