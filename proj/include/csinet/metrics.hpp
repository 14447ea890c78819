#pragma once

// Evaluation metrics (NMSE in dB, per-subcarrier cosine similarity), decode
// latency measurement, and the report renderers (CSV + aligned table).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csinet/channel.hpp"
#include "csinet/tensor.hpp"

namespace csinet::metrics {

// Perfect reconstruction would be -inf dB; reports use this finite floor.
inline constexpr double kNmseFloorDb = -300.0;

// truth/estimate: [B, ...] with samples along dim 0, denormalized values.
// NMSE = mean over samples of (||H - H_hat||^2 / ||H||^2), then 10*log10.
// The expectation sits outside the ratio, so the per-sample ratios are
// averaged before taking the log. Throws DataError when a truth sample has
// zero norm (naming its index), ShapeError on mismatched shapes.
double nmse_db(const Tensor& truth, const Tensor& estimate);

struct RhoResult {
    double rho = 0.0;                // in [0,1] by Cauchy-Schwarz
    std::int64_t excluded_rows = 0;  // zero-norm subcarrier rows skipped
};

// Cosine similarity on full spatial-frequency channels (one CMat per sample,
// rows = subcarriers): per subcarrier |h_hat^H h| / (||h_hat|| ||h||),
// averaged over subcarriers within a sample, then over samples. Zero-norm
// rows (in either input) are excluded and counted; a sample with no usable
// rows is a DataError. Parallel over samples when threads > 1.
RhoResult cosine_similarity(const std::vector<chan::CMat>& truth,
                            const std::vector<chan::CMat>& estimate, int threads = 1);

struct BenchmarkResult {
    double mean_seconds = 0.0;       // per call of fn
    double variance_seconds2 = 0.0;  // unbiased across repetitions (0 if reps < 2)
    double min_seconds = 0.0;
    double max_seconds = 0.0;
    int repetitions = 0;
};

// Calls fn `warmup` times untimed, then `repetitions` times on the monotonic
// clock. repetitions >= 1 required (UsageError).
BenchmarkResult benchmark_decode(const std::function<void()>& fn, int repetitions,
                                 int warmup = 5);

// ---------------------------------------------------------------------------
// Report rows and renderers
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string method;    // csinet | cs-csinet | lasso | amp
    std::string scenario;  // scenario preset name
    double gamma = 0.0;
    double nmse_db = 0.0;
    double rho = 0.0;
    std::int64_t excluded_rows = 0;
    double mean_decode_seconds = 0.0;
    std::int64_t sample_count = 0;
    std::uint64_t fingerprint = 0;
    bool best_in_cell = false;  // lowest NMSE among methods of one (gamma, scenario) cell
    bool absent = false;        // no checkpoint/result; metric fields are meaningless
};

// Marks the minimum-NMSE method of every (gamma, scenario) cell (absent rows
// never win).
void mark_best(std::vector<EvalRow>& rows);

// One fixed header line plus one line per row; absent rows leave their metric
// columns empty. Deterministic formatting, so identical inputs render
// byte-identical reports.
std::string report_csv(const std::vector<EvalRow>& rows);

// Human-readable aligned table of the same rows; '*' marks best_in_cell.
std::string report_table(const std::vector<EvalRow>& rows);

// Compression ratios render as "1/q" when gamma is a unit fraction, else %.6g.
std::string gamma_label(double gamma);

}  // namespace csinet::metrics
