#pragma once

// Experiment driver behind the command-line tool: one JSON config describes
// scenario, compression ratios, methods, and training hyperparameters; the
// cmd_* functions generate datasets, train models, evaluate every
// (method, gamma) cell, and benchmark decode latency, writing all artifacts
// under the configured output directory.

#include <cstdint>
#include <string>
#include <vector>

#include "csinet/channel.hpp"
#include "csinet/metrics.hpp"
#include "csinet/model.hpp"

namespace csinet::exp {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
    // scenario / data
    std::string scenario = "indoor-like";  // generator preset name
    std::string input_domain = "angular";  // angular | spatial
    int n_tx = 32;
    int n_delay = 32;
    int n_sub = 1024;
    std::int64_t train_samples = 4000;  // desk-scale defaults
    std::int64_t val_samples = 1000;
    std::int64_t test_samples = 1000;

    // methods / compression
    std::vector<double> gammas = {0.25};
    std::vector<std::string> methods = {"csinet", "cs-csinet", "lasso", "amp"};

    // training
    int epochs = 200;
    int batch_size = 200;
    float learning_rate = 1e-3f;
    int refinenet_units = 2;
    bool relu_after_add = true;
    bool encoder_bn_relu = true;

    // solvers / benchmarking
    int solver_iters = 500;
    int bench_repetitions = 20;
    int bench_samples = 100;    // decode batch size for latency runs
    int baseline_samples = 256;  // test samples the classical solvers recover
    int rho_samples = 256;       // samples used for the cosine-similarity column

    // run control
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int threads = 1;

    void validate() const;  // throws ConfigError naming the offending field

    // Input dimension of one vectorized sample (2 * rows * n_tx).
    int rows() const { return input_domain == "spatial" ? n_sub : n_delay; }
    int input_dim() const { return 2 * rows() * n_tx; }
    // gamma -> integer codeword dimension; throws ConfigError when gamma does
    // not yield an integer.
    int codeword_dim(double gamma) const;

    // Every field in sorted-key JSON; identical configs produce identical text.
    std::string canonical_json() const;
    // FNV-1a of canonical_json(): embedded in every artifact.
    std::uint64_t fingerprint() const;
    // Fingerprint of the generation-relevant subset (scenario, dimensions,
    // split sizes, domain, seed): datasets embed this one so training can
    // detect stale data without being sensitive to, say, solver settings.
    std::uint64_t data_fingerprint() const;

    // Parses JSON text; "scale": "desk"|"paper" is applied first (paper =
    // 100k/30k/20k samples, 1000 epochs), then explicit keys override.
    // Unknown keys are rejected.
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);

    chan::ScenarioParams scenario_params() const;
};

// Artifact paths (all under cfg.out_dir).
std::string split_path(const ExperimentConfig& cfg, const std::string& split);
std::string manifest_path(const ExperimentConfig& cfg);
std::string checkpoint_path(const ExperimentConfig& cfg, const std::string& method, double gamma);
std::string loss_csv_path(const ExperimentConfig& cfg, const std::string& method, double gamma);
std::string report_csv_path(const ExperimentConfig& cfg);
std::string report_table_path(const ExperimentConfig& cfg);
std::string benchmark_csv_path(const ExperimentConfig& cfg);

// The sensing matrix shared by the classical solvers and the cs-csinet
// encoder at codeword dimension m.
std::uint64_t sensing_seed_for(const ExperimentConfig& cfg, int m);

// generate: writes train/val/test dataset files plus manifest.json.
// Deterministic in (config, seed): the same config writes byte-identical
// files. Refuses to overwrite existing artifacts unless force.
struct GenerateResult {
    std::vector<std::string> files;
};
GenerateResult cmd_generate(const ExperimentConfig& cfg, bool force = false);

// train: one checkpoint (best-on-validation) plus a per-epoch loss CSV per
// learned method and gamma. Requires the datasets; verifies their manifest
// against the config's data fingerprint.
struct TrainCell {
    std::string method;
    double gamma = 0.0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::string checkpoint_file;
};
struct TrainResultSummary {
    std::vector<TrainCell> cells;
};
TrainResultSummary cmd_train(const ExperimentConfig& cfg, bool force = false);

// evaluate: fills every (method, gamma) cell of the report. Learned methods
// with a missing checkpoint are listed as absent and the run continues.
// Writes report.csv and report.txt; returns the rows.
std::vector<metrics::EvalRow> cmd_evaluate(const ExperimentConfig& cfg);

// baseline: the classical solvers only (no checkpoints needed); writes
// baseline.csv / baseline.txt with the same row format.
std::vector<metrics::EvalRow> cmd_baseline(const ExperimentConfig& cfg);

// benchmark: decode latency per method and gamma.
struct BenchRow {
    std::string method;
    double gamma = 0.0;
    double per_sample_seconds = 0.0;
    double variance_seconds2 = 0.0;  // of whole-batch times across repetitions
    double speedup_vs_csinet = 0.0;  // method time / csinet time; 0 when csinet absent
    bool absent = false;
};
std::vector<BenchRow> cmd_benchmark(const ExperimentConfig& cfg);

}  // namespace csinet::exp
