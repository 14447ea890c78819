// csinet command-line tool: drives the full experiment pipeline from a JSON
// config. Subcommands: generate | train | evaluate | baseline | benchmark.
// Exit codes: 0 ok, 1 unexpected failure, 2 config/usage error, 3 data error,
// 4 training divergence.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "csinet/blas_env.hpp"
#include "csinet/errors.hpp"
#include "csinet/experiment.hpp"
#include "csinet/metrics.hpp"

namespace {

using csinet::exp::ExperimentConfig;

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    bool force = false;
};

// Config file first (built-in desk-scale defaults when absent), then flags.
ExperimentConfig effective_config(const GlobalFlags& g) {
    ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{}
                                                 : ExperimentConfig::from_file(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.out) cfg.out_dir = *g.out;
    if (g.threads) cfg.threads = *g.threads;
    cfg.validate();
    return cfg;
}

int run_generate(const GlobalFlags& g) {
    const ExperimentConfig cfg = effective_config(g);
    const csinet::exp::GenerateResult r = csinet::exp::cmd_generate(cfg, g.force);
    for (const std::string& f : r.files) std::printf("wrote %s\n", f.c_str());
    return csinet::exit_code::ok;
}

int run_train(const GlobalFlags& g) {
    const ExperimentConfig cfg = effective_config(g);
    const csinet::exp::TrainResultSummary s = csinet::exp::cmd_train(cfg, g.force);
    for (const csinet::exp::TrainCell& c : s.cells)
        std::printf("trained %s at gamma %s: best epoch %d, val loss %.6e -> %s\n",
                    c.method.c_str(), csinet::metrics::gamma_label(c.gamma).c_str(), c.best_epoch,
                    c.best_val_loss, c.checkpoint_file.c_str());
    return csinet::exit_code::ok;
}

int run_evaluate(const GlobalFlags& g) {
    const ExperimentConfig cfg = effective_config(g);
    const auto rows = csinet::exp::cmd_evaluate(cfg);
    std::fputs(csinet::metrics::report_table(rows).c_str(), stdout);
    std::printf("wrote %s and %s\n", csinet::exp::report_csv_path(cfg).c_str(),
                csinet::exp::report_table_path(cfg).c_str());
    return csinet::exit_code::ok;
}

int run_baseline(const GlobalFlags& g) {
    const ExperimentConfig cfg = effective_config(g);
    const auto rows = csinet::exp::cmd_baseline(cfg);
    std::fputs(csinet::metrics::report_table(rows).c_str(), stdout);
    std::printf("wrote %s/baseline.csv and %s/baseline.txt\n", cfg.out_dir.c_str(),
                cfg.out_dir.c_str());
    return csinet::exit_code::ok;
}

int run_benchmark(const GlobalFlags& g) {
    const ExperimentConfig cfg = effective_config(g);
    const auto rows = csinet::exp::cmd_benchmark(cfg);
    for (const csinet::exp::BenchRow& r : rows) {
        if (r.absent) {
            std::printf("%-10s gamma %-6s absent (no checkpoint)\n", r.method.c_str(),
                        csinet::metrics::gamma_label(r.gamma).c_str());
        } else {
            std::printf("%-10s gamma %-6s %.6e s/sample", r.method.c_str(),
                        csinet::metrics::gamma_label(r.gamma).c_str(), r.per_sample_seconds);
            if (r.speedup_vs_csinet > 0.0) std::printf("  (%.1fx csinet)", r.speedup_vs_csinet);
            std::printf("\n");
        }
    }
    std::printf("wrote %s\n", csinet::exp::benchmark_csv_path(cfg).c_str());
    return csinet::exit_code::ok;
}

int guarded(int (*body)(const GlobalFlags&), const GlobalFlags& g) {
    try {
        return body(g);
    } catch (const csinet::ConfigError& e) {
        std::fprintf(stderr, "csinet: config error: %s\n", e.what());
        return csinet::exit_code::config;
    } catch (const csinet::UsageError& e) {
        std::fprintf(stderr, "csinet: usage error: %s\n", e.what());
        return csinet::exit_code::config;
    } catch (const csinet::TrainingError& e) {
        std::fprintf(stderr, "csinet: training diverged: %s\n", e.what());
        return csinet::exit_code::divergence;
    } catch (const csinet::FormatError& e) {
        std::fprintf(stderr, "csinet: data error: %s\n", e.what());
        return csinet::exit_code::data;
    } catch (const csinet::DataError& e) {
        std::fprintf(stderr, "csinet: data error: %s\n", e.what());
        return csinet::exit_code::data;
    } catch (const csinet::ShapeError& e) {
        std::fprintf(stderr, "csinet: data error: %s\n", e.what());
        return csinet::exit_code::data;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "csinet: error: %s\n", e.what());
        return csinet::exit_code::failure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    csinet::ensure_blas_coretype(argv);

    CLI::App app{"csinet-tools: CSI feedback compression experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON config file (defaults to the desk-scale preset)");
    std::uint64_t seed_val = 0;
    CLI::Option* seed_opt = app.add_option("--seed", seed_val, "Override the config seed");
    std::string out_val;
    CLI::Option* out_opt = app.add_option("--out", out_val, "Override the output directory");
    int threads_val = 1;
    CLI::Option* threads_opt = app.add_option("--threads", threads_val, "Worker threads");
    app.add_flag("--force", g.force, "Overwrite existing datasets/checkpoints");

    CLI::App* sub_generate =
        app.add_subcommand("generate", "Write train/val/test dataset files and a manifest");
    CLI::App* sub_train = app.add_subcommand("train", "Train the learned methods per gamma");
    CLI::App* sub_evaluate =
        app.add_subcommand("evaluate", "Fill the NMSE/rho report for every method and gamma");
    CLI::App* sub_baseline = app.add_subcommand("baseline", "Run only the classical solvers");
    CLI::App* sub_benchmark = app.add_subcommand("benchmark", "Measure decode latency per method");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? csinet::exit_code::ok : csinet::exit_code::config;
    }

    if (*seed_opt) g.seed = seed_val;
    if (*out_opt) g.out = out_val;
    if (*threads_opt) g.threads = threads_val;

    if (sub_generate->parsed()) return guarded(run_generate, g);
    if (sub_train->parsed()) return guarded(run_train, g);
    if (sub_evaluate->parsed()) return guarded(run_evaluate, g);
    if (sub_baseline->parsed()) return guarded(run_baseline, g);
    if (sub_benchmark->parsed()) return guarded(run_benchmark, g);
    return csinet::exit_code::config;  // unreachable: require_subcommand enforces one
}
