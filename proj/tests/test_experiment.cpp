// Experiment-driver tests: config parsing/validation, fingerprint
// completeness, and the five subcommand functions run end-to-end on a
// miniature scenario in a temp directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csinet/channel.hpp"
#include "csinet/errors.hpp"
#include "csinet/experiment.hpp"
#include "csinet/metrics.hpp"
#include "csinet/model.hpp"
#include "doctest.h"

using namespace csinet;
using exp::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

// Small enough that generate+train+evaluate+benchmark all run in seconds.
ExperimentConfig micro_config(const std::string& out_dir) {
    ExperimentConfig c;
    c.scenario = "indoor-like";
    c.n_tx = 4;
    c.n_delay = 4;
    c.n_sub = 16;
    c.train_samples = 12;
    c.val_samples = 4;
    c.test_samples = 6;
    c.gammas = {0.25};  // input_dim = 32 -> M = 8
    c.methods = {"csinet", "cs-csinet", "lasso", "amp"};
    c.epochs = 2;
    c.batch_size = 4;
    c.solver_iters = 30;
    c.bench_repetitions = 2;
    c.bench_samples = 4;
    c.baseline_samples = 6;
    c.rho_samples = 4;
    c.seed = 11;
    c.out_dir = out_dir;
    return c;
}

std::string fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("csinet-exp-" + tag);
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config json round-trip and scale presets") {
    const ExperimentConfig base;
    CHECK_NOTHROW(base.validate());
    // Round-trip: parsing the canonical form reproduces the canonical form.
    const ExperimentConfig back = ExperimentConfig::from_json(base.canonical_json());
    CHECK(back.canonical_json() == base.canonical_json());
    CHECK(back.fingerprint() == base.fingerprint());

    const ExperimentConfig desk = ExperimentConfig::from_json(R"({"scale":"desk"})");
    CHECK(desk.train_samples == 4000);
    CHECK(desk.val_samples == 1000);
    CHECK(desk.test_samples == 1000);
    CHECK(desk.epochs == 200);

    const ExperimentConfig paper = ExperimentConfig::from_json(R"({"scale":"paper"})");
    CHECK(paper.train_samples == 100000);
    CHECK(paper.val_samples == 30000);
    CHECK(paper.test_samples == 20000);
    CHECK(paper.epochs == 1000);

    // Explicit keys override the preset regardless of key order in the file.
    const ExperimentConfig mixed =
        ExperimentConfig::from_json(R"({"epochs": 50, "scale": "paper"})");
    CHECK(mixed.train_samples == 100000);
    CHECK(mixed.epochs == 50);

    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"scale":"huge"})"), ConfigError);
}

TEST_CASE("config rejects unknown keys, bad types, bad values") {
    CHECK_THROWS_AS((void)ExperimentConfig::from_json("not json"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json("[1,2]"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"n_rx": 4})"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"epochs": "many"})"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"gammas": [0.25, "x"]})"), ConfigError);

    ExperimentConfig c;
    c.gammas = {0.3};  // 0.3 * 2048 = 614.4: not an integer codeword
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.gammas = {1.5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.methods = {};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.methods = {"csinet", "csinet"};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.methods = {"deep-magic"};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.scenario = "underwater";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.input_domain = "spatial";  // needs n_sub == n_delay
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.n_sub = c.n_delay;
    CHECK_NOTHROW(c.validate());
    c = ExperimentConfig{};
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.threads = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("codeword dimensions for the standard gamma ladder") {
    const ExperimentConfig c;  // 32x32 -> input_dim 2048
    CHECK(c.input_dim() == 2048);
    CHECK(c.codeword_dim(0.25) == 512);
    CHECK(c.codeword_dim(1.0 / 16.0) == 128);
    CHECK(c.codeword_dim(1.0 / 32.0) == 64);
    CHECK(c.codeword_dim(1.0 / 64.0) == 32);
}

TEST_CASE("fingerprint changes when any config field changes") {
    const ExperimentConfig base;
    std::vector<ExperimentConfig> variants(24, base);
    variants[0].scenario = "outdoor-like";
    variants[1].input_domain = "spatial";
    variants[2].n_tx = 16;
    variants[3].n_delay = 16;
    variants[4].n_sub = 512;
    variants[5].train_samples += 1;
    variants[6].val_samples += 1;
    variants[7].test_samples += 1;
    variants[8].gammas = {0.5};
    variants[9].methods = {"csinet"};
    variants[10].epochs += 1;
    variants[11].batch_size += 1;
    variants[12].learning_rate = 2e-3f;
    variants[13].refinenet_units += 1;
    variants[14].relu_after_add = !base.relu_after_add;
    variants[15].encoder_bn_relu = !base.encoder_bn_relu;
    variants[16].solver_iters += 1;
    variants[17].bench_repetitions += 1;
    variants[18].bench_samples += 1;
    variants[19].baseline_samples += 1;
    variants[20].rho_samples += 1;
    variants[21].seed += 1;
    variants[22].out_dir = "elsewhere";
    variants[23].threads += 1;

    std::set<std::uint64_t> prints{base.fingerprint()};
    for (const ExperimentConfig& v : variants) prints.insert(v.fingerprint());
    CHECK(prints.size() == variants.size() + 1);  // every mutation moved the hash

    // The data fingerprint tracks only generation-relevant fields.
    CHECK(variants[0].data_fingerprint() != base.data_fingerprint());   // scenario
    CHECK(variants[1].data_fingerprint() != base.data_fingerprint());   // domain
    CHECK(variants[2].data_fingerprint() != base.data_fingerprint());   // n_tx
    CHECK(variants[5].data_fingerprint() != base.data_fingerprint());   // train size
    CHECK(variants[21].data_fingerprint() != base.data_fingerprint());  // seed
    CHECK(variants[10].data_fingerprint() == base.data_fingerprint());  // epochs
    CHECK(variants[16].data_fingerprint() == base.data_fingerprint());  // solver iters
    CHECK(variants[9].data_fingerprint() == base.data_fingerprint());   // methods
    CHECK(variants[22].data_fingerprint() == base.data_fingerprint());  // out_dir
}

TEST_CASE("generate writes deterministic datasets and refuses overwrites") {
    const ExperimentConfig cfg = micro_config(fresh_dir("gen"));
    const exp::GenerateResult r = exp::cmd_generate(cfg);
    REQUIRE(r.files.size() == 4);
    for (const std::string& f : r.files) CHECK(fs::exists(f));

    const chan::Dataset train = chan::dataset_read(exp::split_path(cfg, "train"));
    const chan::Dataset val = chan::dataset_read(exp::split_path(cfg, "val"));
    const chan::Dataset test = chan::dataset_read(exp::split_path(cfg, "test"));
    CHECK(train.count() == cfg.train_samples);
    CHECK(val.count() == cfg.val_samples);
    CHECK(test.count() == cfg.test_samples);
    CHECK(static_cast<int>(train.n_tx) == cfg.n_tx);
    CHECK(train.domain_flag == chan::domain::angular_delay);

    const std::string manifest = slurp(exp::manifest_path(cfg));
    CHECK(manifest.find("\"version\"") != std::string::npos);
    CHECK(manifest.find(exp::kVersion) != std::string::npos);
    CHECK(manifest.find("\"seed\": 11") != std::string::npos);
    CHECK(manifest.find("data_fingerprint") != std::string::npos);

    // Refusal without force names the flag; with force the bytes reproduce.
    const std::string before = slurp(exp::split_path(cfg, "train"));
    CHECK_THROWS_WITH_AS(exp::cmd_generate(cfg), doctest::Contains("--force"), DataError);
    CHECK_NOTHROW(exp::cmd_generate(cfg, /*force=*/true));
    CHECK(slurp(exp::split_path(cfg, "train")) == before);
}

TEST_CASE("train produces checkpoints, loss curves, and is reproducible") {
    ExperimentConfig cfg = micro_config(fresh_dir("train"));
    exp::cmd_generate(cfg);

    // Missing learned methods is a config error, not silent success.
    ExperimentConfig solvers_only = cfg;
    solvers_only.methods = {"lasso"};
    CHECK_THROWS_AS(exp::cmd_train(solvers_only), ConfigError);

    const exp::TrainResultSummary s = exp::cmd_train(cfg);
    REQUIRE(s.cells.size() == 2);  // csinet + cs-csinet at one gamma
    for (const exp::TrainCell& c : s.cells) {
        CHECK(fs::exists(c.checkpoint_file));
        CHECK(c.best_epoch >= 1);
        CHECK(c.best_epoch <= cfg.epochs);
    }

    // Loss CSV: header comment + column header + one row per epoch.
    const std::string csv = slurp(exp::loss_csv_path(cfg, "csinet", 0.25));
    CHECK(csv.find("# csinet-tools") != std::string::npos);
    CHECK(csv.find("epoch,train_loss,val_loss,best_val_loss") != std::string::npos);
    int lines = 0;
    for (const char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 2 + cfg.epochs);

    // Refusal on existing checkpoints without force.
    CHECK_THROWS_WITH_AS(exp::cmd_train(cfg), doctest::Contains("--force"), DataError);

    // The cs-csinet encoder is the same frozen projection the solvers use.
    const model::LoadedModel lm = model::load_model(exp::checkpoint_path(cfg, "cs-csinet", 0.25));
    CHECK(lm.net.config().cs_encoder);
    CHECK(lm.net.config().sensing_seed == exp::sensing_seed_for(cfg, cfg.codeword_dim(0.25)));

    // Same config into a second directory: byte-identical checkpoints + CSVs.
    ExperimentConfig cfg2 = micro_config(fresh_dir("train2"));
    exp::cmd_generate(cfg2);
    exp::cmd_train(cfg2);
    CHECK(slurp(exp::checkpoint_path(cfg2, "csinet", 0.25)) ==
          slurp(exp::checkpoint_path(cfg, "csinet", 0.25)));
    const std::string csv_a = slurp(exp::loss_csv_path(cfg, "csinet", 0.25));
    const std::string csv_b = slurp(exp::loss_csv_path(cfg2, "csinet", 0.25));
    // Artifact headers embed the fingerprint, which covers out_dir; compare bodies.
    CHECK(csv_a.substr(csv_a.find('\n')) == csv_b.substr(csv_b.find('\n')));

    // Stale datasets (different generation settings) are rejected.
    ExperimentConfig stale = cfg;
    stale.train_samples += 2;
    CHECK_THROWS_WITH_AS(exp::cmd_train(stale, /*force=*/true),
                         doctest::Contains("different configuration"), DataError);
}

TEST_CASE("train and evaluate demand datasets") {
    const ExperimentConfig cfg = micro_config(fresh_dir("nodata"));
    CHECK_THROWS_WITH_AS(exp::cmd_train(cfg), doctest::Contains("generate"), DataError);
    CHECK_THROWS_WITH_AS(exp::cmd_evaluate(cfg), doctest::Contains("generate"), DataError);
    CHECK_THROWS_WITH_AS(exp::cmd_benchmark(cfg), doctest::Contains("generate"), DataError);
}

TEST_CASE("evaluate fills every cell, marks the best row, reproduces bytes") {
    const ExperimentConfig cfg = micro_config(fresh_dir("eval"));
    exp::cmd_generate(cfg);
    exp::cmd_train(cfg);

    const std::vector<metrics::EvalRow> rows = exp::cmd_evaluate(cfg);
    REQUIRE(rows.size() == 4);
    int best_count = 0;
    double best_nmse = 1e300;
    for (const metrics::EvalRow& r : rows) {
        CHECK_FALSE(r.absent);
        CHECK(r.fingerprint == cfg.fingerprint());
        CHECK(r.rho >= 0.0);
        CHECK(r.rho <= 1.0);
        CHECK(r.mean_decode_seconds == 0.0);  // latency lives in benchmark.csv
        if (r.method == "csinet" || r.method == "cs-csinet")
            CHECK(r.sample_count == cfg.test_samples);
        else
            CHECK(r.sample_count == cfg.baseline_samples);
        best_count += r.best_in_cell ? 1 : 0;
        best_nmse = std::min(best_nmse, r.nmse_db);
    }
    CHECK(best_count == 1);
    for (const metrics::EvalRow& r : rows)
        if (r.best_in_cell) CHECK(r.nmse_db == best_nmse);

    // Byte-for-byte reproducible report files.
    const std::string csv1 = slurp(exp::report_csv_path(cfg));
    const std::string txt1 = slurp(exp::report_table_path(cfg));
    exp::cmd_evaluate(cfg);
    CHECK(slurp(exp::report_csv_path(cfg)) == csv1);
    CHECK(slurp(exp::report_table_path(cfg)) == txt1);

    // Ground truth against itself: the dataset the report was computed from
    // scores at the floor with perfect cosine similarity.
    const chan::Dataset test = chan::dataset_read(exp::split_path(cfg, "test"));
    CHECK(metrics::nmse_db(test.samples, test.samples) == metrics::kNmseFloorDb);
    std::vector<chan::CMat> mats;
    for (int i = 0; i < test.count(); ++i)
        mats.push_back(chan::reconstruct_full(chan::load_sample(test, i), cfg.n_sub));
    const metrics::RhoResult rr = metrics::cosine_similarity(mats, mats);
    CHECK(rr.rho == doctest::Approx(1.0).epsilon(1e-12));

    // A deleted checkpoint turns into an absent row; the run continues and the
    // best marker still agrees with a recomputation over present rows.
    fs::remove(exp::checkpoint_path(cfg, "cs-csinet", 0.25));
    const std::vector<metrics::EvalRow> rows2 = exp::cmd_evaluate(cfg);
    REQUIRE(rows2.size() == 4);
    double min_present = 1e300;
    for (const metrics::EvalRow& r : rows2) {
        if (r.method == "cs-csinet") {
            CHECK(r.absent);
        } else {
            CHECK_FALSE(r.absent);
            min_present = std::min(min_present, r.nmse_db);
        }
    }
    for (const metrics::EvalRow& r : rows2) {
        if (r.best_in_cell) {
            CHECK_FALSE(r.absent);
            CHECK(r.nmse_db == min_present);
        }
    }
    const std::string csv2 = slurp(exp::report_csv_path(cfg));
    CHECK(csv2.find("absent") != std::string::npos);
}

TEST_CASE("baseline subcommand runs without checkpoints") {
    const ExperimentConfig cfg = micro_config(fresh_dir("base"));
    exp::cmd_generate(cfg);  // no cmd_train on purpose

    const std::vector<metrics::EvalRow> rows = exp::cmd_baseline(cfg);
    REQUIRE(rows.size() == 2);
    for (const metrics::EvalRow& r : rows) {
        CHECK((r.method == "lasso" || r.method == "amp"));
        CHECK_FALSE(r.absent);
    }
    CHECK(fs::exists(cfg.out_dir + "/baseline.csv"));
    CHECK(fs::exists(cfg.out_dir + "/baseline.txt"));

    ExperimentConfig learned_only = cfg;
    learned_only.methods = {"csinet"};
    CHECK_THROWS_AS(exp::cmd_baseline(learned_only), ConfigError);
}

TEST_CASE("benchmark reports per-method latency and csinet-relative ratios") {
    const ExperimentConfig cfg = micro_config(fresh_dir("bench"));
    exp::cmd_generate(cfg);
    exp::cmd_train(cfg);

    const std::vector<exp::BenchRow> rows = exp::cmd_benchmark(cfg);
    REQUIRE(rows.size() == 4);
    double csinet_time = 0.0, lasso_time = 0.0, lasso_ratio = 0.0;
    for (const exp::BenchRow& r : rows) {
        CHECK_FALSE(r.absent);
        CHECK(r.per_sample_seconds > 0.0);
        if (r.method == "csinet") {
            CHECK(r.speedup_vs_csinet == doctest::Approx(1.0));
            csinet_time = r.per_sample_seconds;
        }
        if (r.method == "lasso") {
            lasso_time = r.per_sample_seconds;
            lasso_ratio = r.speedup_vs_csinet;
        }
    }
    CHECK(lasso_ratio == doctest::Approx(lasso_time / csinet_time));
    const std::string csv = slurp(exp::benchmark_csv_path(cfg));
    CHECK(csv.find("time_vs_csinet") != std::string::npos);

    // Single-method config: no ratio column at all.
    ExperimentConfig solo = cfg;
    solo.methods = {"lasso"};
    exp::cmd_benchmark(solo);
    const std::string solo_csv = slurp(exp::benchmark_csv_path(solo));
    CHECK(solo_csv.find("time_vs_csinet") == std::string::npos);
    CHECK(solo_csv.find("lasso") != std::string::npos);

    // Missing checkpoint: absent row, remaining methods still timed.
    fs::remove(exp::checkpoint_path(cfg, "cs-csinet", 0.25));
    const std::vector<exp::BenchRow> rows2 = exp::cmd_benchmark(cfg);
    REQUIRE(rows2.size() == 4);
    for (const exp::BenchRow& r : rows2) {
        if (r.method == "cs-csinet")
            CHECK(r.absent);
        else
            CHECK(r.per_sample_seconds > 0.0);
    }
    CHECK(slurp(exp::benchmark_csv_path(cfg)).find("absent") != std::string::npos);
}

TEST_CASE("artifact paths key checkpoints by codeword dimension") {
    const ExperimentConfig cfg = micro_config("/tmp/csinet-paths");
    CHECK(exp::split_path(cfg, "train") ==
          "/tmp/csinet-paths/data/indoor-like-angular-train.ds");
    CHECK(exp::manifest_path(cfg) == "/tmp/csinet-paths/data/manifest.json");
    CHECK(exp::checkpoint_path(cfg, "csinet", 0.25) ==
          "/tmp/csinet-paths/models/csinet-m8.ckpt");
    CHECK(exp::loss_csv_path(cfg, "cs-csinet", 0.25) ==
          "/tmp/csinet-paths/models/cs-csinet-m8-loss.csv");
    CHECK_THROWS_AS((void)exp::split_path(cfg, "holdout"), UsageError);
}
