#include "csinet/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "csinet/baselines.hpp"
#include "csinet/errors.hpp"
#include "csinet/nn_ops.hpp"
#include "csinet/rng.hpp"

// OpenBLAS thread control: timing sections are pinned to one thread so the
// reported latencies do not depend on ambient parallelism.
extern "C" {
int openblas_get_num_threads(void);
void openblas_set_num_threads(int);
}

namespace csinet::exp {

namespace fs = std::filesystem;
using nlohmann::json;
using model::CsiNet;
using model::CsiNetConfig;
using model::EpochRecord;
using model::LoadedModel;
using model::TrainHyper;
using model::TrainResult;
using model::load_model;
using model::save_model;
using model::train_model;

namespace {

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("failed writing " + path);
}

struct BlasThreadPin {
    int saved;
    BlasThreadPin() : saved(openblas_get_num_threads()) { openblas_set_num_threads(1); }
    ~BlasThreadPin() { openblas_set_num_threads(saved); }
    BlasThreadPin(const BlasThreadPin&) = delete;
    BlasThreadPin& operator=(const BlasThreadPin&) = delete;
};

bool is_learned(const std::string& method) { return method == "csinet" || method == "cs-csinet"; }

// First k samples along dim 0 (copy).
Tensor head_samples(const Tensor& t, std::int64_t k) {
    if (t.rank() < 1 || k < 1 || k > t.dim(0))
        throw UsageError("head_samples: bad sample count");
    std::vector<int> shape = t.shape();
    shape[0] = static_cast<int>(k);
    Tensor out(shape);
    std::memcpy(out.data(), t.data(), sizeof(float) * static_cast<size_t>(out.numel()));
    return out;
}

// Inference-mode reconstruction of a whole split, chunked to bound peak memory.
Tensor reconstruct_all(const CsiNet& net, const Tensor& xn) {
    constexpr std::int64_t kChunk = 256;
    const std::int64_t total = xn.dim(0);
    const std::int64_t per = xn.numel() / total;
    Tensor out(xn.shape());
    for (std::int64_t start = 0; start < total; start += kChunk) {
        const std::int64_t b = std::min(kChunk, total - start);
        std::vector<int> cshape = xn.shape();
        cshape[0] = static_cast<int>(b);
        Tensor chunk(cshape);
        std::memcpy(chunk.data(), xn.data() + start * per, sizeof(float) * static_cast<size_t>(b * per));
        const Tensor rec = net.reconstruct(chunk);
        std::memcpy(out.data() + start * per, rec.data(), sizeof(float) * static_cast<size_t>(b * per));
    }
    return out;
}

// Recentered normalized batch for the classical solvers. Normalization maps
// raw value 0 to z0 = -lo/(hi-lo); subtracting z0 restores sparsity, and NMSE
// computed after denormalization equals NMSE on the recentered coordinates
// because the two differ by the same positive scale hi-lo.
struct RecenteredBatch {
    Tensor xprime;  // [n, K] sparse truth, one column per sample
    Tensor y;       // [m, K] measurements
    double z0 = 0.0;
};

RecenteredBatch project_batch(const Tensor& raw_head, double lo, double hi, const cs::SensingMatrix& A) {
    const std::int64_t k = raw_head.dim(0);
    const std::int64_t n = raw_head.numel() / k;
    if (n != A.n) throw ShapeError("project_batch: sample dimension does not match the sensing matrix");
    RecenteredBatch rb;
    rb.z0 = (0.0 - lo) / (hi - lo);
    const Tensor xn = chan::normalize_values(raw_head, lo, hi);
    Tensor rows({static_cast<int>(k), static_cast<int>(n)});  // recentered, sample-major
    rb.xprime = Tensor({static_cast<int>(n), static_cast<int>(k)});
    for (std::int64_t b = 0; b < k; ++b)
        for (std::int64_t j = 0; j < n; ++j) {
            const float v = static_cast<float>(xn[b * n + j] - rb.z0);
            rows.at(static_cast<int>(b), static_cast<int>(j)) = v;
            rb.xprime.at(static_cast<int>(j), static_cast<int>(b)) = v;
        }
    const Tensor zero_bias(std::vector<int>{A.m});
    const Tensor ym = nn::dense_forward(rows, A.a, zero_bias);  // [K, m]
    rb.y = Tensor({A.m, static_cast<int>(k)});
    for (std::int64_t b = 0; b < k; ++b)
        for (int i = 0; i < A.m; ++i) rb.y.at(i, static_cast<int>(b)) = ym.at(static_cast<int>(b), i);
    return rb;
}

// Solver estimate [n, K] back to raw-valued samples shaped like the truth.
Tensor assemble_estimate(const Tensor& xprime_hat, const std::vector<int>& sample_shape, double z0,
                         double lo, double hi) {
    Tensor est_norm(sample_shape);
    const std::int64_t k = sample_shape[0];
    const std::int64_t n = est_norm.numel() / k;
    for (std::int64_t b = 0; b < k; ++b)
        for (std::int64_t j = 0; j < n; ++j)
            est_norm[b * n + j] =
                xprime_hat.at(static_cast<int>(j), static_cast<int>(b)) + static_cast<float>(z0);
    return chan::denormalize_values(est_norm, lo, hi);
}

// Complex channel matrices for the cosine-similarity column: full spatial-
// frequency matrices, reconstructed from the angular-delay domain when needed.
std::vector<chan::CMat> rho_mats(const chan::Dataset& like, const Tensor& raw, int count,
                                 int n_sub_full) {
    chan::Dataset d;
    d.n_sub = like.n_sub;
    d.n_tx = like.n_tx;
    d.n_delay = like.n_delay;
    d.domain_flag = like.domain_flag;
    d.norm_lo = like.norm_lo;
    d.norm_hi = like.norm_hi;
    d.samples = raw;
    std::vector<chan::CMat> mats;
    mats.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        chan::CMat m = chan::load_sample(d, i);
        if (d.domain_flag == chan::domain::angular_delay)
            m = chan::reconstruct_full(m, n_sub_full);
        mats.push_back(std::move(m));
    }
    return mats;
}

// Largest ell-infinity norm of A^T y_j over columns: the smallest lasso weight
// with an all-zero solution; benchmark timing runs at a fixed fraction of it.
double lambda_max_of(const Tensor& y, const cs::SensingMatrix& A) {
    const int k = y.dim(1);
    double best = 0.0;
    for (int j = 0; j < A.n; ++j) {
        for (int b = 0; b < k; ++b) {
            double acc = 0.0;
            for (int i = 0; i < A.m; ++i)
                acc += static_cast<double>(A.a.at(i, j)) * static_cast<double>(y.at(i, b));
            best = std::max(best, std::abs(acc));
        }
    }
    return best;
}

void assign_from_json(const json& v, const char* key, std::string& out) {
    if (!v.is_string()) throw ConfigError(std::string("config key \"") + key + "\" must be a string");
    out = v.get<std::string>();
}
void assign_from_json(const json& v, const char* key, bool& out) {
    if (!v.is_boolean()) throw ConfigError(std::string("config key \"") + key + "\" must be a boolean");
    out = v.get<bool>();
}
void assign_from_json(const json& v, const char* key, int& out) {
    if (!v.is_number_integer())
        throw ConfigError(std::string("config key \"") + key + "\" must be an integer");
    out = v.get<int>();
}
void assign_from_json(const json& v, const char* key, std::int64_t& out) {
    if (!v.is_number_integer())
        throw ConfigError(std::string("config key \"") + key + "\" must be an integer");
    out = v.get<std::int64_t>();
}
void assign_from_json(const json& v, const char* key, std::uint64_t& out) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw ConfigError(std::string("config key \"") + key + "\" must be a non-negative integer");
    if (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
        throw ConfigError(std::string("config key \"") + key + "\" must be a non-negative integer");
    out = v.get<std::uint64_t>();
}
void assign_from_json(const json& v, const char* key, float& out) {
    if (!v.is_number()) throw ConfigError(std::string("config key \"") + key + "\" must be a number");
    out = v.get<float>();
}
void assign_from_json(const json& v, const char* key, std::vector<double>& out) {
    if (!v.is_array()) throw ConfigError(std::string("config key \"") + key + "\" must be an array");
    out.clear();
    for (const json& e : v) {
        if (!e.is_number())
            throw ConfigError(std::string("config key \"") + key + "\" must contain only numbers");
        out.push_back(e.get<double>());
    }
}
void assign_from_json(const json& v, const char* key, std::vector<std::string>& out) {
    if (!v.is_array()) throw ConfigError(std::string("config key \"") + key + "\" must be an array");
    out.clear();
    for (const json& e : v) {
        if (!e.is_string())
            throw ConfigError(std::string("config key \"") + key + "\" must contain only strings");
        out.push_back(e.get<std::string>());
    }
}

std::string data_stem(const ExperimentConfig& cfg) { return cfg.scenario + "-" + cfg.input_domain; }

void verify_manifest(const ExperimentConfig& cfg) {
    const std::string mp = manifest_path(cfg);
    if (!fs::exists(mp))
        throw DataError("missing dataset manifest " + mp + "; run the generate subcommand first");
    json j;
    try {
        j = json::parse(read_text_file(mp));
    } catch (const json::parse_error& e) {
        throw DataError("dataset manifest " + mp + " is not valid JSON: " + e.what());
    }
    const std::string want = hex16(cfg.data_fingerprint());
    const std::string got = j.value("data_fingerprint", std::string());
    if (got != want)
        throw DataError("datasets under " + cfg.out_dir +
                        " were generated from a different configuration (data fingerprint " + got +
                        ", expected " + want + "); rerun the generate subcommand");
}

void check_dataset_matches(const ExperimentConfig& cfg, const chan::Dataset& d, const std::string& path) {
    const std::uint32_t want_flag = cfg.input_domain == "spatial" ? chan::domain::spatial_freq
                                                                  : chan::domain::angular_delay;
    if (d.domain_flag != want_flag || static_cast<int>(d.n_tx) != cfg.n_tx ||
        static_cast<int>(d.n_delay) != cfg.n_delay || static_cast<int>(d.n_sub) != cfg.n_sub)
        throw DataError("dataset " + path + " does not match the configuration (domain or dimensions)");
}

void check_checkpoint_matches(const ExperimentConfig& cfg, const std::string& method, int m,
                              const LoadedModel& lm, const std::string& path,
                              double lo, double hi) {
    const CsiNetConfig& mc = lm.net.config();
    const bool want_cs = method == "cs-csinet";
    if (mc.n_delay != cfg.rows() || mc.n_tx != cfg.n_tx || mc.codeword_dim != m ||
        mc.cs_encoder != want_cs || mc.refinenet_units != cfg.refinenet_units)
        throw DataError("checkpoint " + path + " does not match the configuration; retrain");
    // Norm constants must agree with the dataset the model will reconstruct.
    const double span = std::max(1.0, std::abs(hi - lo));
    if (std::abs(lm.norm_lo - lo) > 1e-9 * span || std::abs(lm.norm_hi - hi) > 1e-9 * span)
        throw DataError("checkpoint " + path +
                        " stores normalization constants that disagree with the dataset; retrain");
}

chan::Dataset read_required_split(const ExperimentConfig& cfg, const std::string& split) {
    const std::string p = split_path(cfg, split);
    if (!fs::exists(p))
        throw DataError("missing dataset " + p + "; run the generate subcommand first");
    chan::Dataset d = chan::dataset_read(p);
    check_dataset_matches(cfg, d, p);
    return d;
}

std::string artifact_header(const ExperimentConfig& cfg) {
    return std::string("# csinet-tools ") + kVersion + " fingerprint=" + hex16(cfg.fingerprint()) + "\n";
}

CsiNetConfig model_config_for(const ExperimentConfig& cfg, const std::string& method, int m) {
    CsiNetConfig mc;
    mc.n_delay = cfg.rows();
    mc.n_tx = cfg.n_tx;
    mc.codeword_dim = m;
    mc.refinenet_units = cfg.refinenet_units;
    mc.relu_after_add = cfg.relu_after_add;
    mc.encoder_bn_relu = cfg.encoder_bn_relu;
    mc.cs_encoder = method == "cs-csinet";
    mc.sensing_seed = mc.cs_encoder ? sensing_seed_for(cfg, m) : 0;
    mc.input_domain = cfg.input_domain;
    return mc;
}

// Shared core of evaluate and baseline: fill one report row per
// (gamma, method) cell. Wall-clock timing is deliberately left out so the
// report is byte-reproducible; the benchmark subcommand owns latency.
std::vector<metrics::EvalRow> evaluate_methods(const ExperimentConfig& cfg,
                                               const std::vector<std::string>& methods) {
    cfg.validate();
    verify_manifest(cfg);
    const chan::Dataset test = read_required_split(cfg, "test");
    const double lo = test.norm_lo, hi = test.norm_hi;
    const std::int64_t total = test.count();
    const int n = cfg.input_dim();

    const int k_rho = static_cast<int>(std::min<std::int64_t>(cfg.rho_samples, total));
    const std::vector<chan::CMat> truth_mats =
        rho_mats(test, head_samples(test.samples, k_rho), k_rho, cfg.n_sub);

    Tensor xn_full;  // built lazily: only learned methods need the whole split
    std::vector<metrics::EvalRow> rows;
    for (const double gamma : cfg.gammas) {
        const int m = cfg.codeword_dim(gamma);
        for (const std::string& method : methods) {
            metrics::EvalRow row;
            row.method = method;
            row.scenario = cfg.scenario;
            row.gamma = gamma;
            row.fingerprint = cfg.fingerprint();
            if (is_learned(method)) {
                const std::string ck = checkpoint_path(cfg, method, gamma);
                if (!fs::exists(ck)) {
                    row.absent = true;
                    rows.push_back(row);
                    continue;
                }
                const LoadedModel lm = load_model(ck);
                check_checkpoint_matches(cfg, method, m, lm, ck, lo, hi);
                if (xn_full.numel() == 0) xn_full = chan::normalize_values(test.samples, lo, hi);
                const Tensor est_raw =
                    chan::denormalize_values(reconstruct_all(lm.net, xn_full), lo, hi);
                row.nmse_db = metrics::nmse_db(test.samples, est_raw);
                const std::vector<chan::CMat> est_mats =
                    rho_mats(test, head_samples(est_raw, k_rho), k_rho, cfg.n_sub);
                const metrics::RhoResult rr =
                    metrics::cosine_similarity(truth_mats, est_mats, cfg.threads);
                row.rho = rr.rho;
                row.excluded_rows = rr.excluded_rows;
                row.sample_count = total;
            } else {
                const std::int64_t kb = std::min<std::int64_t>(cfg.baseline_samples, total);
                const Tensor truth_head = head_samples(test.samples, kb);
                const cs::SensingMatrix A = cs::make_sensing_matrix(m, n, sensing_seed_for(cfg, m));
                const RecenteredBatch rb = project_batch(truth_head, lo, hi, A);
                cs::SolverConfig sc;
                sc.max_iters = cfg.solver_iters;
                Tensor xhat;
                if (method == "lasso") {
                    cs::OracleResult o = cs::lambda_oracle(rb.y, A, rb.xprime, sc);
                    xhat = std::move(o.x);
                } else {
                    cs::AmpResult ar = cs::amp_recover(rb.y, A, sc);
                    xhat = std::move(ar.x);
                }
                const Tensor est_raw = assemble_estimate(xhat, truth_head.shape(), rb.z0, lo, hi);
                row.nmse_db = metrics::nmse_db(truth_head, est_raw);
                const int kr = static_cast<int>(std::min<std::int64_t>(k_rho, kb));
                const std::vector<chan::CMat> tm(truth_mats.begin(), truth_mats.begin() + kr);
                const std::vector<chan::CMat> est_mats =
                    rho_mats(test, head_samples(est_raw, kr), kr, cfg.n_sub);
                const metrics::RhoResult rr = metrics::cosine_similarity(tm, est_mats, cfg.threads);
                row.rho = rr.rho;
                row.excluded_rows = rr.excluded_rows;
                row.sample_count = kb;
            }
            rows.push_back(row);
        }
    }
    metrics::mark_best(rows);
    return rows;
}

void write_report_files(const ExperimentConfig& cfg, const std::vector<metrics::EvalRow>& rows,
                        const std::string& csv_path, const std::string& table_path) {
    write_text_file(csv_path, artifact_header(cfg) + metrics::report_csv(rows));
    std::ostringstream head;
    head << "csinet-tools " << kVersion << "  config fingerprint " << hex16(cfg.fingerprint()) << "\n"
         << "scenario " << cfg.scenario << ", domain " << cfg.input_domain << ", seed " << cfg.seed
         << "\n"
         << "conventions: NMSE = mean of per-sample error ratios, in dB; rho = per-sample subcarrier "
            "mean, then sample mean\n"
         << "lasso = FISTA with oracle lambda (grid of lambda_max multipliers), "
         << cfg.solver_iters << " iterations; sensing matrix entries ~ N(0, 1/M)\n"
         << "decode latency lives in benchmark.csv so this report stays byte-reproducible\n\n";
    write_text_file(table_path, head.str() + metrics::report_table(rows));
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        (void)chan::ScenarioParams::preset(scenario);
    } catch (const ConfigError&) {
        throw ConfigError("unknown scenario preset \"" + scenario + "\"");
    }
    if (input_domain != "angular" && input_domain != "spatial")
        throw ConfigError("input_domain must be \"angular\" or \"spatial\"");
    if (n_tx < 1 || n_tx > 1024) throw ConfigError("n_tx must be in [1, 1024]");
    if (n_delay < 1) throw ConfigError("n_delay must be >= 1");
    if (n_sub < n_delay) throw ConfigError("n_sub must be >= n_delay");
    if (input_domain == "spatial" && n_sub != n_delay)
        throw ConfigError("spatial-domain runs need n_sub == n_delay (the model consumes full "
                          "subcarrier rows)");
    if (train_samples < 2) throw ConfigError("train_samples must be >= 2");
    if (val_samples < 1) throw ConfigError("val_samples must be >= 1");
    if (test_samples < 1) throw ConfigError("test_samples must be >= 1");
    if (gammas.empty()) throw ConfigError("gammas must not be empty");
    for (const double g : gammas) (void)codeword_dim(g);  // throws when not an integer
    if (methods.empty()) throw ConfigError("methods must not be empty");
    std::set<std::string> seen;
    for (const std::string& mth : methods) {
        if (mth != "csinet" && mth != "cs-csinet" && mth != "lasso" && mth != "amp")
            throw ConfigError("unknown method \"" + mth +
                              "\" (expected csinet, cs-csinet, lasso, or amp)");
        if (!seen.insert(mth).second) throw ConfigError("method \"" + mth + "\" listed twice");
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch statistics)");
    if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be positive and finite");
    if (refinenet_units < 0 || refinenet_units > 64)
        throw ConfigError("refinenet_units must be in [0, 64]");
    if (solver_iters < 1) throw ConfigError("solver_iters must be >= 1");
    if (bench_repetitions < 1) throw ConfigError("bench_repetitions must be >= 1");
    if (bench_samples < 1) throw ConfigError("bench_samples must be >= 1");
    if (baseline_samples < 1) throw ConfigError("baseline_samples must be >= 1");
    if (rho_samples < 1) throw ConfigError("rho_samples must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (threads < 1 || threads > 256) throw ConfigError("threads must be in [1, 256]");
}

int ExperimentConfig::codeword_dim(double gamma) const {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw ConfigError("gamma " + std::to_string(gamma) + " must be in (0, 1]");
    const double m_real = gamma * input_dim();
    const double rounded = std::round(m_real);
    if (std::abs(m_real - rounded) > 1e-6 || rounded < 1.0)
        throw ConfigError("gamma " + std::to_string(gamma) +
                          " does not yield an integer codeword dimension (gamma * " +
                          std::to_string(input_dim()) + " = " + std::to_string(m_real) + ")");
    return static_cast<int>(rounded);
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["version"] = kVersion;
    j["scenario"] = scenario;
    j["input_domain"] = input_domain;
    j["n_tx"] = n_tx;
    j["n_delay"] = n_delay;
    j["n_sub"] = n_sub;
    j["train_samples"] = train_samples;
    j["val_samples"] = val_samples;
    j["test_samples"] = test_samples;
    j["gammas"] = gammas;
    j["methods"] = methods;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = static_cast<double>(learning_rate);
    j["refinenet_units"] = refinenet_units;
    j["relu_after_add"] = relu_after_add;
    j["encoder_bn_relu"] = encoder_bn_relu;
    j["solver_iters"] = solver_iters;
    j["bench_repetitions"] = bench_repetitions;
    j["bench_samples"] = bench_samples;
    j["baseline_samples"] = baseline_samples;
    j["rho_samples"] = rho_samples;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["threads"] = threads;
    return j.dump();
}

std::uint64_t ExperimentConfig::fingerprint() const { return fnv1a64(canonical_json()); }

std::uint64_t ExperimentConfig::data_fingerprint() const {
    json j;
    j["version"] = kVersion;
    j["scenario"] = scenario;
    j["input_domain"] = input_domain;
    j["n_tx"] = n_tx;
    j["n_delay"] = n_delay;
    j["n_sub"] = n_sub;
    j["train_samples"] = train_samples;
    j["val_samples"] = val_samples;
    j["test_samples"] = test_samples;
    j["seed"] = seed;
    return fnv1a64(j.dump());
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    ExperimentConfig c;
    if (j.contains("scale")) {
        std::string scale;
        assign_from_json(j.at("scale"), "scale", scale);
        if (scale == "paper") {
            c.train_samples = 100000;
            c.val_samples = 30000;
            c.test_samples = 20000;
            c.epochs = 1000;
        } else if (scale != "desk") {
            throw ConfigError("scale must be \"desk\" or \"paper\"");
        }
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "scale") continue;  // applied above, before explicit overrides
        if (key == "version") {
            std::string v;
            assign_from_json(value, "version", v);
            if (v != kVersion)
                throw ConfigError("config was written for csinet-tools " + v +
                                  ", this build is " + kVersion);
        } else if (key == "scenario") assign_from_json(value, "scenario", c.scenario);
        else if (key == "input_domain") assign_from_json(value, "input_domain", c.input_domain);
        else if (key == "n_tx") assign_from_json(value, "n_tx", c.n_tx);
        else if (key == "n_delay") assign_from_json(value, "n_delay", c.n_delay);
        else if (key == "n_sub") assign_from_json(value, "n_sub", c.n_sub);
        else if (key == "train_samples") assign_from_json(value, "train_samples", c.train_samples);
        else if (key == "val_samples") assign_from_json(value, "val_samples", c.val_samples);
        else if (key == "test_samples") assign_from_json(value, "test_samples", c.test_samples);
        else if (key == "gammas") assign_from_json(value, "gammas", c.gammas);
        else if (key == "methods") assign_from_json(value, "methods", c.methods);
        else if (key == "epochs") assign_from_json(value, "epochs", c.epochs);
        else if (key == "batch_size") assign_from_json(value, "batch_size", c.batch_size);
        else if (key == "learning_rate") assign_from_json(value, "learning_rate", c.learning_rate);
        else if (key == "refinenet_units") assign_from_json(value, "refinenet_units", c.refinenet_units);
        else if (key == "relu_after_add") assign_from_json(value, "relu_after_add", c.relu_after_add);
        else if (key == "encoder_bn_relu") assign_from_json(value, "encoder_bn_relu", c.encoder_bn_relu);
        else if (key == "solver_iters") assign_from_json(value, "solver_iters", c.solver_iters);
        else if (key == "bench_repetitions")
            assign_from_json(value, "bench_repetitions", c.bench_repetitions);
        else if (key == "bench_samples") assign_from_json(value, "bench_samples", c.bench_samples);
        else if (key == "baseline_samples")
            assign_from_json(value, "baseline_samples", c.baseline_samples);
        else if (key == "rho_samples") assign_from_json(value, "rho_samples", c.rho_samples);
        else if (key == "seed") assign_from_json(value, "seed", c.seed);
        else if (key == "out_dir") assign_from_json(value, "out_dir", c.out_dir);
        else if (key == "threads") assign_from_json(value, "threads", c.threads);
        else throw ConfigError("unknown config key \"" + key + "\"");
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

chan::ScenarioParams ExperimentConfig::scenario_params() const {
    chan::ScenarioParams p = chan::ScenarioParams::preset(scenario);
    p.n_tx = n_tx;
    p.n_sub = n_sub;
    p.n_delay = n_delay;
    p.rng_seed = seed;
    p.validate();
    return p;
}

std::string split_path(const ExperimentConfig& cfg, const std::string& split) {
    if (split != "train" && split != "val" && split != "test")
        throw UsageError("split must be train, val, or test");
    return cfg.out_dir + "/data/" + data_stem(cfg) + "-" + split + ".ds";
}

std::string manifest_path(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/data/manifest.json";
}

std::string checkpoint_path(const ExperimentConfig& cfg, const std::string& method, double gamma) {
    return cfg.out_dir + "/models/" + method + "-m" + std::to_string(cfg.codeword_dim(gamma)) +
           ".ckpt";
}

std::string loss_csv_path(const ExperimentConfig& cfg, const std::string& method, double gamma) {
    return cfg.out_dir + "/models/" + method + "-m" + std::to_string(cfg.codeword_dim(gamma)) +
           "-loss.csv";
}

std::string report_csv_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/report.csv"; }
std::string report_table_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/report.txt"; }
std::string benchmark_csv_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/benchmark.csv"; }

std::uint64_t sensing_seed_for(const ExperimentConfig& cfg, int m) {
    return Rng::stream(cfg.seed, "sensing-matrix", static_cast<std::uint64_t>(m)).next_u64();
}

GenerateResult cmd_generate(const ExperimentConfig& cfg, bool force) {
    cfg.validate();
    GenerateResult out;
    out.files = {split_path(cfg, "train"), split_path(cfg, "val"), split_path(cfg, "test"),
                 manifest_path(cfg)};
    if (!force)
        for (const std::string& f : out.files)
            if (fs::exists(f))
                throw DataError(f + " already exists; pass --force to regenerate");

    const chan::ScenarioParams p = cfg.scenario_params();
    chan::SplitSpec sizes;
    sizes.train = cfg.train_samples;
    sizes.val = cfg.val_samples;
    sizes.test = cfg.test_samples;
    const std::uint32_t flag = cfg.input_domain == "spatial" ? chan::domain::spatial_freq
                                                             : chan::domain::angular_delay;
    const chan::Splits s = chan::generate_splits(p, sizes, flag, cfg.threads);

    fs::create_directories(fs::path(out.files[0]).parent_path());
    chan::dataset_write(out.files[0], s.train);
    chan::dataset_write(out.files[1], s.val);
    chan::dataset_write(out.files[2], s.test);

    json mj;
    mj["version"] = kVersion;
    mj["data_fingerprint"] = hex16(cfg.data_fingerprint());
    mj["config_fingerprint"] = hex16(cfg.fingerprint());
    mj["seed"] = cfg.seed;
    mj["scenario"] = cfg.scenario;
    mj["input_domain"] = cfg.input_domain;
    mj["n_tx"] = cfg.n_tx;
    mj["n_delay"] = cfg.n_delay;
    mj["n_sub"] = cfg.n_sub;
    mj["train_samples"] = cfg.train_samples;
    mj["val_samples"] = cfg.val_samples;
    mj["test_samples"] = cfg.test_samples;
    mj["norm_lo"] = s.train.norm_lo;
    mj["norm_hi"] = s.train.norm_hi;
    write_text_file(out.files[3], mj.dump(2) + "\n");
    return out;
}

TrainResultSummary cmd_train(const ExperimentConfig& cfg, bool force) {
    cfg.validate();
    std::vector<std::string> learned;
    for (const std::string& mth : cfg.methods)
        if (is_learned(mth)) learned.push_back(mth);
    if (learned.empty())
        throw ConfigError("config lists no learned methods (csinet, cs-csinet); nothing to train");

    verify_manifest(cfg);
    const chan::Dataset train_ds = read_required_split(cfg, "train");
    const chan::Dataset val_ds = read_required_split(cfg, "val");
    const double lo = train_ds.norm_lo, hi = train_ds.norm_hi;

    // Refuse before the expensive part so a forgotten --force cannot burn hours.
    if (!force)
        for (const std::string& mth : learned)
            for (const double gamma : cfg.gammas) {
                const std::string ck = checkpoint_path(cfg, mth, gamma);
                if (fs::exists(ck)) throw DataError(ck + " already exists; pass --force to retrain");
            }

    const Tensor xt = chan::normalize_values(train_ds.samples, lo, hi);
    const Tensor xv = chan::normalize_values(val_ds.samples, lo, hi);

    TrainResultSummary out;
    for (const std::string& mth : learned) {
        for (const double gamma : cfg.gammas) {
            const int m = cfg.codeword_dim(gamma);
            CsiNet net(model_config_for(cfg, mth, m),
                       Rng::stream(cfg.seed, "init-" + mth, static_cast<std::uint64_t>(m)).next_u64());
            TrainHyper hy;
            hy.epochs = cfg.epochs;
            hy.batch_size = cfg.batch_size;
            hy.lr = cfg.learning_rate;
            hy.shuffle_seed =
                Rng::stream(cfg.seed, "shuffle-" + mth, static_cast<std::uint64_t>(m)).next_u64();
            const TrainResult tr = train_model(net, xt, xv, hy);

            const std::string ck = checkpoint_path(cfg, mth, gamma);
            fs::create_directories(fs::path(ck).parent_path());
            save_model(ck, net, lo, hi);

            std::string csv = artifact_header(cfg) + "epoch,train_loss,val_loss,best_val_loss\n";
            char line[128];
            for (const EpochRecord& rec : tr.history) {
                std::snprintf(line, sizeof(line), "%d,%.9e,%.9e,%.9e\n", rec.epoch, rec.train_loss,
                              rec.val_loss, rec.best_val_so_far);
                csv += line;
            }
            write_text_file(loss_csv_path(cfg, mth, gamma), csv);

            TrainCell cell;
            cell.method = mth;
            cell.gamma = gamma;
            cell.best_epoch = tr.best_epoch;
            cell.best_val_loss = tr.best_val_loss;
            cell.checkpoint_file = ck;
            out.cells.push_back(std::move(cell));
        }
    }
    return out;
}

std::vector<metrics::EvalRow> cmd_evaluate(const ExperimentConfig& cfg) {
    std::vector<metrics::EvalRow> rows = evaluate_methods(cfg, cfg.methods);
    write_report_files(cfg, rows, report_csv_path(cfg), report_table_path(cfg));
    return rows;
}

std::vector<metrics::EvalRow> cmd_baseline(const ExperimentConfig& cfg) {
    std::vector<std::string> solvers;
    for (const std::string& mth : cfg.methods)
        if (!is_learned(mth)) solvers.push_back(mth);
    if (solvers.empty())
        throw ConfigError("config lists no classical methods (lasso, amp); nothing to run");
    std::vector<metrics::EvalRow> rows = evaluate_methods(cfg, solvers);
    write_report_files(cfg, rows, cfg.out_dir + "/baseline.csv", cfg.out_dir + "/baseline.txt");
    return rows;
}

std::vector<BenchRow> cmd_benchmark(const ExperimentConfig& cfg) {
    cfg.validate();
    verify_manifest(cfg);
    const chan::Dataset test = read_required_split(cfg, "test");
    const double lo = test.norm_lo, hi = test.norm_hi;
    const std::int64_t k = std::min<std::int64_t>(cfg.bench_samples, test.count());
    const Tensor raw_head = head_samples(test.samples, k);
    const Tensor xn = chan::normalize_values(raw_head, lo, hi);
    const int n = cfg.input_dim();

    std::vector<BenchRow> rows;
    for (const double gamma : cfg.gammas) {
        const int m = cfg.codeword_dim(gamma);
        std::vector<BenchRow> cell;
        for (const std::string& method : cfg.methods) {
            BenchRow r;
            r.method = method;
            r.gamma = gamma;
            if (is_learned(method)) {
                const std::string ck = checkpoint_path(cfg, method, gamma);
                if (!fs::exists(ck)) {
                    r.absent = true;
                    cell.push_back(r);
                    continue;
                }
                const LoadedModel lm = load_model(ck);
                check_checkpoint_matches(cfg, method, m, lm, ck, lo, hi);
                const Tensor codes = lm.net.encode(xn);  // encoding is not the timed claim
                BlasThreadPin pin;
                const metrics::BenchmarkResult b = metrics::benchmark_decode(
                    [&] { const Tensor out = lm.net.decode(codes); (void)out; },
                    cfg.bench_repetitions);
                r.per_sample_seconds = b.mean_seconds / static_cast<double>(k);
                r.variance_seconds2 = b.variance_seconds2;
            } else {
                const cs::SensingMatrix A = cs::make_sensing_matrix(m, n, sensing_seed_for(cfg, m));
                const RecenteredBatch rb = project_batch(raw_head, lo, hi, A);
                cs::SolverConfig sc;
                sc.max_iters = cfg.solver_iters;
                sc.tolerance = 1e-300;  // full iteration budget: the claim is about max_iters
                const double lam = 0.01 * lambda_max_of(rb.y, A);
                const int reps = std::min(cfg.bench_repetitions, 3);
                BlasThreadPin pin;
                const metrics::BenchmarkResult b = metrics::benchmark_decode(
                    [&] {
                        if (method == "lasso") {
                            const cs::FistaResult fr = cs::fista_lasso(rb.y, A, lam, sc);
                            (void)fr;
                        } else {
                            const cs::AmpResult ar = cs::amp_recover(rb.y, A, sc);
                            (void)ar;
                        }
                    },
                    reps, /*warmup=*/1);
                r.per_sample_seconds = b.mean_seconds / static_cast<double>(k);
                r.variance_seconds2 = b.variance_seconds2;
            }
            cell.push_back(r);
        }
        double csinet_time = 0.0;
        for (const BenchRow& r : cell)
            if (r.method == "csinet" && !r.absent) csinet_time = r.per_sample_seconds;
        for (BenchRow& r : cell)
            if (!r.absent && csinet_time > 0.0) r.speedup_vs_csinet = r.per_sample_seconds / csinet_time;
        rows.insert(rows.end(), cell.begin(), cell.end());
    }

    // Single-method runs have nothing to compare against, so the ratio column
    // is omitted entirely rather than printed as a degenerate 1.0.
    const bool with_ratio = cfg.methods.size() > 1;
    std::string csv = artifact_header(cfg);
    csv += with_ratio ? "method,gamma,per_sample_seconds,variance_seconds2,time_vs_csinet,status\n"
                      : "method,gamma,per_sample_seconds,variance_seconds2,status\n";
    char buf[64];
    for (const BenchRow& r : rows) {
        csv += r.method + "," + metrics::gamma_label(r.gamma) + ",";
        if (r.absent) {
            csv += with_ratio ? ",,," : ",,";
            csv += "absent\n";
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%.6e", r.per_sample_seconds);
        csv += std::string(buf) + ",";
        std::snprintf(buf, sizeof(buf), "%.6e", r.variance_seconds2);
        csv += std::string(buf) + ",";
        if (with_ratio) {
            if (r.speedup_vs_csinet > 0.0) {
                std::snprintf(buf, sizeof(buf), "%.3f", r.speedup_vs_csinet);
                csv += buf;
            }
            csv += ",";
        }
        csv += "ok\n";
    }
    write_text_file(benchmark_csv_path(cfg), csv);
    return rows;
}

}  // namespace csinet::exp
