#include "csinet/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <thread>

#include "csinet/errors.hpp"

namespace csinet::metrics {

double nmse_db(const Tensor& truth, const Tensor& estimate) {
    require_same_shape(truth, estimate, "nmse_db");
    if (truth.rank() < 2) throw ShapeError("nmse_db: need [B, ...] with samples along dim 0");
    const int b = truth.dim(0);
    if (b < 1) throw DataError("nmse_db: no samples");
    const std::int64_t per_sample = truth.numel() / b;

    double ratio_sum = 0.0;
    for (int i = 0; i < b; ++i) {
        const float* t = truth.data() + i * per_sample;
        const float* e = estimate.data() + i * per_sample;
        double err = 0.0, ref = 0.0;
        for (std::int64_t k = 0; k < per_sample; ++k) {
            const double d = static_cast<double>(t[k]) - static_cast<double>(e[k]);
            err += d * d;
            ref += static_cast<double>(t[k]) * static_cast<double>(t[k]);
        }
        if (ref <= 0.0)
            throw DataError("nmse_db: truth sample " + std::to_string(i) + " has zero norm");
        ratio_sum += err / ref;
    }
    const double mean_ratio = ratio_sum / b;
    if (mean_ratio <= 0.0) return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(mean_ratio));
}

namespace {

struct SampleRho {
    double mean = 0.0;
    std::int64_t excluded = 0;
};

SampleRho sample_rho(const chan::CMat& t, const chan::CMat& e) {
    if (t.rows != e.rows || t.cols != e.cols)
        throw ShapeError("cosine_similarity: sample shape mismatch");
    SampleRho out;
    double acc = 0.0;
    std::int64_t used = 0;
    for (int n = 0; n < t.rows; ++n) {
        const chan::cplx* tr = &t.at(n, 0);
        const chan::cplx* er = &e.at(n, 0);
        chan::cplx inner{0.0, 0.0};
        double tn = 0.0, en = 0.0;
        for (int k = 0; k < t.cols; ++k) {
            inner += std::conj(er[k]) * tr[k];
            tn += std::norm(tr[k]);
            en += std::norm(er[k]);
        }
        if (tn <= 0.0 || en <= 0.0) {
            ++out.excluded;
            continue;
        }
        acc += std::abs(inner) / (std::sqrt(tn) * std::sqrt(en));
        ++used;
    }
    if (used == 0) throw DataError("cosine_similarity: sample has no usable subcarrier rows");
    out.mean = acc / static_cast<double>(used);
    return out;
}

}  // namespace

RhoResult cosine_similarity(const std::vector<chan::CMat>& truth,
                            const std::vector<chan::CMat>& estimate, int threads) {
    if (truth.size() != estimate.size())
        throw ShapeError("cosine_similarity: sample count mismatch (" +
                         std::to_string(truth.size()) + " vs " + std::to_string(estimate.size()) +
                         ")");
    if (truth.empty()) throw DataError("cosine_similarity: no samples");
    const std::int64_t n = static_cast<std::int64_t>(truth.size());

    std::vector<SampleRho> per(truth.size());
    std::exception_ptr failure;

    const auto work = [&](std::int64_t lo, std::int64_t hi) {
        try {
            for (std::int64_t i = lo; i < hi; ++i)
                per[static_cast<size_t>(i)] =
                    sample_rho(truth[static_cast<size_t>(i)], estimate[static_cast<size_t>(i)]);
        } catch (...) {
            if (!failure) failure = std::current_exception();
        }
    };

    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (workers == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::int64_t chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::int64_t lo = w * chunk;
            if (lo >= n) break;
            pool.emplace_back(work, lo, std::min(n, lo + chunk));
        }
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    RhoResult res;
    for (const SampleRho& s : per) {
        res.rho += s.mean;
        res.excluded_rows += s.excluded;
    }
    res.rho /= static_cast<double>(n);
    return res;
}

BenchmarkResult benchmark_decode(const std::function<void()>& fn, int repetitions, int warmup) {
    if (repetitions < 1) throw UsageError("benchmark_decode: repetitions must be >= 1");
    if (warmup < 0) throw UsageError("benchmark_decode: warmup must be >= 0");
    using clock = std::chrono::steady_clock;

    for (int i = 0; i < warmup; ++i) fn();

    std::vector<double> times(static_cast<size_t>(repetitions));
    for (int i = 0; i < repetitions; ++i) {
        const auto t0 = clock::now();
        fn();
        const auto t1 = clock::now();
        times[static_cast<size_t>(i)] = std::chrono::duration<double>(t1 - t0).count();
    }

    BenchmarkResult r;
    r.repetitions = repetitions;
    r.min_seconds = times[0];
    r.max_seconds = times[0];
    for (double t : times) {
        r.mean_seconds += t;
        r.min_seconds = std::min(r.min_seconds, t);
        r.max_seconds = std::max(r.max_seconds, t);
    }
    r.mean_seconds /= repetitions;
    if (repetitions >= 2) {
        double acc = 0.0;
        for (double t : times) acc += (t - r.mean_seconds) * (t - r.mean_seconds);
        r.variance_seconds2 = acc / (repetitions - 1);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

void mark_best(std::vector<EvalRow>& rows) {
    for (EvalRow& r : rows) r.best_in_cell = false;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].absent) continue;
        bool best = true;
        for (size_t j = 0; j < rows.size(); ++j) {
            if (i == j || rows[j].absent) continue;
            if (rows[j].scenario != rows[i].scenario || rows[j].gamma != rows[i].gamma) continue;
            if (rows[j].nmse_db < rows[i].nmse_db ||
                (rows[j].nmse_db == rows[i].nmse_db && j < i)) {
                best = false;
                break;
            }
        }
        rows[i].best_in_cell = best;
    }
}

namespace {

std::string format(const char* fmt, ...) {
    char buf[128];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

std::string gamma_str(double gamma) {
    // Compression ratios are small unit fractions; render 1/q when exact.
    if (gamma > 0.0) {
        const double inv = 1.0 / gamma;
        const double rounded = std::round(inv);
        if (std::abs(inv - rounded) < 1e-9 && rounded >= 1.0 && rounded <= 4096.0)
            return "1/" + std::to_string(static_cast<long long>(rounded));
    }
    return format("%.6g", gamma);
}

}  // namespace

std::string report_csv(const std::vector<EvalRow>& rows) {
    std::string out =
        "method,scenario,gamma,nmse_db,rho,excluded_rows,mean_decode_seconds,sample_count,"
        "fingerprint,best,status\n";
    for (const EvalRow& r : rows) {
        out += r.method + "," + r.scenario + "," + gamma_str(r.gamma) + ",";
        if (r.absent) {
            out += ",,,,";
        } else {
            out += format("%.4f", r.nmse_db) + "," + format("%.6f", r.rho) + "," +
                   std::to_string(r.excluded_rows) + "," + format("%.6e", r.mean_decode_seconds) +
                   ",";
        }
        out += std::to_string(r.sample_count) + "," + format("%016llx", (unsigned long long)r.fingerprint) +
               "," + (r.best_in_cell ? "1" : "0") + "," + (r.absent ? "absent" : "ok") + "\n";
    }
    return out;
}

std::string report_table(const std::vector<EvalRow>& rows) {
    const char* hdr = "method      scenario       gamma   nmse_db      rho        decode_s    best\n";
    std::string out = hdr;
    out += std::string(std::string(hdr).size() - 1, '-') + "\n";
    for (const EvalRow& r : rows) {
        std::string line = format("%-11s %-14s %-7s", r.method.c_str(), r.scenario.c_str(),
                                  gamma_str(r.gamma).c_str());
        if (r.absent) {
            line += format(" %-12s %-10s %-11s", "absent", "-", "-");
        } else {
            line += format(" %-12s %-10s %-11s", format("%.2f", r.nmse_db).c_str(),
                           format("%.4f", r.rho).c_str(),
                           format("%.3e", r.mean_decode_seconds).c_str());
        }
        line += r.best_in_cell ? "   *" : "";
        out += line + "\n";
    }
    return out;
}

std::string gamma_label(double gamma) { return gamma_str(gamma); }

}  // namespace csinet::metrics
