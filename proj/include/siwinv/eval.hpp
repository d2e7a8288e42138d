#pragma once
// Evaluation artifacts: per-split metric tables, iteration traces, log-scale
// error histograms, side-by-side parameter comparisons, loop-back spectrum
// verification, and monotonic trend sweeps. Everything here is a pure
// function of (models, data); writers emit plot-ready CSV.

#include "siwinv/pipeline.hpp"
#include "siwinv/wave.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace siwinv {

inline constexpr const char* kParamNames[kTargetDim] = {"D1", "D2", "R1", "R2", "R3", "G"};

// ---- metrics ----

struct SplitMetrics {
    std::string model;
    std::string split;
    double mse = 0.0; // normalized units
    double mae = 0.0;
    std::array<double, kTargetDim> param_mae; // physical units
};

struct MetricsReport {
    std::vector<SplitMetrics> rows;
};

namespace detail {

inline SplitMetrics score_rows(const std::string& model, const std::string& split,
                               const std::vector<float>& pred, const std::vector<float>& truth,
                               const NormalizationStats& st) {
    SplitMetrics m;
    m.model = model;
    m.split = split;
    m.param_mae.fill(0.0);
    const std::size_t n = truth.size() / kTargetDim;
    double se = 0.0, ae = 0.0;
    double pd[kTargetDim], td[kTargetDim], pphys[kTargetDim], tphys[kTargetDim];
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < kTargetDim; ++k) {
            double d = static_cast<double>(pred[i * kTargetDim + k]) -
                       static_cast<double>(truth[i * kTargetDim + k]);
            se += d * d;
            ae += std::abs(d);
            pd[k] = pred[i * kTargetDim + k];
            td[k] = truth[i * kTargetDim + k];
        }
        denormalize_targets(pd, st, pphys);
        denormalize_targets(td, st, tphys);
        for (int k = 0; k < kTargetDim; ++k) m.param_mae[k] += std::abs(pphys[k] - tphys[k]);
    }
    const double denom = static_cast<double>(n) * kTargetDim;
    m.mse = se / denom;
    m.mae = ae / denom;
    for (int k = 0; k < kTargetDim; ++k) m.param_mae[k] /= static_cast<double>(n);
    return m;
}

} // namespace detail

inline MetricsReport compute_metrics(const PipelineBundle& b, const NormalizedView& view) {
    MetricsReport report;
    struct SplitRef {
        const char* name;
        const std::vector<int>* idx;
    };
    const SplitRef splits[] = {{"train", &view.train},
                               {"validation", &view.validation},
                               {"test", &view.test}};

    struct ModelRef {
        const char* name;
        bool enabled;
        std::vector<float> (*predict)(const PipelineBundle&, const float*, int);
    };
    const ModelRef models[] = {{"fim", b.has_fim, &fim_batch},
                               {"hifr2", b.has_hifr2, &hifr2_batch},
                               {"irc", b.has_irc, &irc_batch}};

    for (const auto& mr : models) {
        if (!mr.enabled) continue;
        for (const auto& sr : splits) {
            auto x = detail::gather_rows(view.x, *sr.idx, kFeatureDim);
            auto y = detail::gather_rows(view.y, *sr.idx, kTargetDim);
            auto pred = mr.predict(b, x.data(), static_cast<int>(sr.idx->size()));
            report.rows.push_back(detail::score_rows(mr.name, sr.name, pred, y, b.stats));
        }
    }
    return report;
}

inline void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "model,split,mse,mae";
    for (const char* p : kParamNames) out << ",mae_" << p;
    out << "\n";
    out.precision(12);
    for (const auto& r : report.rows) {
        out << r.model << "," << r.split << "," << r.mse << "," << r.mae;
        for (double v : r.param_mae) out << "," << v;
        out << "\n";
    }
}

// ---- iteration trace ----

// Recomputed over the union of all splits; point 0 is the FIM baseline.
inline std::vector<IrcTracePoint> iteration_trace(const PipelineBundle& b, const NormalizedView& view) {
    auto iterates = irc_iterates_batch(b, view.x.data(), view.count);
    std::vector<IrcTracePoint> trace;
    for (const auto& p : iterates) {
        double se = 0.0, ae = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double d = static_cast<double>(p[i]) - static_cast<double>(view.y[i]);
            se += d * d;
            ae += std::abs(d);
        }
        trace.push_back({se / p.size(), ae / p.size()});
    }
    return trace;
}

inline void write_trace_csv(const std::vector<IrcTracePoint>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "iteration,mse,mae\n";
    out.precision(12);
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << "," << trace[i].mse << "," << trace[i].mae << "\n";
}

inline std::vector<IrcTracePoint> read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<IrcTracePoint> trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        trace.push_back({std::stod(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(line.substr(c2 + 1))});
    }
    return trace;
}

// ---- log-scale error histogram ----

struct ErrorHistogram {
    static constexpr double kLo = -5.0;
    static constexpr double kHi = 0.0;
    static constexpr double kBinWidth = 0.1;
    static constexpr int kBins = 50;
    std::vector<long long> counts = std::vector<long long>(kBins, 0);
    long long underflow = 0;
    long long overflow = 0;

    long long total() const {
        long long t = underflow + overflow;
        for (long long c : counts) t += c;
        return t;
    }
};

// Bin k covers log10(e) in [kLo + k*0.1, kLo + (k+1)*0.1). Errors are floored
// at 1e-12 before the log, so exact zeros land in the underflow bin.
inline ErrorHistogram error_histogram(const std::vector<double>& errors) {
    ErrorHistogram h;
    for (double e : errors) {
        if (e < 0.0) throw std::runtime_error("error_histogram: negative error");
        double l = std::log10(std::max(e, 1e-12));
        if (l < ErrorHistogram::kLo) {
            ++h.underflow;
        } else if (l >= ErrorHistogram::kHi) {
            ++h.overflow;
        } else {
            int k = static_cast<int>(std::floor((l - ErrorHistogram::kLo) / ErrorHistogram::kBinWidth));
            k = std::clamp(k, 0, ErrorHistogram::kBins - 1);
            ++h.counts[k];
        }
    }
    return h;
}

// Per-sample errors (mean over the six parameters, normalized units).
inline std::vector<double> per_sample_errors(const std::vector<float>& pred,
                                             const std::vector<float>& truth, bool squared) {
    const std::size_t n = truth.size() / kTargetDim;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < kTargetDim; ++k) {
            double d = static_cast<double>(pred[i * kTargetDim + k]) -
                       static_cast<double>(truth[i * kTargetDim + k]);
            acc += squared ? d * d : std::abs(d);
        }
        out[i] = acc / kTargetDim;
    }
    return out;
}

inline void write_histogram_csv(const std::vector<std::pair<std::string, ErrorHistogram>>& hists,
                                const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "bin,log10_lo,log10_hi";
    for (const auto& [name, h] : hists) out << "," << name;
    out << "\n";
    out.precision(6);
    out << "underflow,-inf," << ErrorHistogram::kLo;
    for (const auto& [name, h] : hists) out << "," << h.underflow;
    out << "\n";
    for (int k = 0; k < ErrorHistogram::kBins; ++k) {
        double lo = ErrorHistogram::kLo + k * ErrorHistogram::kBinWidth;
        out << k << "," << lo << "," << lo + ErrorHistogram::kBinWidth;
        for (const auto& [name, h] : hists) out << "," << h.counts[k];
        out << "\n";
    }
    out << "overflow," << ErrorHistogram::kHi << ",inf";
    for (const auto& [name, h] : hists) out << "," << h.overflow;
    out << "\n";
}

// ---- side-by-side comparison on one reference geometry ----

struct ComparisonTable {
    std::array<double, kTargetDim> truth{}, fim{}, hifr2{}, irc{};
};

inline ComparisonTable comparison_table(const PipelineBundle& b, const SubstrateSpec& spec,
                                        const Geometry& reference, const FrequencyGrid& grid) {
    auto s = simulate(spec, reference, grid);
    ComparisonTable t;
    t.truth = {reference.d1_mm, reference.d2_mm, reference.r1_mm,
               reference.r2_mm, reference.r3_mm, reference.g};
    if (b.has_fim) t.fim = predict_fim(b, s).physical;
    if (b.has_hifr2) t.hifr2 = predict_hifr2(b, s).final.physical;
    if (b.has_irc) t.irc = predict_irc(b, s).final().physical;
    return t;
}

inline void write_comparison_csv(const ComparisonTable& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "parameter,truth,fim,hifr2,irc\n";
    out.precision(12);
    for (int k = 0; k < kTargetDim; ++k)
        out << kParamNames[k] << "," << t.truth[k] << "," << t.fim[k] << "," << t.hifr2[k] << ","
            << t.irc[k] << "\n";
}

// ---- loop-back verification ----

// Snap a raw physical prediction to a simulable geometry: clamp each
// parameter into its sampled range, restore the radius ordering by sorting,
// then re-check the full constraint set. A violation after snapping is
// reported per item, never repaired further.
inline Geometry snap_geometry(const std::array<double, kTargetDim>& physical,
                              const NormalizationStats& st) {
    double v[kTargetDim];
    for (int k = 0; k < kTargetDim; ++k)
        v[k] = std::clamp(physical[k], st.target_min[k], st.target_max[k]);
    std::array<double, 3> radii{v[2], v[3], v[4]};
    std::sort(radii.begin(), radii.end());
    return {v[0], v[1], radii[0], radii[1], radii[2], v[5]};
}

struct VerifyItem {
    int target_index = 0;
    std::string model;
    Geometry snapped{};
    bool feasible = false;
    double s21_mse = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct VerifyOptions {
    bool include_s11 = false; // score |S11| alongside |S21|
    bool snap = true;
    int threads = 1;
};

struct VerifyReport {
    std::vector<VerifyItem> items; // target-major, model-minor order
    std::vector<std::string> models;
};

namespace detail {

inline double spectrum_mse(const Spectrum& a, const Spectrum& b, bool include_s11) {
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.s21_mag.size(); ++i) {
        double d = a.s21_mag[i] - b.s21_mag[i];
        se += d * d;
        ++n;
    }
    if (include_s11) {
        for (std::size_t i = 0; i < a.s11_mag.size(); ++i) {
            double d = a.s11_mag[i] - b.s11_mag[i];
            se += d * d;
            ++n;
        }
    }
    return se / static_cast<double>(n);
}

} // namespace detail

inline VerifyReport verify_designs(const PipelineBundle& b, const std::vector<Spectrum>& targets,
                                   const SubstrateSpec& spec, const FrequencyGrid& grid,
                                   const VerifyOptions& opts = {}) {
    VerifyReport report;
    if (b.has_fim) report.models.push_back("fim");
    if (b.has_hifr2) report.models.push_back("hifr2");
    if (b.has_irc) report.models.push_back("irc");
    const int per_target = static_cast<int>(report.models.size());
    report.items.resize(targets.size() * per_target);

    auto run_target = [&](int t) {
        for (int m = 0; m < per_target; ++m) {
            VerifyItem& item = report.items[static_cast<std::size_t>(t) * per_target + m];
            item.target_index = t;
            item.model = report.models[m];
            std::array<double, kTargetDim> physical{};
            if (item.model == "fim")
                physical = predict_fim(b, targets[t]).physical;
            else if (item.model == "hifr2")
                physical = predict_hifr2(b, targets[t]).final.physical;
            else
                physical = predict_irc(b, targets[t]).final().physical;

            item.snapped = opts.snap ? snap_geometry(physical, b.stats)
                                     : Geometry{physical[0], physical[1], physical[2],
                                                physical[3], physical[4], physical[5]};
            try {
                validate_geometry(item.snapped);
                auto sim = simulate(spec, item.snapped, grid);
                item.s21_mse = detail::spectrum_mse(targets[t], sim, opts.include_s11);
                item.feasible = true;
            } catch (const std::exception& e) {
                item.feasible = false;
                item.note = e.what();
            }
        }
    };

    const int n = static_cast<int>(targets.size());
    int workers = std::min(opts.threads, n);
    if (workers <= 1) {
        for (int t = 0; t < n; ++t) run_target(t);
    } else {
        std::atomic<int> cursor{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int t = cursor.fetch_add(1); t < n; t = cursor.fetch_add(1)) run_target(t);
            });
        for (auto& th : pool) th.join();
    }
    return report;
}

inline void write_verify_csv(const VerifyReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "target,model,feasible,s21_mse,D1,D2,R1,R2,R3,G,note\n";
    out.precision(12);
    for (const auto& it : report.items) {
        out << it.target_index << "," << it.model << "," << (it.feasible ? 1 : 0) << ",";
        if (it.feasible)
            out << it.s21_mse;
        else
            out << "nan";
        out << "," << it.snapped.d1_mm << "," << it.snapped.d2_mm << "," << it.snapped.r1_mm << ","
            << it.snapped.r2_mm << "," << it.snapped.r3_mm << "," << it.snapped.g << ","
            << it.note << "\n";
    }
}

// Mean spectrum MSE per model over feasible items.
inline std::vector<std::pair<std::string, double>> verify_means(const VerifyReport& report) {
    std::vector<std::pair<std::string, double>> means;
    for (const auto& model : report.models) {
        double acc = 0.0;
        int n = 0;
        for (const auto& it : report.items)
            if (it.model == model && it.feasible) {
                acc += it.s21_mse;
                ++n;
            }
        means.emplace_back(model, n ? acc / n : std::numeric_limits<double>::quiet_NaN());
    }
    return means;
}

// ---- monotonic trend sweep ----

struct TrendReport {
    std::string parameter;
    std::vector<double> values;
    std::vector<double> lowest_resonance_ghz;
    std::string verdict; // strictly-decreasing, strictly-increasing, flat, mixed
};

inline Geometry with_parameter(const Geometry& base, const std::string& param, double value) {
    Geometry g = base;
    if (param == "D1")
        g.d1_mm = value;
    else if (param == "D2")
        g.d2_mm = value;
    else if (param == "R1")
        g.r1_mm = value;
    else if (param == "R2")
        g.r2_mm = value;
    else if (param == "R3")
        g.r3_mm = value;
    else if (param == "G")
        g.g = value;
    else
        throw std::runtime_error("unknown parameter: " + param);
    return g;
}

inline TrendReport trend_check(const SubstrateSpec& spec, const Geometry& base,
                               const std::string& param, const std::vector<double>& values,
                               const FrequencyGrid& grid,
                               std::optional<double> end_override_mm = std::nullopt) {
    if (values.size() < 2) throw std::runtime_error("trend_check: need at least two values");
    TrendReport report;
    report.parameter = param;
    report.values = values;
    for (double v : values) {
        Geometry g = with_parameter(base, param, v);
        validate_geometry(g);
        auto s = simulate(spec, g, grid, end_override_mm);
        auto res = find_resonances(s);
        if (res.empty()) throw std::runtime_error("trend_check: no resonance found at value " +
                                                  std::to_string(v));
        report.lowest_resonance_ghz.push_back(res.front());
    }

    const auto& f = report.lowest_resonance_ghz;
    const double tol = 1e-9;
    bool dec = true, inc = true, flat = true;
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (!(f[i] < f[i - 1] - tol)) dec = false;
        if (!(f[i] > f[i - 1] + tol)) inc = false;
        if (std::abs(f[i] - f[i - 1]) > tol) flat = false;
    }
    report.verdict = flat ? "flat" : dec ? "strictly-decreasing" : inc ? "strictly-increasing" : "mixed";
    return report;
}

inline void write_trend_csv(const TrendReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "parameter,value,lowest_resonance_ghz\n";
    out.precision(12);
    for (std::size_t i = 0; i < report.values.size(); ++i)
        out << report.parameter << "," << report.values[i] << ","
            << report.lowest_resonance_ghz[i] << "\n";
}

} // namespace siwinv
