#pragma once
// Staged inverse-design pipeline. Three model families share one dataset:
//   FIM    spectrum -> geometry, the baseline inverse model
//   HiFR2  FIM plus a forward reconstructor (FFM) and a residual refiner (RRM)
//   IRC    FIM plus a chain of small correctors applied in parameter space
// Stages train strictly in that order; later stages consume earlier outputs.

#include "siwinv/dataset.hpp"
#include "siwinv/neural.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace siwinv {

enum class IrcInput { updated, fixed_p0 };

// Seed layout: every component draws from base_seed plus a fixed offset, so
// one CLI seed pins the whole pipeline. Shuffle streams use model seed + 1.
inline constexpr std::uint64_t kFimSeedOffset = 1000;
inline constexpr std::uint64_t kFfmSeedOffset = 2000;
inline constexpr std::uint64_t kRrmSeedOffset = 3000;
inline constexpr std::uint64_t kIrcSeedOffset = 4000;

struct PipelineConfig {
    std::uint64_t base_seed = 42;
    int threads = 1;
    // The conventional 1e-3 Adam step drives the all-ReLU output head of the
    // big inverse models into a dead all-zero state on this data; 1e-4 trains
    // cleanly with the same seeds.
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 128;
    int max_epochs = 200;
    int patience = 20;
    double min_delta = 1e-6;
    int irc_iterations = 5;
    int irc_epochs = 100;
    int irc_batch_size = 32;
    IrcInput irc_input = IrcInput::updated;
};

inline std::vector<LayerSpec> make_fim_specs() {
    // 2002 -> 1500 -> 1000 -> 500 -> 250 -> 125 -> 64 -> 32 -> 6, ReLU
    // throughout, dropout 0.10 after the 1000/500/250/125/64 hidden layers.
    return {{2002, 1500, Activation::relu, 0.01, 0.0},
            {1500, 1000, Activation::relu, 0.01, 0.10},
            {1000, 500, Activation::relu, 0.01, 0.10},
            {500, 250, Activation::relu, 0.01, 0.10},
            {250, 125, Activation::relu, 0.01, 0.10},
            {125, 64, Activation::relu, 0.01, 0.10},
            {64, 32, Activation::relu, 0.01, 0.0},
            {32, 6, Activation::relu, 0.01, 0.0}};
}

inline std::vector<LayerSpec> make_ffm_specs() {
    // 6 -> 32 -> 64 -> 128 -> 256 -> 512 -> 1024 -> 2002, ReLU throughout,
    // dropout 0.10 after the first five hidden layers.
    return {{6, 32, Activation::relu, 0.01, 0.10},
            {32, 64, Activation::relu, 0.01, 0.10},
            {64, 128, Activation::relu, 0.01, 0.10},
            {128, 256, Activation::relu, 0.01, 0.10},
            {256, 512, Activation::relu, 0.01, 0.10},
            {512, 1024, Activation::relu, 0.01, 0.0},
            {1024, 2002, Activation::relu, 0.01, 0.0}};
}

inline std::vector<LayerSpec> make_rrm_specs() {
    // FIM body, but the head must emit signed corrections, so it is linear.
    auto specs = make_fim_specs();
    specs.back().activation = Activation::linear;
    return specs;
}

inline std::vector<LayerSpec> make_corrector_specs() {
    return {{6, 64, Activation::leaky_relu, 0.01, 0.0},
            {64, 64, Activation::leaky_relu, 0.01, 0.0},
            {64, 6, Activation::linear, 0.01, 0.0}};
}

// Normalized copy of a dataset plus its split, staged once so every training
// phase reads the same 32-bit tensors.
struct NormalizedView {
    int count = 0;
    std::vector<float> x, y;
    std::vector<int> train, validation, test;
};

inline NormalizedView make_view(const Dataset& ds) {
    if (!ds.has_stats) throw std::runtime_error("pipeline: dataset has no normalization stats");
    if (ds.split.empty()) throw std::runtime_error("pipeline: dataset has no split");
    NormalizedView v;
    v.count = ds.count;
    v.x = normalized_feature_matrix(ds);
    v.y = normalized_target_matrix(ds);
    v.train = ds.split.train;
    v.validation = ds.split.validation;
    v.test = ds.split.test;
    return v;
}

namespace detail {

inline std::vector<float> gather_rows(const std::vector<float>& m, const std::vector<int>& idx, int dim) {
    std::vector<float> out(idx.size() * static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out.data() + i * dim, m.data() + static_cast<std::size_t>(idx[i]) * dim,
                    sizeof(float) * dim);
    return out;
}

inline TrainConfig base_train_config(const PipelineConfig& cfg) {
    TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.patience = cfg.patience;
    tc.min_delta = cfg.min_delta;
    tc.learning_rate = cfg.learning_rate;
    tc.beta1 = cfg.beta1;
    tc.beta2 = cfg.beta2;
    tc.epsilon = cfg.epsilon;
    return tc;
}

} // namespace detail

struct IrcTracePoint {
    double mse = 0.0;
    double mae = 0.0;
};

struct PipelineBundle {
    Mlp<float> fim, ffm, rrm;
    std::vector<Mlp<float>> correctors;
    NormalizationStats stats;
    std::string dataset_checksum;
    PipelineConfig config;

    TrainRecord fim_record, ffm_record, rrm_record;
    std::vector<TrainRecord> corrector_records;
    std::vector<IrcTracePoint> irc_trace; // over the whole dataset; point 0 = FIM

    bool has_fim = false;
    bool has_hifr2 = false;
    bool has_irc = false;
};

// Seeds a bundle with the dataset identity every stage shares.
inline PipelineBundle make_bundle(const Dataset& ds, const PipelineConfig& cfg) {
    if (!ds.has_stats) throw std::runtime_error("pipeline: dataset has no normalization stats");
    PipelineBundle b;
    b.stats = ds.stats;
    b.dataset_checksum = ds.checksum;
    b.config = cfg;
    return b;
}

inline void train_fim(PipelineBundle& bundle, const NormalizedView& view, const PipelineConfig& cfg) {
    bundle.config = cfg;
    bundle.fim = init_model<float>(make_fim_specs(), cfg.base_seed + kFimSeedOffset);
    bundle.fim.matmul_threads = cfg.threads;

    auto tc = detail::base_train_config(cfg);
    tc.seed = cfg.base_seed + kFimSeedOffset + 1;
    auto adam = init_adam(bundle.fim, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
    bundle.fim_record = train(bundle.fim, adam,
                              detail::gather_rows(view.x, view.train, kFeatureDim),
                              detail::gather_rows(view.y, view.train, kTargetDim),
                              detail::gather_rows(view.x, view.validation, kFeatureDim),
                              detail::gather_rows(view.y, view.validation, kTargetDim), tc);
    bundle.has_fim = true;
}

// ---- batch predictors (normalized space) ----

inline std::vector<float> fim_batch(const PipelineBundle& b, const float* xn, int n) {
    if (!b.has_fim) throw std::runtime_error("stage-order: FIM has not been trained");
    return forward(b.fim, xn, n);
}

inline std::vector<float> hifr2_batch(const PipelineBundle& b, const float* xn, int n) {
    if (!b.has_hifr2) throw std::runtime_error("stage-order: HiFR2 has not been trained");
    auto p0 = forward(b.fim, xn, n);
    auto s_hat = forward(b.ffm, p0.data(), n);
    std::vector<float> resid(static_cast<std::size_t>(n) * kFeatureDim);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = xn[i] - s_hat[i];
    auto dp = forward(b.rrm, resid.data(), n);
    for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += p0[i];
    return dp;
}

// All IRC iterates P_0..P_T; the last entry is the final prediction.
inline std::vector<std::vector<float>> irc_iterates_batch(const PipelineBundle& b, const float* xn,
                                                          int n) {
    if (!b.has_irc) throw std::runtime_error("stage-order: IRC has not been trained");
    std::vector<std::vector<float>> iterates;
    iterates.reserve(b.correctors.size() + 1);
    iterates.push_back(forward(b.fim, xn, n));
    for (const auto& cor : b.correctors) {
        const auto& prev = iterates.back();
        const std::vector<float>& input =
            b.config.irc_input == IrcInput::updated ? prev : iterates.front();
        auto dp = forward(cor, input.data(), n);
        std::vector<float> next(prev.size());
        for (std::size_t i = 0; i < prev.size(); ++i) next[i] = prev[i] + dp[i];
        iterates.push_back(std::move(next));
    }
    return iterates;
}

inline std::vector<float> irc_batch(const PipelineBundle& b, const float* xn, int n) {
    return irc_iterates_batch(b, xn, n).back();
}

inline void train_hifr2(PipelineBundle& bundle, const NormalizedView& view, const PipelineConfig& cfg) {
    if (!bundle.has_fim) throw std::runtime_error("stage-order: train_hifr2 requires a trained FIM");
    bundle.config = cfg;

    // Stage 2: forward reconstructor, geometry -> spectrum.
    bundle.ffm = init_model<float>(make_ffm_specs(), cfg.base_seed + kFfmSeedOffset);
    bundle.ffm.matmul_threads = cfg.threads;
    auto tc = detail::base_train_config(cfg);
    tc.seed = cfg.base_seed + kFfmSeedOffset + 1;
    auto adam_ffm = init_adam(bundle.ffm, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
    bundle.ffm_record = train(bundle.ffm, adam_ffm,
                              detail::gather_rows(view.y, view.train, kTargetDim),
                              detail::gather_rows(view.x, view.train, kFeatureDim),
                              detail::gather_rows(view.y, view.validation, kTargetDim),
                              detail::gather_rows(view.x, view.validation, kFeatureDim), tc);

    // Stage 3: residual refiner on reconstruction residuals.
    auto p0 = forward(bundle.fim, view.x.data(), view.count);
    auto s_hat = forward(bundle.ffm, p0.data(), view.count);
    std::vector<float> resid(view.x.size());
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = view.x[i] - s_hat[i];
    std::vector<float> dy(view.y.size());
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = view.y[i] - p0[i];

    bundle.rrm = init_model<float>(make_rrm_specs(), cfg.base_seed + kRrmSeedOffset);
    bundle.rrm.matmul_threads = cfg.threads;
    tc.seed = cfg.base_seed + kRrmSeedOffset + 1;
    auto adam_rrm = init_adam(bundle.rrm, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
    bundle.rrm_record = train(bundle.rrm, adam_rrm,
                              detail::gather_rows(resid, view.train, kFeatureDim),
                              detail::gather_rows(dy, view.train, kTargetDim),
                              detail::gather_rows(resid, view.validation, kFeatureDim),
                              detail::gather_rows(dy, view.validation, kTargetDim), tc);
    bundle.has_hifr2 = true;
}

inline void train_irc(PipelineBundle& bundle, const NormalizedView& view, const PipelineConfig& cfg) {
    if (!bundle.has_fim) throw std::runtime_error("stage-order: train_irc requires a trained FIM");
    bundle.config = cfg;
    bundle.correctors.clear();
    bundle.corrector_records.clear();
    bundle.irc_trace.clear();

    // Whole-dataset error trace, point 0 = the FIM baseline.
    auto p0 = forward(bundle.fim, view.x.data(), view.count);
    std::vector<float> p = p0;
    auto record_trace = [&]() {
        double se = 0.0, ae = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double d = static_cast<double>(p[i]) - static_cast<double>(view.y[i]);
            se += d * d;
            ae += std::abs(d);
        }
        bundle.irc_trace.push_back({se / p.size(), ae / p.size()});
    };
    record_trace();

    for (int it = 0; it < cfg.irc_iterations; ++it) {
        const std::vector<float>& input_all = cfg.irc_input == IrcInput::updated ? p : p0;
        std::vector<float> target(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) target[i] = view.y[i] - p[i];

        auto cor = init_model<float>(make_corrector_specs(), cfg.base_seed + kIrcSeedOffset + it);
        cor.matmul_threads = cfg.threads;
        TrainConfig tc = detail::base_train_config(cfg);
        tc.batch_size = cfg.irc_batch_size;
        tc.max_epochs = cfg.irc_epochs;
        tc.early_stopping = false; // correctors run a fixed epoch budget
        tc.seed = cfg.base_seed + kIrcSeedOffset + it + 1;
        auto adam = init_adam(cor, tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon);
        auto rec = train(cor, adam, detail::gather_rows(input_all, view.train, kTargetDim),
                         detail::gather_rows(target, view.train, kTargetDim),
                         detail::gather_rows(input_all, view.validation, kTargetDim),
                         detail::gather_rows(target, view.validation, kTargetDim), tc);

        auto dp = forward(cor, input_all.data(), view.count);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += dp[i];
        bundle.correctors.push_back(std::move(cor));
        bundle.corrector_records.push_back(std::move(rec));
        record_trace();
    }
    bundle.has_irc = true;
}

// ---- single-spectrum prediction ----

inline std::vector<float> features_from_spectrum(const Spectrum& s) {
    if (s.s11_mag.size() != s.s21_mag.size() ||
        static_cast<int>(s.s11_mag.size() + s.s21_mag.size()) != kFeatureDim)
        throw std::runtime_error("spectrum does not match the expected feature layout");
    std::vector<float> x(kFeatureDim);
    for (std::size_t i = 0; i < s.s11_mag.size(); ++i) x[i] = static_cast<float>(s.s11_mag[i]);
    for (std::size_t i = 0; i < s.s21_mag.size(); ++i)
        x[s.s11_mag.size() + i] = static_cast<float>(s.s21_mag[i]);
    return x;
}

struct GeometryEstimate {
    std::array<double, kTargetDim> normalized{};
    std::array<double, kTargetDim> physical{};
};

namespace detail {

inline std::vector<float> normalized_feature_row(const PipelineBundle& b, const Spectrum& s) {
    auto raw = features_from_spectrum(s);
    std::vector<double> norm(kFeatureDim);
    normalize_features(raw.data(), b.stats, norm.data());
    std::vector<float> out(kFeatureDim);
    for (int k = 0; k < kFeatureDim; ++k) out[k] = static_cast<float>(norm[k]);
    return out;
}

inline GeometryEstimate make_estimate(const float* p_norm, const NormalizationStats& st, bool clip) {
    GeometryEstimate e;
    for (int k = 0; k < kTargetDim; ++k) e.normalized[k] = p_norm[k];
    denormalize_targets(e.normalized.data(), st, e.physical.data());
    if (clip)
        for (int k = 0; k < kTargetDim; ++k)
            e.physical[k] = std::clamp(e.physical[k], st.target_min[k], st.target_max[k]);
    return e;
}

} // namespace detail

inline GeometryEstimate predict_fim(const PipelineBundle& b, const Spectrum& s, bool clip = false) {
    auto xn = detail::normalized_feature_row(b, s);
    auto p = fim_batch(b, xn.data(), 1);
    return detail::make_estimate(p.data(), b.stats, clip);
}

struct Hifr2Prediction {
    GeometryEstimate p0;
    std::array<double, kTargetDim> delta_normalized{};
    GeometryEstimate final;
};

inline Hifr2Prediction predict_hifr2(const PipelineBundle& b, const Spectrum& s, bool clip = false) {
    auto xn = detail::normalized_feature_row(b, s);
    auto p0 = fim_batch(b, xn.data(), 1);
    auto pf = hifr2_batch(b, xn.data(), 1);
    Hifr2Prediction out;
    out.p0 = detail::make_estimate(p0.data(), b.stats, clip);
    out.final = detail::make_estimate(pf.data(), b.stats, clip);
    for (int k = 0; k < kTargetDim; ++k)
        out.delta_normalized[k] = static_cast<double>(pf[k]) - static_cast<double>(p0[k]);
    return out;
}

struct IrcPrediction {
    std::vector<GeometryEstimate> iterations; // P_0 .. P_T
    const GeometryEstimate& final() const { return iterations.back(); }
};

inline IrcPrediction predict_irc(const PipelineBundle& b, const Spectrum& s, bool clip = false) {
    auto xn = detail::normalized_feature_row(b, s);
    auto iterates = irc_iterates_batch(b, xn.data(), 1);
    IrcPrediction out;
    for (const auto& p : iterates) out.iterations.push_back(detail::make_estimate(p.data(), b.stats, clip));
    return out;
}

// ---- bundle persistence ----
// Directory of per-model checkpoints plus bundle.json tying them together.

inline constexpr int kBundleFormatVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    return {{"base_seed", c.base_seed},
            {"threads", c.threads},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"min_delta", c.min_delta},
            {"irc_iterations", c.irc_iterations},
            {"irc_epochs", c.irc_epochs},
            {"irc_batch_size", c.irc_batch_size},
            {"irc_input", c.irc_input == IrcInput::updated ? "updated" : "fixed_p0"}};
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.min_delta = j.at("min_delta").get<double>();
    c.irc_iterations = j.at("irc_iterations").get<int>();
    c.irc_epochs = j.at("irc_epochs").get<int>();
    c.irc_batch_size = j.at("irc_batch_size").get<int>();
    c.irc_input = j.at("irc_input").get<std::string>() == "fixed_p0" ? IrcInput::fixed_p0
                                                                     : IrcInput::updated;
    return c;
}

} // namespace detail

inline void save_bundle(const PipelineBundle& b, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string checksum = b.dataset_checksum;
    nlohmann::json components = nlohmann::json::object();

    auto put = [&](const Mlp<float>& m, std::uint64_t seed, const std::string& name) {
        save_checkpoint(m, nullptr, dir / (name + ".ckpt"), seed, checksum);
        auto blob = detail::read_file(dir / (name + ".ckpt"));
        components[name] = sha256_hex(blob.data(), blob.size());
    };
    if (b.has_fim) put(b.fim, b.config.base_seed + kFimSeedOffset, "fim");
    if (b.has_hifr2) {
        put(b.ffm, b.config.base_seed + kFfmSeedOffset, "ffm");
        put(b.rrm, b.config.base_seed + kRrmSeedOffset, "rrm");
    }
    if (b.has_irc)
        for (std::size_t i = 0; i < b.correctors.size(); ++i)
            put(b.correctors[i], b.config.base_seed + kIrcSeedOffset + i,
                "corrector_" + std::to_string(i));

    nlohmann::json j;
    j["format_version"] = kBundleFormatVersion;
    j["dataset_checksum"] = checksum;
    j["config"] = detail::config_to_json(b.config);
    j["normalization"] = detail::stats_to_json(b.stats);
    j["components"] = components;
    j["trained"] = {{"fim", b.has_fim}, {"hifr2", b.has_hifr2}, {"irc", b.has_irc}};
    if (!b.irc_trace.empty()) {
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& pt : b.irc_trace) trace.push_back({{"mse", pt.mse}, {"mae", pt.mae}});
        j["irc_trace"] = trace;
    }
    std::string text = j.dump(2);
    text.push_back('\n');
    detail::write_file(dir / "bundle.json", text.data(), text.size());
}

inline PipelineBundle load_bundle(const std::filesystem::path& dir) {
    auto buf = detail::read_file(dir / "bundle.json");
    nlohmann::json j = nlohmann::json::parse(buf.begin(), buf.end());
    if (j.at("format_version").get<int>() != kBundleFormatVersion)
        throw std::runtime_error("version-mismatch: unsupported bundle format_version");

    PipelineBundle b;
    b.dataset_checksum = j.at("dataset_checksum").get<std::string>();
    b.config = detail::config_from_json(j.at("config"));
    b.stats = detail::stats_from_json(j.at("normalization"));
    b.has_fim = j.at("trained").at("fim").get<bool>();
    b.has_hifr2 = j.at("trained").at("hifr2").get<bool>();
    b.has_irc = j.at("trained").at("irc").get<bool>();

    auto fetch = [&](const std::string& name) {
        auto path = dir / (name + ".ckpt");
        auto blob = detail::read_file(path);
        std::string digest = sha256_hex(blob.data(), blob.size());
        if (digest != j.at("components").at(name).get<std::string>())
            throw std::runtime_error("integrity: bundle component checksum mismatch for " + name);
        CheckpointInfo info;
        auto model = load_checkpoint(path, nullptr, info, b.dataset_checksum);
        if (!info.warnings.empty())
            throw std::runtime_error("integrity: component " + name +
                                     " was trained on a different dataset");
        model.matmul_threads = b.config.threads;
        return model;
    };
    if (b.has_fim) b.fim = fetch("fim");
    if (b.has_hifr2) {
        b.ffm = fetch("ffm");
        b.rrm = fetch("rrm");
    }
    if (b.has_irc) {
        for (int i = 0; i < b.config.irc_iterations; ++i)
            b.correctors.push_back(fetch("corrector_" + std::to_string(i)));
        if (j.contains("irc_trace"))
            for (const auto& pt : j.at("irc_trace"))
                b.irc_trace.push_back({pt.at("mse").get<double>(), pt.at("mae").get<double>()});
    }
    return b;
}

} // namespace siwinv
