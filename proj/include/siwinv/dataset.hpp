#pragma once
// Dataset construction: constraint-valid geometry enumeration, parallel
// spectrum generation, normalization, deterministic splitting, and a
// checksummed on-disk container (manifest.json + X.bin + Y.bin).

#include "siwinv/rng.hpp"
#include "siwinv/sha256.hpp"
#include "siwinv/wave.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace siwinv {

static_assert(std::endian::native == std::endian::little,
              "binary containers are little-endian; big-endian hosts unsupported");

inline constexpr const char* kSolverVersion = "abcd-cascade-1";
inline constexpr int kFeatureDim = 2002;
inline constexpr int kTargetDim = 6;
inline constexpr int kDatasetSchemaVersion = 1;

// Tolerance for re-validating constraints on values that round-tripped
// through 32-bit storage. Grid thresholds are spaced at least 1/13 apart
// from the G integers, so 1e-4 separates rounding noise from violations.
inline constexpr double kLoadValidationTolerance = 1e-4;

struct ParameterGrid {
    std::vector<double> d_values;
    std::vector<double> r_values;
    std::vector<double> g_values;
};

// Full sampling grid: spacings 4..10 mm step 0.5, radii 0.2..1.0 mm step
// 0.2, scaling factor integers 26..36.
inline ParameterGrid full_grid() {
    ParameterGrid g;
    for (int i = 0; i <= 12; ++i) g.d_values.push_back(4.0 + 0.5 * i);
    g.r_values = {0.2, 0.4, 0.6, 0.8, 1.0};
    for (int i = 26; i <= 36; ++i) g.g_values.push_back(static_cast<double>(i));
    return g;
}

// Reduced default grid sized for desk-scale runs (~2k samples): spacing and
// scaling lists are thinned, radii kept complete.
inline ParameterGrid desk_grid() {
    ParameterGrid g;
    g.d_values = {4.0, 5.5, 7.0, 8.5, 10.0};
    g.r_values = {0.2, 0.4, 0.6, 0.8, 1.0};
    g.g_values = {26.0, 31.0, 36.0};
    return g;
}

inline void validate_grid(const ParameterGrid& g) {
    auto ascending = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] > v[i - 1])) return false;
        return !v.empty();
    };
    if (!ascending(g.d_values) || !ascending(g.r_values) || !ascending(g.g_values))
        throw std::runtime_error("invalid-grid: value lists must be strictly ascending and nonempty");
}

// Nested loops in fixed order (D1, D2, R1, R2, R3, G); only combinations
// with R3 >= R2 >= R1 and threshold < G survive. Emission order is the
// lexicographic order of the tuple, which makes ordinals stable.
inline std::vector<Geometry> enumerate_geometries(const ParameterGrid& grid) {
    validate_grid(grid);
    std::vector<Geometry> out;
    for (double d1 : grid.d_values)
        for (double d2 : grid.d_values)
            for (double r1 : grid.r_values)
                for (double r2 : grid.r_values) {
                    if (r2 < r1) continue;
                    for (double r3 : grid.r_values) {
                        if (r3 < r2) continue;
                        Geometry g{d1, d2, r1, r2, r3, 0.0};
                        double thr = geometry_threshold(g);
                        for (double gv : grid.g_values) {
                            if (thr < gv) {
                                g.g = gv;
                                out.push_back(g);
                            }
                        }
                    }
                }
    if (out.empty()) throw std::runtime_error("empty-grid: no constraint-valid combinations");
    return out;
}

enum class TargetMode { minmax, zscore };

struct NormalizationStats {
    std::vector<double> feature_mean; // length 2002
    std::vector<double> feature_std;  // length 2002, floored at 1e-8
    std::vector<double> target_min;   // length 6
    std::vector<double> target_max;
    std::vector<double> target_mean;  // populated in both modes
    std::vector<double> target_std;
    TargetMode target_mode = TargetMode::minmax;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double validation_fraction = 0.1; // of the training portion
    std::uint64_t seed = 42;
};

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;

    bool empty() const { return train.empty() && validation.empty() && test.empty(); }
};

struct Dataset {
    int count = 0;
    std::vector<float> x; // count x 2002, row-major raw magnitudes
    std::vector<float> y; // count x 6, row-major raw parameter values

    SubstrateSpec substrate;
    FrequencyGrid fgrid;
    ParameterGrid grid;

    bool has_stats = false;
    NormalizationStats stats;
    SplitSpec split_spec;
    SplitIndices split;

    double generation_wall_seconds = 0.0;
    std::string checksum; // digest over both binary blobs, set by save/load

    const float* x_row(int i) const { return x.data() + static_cast<std::size_t>(i) * kFeatureDim; }
    const float* y_row(int i) const { return y.data() + static_cast<std::size_t>(i) * kTargetDim; }

    Geometry geometry_at(int i) const {
        const float* r = y_row(i);
        return {r[0], r[1], r[2], r[3], r[4], r[5]};
    }

    Spectrum spectrum_at(int i) const {
        Spectrum s;
        s.grid = fgrid;
        const float* r = x_row(i);
        s.s11_mag.assign(r, r + fgrid.n_points);
        s.s21_mag.assign(r + fgrid.n_points, r + 2 * fgrid.n_points);
        return s;
    }
};

// Simulates every enumerated geometry. Workers write into pre-assigned row
// slots, so the result is byte-identical for any worker count.
inline Dataset generate(const ParameterGrid& grid, const SubstrateSpec& spec,
                        const FrequencyGrid& fgrid, int threads = 0) {
    auto geoms = enumerate_geometries(grid);
    const int n = static_cast<int>(geoms.size());
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, n);

    Dataset ds;
    ds.count = n;
    ds.substrate = spec;
    ds.fgrid = fgrid;
    ds.grid = grid;
    ds.x.resize(static_cast<std::size_t>(n) * kFeatureDim);
    ds.y.resize(static_cast<std::size_t>(n) * kTargetDim);

    auto t0 = std::chrono::steady_clock::now();
    std::atomic<int> cursor{0};
    std::mutex err_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            int i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                Spectrum s = simulate(spec, geoms[i], fgrid);
                float* xr = ds.x.data() + static_cast<std::size_t>(i) * kFeatureDim;
                for (int k = 0; k < fgrid.n_points; ++k) {
                    xr[k] = static_cast<float>(s.s11_mag[k]);
                    xr[fgrid.n_points + k] = static_cast<float>(s.s21_mag[k]);
                }
                float* yr = ds.y.data() + static_cast<std::size_t>(i) * kTargetDim;
                yr[0] = static_cast<float>(geoms[i].d1_mm);
                yr[1] = static_cast<float>(geoms[i].d2_mm);
                yr[2] = static_cast<float>(geoms[i].r1_mm);
                yr[3] = static_cast<float>(geoms[i].r2_mm);
                yr[4] = static_cast<float>(geoms[i].r3_mm);
                yr[5] = static_cast<float>(geoms[i].g);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty())
                    first_error = "generation failed at ordinal " + std::to_string(i) + ": " + e.what();
                cursor.store(n);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);

    ds.generation_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return ds;
}

// Seeded Fisher-Yates shuffle of ordinals; first train_fraction is the
// training portion whose final validation_fraction becomes validation, the
// remainder is test.
inline SplitIndices split(int count, const SplitSpec& spec) {
    if (count < 10) throw std::runtime_error("split: need at least 10 samples");
    std::vector<int> perm(count);
    for (int i = 0; i < count; ++i) perm[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(perm);

    auto n_trainval = static_cast<int>(std::llround(spec.train_fraction * count));
    auto n_val = static_cast<int>(std::llround(spec.validation_fraction * n_trainval));
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + (n_trainval - n_val));
    s.validation.assign(perm.begin() + (n_trainval - n_val), perm.begin() + n_trainval);
    s.test.assign(perm.begin() + n_trainval, perm.end());
    return s;
}

// Population statistics over the training rows only.
inline NormalizationStats fit_normalizer(const Dataset& ds, const std::vector<int>& train_idx,
                                         TargetMode mode = TargetMode::minmax) {
    if (train_idx.size() < 2)
        throw std::runtime_error("fit_normalizer: need at least 2 training samples");
    NormalizationStats st;
    st.target_mode = mode;
    st.feature_mean.assign(kFeatureDim, 0.0);
    st.feature_std.assign(kFeatureDim, 0.0);
    st.target_min.assign(kTargetDim, std::numeric_limits<double>::infinity());
    st.target_max.assign(kTargetDim, -std::numeric_limits<double>::infinity());
    st.target_mean.assign(kTargetDim, 0.0);
    st.target_std.assign(kTargetDim, 0.0);

    const double n = static_cast<double>(train_idx.size());
    for (int i : train_idx) {
        const float* xr = ds.x_row(i);
        for (int k = 0; k < kFeatureDim; ++k) st.feature_mean[k] += xr[k];
        const float* yr = ds.y_row(i);
        for (int k = 0; k < kTargetDim; ++k) {
            double v = yr[k];
            st.target_mean[k] += v;
            st.target_min[k] = std::min(st.target_min[k], v);
            st.target_max[k] = std::max(st.target_max[k], v);
        }
    }
    for (auto& m : st.feature_mean) m /= n;
    for (auto& m : st.target_mean) m /= n;

    for (int i : train_idx) {
        const float* xr = ds.x_row(i);
        for (int k = 0; k < kFeatureDim; ++k) {
            double d = xr[k] - st.feature_mean[k];
            st.feature_std[k] += d * d;
        }
        const float* yr = ds.y_row(i);
        for (int k = 0; k < kTargetDim; ++k) {
            double d = yr[k] - st.target_mean[k];
            st.target_std[k] += d * d;
        }
    }
    for (auto& s : st.feature_std) s = std::max(std::sqrt(s / n), 1e-8);
    for (auto& s : st.target_std) s = std::max(std::sqrt(s / n), 1e-8);

    for (int k = 0; k < kTargetDim; ++k) {
        if (!(st.target_max[k] > st.target_min[k])) {
            // constant target column; widen so the affine map stays invertible
            st.target_max[k] = st.target_min[k] + 1e-8;
        }
    }
    return st;
}

inline void normalize_features(const float* x_raw, const NormalizationStats& st, double* out) {
    for (int k = 0; k < kFeatureDim; ++k)
        out[k] = (x_raw[k] - st.feature_mean[k]) / st.feature_std[k];
}

inline void normalize_targets(const double* y_raw, const NormalizationStats& st, double* out) {
    for (int k = 0; k < kTargetDim; ++k) {
        if (st.target_mode == TargetMode::minmax)
            out[k] = (y_raw[k] - st.target_min[k]) / (st.target_max[k] - st.target_min[k]);
        else
            out[k] = (y_raw[k] - st.target_mean[k]) / st.target_std[k];
    }
}

inline void denormalize_targets(const double* y_norm, const NormalizationStats& st, double* out) {
    for (int k = 0; k < kTargetDim; ++k) {
        if (st.target_mode == TargetMode::minmax)
            out[k] = y_norm[k] * (st.target_max[k] - st.target_min[k]) + st.target_min[k];
        else
            out[k] = y_norm[k] * st.target_std[k] + st.target_mean[k];
    }
}

inline Geometry denormalize_geometry(const double* y_norm, const NormalizationStats& st,
                                     bool clip = false) {
    double v[kTargetDim];
    denormalize_targets(y_norm, st, v);
    if (clip)
        for (int k = 0; k < kTargetDim; ++k)
            v[k] = std::clamp(v[k], st.target_min[k], st.target_max[k]);
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

// Normalized feature/target matrices in 32-bit form for training. Math runs
// in double and is quantized once at the end.
inline std::vector<float> normalized_feature_matrix(const Dataset& ds) {
    std::vector<float> out(ds.x.size());
    std::vector<double> row(kFeatureDim);
    for (int i = 0; i < ds.count; ++i) {
        normalize_features(ds.x_row(i), ds.stats, row.data());
        float* o = out.data() + static_cast<std::size_t>(i) * kFeatureDim;
        for (int k = 0; k < kFeatureDim; ++k) o[k] = static_cast<float>(row[k]);
    }
    return out;
}

inline std::vector<float> normalized_target_matrix(const Dataset& ds) {
    std::vector<float> out(ds.y.size());
    double raw[kTargetDim], norm[kTargetDim];
    for (int i = 0; i < ds.count; ++i) {
        const float* yr = ds.y_row(i);
        for (int k = 0; k < kTargetDim; ++k) raw[k] = yr[k];
        normalize_targets(raw, ds.stats, norm);
        float* o = out.data() + static_cast<std::size_t>(i) * kTargetDim;
        for (int k = 0; k < kTargetDim; ++k) o[k] = static_cast<float>(norm[k]);
    }
    return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const void* data, std::size_t bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("short write: " + p.string());
}

inline std::vector<char> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + p.string());
    auto size = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    if (!in) throw std::runtime_error("short read: " + p.string());
    return buf;
}

inline nlohmann::json grid_to_json(const ParameterGrid& g) {
    return {{"d_values", g.d_values}, {"r_values", g.r_values}, {"g_values", g.g_values}};
}

inline ParameterGrid grid_from_json(const nlohmann::json& j) {
    ParameterGrid g;
    g.d_values = j.at("d_values").get<std::vector<double>>();
    g.r_values = j.at("r_values").get<std::vector<double>>();
    g.g_values = j.at("g_values").get<std::vector<double>>();
    return g;
}

inline nlohmann::json stats_to_json(const NormalizationStats& st) {
    return {{"feature_mean", st.feature_mean},
            {"feature_std", st.feature_std},
            {"target_min", st.target_min},
            {"target_max", st.target_max},
            {"target_mean", st.target_mean},
            {"target_std", st.target_std},
            {"target_mode", st.target_mode == TargetMode::minmax ? "minmax" : "zscore"}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& ns) {
    NormalizationStats st;
    st.feature_mean = ns.at("feature_mean").get<std::vector<double>>();
    st.feature_std = ns.at("feature_std").get<std::vector<double>>();
    st.target_min = ns.at("target_min").get<std::vector<double>>();
    st.target_max = ns.at("target_max").get<std::vector<double>>();
    st.target_mean = ns.at("target_mean").get<std::vector<double>>();
    st.target_std = ns.at("target_std").get<std::vector<double>>();
    st.target_mode =
        ns.at("target_mode").get<std::string>() == "zscore" ? TargetMode::zscore : TargetMode::minmax;
    return st;
}

} // namespace detail

inline std::string dataset_checksum(const std::string& x_digest, const std::string& y_digest) {
    return sha256_hex(x_digest + y_digest);
}

// Directory layout: manifest.json + X.bin + Y.bin. The manifest carries the
// checksums, so any bit flip in the blobs is caught on load.
inline void save(Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const std::size_t x_bytes = ds.x.size() * sizeof(float);
    const std::size_t y_bytes = ds.y.size() * sizeof(float);
    detail::write_file(dir / "X.bin", ds.x.data(), x_bytes);
    detail::write_file(dir / "Y.bin", ds.y.data(), y_bytes);
    std::string x_digest = sha256_hex(ds.x.data(), x_bytes);
    std::string y_digest = sha256_hex(ds.y.data(), y_bytes);
    ds.checksum = dataset_checksum(x_digest, y_digest);

    nlohmann::json m;
    m["schema_version"] = kDatasetSchemaVersion;
    m["solver_version"] = kSolverVersion;
    m["rng_algorithm"] = kRngAlgorithm;
    m["count"] = ds.count;
    m["feature_dim"] = kFeatureDim;
    m["target_dim"] = kTargetDim;
    m["substrate"] = {{"relative_permittivity", ds.substrate.relative_permittivity},
                      {"width_mm", ds.substrate.width_mm},
                      {"via_diameter_mm", ds.substrate.via_diameter_mm},
                      {"via_pitch_mm", ds.substrate.via_pitch_mm}};
    m["frequency_grid"] = {{"f_start_ghz", ds.fgrid.f_start_ghz},
                           {"f_stop_ghz", ds.fgrid.f_stop_ghz},
                           {"n_points", ds.fgrid.n_points}};
    m["parameter_grid"] = detail::grid_to_json(ds.grid);
    m["generation_wall_seconds"] = ds.generation_wall_seconds;
    m["checksums"] = {{"X.bin", x_digest}, {"Y.bin", y_digest}};
    m["dataset_checksum"] = ds.checksum;

    if (ds.has_stats) m["normalization"] = detail::stats_to_json(ds.stats);
    if (!ds.split.empty()) {
        m["split"] = {{"seed", ds.split_spec.seed},
                      {"train_fraction", ds.split_spec.train_fraction},
                      {"validation_fraction", ds.split_spec.validation_fraction},
                      {"train", ds.split.train},
                      {"validation", ds.split.validation},
                      {"test", ds.split.test}};
    }
    std::string text = m.dump(2);
    text.push_back('\n');
    detail::write_file(dir / "manifest.json", text.data(), text.size());
}

inline Dataset load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    auto mbuf = detail::read_file(dir / "manifest.json");
    nlohmann::json m = nlohmann::json::parse(mbuf.begin(), mbuf.end());

    if (m.at("schema_version").get<int>() != kDatasetSchemaVersion)
        throw std::runtime_error("version-mismatch: unsupported dataset schema_version");
    if (m.at("feature_dim").get<int>() != kFeatureDim || m.at("target_dim").get<int>() != kTargetDim)
        throw std::runtime_error("version-mismatch: unexpected tensor dims");

    Dataset ds;
    ds.count = m.at("count").get<int>();
    const auto& sub = m.at("substrate");
    ds.substrate = {sub.at("relative_permittivity").get<double>(), sub.at("width_mm").get<double>(),
                    sub.at("via_diameter_mm").get<double>(), sub.at("via_pitch_mm").get<double>()};
    const auto& fg = m.at("frequency_grid");
    ds.fgrid = {fg.at("f_start_ghz").get<double>(), fg.at("f_stop_ghz").get<double>(),
                fg.at("n_points").get<int>()};
    ds.grid = detail::grid_from_json(m.at("parameter_grid"));
    ds.generation_wall_seconds = m.value("generation_wall_seconds", 0.0);

    auto xbuf = detail::read_file(dir / "X.bin");
    auto ybuf = detail::read_file(dir / "Y.bin");
    const std::size_t x_expected = static_cast<std::size_t>(ds.count) * kFeatureDim * sizeof(float);
    const std::size_t y_expected = static_cast<std::size_t>(ds.count) * kTargetDim * sizeof(float);
    if (xbuf.size() != x_expected || ybuf.size() != y_expected)
        throw std::runtime_error("integrity: truncated or oversized binary blob");

    std::string x_digest = sha256_hex(xbuf.data(), xbuf.size());
    std::string y_digest = sha256_hex(ybuf.data(), ybuf.size());
    if (x_digest != m.at("checksums").at("X.bin").get<std::string>() ||
        y_digest != m.at("checksums").at("Y.bin").get<std::string>())
        throw std::runtime_error("integrity: checksum mismatch");
    ds.checksum = dataset_checksum(x_digest, y_digest);

    ds.x.resize(static_cast<std::size_t>(ds.count) * kFeatureDim);
    ds.y.resize(static_cast<std::size_t>(ds.count) * kTargetDim);
    std::memcpy(ds.x.data(), xbuf.data(), xbuf.size());
    std::memcpy(ds.y.data(), ybuf.data(), ybuf.size());

    if (m.contains("normalization")) {
        ds.stats = detail::stats_from_json(m.at("normalization"));
        ds.has_stats = true;
    }
    if (m.contains("split")) {
        const auto& sp = m.at("split");
        ds.split_spec.seed = sp.at("seed").get<std::uint64_t>();
        ds.split_spec.train_fraction = sp.at("train_fraction").get<double>();
        ds.split_spec.validation_fraction = sp.at("validation_fraction").get<double>();
        ds.split.train = sp.at("train").get<std::vector<int>>();
        ds.split.validation = sp.at("validation").get<std::vector<int>>();
        ds.split.test = sp.at("test").get<std::vector<int>>();
    }

    // constraint re-validation on every loaded sample
    for (int i = 0; i < ds.count; ++i) {
        try {
            validate_geometry(ds.geometry_at(i), kLoadValidationTolerance);
        } catch (const std::exception& e) {
            throw std::runtime_error("integrity: sample " + std::to_string(i) +
                                     " violates constraints: " + e.what());
        }
    }
    return ds;
}

} // namespace siwinv
