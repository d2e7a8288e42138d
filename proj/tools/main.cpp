// Command-line entry point: dataset generation, staged training, prediction,
// evaluation reports, trend sweeps, loop-back verification, and direct
// surrogate simulation. One JSON config file drives everything; flags win
// over file values, file values win over defaults.

#include "siwinv/eval.hpp"
#include "siwinv/spectrum_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage-class failure: bad flags, malformed config. Exits with code 1,
// unlike data/model failures which exit with 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    siwinv::SubstrateSpec substrate;
    siwinv::FrequencyGrid fgrid;
    siwinv::ParameterGrid grid = siwinv::desk_grid();
    siwinv::SplitSpec split;
    siwinv::TargetMode target_mode = siwinv::TargetMode::minmax;
    siwinv::PipelineConfig training;
    int threads = 0;       // dataset generation workers; 0 = hardware
    int train_threads = 1; // matmul threads during training/inference
    bool verify_include_s11 = false;
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
}

RunConfig parse_config_json(const json& j) {
    RunConfig c;
    reject_unknown(j,
                   {"substrate", "frequency_grid", "parameter_grid", "split", "target_mode",
                    "training", "threads", "train_threads", "verify"},
                   "top level");
    if (j.contains("substrate")) {
        const auto& s = j.at("substrate");
        reject_unknown(s, {"relative_permittivity", "width_mm", "via_diameter_mm", "via_pitch_mm"},
                       "substrate");
        c.substrate.relative_permittivity =
            s.value("relative_permittivity", c.substrate.relative_permittivity);
        c.substrate.width_mm = s.value("width_mm", c.substrate.width_mm);
        c.substrate.via_diameter_mm = s.value("via_diameter_mm", c.substrate.via_diameter_mm);
        c.substrate.via_pitch_mm = s.value("via_pitch_mm", c.substrate.via_pitch_mm);
    }
    if (j.contains("frequency_grid")) {
        const auto& f = j.at("frequency_grid");
        reject_unknown(f, {"f_start_ghz", "f_stop_ghz", "n_points"}, "frequency_grid");
        c.fgrid.f_start_ghz = f.value("f_start_ghz", c.fgrid.f_start_ghz);
        c.fgrid.f_stop_ghz = f.value("f_stop_ghz", c.fgrid.f_stop_ghz);
        c.fgrid.n_points = f.value("n_points", c.fgrid.n_points);
    }
    if (j.contains("parameter_grid")) {
        const auto& g = j.at("parameter_grid");
        reject_unknown(g, {"d_values", "r_values", "g_values"}, "parameter_grid");
        if (g.contains("d_values")) c.grid.d_values = g.at("d_values").get<std::vector<double>>();
        if (g.contains("r_values")) c.grid.r_values = g.at("r_values").get<std::vector<double>>();
        if (g.contains("g_values")) c.grid.g_values = g.at("g_values").get<std::vector<double>>();
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        reject_unknown(s, {"train_fraction", "validation_fraction", "seed"}, "split");
        c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
        c.split.validation_fraction = s.value("validation_fraction", c.split.validation_fraction);
        c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("target_mode")) {
        std::string m = j.at("target_mode").get<std::string>();
        if (m == "minmax")
            c.target_mode = siwinv::TargetMode::minmax;
        else if (m == "zscore")
            c.target_mode = siwinv::TargetMode::zscore;
        else
            throw ConfigError("config: target_mode must be minmax or zscore");
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown(t,
                       {"base_seed", "learning_rate", "beta1", "beta2", "epsilon", "batch_size",
                        "max_epochs", "patience", "min_delta", "irc_iterations", "irc_epochs",
                        "irc_batch_size", "irc_input"},
                       "training");
        auto& tr = c.training;
        tr.base_seed = t.value("base_seed", tr.base_seed);
        tr.learning_rate = t.value("learning_rate", tr.learning_rate);
        tr.beta1 = t.value("beta1", tr.beta1);
        tr.beta2 = t.value("beta2", tr.beta2);
        tr.epsilon = t.value("epsilon", tr.epsilon);
        tr.batch_size = t.value("batch_size", tr.batch_size);
        tr.max_epochs = t.value("max_epochs", tr.max_epochs);
        tr.patience = t.value("patience", tr.patience);
        tr.min_delta = t.value("min_delta", tr.min_delta);
        tr.irc_iterations = t.value("irc_iterations", tr.irc_iterations);
        tr.irc_epochs = t.value("irc_epochs", tr.irc_epochs);
        tr.irc_batch_size = t.value("irc_batch_size", tr.irc_batch_size);
        if (t.contains("irc_input")) {
            std::string m = t.at("irc_input").get<std::string>();
            if (m == "updated")
                tr.irc_input = siwinv::IrcInput::updated;
            else if (m == "fixed_p0")
                tr.irc_input = siwinv::IrcInput::fixed_p0;
            else
                throw ConfigError("config: irc_input must be updated or fixed_p0");
        }
    }
    c.threads = j.value("threads", c.threads);
    c.train_threads = j.value("train_threads", c.train_threads);
    if (j.contains("verify")) {
        const auto& v = j.at("verify");
        reject_unknown(v, {"include_s11"}, "verify");
        c.verify_include_s11 = v.value("include_s11", c.verify_include_s11);
    }
    return c;
}

json config_echo(const RunConfig& c) {
    json j;
    j["substrate"] = {{"relative_permittivity", c.substrate.relative_permittivity},
                      {"width_mm", c.substrate.width_mm},
                      {"via_diameter_mm", c.substrate.via_diameter_mm},
                      {"via_pitch_mm", c.substrate.via_pitch_mm}};
    j["frequency_grid"] = {{"f_start_ghz", c.fgrid.f_start_ghz},
                           {"f_stop_ghz", c.fgrid.f_stop_ghz},
                           {"n_points", c.fgrid.n_points}};
    j["parameter_grid"] = {{"d_values", c.grid.d_values},
                           {"r_values", c.grid.r_values},
                           {"g_values", c.grid.g_values}};
    j["split"] = {{"train_fraction", c.split.train_fraction},
                  {"validation_fraction", c.split.validation_fraction},
                  {"seed", c.split.seed}};
    j["target_mode"] = c.target_mode == siwinv::TargetMode::minmax ? "minmax" : "zscore";
    j["training"] = siwinv::detail::config_to_json(c.training);
    j["threads"] = c.threads;
    j["train_threads"] = c.train_threads;
    j["verify"] = {{"include_s11", c.verify_include_s11}};
    return j;
}

std::string git_describe() {
    FILE* p = ::popen("git describe --always --dirty 2>/dev/null", "r");
    if (!p) return "unknown";
    char buf[128] = {0};
    std::string out;
    while (std::fgets(buf, sizeof(buf), p)) out += buf;
    ::pclose(p);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

void write_manifest(const fs::path& out_dir, const RunConfig& cfg, const std::string& subcommand) {
    fs::create_directories(out_dir);
    json m;
    auto path = out_dir / "manifest.json";
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            m = json::parse(in);
        } catch (...) {
            m = json::object();
        }
    }
    m["config"] = config_echo(cfg);
    m["seeds"] = {{"base_seed", cfg.training.base_seed}, {"split_seed", cfg.split.seed}};
    m["git"] = git_describe();
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    if (!m.contains("history")) m["history"] = json::array();
    m["history"].push_back({{"subcommand", subcommand}, {"time", stamp}});
    std::ofstream f(path);
    f << m.dump(2) << "\n";
}

json estimate_json(const siwinv::GeometryEstimate& e) {
    json phys = json::object(), norm = json::array();
    for (int k = 0; k < siwinv::kTargetDim; ++k) {
        phys[siwinv::kParamNames[k]] = e.physical[k];
        norm.push_back(e.normalized[k]);
    }
    return {{"physical", phys}, {"normalized", norm}};
}

siwinv::Dataset load_dataset_or_die(const fs::path& out_dir) {
    auto dir = out_dir / "dataset";
    if (!fs::exists(dir / "manifest.json"))
        throw std::runtime_error("no dataset at " + dir.string() + "; run `generate` first");
    return siwinv::load(dir);
}

siwinv::PipelineBundle load_bundle_or_die(const fs::path& out_dir, int train_threads) {
    auto dir = out_dir / "bundle";
    if (!fs::exists(dir / "bundle.json"))
        throw std::runtime_error("no model bundle at " + dir.string() + "; run `train` first");
    auto b = siwinv::load_bundle(dir);
    b.config.threads = train_threads;
    auto set_threads = [&](siwinv::Mlp<float>& m) { m.matmul_threads = train_threads; };
    if (b.has_fim) set_threads(b.fim);
    if (b.has_hifr2) {
        set_threads(b.ffm);
        set_threads(b.rrm);
    }
    for (auto& cor : b.correctors) set_threads(cor);
    return b;
}

int cmd_generate(const RunConfig& cfg, const fs::path& out_dir) {
    siwinv::validate_grid(cfg.grid);
    auto ds = siwinv::generate(cfg.grid, cfg.substrate, cfg.fgrid, cfg.threads);
    ds.split_spec = cfg.split;
    ds.split = siwinv::split(ds.count, cfg.split);
    ds.stats = siwinv::fit_normalizer(ds, ds.split.train, cfg.target_mode);
    ds.has_stats = true;
    siwinv::save(ds, out_dir / "dataset");
    std::cout << "generated " << ds.count << " samples (" << ds.split.train.size() << " train, "
              << ds.split.validation.size() << " validation, " << ds.split.test.size()
              << " test) in " << ds.generation_wall_seconds << " s\n"
              << "dataset checksum " << ds.checksum << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, const std::string& model) {
    auto ds = load_dataset_or_die(out_dir);
    auto view = siwinv::make_view(ds);
    auto training = cfg.training;
    training.threads = cfg.train_threads;

    siwinv::PipelineBundle bundle;
    if (fs::exists(out_dir / "bundle" / "bundle.json")) {
        bundle = load_bundle_or_die(out_dir, cfg.train_threads);
        if (bundle.dataset_checksum != ds.checksum)
            throw std::runtime_error("bundle at " + (out_dir / "bundle").string() +
                                     " was trained on a different dataset; regenerate or clear it");
    } else {
        bundle = siwinv::make_bundle(ds, training);
    }

    auto stage_fim = [&] {
        std::cout << "training FIM...\n";
        siwinv::train_fim(bundle, view, training);
        siwinv::write_train_record_csv(bundle.fim_record, out_dir / "fim_history.csv");
        std::cout << "  stopped at epoch " << bundle.fim_record.stopped_epoch << ", best epoch "
                  << bundle.fim_record.best_epoch << ", val mse "
                  << bundle.fim_record.val_mse[bundle.fim_record.best_epoch - 1] << "\n";
    };
    auto stage_hifr2 = [&] {
        std::cout << "training HiFR2 (FFM + RRM)...\n";
        siwinv::train_hifr2(bundle, view, training);
        siwinv::write_train_record_csv(bundle.ffm_record, out_dir / "ffm_history.csv");
        siwinv::write_train_record_csv(bundle.rrm_record, out_dir / "rrm_history.csv");
        std::cout << "  FFM best val mse "
                  << bundle.ffm_record.val_mse[bundle.ffm_record.best_epoch - 1] << ", RRM best val mse "
                  << bundle.rrm_record.val_mse[bundle.rrm_record.best_epoch - 1] << "\n";
    };
    auto stage_irc = [&] {
        std::cout << "training IRC correctors...\n";
        siwinv::train_irc(bundle, view, training);
        for (std::size_t i = 0; i < bundle.corrector_records.size(); ++i)
            siwinv::write_train_record_csv(bundle.corrector_records[i],
                                           out_dir / ("irc_corrector_" + std::to_string(i) +
                                                      "_history.csv"));
        std::cout << "  whole-dataset mse trace:";
        for (const auto& pt : bundle.irc_trace) std::cout << " " << pt.mse;
        std::cout << "\n";
    };

    if (model == "fim") {
        stage_fim();
    } else if (model == "hifr2") {
        stage_hifr2();
    } else if (model == "irc") {
        stage_irc();
    } else if (model == "all") {
        stage_fim();
        stage_hifr2();
        stage_irc();
    } else {
        throw ConfigError("unknown model \"" + model + "\" (expected fim, hifr2, irc, or all)");
    }

    siwinv::save_bundle(bundle, out_dir / "bundle");
    std::cout << "bundle saved to " << (out_dir / "bundle").string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& out_dir) {
    auto ds = load_dataset_or_die(out_dir);
    auto bundle = load_bundle_or_die(out_dir, cfg.train_threads);
    if (bundle.dataset_checksum != ds.checksum)
        throw std::runtime_error("bundle/dataset checksum mismatch");
    auto view = siwinv::make_view(ds);

    auto metrics = siwinv::compute_metrics(bundle, view);
    siwinv::write_metrics_csv(metrics, out_dir / "metrics.csv");
    for (const auto& r : metrics.rows)
        if (r.split == "test")
            std::cout << r.model << " test mse " << r.mse << " mae " << r.mae << "\n";

    if (bundle.has_irc) {
        auto trace = siwinv::iteration_trace(bundle, view);
        siwinv::write_trace_csv(trace, out_dir / "trace.csv");
    }

    // per-sample error histograms on the held-out test split
    auto x = siwinv::detail::gather_rows(view.x, view.test, siwinv::kFeatureDim);
    auto y = siwinv::detail::gather_rows(view.y, view.test, siwinv::kTargetDim);
    const int n = static_cast<int>(view.test.size());
    std::vector<std::pair<std::string, std::vector<float>>> preds;
    if (bundle.has_fim) preds.emplace_back("fim", siwinv::fim_batch(bundle, x.data(), n));
    if (bundle.has_hifr2) preds.emplace_back("hifr2", siwinv::hifr2_batch(bundle, x.data(), n));
    if (bundle.has_irc) preds.emplace_back("irc", siwinv::irc_batch(bundle, x.data(), n));
    std::vector<std::pair<std::string, siwinv::ErrorHistogram>> hmse, hmae;
    for (const auto& [name, p] : preds) {
        hmse.emplace_back(name, siwinv::error_histogram(siwinv::per_sample_errors(p, y, true)));
        hmae.emplace_back(name, siwinv::error_histogram(siwinv::per_sample_errors(p, y, false)));
    }
    siwinv::write_histogram_csv(hmse, out_dir / "histogram_mse.csv");
    siwinv::write_histogram_csv(hmae, out_dir / "histogram_mae.csv");

    siwinv::Geometry reference{};
    auto table = siwinv::comparison_table(bundle, ds.substrate, reference, ds.fgrid);
    siwinv::write_comparison_csv(table, out_dir / "comparison_table.csv");
    std::cout << "reports written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_predict(const RunConfig& cfg, const fs::path& out_dir, const std::string& model,
                const fs::path& input, bool clip) {
    auto bundle = load_bundle_or_die(out_dir, cfg.train_threads);
    auto spectrum = siwinv::read_spectrum_csv(input, cfg.fgrid);

    json result;
    result["model"] = model;
    result["input"] = input.string();
    result["clipped"] = clip;
    if (model == "fim") {
        result["estimate"] = estimate_json(siwinv::predict_fim(bundle, spectrum, clip));
    } else if (model == "hifr2") {
        auto p = siwinv::predict_hifr2(bundle, spectrum, clip);
        result["estimate"] = estimate_json(p.final);
        result["baseline"] = estimate_json(p.p0);
        json delta = json::array();
        for (double v : p.delta_normalized) delta.push_back(v);
        result["delta_normalized"] = delta;
    } else if (model == "irc") {
        auto p = siwinv::predict_irc(bundle, spectrum, clip);
        result["estimate"] = estimate_json(p.final());
        json iters = json::array();
        for (const auto& e : p.iterations) iters.push_back(estimate_json(e));
        result["iterations"] = iters;
    } else {
        throw ConfigError("unknown model \"" + model + "\" (expected fim, hifr2, or irc)");
    }

    std::ofstream f(out_dir / "prediction.json");
    f << result.dump(2) << "\n";
    std::cout << result.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const fs::path& out_dir, const std::string& param) {
    // One-at-a-time sweeps around the reference geometry. G is raised to 31
    // so the largest variants clear the feasibility threshold strictly.
    siwinv::Geometry base{5.5, 8.0, 0.2, 0.4, 0.8, 31.0};
    std::vector<double> values;
    if (param == "D1")
        values = {4.5, 5.5, 6.5};
    else if (param == "D2")
        values = {7.0, 8.0, 9.0};
    else if (param == "R1")
        values = {0.1, 0.2, 0.3};
    else if (param == "R2")
        values = {0.3, 0.4, 0.5};
    else if (param == "R3")
        values = {0.6, 0.8, 1.0};
    else if (param == "G")
        values = {28.0, 31.0, 36.0};
    else
        throw ConfigError("unknown parameter \"" + param + "\" (expected D1, D2, R1, R2, R3, G)");

    auto report = siwinv::trend_check(cfg.substrate, base, param, values, cfg.fgrid);
    siwinv::write_trend_csv(report, out_dir / "sweep.csv");
    json j = {{"parameter", report.parameter},
              {"values", report.values},
              {"lowest_resonance_ghz", report.lowest_resonance_ghz},
              {"verdict", report.verdict}};
    std::ofstream f(out_dir / "sweep.json");
    f << j.dump(2) << "\n";
    std::cout << "sweep " << param << ": " << report.verdict << "\n";
    return 0;
}

int cmd_verify(const RunConfig& cfg, const fs::path& out_dir, const fs::path& targets_dir,
               int threads) {
    auto bundle = load_bundle_or_die(out_dir, cfg.train_threads);
    if (!fs::is_directory(targets_dir))
        throw std::runtime_error("targets directory not found: " + targets_dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(targets_dir))
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("no .csv targets in " + targets_dir.string());

    std::vector<siwinv::Spectrum> targets;
    for (const auto& f : files) targets.push_back(siwinv::read_spectrum_csv(f, cfg.fgrid));

    siwinv::VerifyOptions opts;
    opts.include_s11 = cfg.verify_include_s11;
    opts.threads = threads > 0 ? threads : 1;
    auto report = siwinv::verify_designs(bundle, targets, cfg.substrate, cfg.fgrid, opts);
    siwinv::write_verify_csv(report, out_dir / "verify.csv");
    for (const auto& [model, mean] : siwinv::verify_means(report))
        std::cout << model << " mean |S21| spectrum mse " << mean << "\n";
    return 0;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out_dir, const std::vector<double>& geom,
                 const fs::path& out_file) {
    if (geom.size() != 6)
        throw ConfigError("--geometry expects six comma-separated values D1,D2,R1,R2,R3,G");
    siwinv::Geometry g{geom[0], geom[1], geom[2], geom[3], geom[4], geom[5]};
    siwinv::validate_geometry(g);
    auto s = siwinv::simulate(cfg.substrate, g, cfg.fgrid);
    fs::path path = out_file.empty() ? out_dir / "spectrum.csv" : out_file;
    siwinv::write_spectrum_csv(s, path);
    auto res = siwinv::find_resonances(s);
    std::cout << "spectrum written to " << path.string() << "\nresonances (GHz):";
    for (double r : res) std::cout << " " << r;
    std::cout << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inverse design of coupled-resonator waveguide filters via staged neural models"};
    app.require_subcommand(1);

    std::string config_path, model = "all", param, out_dir = "run";
    std::string input_path, targets_dir, out_file;
    std::vector<double> geometry{5.5, 8.0, 0.2, 0.4, 0.8, 26.0};
    long long seed_override = -1;
    int threads_override = -1;
    bool clip = true;

    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "run directory (default: run)");
    app.add_option("--seed", seed_override, "override training.base_seed");
    app.add_option("--threads", threads_override,
                   "override worker counts (generation, training, verification)");

    auto* sc_generate = app.add_subcommand("generate", "simulate the parameter grid into a dataset");
    auto* sc_train = app.add_subcommand("train", "train models on the generated dataset");
    sc_train->add_option("--model", model, "fim, hifr2, irc, or all");
    auto* sc_predict = app.add_subcommand("predict", "predict geometry from a spectrum CSV");
    sc_predict->add_option("--model", model, "fim, hifr2, or irc");
    sc_predict->add_option("--input", input_path, "spectrum CSV on the training grid")
        ->required()
        ->check(CLI::ExistingFile);
    sc_predict->add_flag("--clip,!--no-clip", clip, "clamp outputs into the sampled ranges");
    auto* sc_evaluate = app.add_subcommand("evaluate", "write metric reports for the trained bundle");
    auto* sc_sweep = app.add_subcommand("sweep", "check a parameter's resonance trend");
    sc_sweep->add_option("--param", param, "D1, D2, R1, R2, R3, or G")->required();
    auto* sc_verify = app.add_subcommand("verify", "re-simulate predictions against target spectra");
    sc_verify->add_option("--targets", targets_dir, "directory of target spectrum CSVs")->required();
    auto* sc_simulate = app.add_subcommand("simulate", "run the surrogate solver for one geometry");
    sc_simulate->add_option("--geometry", geometry, "D1,D2,R1,R2,R3,G")->delimiter(',');
    sc_simulate->add_option("--out-file", out_file, "spectrum CSV path (default: <out>/spectrum.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            json j;
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("config: invalid JSON: ") + e.what());
            }
            cfg = parse_config_json(j);
        }
        if (seed_override >= 0) cfg.training.base_seed = static_cast<std::uint64_t>(seed_override);
        if (threads_override >= 0) {
            cfg.threads = threads_override;
            cfg.train_threads = std::max(1, threads_override);
        }

        fs::path out = out_dir;
        fs::create_directories(out);

        if (*sc_generate) {
            write_manifest(out, cfg, "generate");
            return cmd_generate(cfg, out);
        }
        if (*sc_train) {
            write_manifest(out, cfg, "train");
            return cmd_train(cfg, out, model);
        }
        if (*sc_predict) {
            write_manifest(out, cfg, "predict");
            if (model == "all") model = "irc";
            return cmd_predict(cfg, out, model, input_path, clip);
        }
        if (*sc_evaluate) {
            write_manifest(out, cfg, "evaluate");
            return cmd_evaluate(cfg, out);
        }
        if (*sc_sweep) {
            write_manifest(out, cfg, "sweep");
            return cmd_sweep(cfg, out, param);
        }
        if (*sc_verify) {
            write_manifest(out, cfg, "verify");
            return cmd_verify(cfg, out, targets_dir, threads_override > 0 ? threads_override : 1);
        }
        if (*sc_simulate) {
            write_manifest(out, cfg, "simulate");
            return cmd_simulate(cfg, out, geometry, out_file);
        }
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
