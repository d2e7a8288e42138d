// End-to-end tests that drive the installed CLI binary as a subprocess.
// The harness passes the binary path via the SIWINV_CLI environment variable.

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
    const char* p = std::getenv("SIWINV_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args, bool quiet = true) {
    std::string cmd = cli_path() + " " + args;
    if (quiet) cmd += " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int data_rows(const std::string& csv) {
    int lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    return lines - 1; // minus header
}

// One shared workspace: tiny dataset generated and all stages trained once.
struct Workspace {
    fs::path root;
    fs::path config;
    fs::path run;

    Workspace() {
        root = fs::temp_directory_path() / "siwinv_cli_tests";
        fs::remove_all(root);
        fs::create_directories(root);
        config = root / "tiny.json";
        std::ofstream f(config);
        f << R"({
  "parameter_grid": {
    "d_values": [5.5],
    "r_values": [0.2, 0.4, 0.6, 0.8, 1.0],
    "g_values": [26.0, 31.0, 36.0]
  },
  "training": {
    "max_epochs": 3,
    "patience": 2,
    "irc_iterations": 2,
    "irc_epochs": 2
  }
})";
        f.close();
        run = root / "run";
        REQUIRE(::run(base() + " generate") == 0);
        REQUIRE(::run(base() + " train --model all") == 0);
    }

    std::string base() const {
        return "--config " + config.string() + " --out " + run.string();
    }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

} // namespace

TEST_CASE("evaluate writes the full report set") {
    auto& w = ws();
    REQUIRE(run(w.base() + " evaluate") == 0);

    auto metrics = slurp(w.run / "metrics.csv");
    CHECK(metrics.rfind("model,split,mse,mae,", 0) == 0);
    CHECK(data_rows(metrics) == 9); // three models, three splits

    auto trace = slurp(w.run / "trace.csv");
    CHECK(trace.rfind("iteration,mse,mae", 0) == 0);
    CHECK(data_rows(trace) == 3); // baseline plus two correction steps

    CHECK(data_rows(slurp(w.run / "histogram_mse.csv")) == 52); // 50 bins + under/overflow
    CHECK(data_rows(slurp(w.run / "histogram_mae.csv")) == 52);
    CHECK(data_rows(slurp(w.run / "comparison_table.csv")) == 6);
}

TEST_CASE("evaluate output is byte-identical across reruns") {
    auto& w = ws();
    REQUIRE(run(w.base() + " evaluate") == 0);
    auto first_metrics = slurp(w.run / "metrics.csv");
    auto first_trace = slurp(w.run / "trace.csv");
    REQUIRE(run(w.base() + " evaluate") == 0);
    CHECK(slurp(w.run / "metrics.csv") == first_metrics);
    CHECK(slurp(w.run / "trace.csv") == first_trace);
}

TEST_CASE("simulate then predict round-trips through files") {
    auto& w = ws();
    auto target = (w.root / "target.csv").string();
    REQUIRE(run(w.base() + " simulate --geometry 5.5,8.0,0.4,0.6,0.8,31 --out-file " + target) == 0);

    REQUIRE(run(w.base() + " predict --model irc --input " + target) == 0);
    auto irc = json::parse(slurp(w.run / "prediction.json"));
    CHECK(irc.at("model") == "irc");
    CHECK(irc.at("estimate").at("physical").size() == 6);
    for (const char* k : {"D1", "D2", "R1", "R2", "R3", "G"})
        CHECK(irc.at("estimate").at("physical").contains(k));
    CHECK(irc.at("iterations").size() == 3); // baseline plus two corrections
    // the last iteration is the reported estimate
    CHECK(irc.at("iterations").back() == irc.at("estimate"));

    REQUIRE(run(w.base() + " predict --model fim --input " + target) == 0);
    auto fim = json::parse(slurp(w.run / "prediction.json"));
    CHECK(fim.at("model") == "fim");
    CHECK_FALSE(fim.contains("iterations"));

    REQUIRE(run(w.base() + " predict --model hifr2 --input " + target) == 0);
    auto h = json::parse(slurp(w.run / "prediction.json"));
    CHECK(h.contains("baseline"));
    CHECK(h.at("delta_normalized").size() == 6);
}

TEST_CASE("sweep reports the expected spacing trend") {
    auto& w = ws();
    REQUIRE(run(w.base() + " sweep --param D1") == 0);
    auto j = json::parse(slurp(w.run / "sweep.json"));
    CHECK(j.at("parameter") == "D1");
    CHECK(j.at("verdict") == "strictly-decreasing");
    CHECK(j.at("values").size() == 3);
    CHECK(data_rows(slurp(w.run / "sweep.csv")) == 3);
}

TEST_CASE("verify scores every target under every model") {
    auto& w = ws();
    auto tdir = w.root / "targets";
    fs::create_directories(tdir);
    auto t1 = (tdir / "a.csv").string(), t2 = (tdir / "b.csv").string();
    REQUIRE(run(w.base() + " simulate --geometry 5.5,8.0,0.2,0.4,0.8,26 --out-file " + t1) == 0);
    REQUIRE(run(w.base() + " simulate --geometry 5.5,8.0,0.4,0.6,1.0,36 --out-file " + t2) == 0);

    REQUIRE(run(w.base() + " verify --targets " + tdir.string()) == 0);
    auto csv = slurp(w.run / "verify.csv");
    CHECK(csv.rfind("target,model,feasible,s21_mse,", 0) == 0);
    CHECK(data_rows(csv) == 6); // two targets, three models
}

TEST_CASE("usage errors exit with code 1") {
    auto& w = ws();
    CHECK(run("bogus") == 1);
    CHECK(run(w.base() + " evaluate --frobnicate") == 1);
    CHECK(run(w.base() + " sweep") == 1);          // --param required
    CHECK(run(w.base() + " sweep --param Q") == 1); // unknown parameter

    auto bad = w.root / "bad.json";
    std::ofstream(bad) << R"({"training": {"learning_rat": 0.1}})";
    CHECK(run("--config " + bad.string() + " --out " + w.run.string() + " sweep --param D1") == 1);
}

TEST_CASE("missing artifacts exit with code 2") {
    auto& w = ws();
    auto empty = (w.root / "empty_run").string();
    auto target = (w.root / "target.csv").string();
    CHECK(run("--out " + empty + " train --model fim") == 2); // no dataset
    CHECK(run("--config " + w.config.string() + " --out " + empty + " predict --model fim --input " +
              target) == 2); // no bundle

    // dataset present but correction stage needs the base model first
    auto staged = (w.root / "staged_run").string();
    REQUIRE(run("--config " + w.config.string() + " --out " + staged + " generate") == 0);
    CHECK(run("--config " + w.config.string() + " --out " + staged + " train --model irc") == 2);
}

TEST_CASE("malformed spectrum input exits with code 2") {
    auto& w = ws();
    auto bad = w.root / "bad_spectrum.csv";
    std::ofstream(bad) << "frequency_GHz,s11_mag,s21_mag\n1.0,0.5,0.5\n";
    CHECK(run(w.base() + " predict --model fim --input " + bad.string()) == 2);
}
