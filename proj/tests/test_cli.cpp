#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "leocvae/cvae.hpp"
#include "leocvae/dataset.hpp"

#ifndef LEOCVAE_CLI_PATH
#error "LEOCVAE_CLI_PATH must point at the built binary"
#endif

using namespace leocvae;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("leocvae-cli-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

RunResult run_cli(const TempDir& tmp, const std::string& args) {
    const std::string out_path = tmp.file("__stdout");
    const std::string err_path = tmp.file("__stderr");
    const std::string cmd =
        std::string(LEOCVAE_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

std::string make_tiny_csv(const TempDir& tmp, const std::string& name = "tiny.csv") {
    const std::string path = tmp.file(name);
    RunResult r = run_cli(tmp, "make-synthetic --seed 5 --dim 4 --counts 36,12 --out " +
                                   tmp.path.string() + " --out-file " + path);
    REQUIRE(r.exit_code == 0);
    return path;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("help exits cleanly") {
    TempDir tmp;
    CHECK(run_cli(tmp, "--help").exit_code == 0);
    CHECK(run_cli(tmp, "make-synthetic --help").exit_code == 0);
    RunResult bare = run_cli(tmp, "");
    CHECK(bare.exit_code == 1);  // a subcommand is required
}

TEST_CASE("make-synthetic writes a dataset and a manifest, reruns byte-identical") {
    TempDir tmp;
    const std::string csv = tmp.file("data.csv");
    const std::string args = "make-synthetic --seed 9 --dim 5 --counts 30,10 --out " +
                             tmp.path.string() + " --out-file " + csv;
    REQUIRE(run_cli(tmp, args).exit_code == 0);
    const std::string first = slurp(csv);
    const std::string first_manifest = slurp(csv + ".manifest.json");

    Dataset d = load_csv(csv, "label");
    CHECK(d.size() == 40);
    CHECK(d.dim() == 5);
    CHECK(d.class_counts() == std::vector<std::size_t>{30, 10});

    nlohmann::json manifest = read_json(csv + ".manifest.json");
    CHECK(manifest.contains("command"));
    CHECK(manifest.contains("seed"));
    CHECK(manifest.contains("output_hash"));
    CHECK(manifest["command"] == "make-synthetic");

    REQUIRE(run_cli(tmp, args).exit_code == 0);
    CHECK(slurp(csv) == first);
    CHECK(slurp(csv + ".manifest.json") == first_manifest);

    // A different seed must change the data.
    const std::string args2 = "make-synthetic --seed 10 --dim 5 --counts 30,10 --out " +
                              tmp.path.string() + " --out-file " + csv;
    REQUIRE(run_cli(tmp, args2).exit_code == 0);
    CHECK(slurp(csv) != first);
}

TEST_CASE("make-synthetic pinned benchmark shape") {
    TempDir tmp;
    const std::string csv = tmp.file("bench.csv");
    REQUIRE(run_cli(tmp, "make-synthetic --pinned-benchmark --seed 42 --out " +
                             tmp.path.string() + " --out-file " + csv)
                .exit_code == 0);
    Dataset d = load_csv(csv, "label");
    CHECK(d.size() == 1000);
    CHECK(d.dim() == 64);
    CHECK(d.class_counts() == std::vector<std::size_t>{900, 100});
}

TEST_CASE("entropy-report emits per-sample scores within bounds") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    const std::string out = tmp.file("ent");
    RunResult r = run_cli(tmp, "entropy-report --data " + csv + " --k 3 --out " + out);
    REQUIRE(r.exit_code == 0);

    std::ifstream in(out + "/entropy.csv");
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "sample_id,label,H,w_entropy");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 48);

    nlohmann::json manifest = read_json(out + "/manifest.json");
    CHECK(manifest["command"] == "entropy-report");
    CHECK(manifest.contains("input_hash"));
}

TEST_CASE("resample with strategy none copies the input byte for byte") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    const std::string out = tmp.file("none_out");
    RunResult r = run_cli(tmp, "resample --data " + csv + " --strategy none --out " + out);
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(out + "/resampled.csv") == slurp(csv));
}

TEST_CASE("resample balances the classes and reruns byte-identically") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    for (const std::string strategy : {"random", "smote", "adasyn"}) {
        const std::string out = tmp.file(strategy + "_out");
        const std::string args = "resample --data " + csv + " --strategy " + strategy +
                                 " --k 3 --seed 11 --out " + out;
        CAPTURE(strategy);
        REQUIRE(run_cli(tmp, args).exit_code == 0);
        Dataset d = load_csv(out + "/resampled.csv", "label");
        CHECK(d.class_counts() == std::vector<std::size_t>{36, 36});

        nlohmann::json meta = read_json(out + "/metadata.json");
        CHECK(meta["strategy"] == strategy);
        CHECK(meta.contains("output_hash"));

        const std::string first = slurp(out + "/resampled.csv");
        const std::string first_meta = slurp(out + "/metadata.json");
        REQUIRE(run_cli(tmp, args).exit_code == 0);
        CHECK(slurp(out + "/resampled.csv") == first);
        CHECK(slurp(out + "/metadata.json") == first_meta);
    }
}

TEST_CASE("resample keeps original rows bit-exact in original units") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    const std::string out = tmp.file("sm_out");
    REQUIRE(run_cli(tmp, "resample --data " + csv + " --strategy smote --k 3 --out " + out)
                .exit_code == 0);

    std::ifstream orig(csv), res(out + "/resampled.csv");
    std::string orig_line, res_line;
    std::getline(orig, orig_line);  // headers differ: provenance columns added
    std::getline(res, res_line);
    CHECK(res_line.find("synthetic") != std::string::npos);
    // Every original data row appears verbatim as the row prefix.
    while (std::getline(orig, orig_line)) {
        REQUIRE(std::getline(res, res_line));
        CHECK(res_line.substr(0, orig_line.size()) == orig_line);
        CHECK(res_line.substr(orig_line.size(), 3) == ",0,");  // synthetic flag 0
    }
}

TEST_CASE("train-cvae produces a loadable model with history and scaler") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    std::ofstream(tmp.file("cfg.json")) << R"({"cvae": {"max_epochs": 3, "patience": 0}})";
    const std::string out = tmp.file("model_out");
    RunResult r = run_cli(tmp, "train-cvae --data " + csv + " --k 3 --config " +
                                   tmp.file("cfg.json") + " --out " + out);
    REQUIRE(r.exit_code == 0);

    CvaeModel model = CvaeModel::from_json(read_json(out + "/model.json"));
    CHECK(model.architecture().input_dim == 4);
    CHECK(model.architecture().num_classes == 2);

    std::ifstream hist(out + "/history.csv");
    std::string header;
    std::getline(hist, header);
    CHECK(header.find("epoch") != std::string::npos);
    std::size_t rows = 0;
    std::string line;
    while (std::getline(hist, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);

    nlohmann::json manifest = read_json(out + "/manifest.json");
    CHECK(manifest["command"] == "train-cvae");
    CHECK(manifest.contains("input_hash"));
}

TEST_CASE("config file values win over flags with a warning") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    std::ofstream(tmp.file("cfg.json")) << R"({"k": 3})";
    const std::string out = tmp.file("ent_cfg");
    RunResult r = run_cli(tmp, "entropy-report --data " + csv + " --k 5 --config " +
                                   tmp.file("cfg.json") + " --out " + out);
    REQUIRE(r.exit_code == 0);
    CHECK(r.err.find("overrides --k") != std::string::npos);
    nlohmann::json manifest = read_json(out + "/manifest.json");
    CHECK(manifest["config"]["k"].get<int>() == 3);
}

TEST_CASE("configuration mistakes exit with code 1") {
    TempDir tmp;
    SUBCASE("missing input file") {
        RunResult r = run_cli(tmp, "entropy-report --data " + tmp.file("absent.csv") +
                                       " --out " + tmp.file("o"));
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("error") != std::string::npos);
    }
    SUBCASE("unknown strategy") {
        const std::string csv = make_tiny_csv(tmp);
        RunResult r = run_cli(tmp, "resample --data " + csv + " --strategy smite --out " +
                                       tmp.file("o"));
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("unknown strategy") != std::string::npos);
    }
    SUBCASE("unknown flag") {
        CHECK(run_cli(tmp, "make-synthetic --no-such-flag").exit_code == 1);
    }
    SUBCASE("malformed csv") {
        std::ofstream(tmp.file("bad.csv")) << "x,label\noops,0\n";
        RunResult r = run_cli(tmp, "entropy-report --data " + tmp.file("bad.csv") + " --out " +
                                       tmp.file("o"));
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("cannot parse") != std::string::npos);
    }
    SUBCASE("k too large for the dataset") {
        const std::string csv = make_tiny_csv(tmp);
        RunResult r = run_cli(tmp, "resample --data " + csv +
                                       " --strategy smote --k 40 --out " + tmp.file("o"));
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("runtime failures exit with code 2") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    // Output directory path collides with an existing file.
    RunResult r = run_cli(tmp, "entropy-report --data " + csv + " --k 3 --out " + csv + "/sub");
    CHECK(r.exit_code == 2);
}

TEST_CASE("benchmark produces a report and per-strategy manifests") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    std::ofstream(tmp.file("cfg.json")) << R"({"classifier": {"max_epochs": 2}})";
    const std::string out = tmp.file("bench_out");
    RunResult r = run_cli(tmp, "benchmark --data " + csv +
                                   " --strategy none,random --folds 2 --k 3 --config " +
                                   tmp.file("cfg.json") + " --out " + out);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("auc_roc") != std::string::npos);

    nlohmann::json report = read_json(out + "/report.json");
    CHECK(report["leakage_checked"].get<bool>());
    REQUIRE(report["strategies"].is_array());
    std::set<std::string> seen;
    for (const auto& entry : report["strategies"]) {
        seen.insert(entry["strategy"].get<std::string>());
        CHECK(entry["folds"]["auc_roc"].size() == 2);
    }
    CHECK(seen == std::set<std::string>{"none", "random"});

    CHECK(fs::exists(out + "/manifest-none.json"));
    CHECK(fs::exists(out + "/manifest-random.json"));
    CHECK(fs::exists(out + "/report.txt"));

    nlohmann::json none_manifest = read_json(out + "/manifest-none.json");
    CHECK(none_manifest["strategy"] == "none");
}

TEST_CASE("ablation benchmark emits six distinct manifests") {
    TempDir tmp;
    const std::string csv = make_tiny_csv(tmp);
    std::ofstream(tmp.file("cfg.json"))
        << R"({"cvae": {"max_epochs": 2, "patience": 0}, "classifier": {"max_epochs": 2}})";
    const std::string out = tmp.file("abl_out");
    RunResult r = run_cli(tmp, "benchmark --data " + csv + " --ablation --folds 2 --k 3" +
                                   " --config " + tmp.file("cfg.json") + " --out " + out);
    REQUIRE(r.exit_code == 0);

    const char* names[] = {"full",           "no-entropy-loss",    "no-entropy-sampling",
                           "no-class-weights", "class-weights-only", "plain-cvae"};
    std::set<std::string> bodies;
    for (const char* name : names) {
        const std::string path = out + "/manifest-" + name + ".json";
        CAPTURE(name);
        REQUIRE(fs::exists(path));
        nlohmann::json m = read_json(path);
        CHECK(m["strategy"] == name);
        // The toggle triple makes each manifest distinct.
        bodies.insert(m["toggles"].dump());
    }
    CHECK(bodies.size() == 6);

    nlohmann::json report = read_json(out + "/report.json");
    CHECK(report["strategies"].size() == 6);
}
