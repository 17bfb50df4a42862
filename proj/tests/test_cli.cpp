// Drives the installed command-line binary end to end: synthetic data
// generation, registration, warp application, metric reports, the toy study,
// sweeps, and the exit-code contract. The binary path is injected at compile
// time via DIFFORM_BIN.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "difform/analysis.hpp"
#include "difform/core.hpp"
#include "difform/io.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace difform;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "difform_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DIFFORM_BIN) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    if (st == -1)
        return -1;
    return WIFEXITED(st) ? WEXITSTATUS(st) : -2;
}

void dump(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

nlohmann::json load_json(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        out.push_back(line);
    return out;
}

// column extraction from a csv line
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    return out;
}

std::string make_synth(const std::string& name, const std::string& dims, int seed) {
    const fs::path dir = scratch(name);
    REQUIRE(run_cli("synth --dims " + dims + " --seed " + std::to_string(seed) +
                    " --out-dir " + dir.string()) == 0);
    return dir.string();
}

}  // namespace

TEST_CASE("synth writes the whole bundle") {
    const std::string dir = make_synth("synth", "16,16,16", 3);
    for (const char* f : {"moving.mhd", "moving.raw", "fixed.mhd", "fixed.raw",
                          "truth_warp.mhd", "truth_warp.raw", "moving_labels.mhd",
                          "fixed_labels.mhd", "landmarks_fixed.csv",
                          "landmarks_moving.csv", "manifest.json"})
        CHECK(fs::exists(fs::path(dir) / f));

    const ScalarImage moving = read_image_mhd(dir + "/moving.mhd");
    CHECK(moving.meta.dims[0] == 16);
    const DisplacementField truth = read_field_mhd(dir + "/truth_warp.mhd");
    CHECK(singularity_fraction(truth) == 0.0);
    CHECK(read_landmarks_csv(dir + "/landmarks_fixed.csv").size() == 10);
    CHECK(read_landmarks_csv(dir + "/landmarks_moving.csv").size() == 10);

    const nlohmann::json man = load_json(fs::path(dir) / "manifest.json");
    CHECK(man.at("seed") == 3);
    CHECK(man.at("outputs").size() == 12);  // five volumes (.mhd + .raw) + two csv
}

TEST_CASE("apply with an identity field copies the volume byte for byte") {
    const std::string dir = make_synth("apply_id", "12,12,12", 5);
    const ScalarImage moving = read_image_mhd(dir + "/moving.mhd");
    write_field_mhd(make_field(moving.meta), dir + "/id.mhd");

    REQUIRE(run_cli("apply --image " + dir + "/moving.mhd --field " + dir +
                    "/id.mhd --out " + dir + "/copy.mhd") == 0);
    CHECK(testsupport::bytes_equal(dir + "/copy.raw", dir + "/moving.raw"));

    REQUIRE(run_cli("apply --labels " + dir + "/moving_labels.mhd --field " + dir +
                    "/id.mhd --out " + dir + "/copy_labels.mhd") == 0);
    CHECK(testsupport::bytes_equal(dir + "/copy_labels.raw", dir + "/moving_labels.raw"));
}

TEST_CASE("seeded register replay writes byte-identical volumes") {
    const std::string dir = make_synth("reg_replay", "16,16,16", 7);
    dump(fs::path(dir) / "cfg.json",
         R"({"eta": 0.4, "scales": [2, 1], "iterations": [6, 6]})");

    const std::string common = "register --fixed " + dir + "/fixed.mhd --moving " + dir +
                               "/moving.mhd --config " + dir + "/cfg.json --seed 11";
    REQUIRE(run_cli(common + " --out-field " + dir + "/w1.mhd --out-warped " + dir +
                    "/m1.mhd --log " + dir + "/log1.csv") == 0);
    REQUIRE(run_cli(common + " --out-field " + dir + "/w2.mhd --out-warped " + dir +
                    "/m2.mhd --log " + dir + "/log2.csv") == 0);
    CHECK(testsupport::bytes_equal(dir + "/w1.raw", dir + "/w2.raw"));
    CHECK(testsupport::bytes_equal(dir + "/m1.raw", dir + "/m2.raw"));

    // per-iteration losses replay exactly; wall-clock columns may differ
    const std::vector<std::string> l1 = lines_of(fs::path(dir) / "log1.csv");
    const std::vector<std::string> l2 = lines_of(fs::path(dir) / "log2.csv");
    REQUIRE(l1.size() == l2.size());
    REQUIRE(l1.size() > 1);
    for (size_t i = 0; i < l1.size(); ++i) {
        const auto a = split_csv(l1[i]);
        const auto b = split_csv(l2[i]);
        REQUIRE(a.size() == 7);
        for (size_t k = 0; k + 1 < a.size(); ++k)
            CHECK(a[k] == b[k]);
    }

    const nlohmann::json man = load_json(fs::path(dir) / "w1.mhd.manifest.json");
    CHECK(man.at("seed") == 11);
    CHECK(man.at("config_sha256").get<std::string>().size() == 64);
}

TEST_CASE("register of an image onto itself stays near the identity") {
    const std::string dir = make_synth("reg_self", "12,12,12", 9);
    dump(fs::path(dir) / "cfg.json", R"({"scales": [1], "iterations": [10]})");
    REQUIRE(run_cli("register --fixed " + dir + "/moving.mhd --moving " + dir +
                    "/moving.mhd --config " + dir + "/cfg.json --out-field " + dir +
                    "/w.mhd --out-warped " + dir + "/m.mhd") == 0);
    const DisplacementField phi = read_field_mhd(dir + "/w.mhd");
    double peak = 0.0;
    for (double v : phi.data)
        peak = std::max(peak, std::abs(v));
    CHECK(peak < 0.05);
}

TEST_CASE("metric subcommands report on the synthetic bundle") {
    const std::string dir = make_synth("metrics", "16,16,16", 13);

    // warping the moving labels by the truth reproduces the fixed labels
    REQUIRE(run_cli("apply --labels " + dir + "/moving_labels.mhd --field " + dir +
                    "/truth_warp.mhd --out " + dir + "/warped_labels.mhd") == 0);
    CHECK(testsupport::bytes_equal(dir + "/warped_labels.raw", dir + "/fixed_labels.raw"));

    REQUIRE(run_cli("metrics overlap --warped-labels " + dir +
                    "/warped_labels.mhd --fixed-labels " + dir +
                    "/fixed_labels.mhd --out " + dir + "/overlap.json") == 0);
    const nlohmann::json ovl = load_json(fs::path(dir) / "overlap.json");
    CHECK(ovl.at("mean").at("to") == 1.0);
    CHECK(ovl.at("klein").at("mo") == 1.0);
    CHECK(ovl.at("regions").size() >= 2);

    REQUIRE(run_cli("metrics landmarks --fixed-points " + dir +
                    "/landmarks_fixed.csv --moving-points " + dir +
                    "/landmarks_moving.csv --field " + dir +
                    "/truth_warp.mhd --moving-image " + dir + "/moving.mhd --out " + dir +
                    "/lm.json") == 0);
    const nlohmann::json lm = load_json(fs::path(dir) / "lm.json");
    // the stored field is single precision, so "zero" is float-rounded
    CHECK(lm.at("mean_mm").get<double>() < 1e-5);
    CHECK(lm.at("distances_mm").size() == 10);

    REQUIRE(run_cli("metrics singularity --field " + dir + "/truth_warp.mhd --out " +
                    dir + "/sing.json") == 0);
    const nlohmann::json sg = load_json(fs::path(dir) / "sing.json");
    CHECK(sg.at("fraction") == 0.0);
    CHECK(sg.at("nonpositive_voxels") == 0);
    CHECK(sg.at("min_det").get<double>() > 0.0);
}

TEST_CASE("conditioning writes the three-level report and kappa volumes") {
    const std::string dir = make_synth("cond", "16,16,16", 17);
    REQUIRE(run_cli("conditioning --fixed " + dir + "/fixed.mhd --moving " + dir +
                    "/moving.mhd --out " + dir + "/cond.json --kappa-prefix " + dir +
                    "/kappa") == 0);
    const nlohmann::json rep = load_json(fs::path(dir) / "cond.json");
    REQUIRE(rep.at("levels").size() == 3);
    CHECK(rep.at("levels")[0].at("factor") == 1.0);
    CHECK(rep.at("levels")[1].at("factor") == 2.0);
    CHECK(rep.at("levels")[2].at("factor") == 4.0);
    CHECK(rep.at("levels")[0].at("foreground_count").get<int64_t>() > 0);
    for (const char* f : {"kappa_f1.mhd", "kappa_f2.mhd", "kappa_f4.mhd"})
        CHECK(fs::exists(fs::path(dir) / f));
}

TEST_CASE("toy subcommand writes the trajectory and the figure") {
    const fs::path dir = scratch("toy");
    REQUIRE(run_cli("toy --kappa 1000 --theta 0 --optimizer adam --out " +
                    (dir / "toy.csv").string() + " --figure " +
                    (dir / "toy.pgm").string()) == 0);
    const std::vector<std::string> rows = lines_of(dir / "toy.csv");
    REQUIRE(rows.size() == 1002);  // header + start + 1000 iterates
    CHECK(rows[0] == "iter,x,y,distance");
    const auto last = split_csv(rows.back());
    REQUIRE(last.size() == 4);
    CHECK(std::stod(last[3]) <= 1e-3);
    CHECK(fs::exists(dir / "toy.pgm"));
    CHECK(fs::exists(dir / "toy.pgm.json"));

    // stock sgd stalls on the same problem
    REQUIRE(run_cli("toy --kappa 1000 --optimizer sgd --out " +
                    (dir / "sgd.csv").string()) == 0);
    const auto sgd_last = split_csv(lines_of(dir / "sgd.csv").back());
    CHECK((sgd_last[3] == "inf" || std::stod(sgd_last[3]) > 1.0));
}

TEST_CASE("sweep writes rows, heatmaps, and replays its metric") {
    const std::string dir = make_synth("sweep", "12,12,12", 21);
    dump(fs::path(dir) / "pairs.txt", dir + "/fixed.mhd," + dir + "/moving.mhd\n");
    dump(fs::path(dir) / "grid.json",
         R"({"etas": [0.3, 0.5], "sigma_warps": [0.5], "sigma_grads": [1.0],
             "config": {"scales": [2, 1], "iterations": [4, 4]}})");

    const std::string common = "sweep --pairs " + dir + "/pairs.txt --grid " + dir +
                               "/grid.json --seed 4 --workers 2 --out ";
    REQUIRE(run_cli(common + dir + "/sweep.csv") == 0);
    REQUIRE(run_cli(common + dir + "/replay.csv") == 0);

    const std::vector<std::string> rows = lines_of(fs::path(dir) / "sweep.csv");
    REQUIRE(rows.size() == 3);  // header + 2 eta rows
    CHECK(rows[0] == "eta,sigma_warp,sigma_grad,metric_mean,metric_sd,wall_ms,failed,error");
    const std::vector<std::string> replay = lines_of(fs::path(dir) / "replay.csv");
    REQUIRE(replay.size() == 3);
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto a = split_csv(rows[i]);
        const auto b = split_csv(replay[i]);
        REQUIRE(a.size() >= 7);
        CHECK(a[3] == b[3]);  // metric_mean text is bit-identical
        CHECK(a[6] == "0");
    }
    for (const char* f : {"sweep_eta0.pgm", "sweep_eta0.pgm.json", "sweep_eta1.pgm",
                          "sweep_eta1.pgm.json", "sweep.csv.manifest.json"})
        CHECK(fs::exists(fs::path(dir) / f));
}

TEST_CASE("argument and configuration mistakes exit with one") {
    const fs::path dir = scratch("badargs");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("register --fixed missing.mhd") == 1);  // missing required options

    const std::string synth = make_synth("badcfg", "12,12,12", 23);
    dump(fs::path(dir) / "bad_eta.json", R"({"eta": -1})");
    CHECK(run_cli("register --fixed " + synth + "/fixed.mhd --moving " + synth +
                  "/moving.mhd --config " + (dir / "bad_eta.json").string() +
                  " --out-field " + (dir / "w.mhd").string() + " --out-warped " +
                  (dir / "m.mhd").string()) == 1);

    dump(fs::path(dir) / "broken.json", "{ not json");
    CHECK(run_cli("register --fixed " + synth + "/fixed.mhd --moving " + synth +
                  "/moving.mhd --config " + (dir / "broken.json").string() +
                  " --out-field " + (dir / "w.mhd").string() + " --out-warped " +
                  (dir / "m.mhd").string()) == 1);

    CHECK(run_cli("metrics overlap --warped-labels " + synth +
                  "/moving.mhd --fixed-labels " + synth + "/fixed_labels.mhd --out " +
                  (dir / "o.json").string()) == 1);  // float volume is not a label map
}

TEST_CASE("numerical blowup exits with two") {
    const std::string dir = make_synth("blowup", "16,16,16", 29);
    dump(fs::path(dir) / "hot.json",
         R"({"eta": 1000, "sigma_warp": 0, "scales": [1], "iterations": [20]})");
    CHECK(run_cli("register --fixed " + dir + "/fixed.mhd --moving " + dir +
                  "/moving.mhd --config " + dir + "/hot.json --out-field " + dir +
                  "/w.mhd --out-warped " + dir + "/m.mhd") == 2);
}
