// difform command-line tool: registration, affine fitting, warp application,
// metrics, conditioning analysis, toy problems, hyperparameter sweeps, and
// synthetic test-case generation. Exit codes: 0 success, 1 validation error,
// 2 numerical failure.

#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "difform/affine.hpp"
#include "difform/analysis.hpp"
#include "difform/core.hpp"
#include "difform/diffeo.hpp"
#include "difform/interp.hpp"
#include "difform/io.hpp"
#include "difform/pipeline.hpp"
#include "difform/synth.hpp"
#include "difform/toy.hpp"

namespace {

using namespace difform;

std::string g_command;
std::string g_started_utc;

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string raw_sibling(const std::string& mhd_path) {
    std::filesystem::path p(mhd_path);
    p.replace_extension(".raw");
    return p.string();
}

// collects the files a subcommand touches and writes the manifest last
struct ManifestBuilder {
    RunManifest m;

    ManifestBuilder() {
        m.command = g_command;
        m.started_utc = g_started_utc;
    }
    void input(const std::string& path) { m.inputs.push_back({path, sha256_file(path)}); }
    void output(const std::string& path) { m.outputs.push_back({path, sha256_file(path)}); }
    void output_volume(const std::string& path) {
        output(path);
        output(raw_sibling(path));
    }
    void write(const std::string& path, uint64_t seed, const nlohmann::json& params) {
        m.seed = seed;
        const std::string dump = params.dump(2);
        m.config_hash = sha256_bytes(dump.data(), dump.size());
        write_manifest(m, path);
    }
};

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (cell.empty() || end == cell.c_str() || *end != '\0')
            throw std::invalid_argument(what + ": bad number '" + cell + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw std::invalid_argument(what + ": empty list");
    return out;
}

LossKind parse_loss(const std::string& s) {
    if (s == "ssd") return LossKind::ssd;
    if (s == "lncc") return LossKind::lncc;
    if (s == "dice") return LossKind::dice;
    throw std::invalid_argument("unknown loss '" + s + "'");
}

GridMeta parse_dims(const std::string& s) {
    const std::vector<double> d = parse_double_list(s, "--dims");
    if (d.size() != 2 && d.size() != 3)
        throw std::invalid_argument("--dims: need 2 or 3 comma-separated sizes");
    for (double v : d)
        if (v < 2 || v != std::floor(v))
            throw std::invalid_argument("--dims: sizes must be integers >= 2");
    if (d.size() == 2)
        return make_meta_2d(static_cast<int64_t>(d[0]), static_cast<int64_t>(d[1]));
    return make_meta_3d(static_cast<int64_t>(d[0]), static_cast<int64_t>(d[1]),
                        static_cast<int64_t>(d[2]));
}

// ---------------------------------------------------------------- register

struct RegisterOpts {
    std::string fixed, moving, config, out_field, out_warped, init_affine, init_field, log;
    uint64_t seed = 0;
    bool seed_given = false;
};

void run_register(const RegisterOpts& o) {
    const ScalarImage fixed = read_image_mhd(o.fixed);
    const ScalarImage moving = read_image_mhd(o.moving);

    PyramidSchedule sched = PyramidSchedule::defaults();
    RegistrationConfig cfg;
    if (!o.config.empty())
        cfg = load_config(o.config, sched);
    if (o.seed_given)
        cfg.seed = o.seed;

    RegInit init;
    if (!o.init_affine.empty())
        init = read_affine_json(o.init_affine);
    else if (!o.init_field.empty())
        init = read_field_mhd(o.init_field);

    auto [phi, log] = register_images(fixed, moving, cfg, sched, init);

    write_field_mhd(phi, o.out_field);
    const ScalarImage warped = warp_image(moving, phi);
    write_image_mhd(warped, o.out_warped);
    if (!o.log.empty())
        write_runlog_csv(log, o.log);

    ManifestBuilder mb;
    mb.input(o.fixed);
    mb.input(o.moving);
    if (!o.config.empty()) mb.input(o.config);
    if (!o.init_affine.empty()) mb.input(o.init_affine);
    if (!o.init_field.empty()) mb.input(o.init_field);
    mb.output_volume(o.out_field);
    mb.output_volume(o.out_warped);
    if (!o.log.empty()) mb.output(o.log);
    mb.write(o.out_field + ".manifest.json", cfg.seed, config_to_json(cfg, sched));

    std::cout << "register: " << log.iterations.size() << " iterations, final loss "
              << log.final_loss << ", singularity fraction "
              << log.final_singularity_fraction << ", " << log.total_ms << " ms\n";
}

// ---------------------------------------------------------------- affine

struct AffineOpts {
    std::string fixed, moving, out;
    std::string loss = "lncc";
    std::string scales = "4,2";
    std::string iters = "150,100";
    double eta = 0.1;
    int lncc_radius = 2;
};

int run_affine(const AffineOpts& o) {
    const ScalarImage fixed = read_image_mhd(o.fixed);
    const ScalarImage moving = read_image_mhd(o.moving);
    const std::vector<double> scales = parse_double_list(o.scales, "--scales");
    const std::vector<double> itersd = parse_double_list(o.iters, "--iters");
    std::vector<int> iters;
    for (double v : itersd) {
        if (v < 0 || v != std::floor(v))
            throw std::invalid_argument("--iters: entries must be non-negative integers");
        iters.push_back(static_cast<int>(v));
    }

    const AffineResult res =
        affine_register(fixed, moving, parse_loss(o.loss), scales, iters, o.eta,
                        o.lncc_radius);
    write_affine_json(res.transform, fixed.meta, o.out);

    ManifestBuilder mb;
    mb.input(o.fixed);
    mb.input(o.moving);
    mb.output(o.out);
    const nlohmann::json params{{"loss", o.loss}, {"scales", scales}, {"iters", iters},
                                {"eta", o.eta}, {"lncc_radius", o.lncc_radius}};
    mb.write(o.out + ".manifest.json", 0, params);

    std::cout << "affine: loss " << res.loss << " after " << res.iterations
              << " iterations, det A = " << affine_det(res.transform) << "\n";
    if (res.diverged) {
        std::cerr << "error: affine fit diverged (non-finite loss); wrote last finite iterate\n";
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------- apply

struct ApplyOpts {
    std::string image, labels, field, out;
};

void run_apply(const ApplyOpts& o) {
    const DisplacementField phi = read_field_mhd(o.field);
    ManifestBuilder mb;
    mb.input(o.field);
    if (!o.image.empty()) {
        const ScalarImage img = read_image_mhd(o.image);
        write_image_mhd(warp_image(img, phi), o.out);
        mb.input(o.image);
    } else {
        const LabelImage lab = read_labels_mhd(o.labels);
        write_labels_mhd(warp_labels(lab, phi), o.out);
        mb.input(o.labels);
    }
    mb.output_volume(o.out);
    const nlohmann::json params{{"field", o.field}, {"labels", o.image.empty()}};
    mb.write(o.out + ".manifest.json", 0, params);
    std::cout << "apply: wrote " << o.out << "\n";
}

// ---------------------------------------------------------------- metrics

struct OverlapOpts {
    std::string warped, fixed, out;
};

void run_metrics_overlap(const OverlapOpts& o) {
    const LabelImage warped = read_labels_mhd(o.warped);
    const LabelImage fixed = read_labels_mhd(o.fixed);
    const OverlapReport rep = overlap_report(warped, fixed);
    const std::string s = overlap_to_json(rep).dump(2) + "\n";
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << s;
    }
    ManifestBuilder mb;
    mb.input(o.warped);
    mb.input(o.fixed);
    mb.output(o.out);
    mb.write(o.out + ".manifest.json", 0,
             nlohmann::json{{"metric", "overlap"}});
    std::cout << "overlap: mean TO " << rep.to_mean << ", mean MO " << rep.mo_mean
              << ", Klein TO " << rep.to_klein << "\n";
}

struct LandmarkOpts {
    std::string fixed_points, moving_points, field, moving_image, out;
};

void run_metrics_landmarks(const LandmarkOpts& o) {
    const LandmarkSet fixed_pts = read_landmarks_csv(o.fixed_points);
    const LandmarkSet moving_pts = read_landmarks_csv(o.moving_points);
    const DisplacementField phi = read_field_mhd(o.field);
    GridMeta moving_meta = phi.meta;
    if (!o.moving_image.empty())
        moving_meta = read_image_mhd(o.moving_image).meta;
    const LandmarkErrors errs =
        landmark_error(fixed_pts, moving_pts, phi, phi.meta, moving_meta);
    const std::string s = landmark_errors_to_json(errs).dump(2) + "\n";
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << s;
    }
    ManifestBuilder mb;
    mb.input(o.fixed_points);
    mb.input(o.moving_points);
    mb.input(o.field);
    if (!o.moving_image.empty()) mb.input(o.moving_image);
    mb.output(o.out);
    mb.write(o.out + ".manifest.json", 0, nlohmann::json{{"metric", "landmarks"}});
    std::cout << "landmarks: mean " << errs.mean << " mm, max " << errs.max << " mm\n";
}

struct SingularityOpts {
    std::string field, out;
};

void run_metrics_singularity(const SingularityOpts& o) {
    const DisplacementField phi = read_field_mhd(o.field);
    const ScalarImage det = jacobian_det(phi);
    double min_det = det.data.empty() ? 0.0 : det.data[0];
    int64_t nonpos = 0;
    for (double v : det.data) {
        min_det = std::min(min_det, v);
        if (v <= 0.0)
            ++nonpos;
    }
    const nlohmann::json j{{"schema_version", 1},
                           {"fraction", singularity_fraction(phi)},
                           {"nonpositive_voxels", nonpos},
                           {"voxel_count", static_cast<int64_t>(det.data.size())},
                           {"min_det", min_det}};
    const std::string s = j.dump(2) + "\n";
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << s;
    }
    ManifestBuilder mb;
    mb.input(o.field);
    mb.output(o.out);
    mb.write(o.out + ".manifest.json", 0, nlohmann::json{{"metric", "singularity"}});
    std::cout << "singularity: fraction " << j["fraction"].get<double>() << ", min det "
              << min_det << "\n";
}

// ---------------------------------------------------------------- conditioning

struct ConditioningOpts {
    std::string fixed, moving, out, kappa_prefix;
};

void run_conditioning(const ConditioningOpts& o) {
    const ScalarImage fixed = read_image_mhd(o.fixed);
    const ScalarImage moving = read_image_mhd(o.moving);
    const ConditioningReport rep = conditioning_report(fixed, moving);
    const std::string s = conditioning_to_json(rep).dump(2) + "\n";
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << s;
    }
    ManifestBuilder mb;
    mb.input(o.fixed);
    mb.input(o.moving);
    mb.output(o.out);
    if (!o.kappa_prefix.empty()) {
        for (const ConditioningLevel& lv : rep.levels) {
            std::ostringstream name;
            name << o.kappa_prefix << "_f" << static_cast<int>(lv.factor) << ".mhd";
            write_image_mhd(lv.kappa, name.str());
            mb.output_volume(name.str());
        }
    }
    mb.write(o.out + ".manifest.json", 0, nlohmann::json{{"metric", "conditioning"}});
    for (const ConditioningLevel& lv : rep.levels)
        std::cout << "conditioning: factor " << lv.factor << ", foreground "
                  << lv.foreground_count << ", fraction kappa>10 " << lv.fraction_above_10
                  << "\n";
}

// ---------------------------------------------------------------- toy

struct ToyOpts {
    double kappa = 1000.0;
    double theta = 0.0;
    std::string optimizer = "adam";
    int iters = 1000;
    double eta = -1.0;
    std::string out, figure;
};

void write_toy_figure(const ToyProblem& p, const ToyRun& run, const std::string& path) {
    // log-compressed loss surface over [-6.5, 6.5]^2 with the iterate path
    // burned in as the brightest value
    const int64_t n = 256;
    const double lo = -6.5, hi = 6.5;
    std::vector<double> img(static_cast<size_t>(n * n));
    double vmax = 0.0;
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < n; ++c) {
            const double x = lo + (hi - lo) * c / (n - 1);
            const double y = hi - (hi - lo) * r / (n - 1);
            const double v = std::log1p(toy_eval(p, x, y).value);
            img[static_cast<size_t>(r * n + c)] = v;
            vmax = std::max(vmax, v);
        }
    for (const std::array<double, 2>& pt : run.trajectory) {
        if (!std::isfinite(pt[0]) || !std::isfinite(pt[1]))
            continue;
        if (pt[0] < lo || pt[0] > hi || pt[1] < lo || pt[1] > hi)
            continue;
        const int64_t c = std::lround((pt[0] - lo) / (hi - lo) * (n - 1));
        const int64_t r = std::lround((hi - pt[1]) / (hi - lo) * (n - 1));
        img[static_cast<size_t>(r * n + c)] = vmax * 1.05;
    }
    write_pgm_with_range_json(img, n, n, path);
}

void run_toy_cmd(const ToyOpts& o) {
    if (o.optimizer != "sgd" && o.optimizer != "adam")
        throw std::invalid_argument("--optimizer must be sgd or adam");
    const ToyOptimizer opt = o.optimizer == "sgd" ? ToyOptimizer::sgd : ToyOptimizer::adam;
    const ToyProblem p{o.kappa, o.theta};
    const ToyRun run = run_toy(p, opt, o.iters, {5.0, 5.0}, o.eta);

    std::ostringstream csv;
    csv << "iter,x,y,distance\n";
    for (size_t i = 0; i < run.trajectory.size(); ++i) {
        const auto& pt = run.trajectory[i];
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i, pt[0], pt[1],
                      std::hypot(pt[0], pt[1]));
        csv << buf;
    }
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << csv.str();
    }
    ManifestBuilder mb;
    mb.output(o.out);
    if (!o.figure.empty()) {
        write_toy_figure(p, run, o.figure);
        mb.output(o.figure);
        mb.output(o.figure + ".json");
    }
    const nlohmann::json params{{"kappa", o.kappa}, {"theta", o.theta},
                                {"optimizer", o.optimizer}, {"iters", o.iters},
                                {"eta", o.eta}};
    mb.write(o.out + ".manifest.json", 0, params);
    std::cout << "toy: final distance " << run.final_distance
              << (run.diverged ? " (diverged)" : "") << "\n";
}

// ---------------------------------------------------------------- sweep

struct SweepOpts {
    std::string pairs, grid, out;
    std::string metric = "loss";
    int workers = 1;
    uint64_t seed = 0;
    bool seed_given = false;
};

void run_sweep(const SweepOpts& o) {
    ManifestBuilder mb;
    mb.input(o.pairs);
    mb.input(o.grid);

    // pairs file: one "fixed,moving[,fixed_labels,moving_labels]" per line
    std::vector<SweepPair> pairs;
    {
        std::ifstream in(o.pairs);
        if (!in)
            throw std::invalid_argument(o.pairs + ": cannot open for reading");
        std::string line;
        while (std::getline(in, line)) {
            const size_t h = line.find('#');
            if (h != std::string::npos)
                line = line.substr(0, h);
            std::vector<std::string> cells;
            std::istringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                const size_t a = cell.find_first_not_of(" \t\r");
                const size_t b = cell.find_last_not_of(" \t\r");
                cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
            }
            if (cells.empty() || (cells.size() == 1 && cells[0].empty()))
                continue;
            if (cells.size() != 2 && cells.size() != 4)
                throw std::invalid_argument(o.pairs + ": each line needs 2 or 4 paths");
            SweepPair p;
            p.fixed = read_image_mhd(cells[0]);
            p.moving = read_image_mhd(cells[1]);
            p.name = cells[0];
            mb.input(cells[0]);
            mb.input(cells[1]);
            if (cells.size() == 4) {
                p.fixed_labels = read_labels_mhd(cells[2]);
                p.moving_labels = read_labels_mhd(cells[3]);
                mb.input(cells[2]);
                mb.input(cells[3]);
            }
            pairs.push_back(std::move(p));
        }
    }

    const std::string grid_text = [&] {
        std::ifstream in(o.grid, std::ios::binary);
        if (!in)
            throw std::invalid_argument(o.grid + ": cannot open for reading");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }();
    nlohmann::json jg;
    try {
        jg = nlohmann::json::parse(grid_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(o.grid + ": byte " + std::to_string(e.byte) + ": " +
                                    e.what());
    }
    if (!jg.contains("etas") || !jg.contains("sigma_warps") || !jg.contains("sigma_grads"))
        throw std::invalid_argument(o.grid + ": need etas, sigma_warps, sigma_grads arrays");
    const std::vector<double> etas = jg.at("etas").get<std::vector<double>>();
    const std::vector<double> sws = jg.at("sigma_warps").get<std::vector<double>>();
    const std::vector<double> sgs = jg.at("sigma_grads").get<std::vector<double>>();

    PyramidSchedule sched = PyramidSchedule::defaults();
    RegistrationConfig base;
    if (jg.contains("config"))
        config_from_json(jg.at("config"), base, sched);
    if (o.seed_given)
        base.seed = o.seed;

    const SweepMetric metric =
        o.metric == "overlap" ? SweepMetric::overlap : SweepMetric::loss;
    if (o.metric != "overlap" && o.metric != "loss")
        throw std::invalid_argument("--metric must be overlap or loss");

    const SweepResult res = sweep(pairs, base, sched, etas, sws, sgs, metric, o.workers);

    std::ostringstream csv;
    csv << "eta,sigma_warp,sigma_grad,metric_mean,metric_sd,wall_ms,failed,error\n";
    int failed = 0;
    for (const SweepRow& r : res.rows) {
        std::string err = r.error;
        for (char& c : err)
            if (c == ',' || c == '\n' || c == '\r')
                c = ';';
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,",
                      r.eta, r.sigma_warp, r.sigma_grad, r.metric_mean, r.metric_sd,
                      r.wall_ms, r.failed ? 1 : 0);
        csv << buf << err << "\n";
        failed += r.failed ? 1 : 0;
    }
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::invalid_argument(o.out + ": cannot open for writing");
        out << csv.str();
    }
    mb.output(o.out);

    // one (sigma_warp x sigma_grad) heatmap raster per eta
    const std::string base_path = [&] {
        std::filesystem::path p(o.out);
        p.replace_extension();
        return p.string();
    }();
    for (size_t ei = 0; ei < res.etas.size(); ++ei) {
        std::vector<double> flat;
        flat.reserve(res.sigma_warps.size() * res.sigma_grads.size());
        for (size_t wi = 0; wi < res.sigma_warps.size(); ++wi)
            for (size_t gi = 0; gi < res.sigma_grads.size(); ++gi)
                flat.push_back(res.heatmaps[ei][wi][gi]);
        const std::string hp = base_path + "_eta" + std::to_string(ei) + ".pgm";
        write_pgm_with_range_json(flat, static_cast<int64_t>(res.sigma_grads.size()),
                                  static_cast<int64_t>(res.sigma_warps.size()), hp);
        mb.output(hp);
        mb.output(hp + ".json");
    }

    nlohmann::json params{{"etas", etas}, {"sigma_warps", sws}, {"sigma_grads", sgs},
                          {"metric", o.metric},
                          {"config", config_to_json(base, sched)}};
    mb.write(o.out + ".manifest.json", base.seed, params);
    std::cout << "sweep: " << res.rows.size() << " configs, " << failed << " failed\n";
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::string dims = "32,32,32";
    uint64_t seed = 0;
    std::string out_dir;
    int landmarks = 10;
    int bands = 4;
};

void run_synth(const SynthOpts& o) {
    const GridMeta meta = parse_dims(o.dims);
    if (o.bands < 1)
        throw std::invalid_argument("--bands must be >= 1");
    if (o.landmarks < 0)
        throw std::invalid_argument("--landmarks must be >= 0");
    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);

    const DisplacementField truth = synth_warp(meta, o.seed);
    const ScalarImage moving = synth_phantom(meta, o.seed);
    const ScalarImage fixed = warp_image(moving, truth);

    // intensity bands of the phantom as label regions; band 0 is background
    LabelImage moving_labels = make_labels(meta);
    for (size_t i = 0; i < moving.data.size(); ++i) {
        const int b = static_cast<int>(std::floor(moving.data[i] * o.bands));
        moving_labels.data[i] = std::clamp(b, 0, o.bands - 1);
    }
    const LabelImage fixed_labels = warp_labels(moving_labels, truth);

    LandmarkSet fixed_pts, moving_pts;
    synth_landmarks(meta, truth, o.landmarks, o.seed, fixed_pts, moving_pts);

    const std::string p_moving = (dir / "moving.mhd").string();
    const std::string p_fixed = (dir / "fixed.mhd").string();
    const std::string p_truth = (dir / "truth_warp.mhd").string();
    const std::string p_mlab = (dir / "moving_labels.mhd").string();
    const std::string p_flab = (dir / "fixed_labels.mhd").string();
    const std::string p_fpts = (dir / "landmarks_fixed.csv").string();
    const std::string p_mpts = (dir / "landmarks_moving.csv").string();

    write_image_mhd(moving, p_moving);
    write_image_mhd(fixed, p_fixed);
    write_field_mhd(truth, p_truth);
    write_labels_mhd(moving_labels, p_mlab);
    write_labels_mhd(fixed_labels, p_flab);
    write_landmarks_csv(fixed_pts, p_fpts);
    write_landmarks_csv(moving_pts, p_mpts);

    ManifestBuilder mb;
    mb.output_volume(p_moving);
    mb.output_volume(p_fixed);
    mb.output_volume(p_truth);
    mb.output_volume(p_mlab);
    mb.output_volume(p_flab);
    mb.output(p_fpts);
    mb.output(p_mpts);
    const nlohmann::json params{{"dims", o.dims}, {"seed", o.seed},
                                {"landmarks", o.landmarks}, {"bands", o.bands}};
    mb.write((dir / "manifest.json").string(), o.seed, params);
    std::cout << "synth: wrote " << o.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    std::ostringstream cmd;
    for (int i = 0; i < argc; ++i)
        cmd << (i ? " " : "") << argv[i];
    g_command = cmd.str();
    g_started_utc = utc_now();

    CLI::App app{"difform: multi-scale adaptive diffeomorphic image matching"};
    app.require_subcommand(1);
    int exit_code = 0;

    RegisterOpts reg;
    CLI::App* s_reg = app.add_subcommand("register", "dense diffeomorphic registration");
    s_reg->add_option("--fixed", reg.fixed, "fixed image (.mhd)")->required();
    s_reg->add_option("--moving", reg.moving, "moving image (.mhd)")->required();
    s_reg->add_option("--config", reg.config, "configuration JSON");
    s_reg->add_option("--out-field", reg.out_field, "output displacement field (.mhd)")
        ->required();
    s_reg->add_option("--out-warped", reg.out_warped, "output warped moving image (.mhd)")
        ->required();
    CLI::Option* oa = s_reg->add_option("--init-affine", reg.init_affine,
                                        "initial affine transform JSON");
    CLI::Option* of = s_reg->add_option("--init-field", reg.init_field,
                                        "initial displacement field (.mhd)");
    oa->excludes(of);
    of->excludes(oa);
    s_reg->add_option("--log", reg.log, "per-iteration log CSV");
    CLI::Option* rs = s_reg->add_option("--seed", reg.seed, "seed override");
    s_reg->callback([&] {
        reg.seed_given = rs->count() > 0;
        run_register(reg);
    });

    AffineOpts aff;
    CLI::App* s_aff = app.add_subcommand("affine", "affine pre-alignment");
    s_aff->add_option("--fixed", aff.fixed, "fixed image (.mhd)")->required();
    s_aff->add_option("--moving", aff.moving, "moving image (.mhd)")->required();
    s_aff->add_option("--loss", aff.loss, "ssd|lncc|dice (default lncc)");
    s_aff->add_option("--out", aff.out, "output transform JSON")->required();
    s_aff->add_option("--scales", aff.scales, "downsample factors (default 4,2)");
    s_aff->add_option("--iters", aff.iters, "iterations per scale (default 150,100)");
    s_aff->add_option("--eta", aff.eta, "step size (default 0.1)");
    s_aff->add_option("--lncc-radius", aff.lncc_radius, "lncc window radius (default 2)");
    s_aff->callback([&] { exit_code = run_affine(aff); });

    ApplyOpts app_o;
    CLI::App* s_app = app.add_subcommand("apply", "apply a displacement field");
    CLI::Option* ai = s_app->add_option("--image", app_o.image, "scalar image input (.mhd)");
    CLI::Option* al = s_app->add_option("--labels", app_o.labels,
                                        "label image input (.mhd, nearest neighbor)");
    ai->excludes(al);
    al->excludes(ai);
    s_app->add_option("--field", app_o.field, "displacement field (.mhd)")->required();
    s_app->add_option("--out", app_o.out, "output (.mhd)")->required();
    s_app->callback([&] {
        if (app_o.image.empty() && app_o.labels.empty())
            throw CLI::ValidationError("apply", "one of --image/--labels is required");
        run_apply(app_o);
    });

    CLI::App* s_met = app.add_subcommand("metrics", "evaluation metrics");
    s_met->require_subcommand(1);

    OverlapOpts ovl;
    CLI::App* s_ovl = s_met->add_subcommand("overlap", "region overlap report");
    s_ovl->add_option("--warped-labels", ovl.warped, "warped label image (.mhd)")->required();
    s_ovl->add_option("--fixed-labels", ovl.fixed, "fixed label image (.mhd)")->required();
    s_ovl->add_option("--out", ovl.out, "output JSON")->required();
    s_ovl->callback([&] { run_metrics_overlap(ovl); });

    LandmarkOpts lmk;
    CLI::App* s_lmk = s_met->add_subcommand("landmarks", "landmark distance report");
    s_lmk->add_option("--fixed-points", lmk.fixed_points, "fixed landmarks CSV")->required();
    s_lmk->add_option("--moving-points", lmk.moving_points, "moving landmarks CSV")
        ->required();
    s_lmk->add_option("--field", lmk.field, "displacement field (.mhd)")->required();
    s_lmk->add_option("--moving-image", lmk.moving_image,
                      "moving image for grid geometry (defaults to the field grid)");
    s_lmk->add_option("--out", lmk.out, "output JSON")->required();
    s_lmk->callback([&] { run_metrics_landmarks(lmk); });

    SingularityOpts sng;
    CLI::App* s_sng = s_met->add_subcommand("singularity", "jacobian singularity report");
    s_sng->add_option("--field", sng.field, "displacement field (.mhd)")->required();
    s_sng->add_option("--out", sng.out, "output JSON")->required();
    s_sng->callback([&] { run_metrics_singularity(sng); });

    ConditioningOpts cnd;
    CLI::App* s_cnd = app.add_subcommand("conditioning", "similarity Hessian conditioning");
    s_cnd->add_option("--fixed", cnd.fixed, "fixed image (.mhd)")->required();
    s_cnd->add_option("--moving", cnd.moving, "moving image (.mhd)")->required();
    s_cnd->add_option("--out", cnd.out, "output report JSON")->required();
    s_cnd->add_option("--kappa-prefix", cnd.kappa_prefix,
                      "also write per-factor kappa volumes under this prefix");
    s_cnd->callback([&] { run_conditioning(cnd); });

    ToyOpts toy;
    CLI::App* s_toy = app.add_subcommand("toy", "2D quadratic toy problem");
    s_toy->add_option("--kappa", toy.kappa, "conditioning kappa (default 1000)");
    s_toy->add_option("--theta", toy.theta, "rotation in radians (default 0)");
    s_toy->add_option("--optimizer", toy.optimizer, "sgd|adam (default adam)");
    s_toy->add_option("--iters", toy.iters, "iterations (default 1000)");
    s_toy->add_option("--eta", toy.eta, "step size (default: per-optimizer)");
    s_toy->add_option("--out", toy.out, "trajectory CSV")->required();
    s_toy->add_option("--figure", toy.figure, "contour-plus-path graymap (.pgm)");
    s_toy->callback([&] { run_toy_cmd(toy); });

    SweepOpts swp;
    CLI::App* s_swp = app.add_subcommand("sweep", "hyperparameter grid sweep");
    s_swp->add_option("--pairs", swp.pairs, "pair list file")->required();
    s_swp->add_option("--grid", swp.grid, "grid JSON (etas, sigma_warps, sigma_grads)")
        ->required();
    s_swp->add_option("--metric", swp.metric, "overlap|loss (default loss)");
    s_swp->add_option("--workers", swp.workers, "parallel configs (default 1)");
    s_swp->add_option("--out", swp.out, "output CSV")->required();
    CLI::Option* ss = s_swp->add_option("--seed", swp.seed, "base seed override");
    s_swp->callback([&] {
        swp.seed_given = ss->count() > 0;
        run_sweep(swp);
    });

    SynthOpts syn;
    CLI::App* s_syn = app.add_subcommand("synth", "synthetic phantom + ground-truth warp");
    s_syn->add_option("--dims", syn.dims, "grid sizes, e.g. 32,32,32 (default)");
    s_syn->add_option("--seed", syn.seed, "seed (default 0)");
    s_syn->add_option("--out-dir", syn.out_dir, "output directory")->required();
    s_syn->add_option("--landmarks", syn.landmarks, "landmark count (default 10)");
    s_syn->add_option("--bands", syn.bands, "label band count (default 4)");
    s_syn->callback([&] { run_synth(syn); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
