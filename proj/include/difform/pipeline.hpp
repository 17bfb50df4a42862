#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "difform/affine.hpp"
#include "difform/core.hpp"
#include "difform/similarity.hpp"

namespace difform {

struct PyramidSchedule {
    std::vector<double> scales;  // strictly decreasing, last normally 1
    std::vector<int> iterations;

    static PyramidSchedule defaults() { return {{4.0, 2.0, 1.0}, {50, 50, 50}}; }
};

void validate_schedule(const PyramidSchedule& s);

enum class RegMode { direct, svf };

struct RegistrationConfig {
    LossKind loss = LossKind::ssd;
    int lncc_radius = 2;
    double eta = 0.5;
    double sigma_grad = 1.0;
    double sigma_warp = 0.5;
    bool use_jac = false;
    RegMode mode = RegMode::direct;
    int svf_M = 6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double step_cap = 0.5;
    int conv_window = 10;
    double conv_tol = 1e-5;
    uint64_t seed = 0;
};

void validate_config(const RegistrationConfig& c);

struct IterationRecord {
    int scale_index = 0;
    double scale = 1.0;
    int iter = 0;          // within scale
    int64_t global_iter = 0;
    double loss = 0.0;
    double max_step = 0.0;
    double wall_ms = 0.0;
};

struct RunLog {
    std::vector<IterationRecord> iterations;
    double final_loss = 0.0;
    double final_singularity_fraction = 0.0;
    double total_ms = 0.0;
};

using RegInit = std::variant<std::monostate, AffineTransform, DisplacementField>;

// Multi-scale registration. Direct mode: loss -> sigma_grad smoothing ->
// Eulerian direction -> Adam -> capped retraction + sigma_warp smoothing,
// warp and optimizer state upsampled between scales. SVF mode: the same
// optimizer drives a stationary velocity field through exp_map/svf_pullback.
// Early scale exit when the mean relative loss improvement over conv_window
// iterations drops below conv_tol.
std::pair<DisplacementField, RunLog> register_images(
    const ScalarImage& fixed, const ScalarImage& moving,
    const RegistrationConfig& cfg, const PyramidSchedule& sched,
    const RegInit& init = std::monostate{});

enum class SweepMetric { loss, overlap };

struct SweepPair {
    ScalarImage fixed, moving;
    std::optional<LabelImage> fixed_labels, moving_labels;
    std::string name;
};

struct SweepRow {
    double eta = 0.0, sigma_warp = 0.0, sigma_grad = 0.0;
    double metric_mean = 0.0, metric_sd = 0.0;
    double wall_ms = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    // one heatmap per eta, rows = sigma_warp values, cols = sigma_grad values
    std::vector<std::vector<std::vector<double>>> heatmaps;
    std::vector<double> etas, sigma_warps, sigma_grads;
};

// Grid sweep over eta x sigma_warp x sigma_grad; each config registers every
// pair with a deterministic per-config seed. Individual config failures are
// recorded in their row and do not stop the sweep.
SweepResult sweep(const std::vector<SweepPair>& pairs, const RegistrationConfig& base,
                  const PyramidSchedule& sched, const std::vector<double>& etas,
                  const std::vector<double>& sigma_warps, const std::vector<double>& sigma_grads,
                  SweepMetric metric, int workers);

}  // namespace difform
