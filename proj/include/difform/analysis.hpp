#pragma once

#include <map>
#include <vector>

#include "difform/core.hpp"

namespace difform {

// Per-voxel condition number of the 2x2/3x3 similarity Hessian block
// H = 2[grad I grad I^T + (I_m - I_f) Hess I_m] at phi = id, central
// differences. kappa = |lambda_max|/|lambda_min|, excluded where
// |lambda_min| < 1e-12. Foreground = |I_f| > 1% of max |I_f|.
struct ConditioningLevel {
    double factor = 1.0;
    ScalarImage kappa;              // condition number, 0 where excluded
    std::vector<uint8_t> foreground;  // 1 = foreground voxel
    std::vector<double> hist_edges;   // log-spaced bin edges
    std::vector<int64_t> hist_counts; // foreground kappa histogram
    int64_t excluded = 0;             // foreground voxels with |lambda_min| < 1e-12
    int64_t foreground_count = 0;
    double fraction_above_10 = 0.0;   // of defined foreground kappa
};

struct ConditioningReport {
    std::vector<ConditioningLevel> levels;  // factors 1, 2, 4
};

ConditioningReport conditioning_report(const ScalarImage& fixed, const ScalarImage& moving);

// Per-voxel Hessian block at one voxel (exposed for the oracle tests).
// Returns ndim*ndim row-major.
std::array<double, 9> conditioning_hessian(const ScalarImage& fixed, const ScalarImage& moving,
                                           int64_t x, int64_t y, int64_t z);

// Eigenvalues of a symmetric d x d matrix (closed form), ascending.
std::array<double, 3> symmetric_eigenvalues(const std::array<double, 9>& H, int ndim);

// Fraction of voxels with jacobian_det(phi) <= 0.
double singularity_fraction(const DisplacementField& phi);

// Region overlap between warped and fixed label maps. Regions = union of
// nonzero labels in either image. TO/FN need the region in fixed, FP needs it
// in warped; VS needs either. Mean aggregates average defined values; Klein
// aggregates pool the voxel counts across regions before dividing.
struct RegionOverlap {
    int32_t label = 0;
    int64_t fixed_count = 0;    // |T_r|
    int64_t warped_count = 0;   // |S_r|
    int64_t intersection = 0;   // |S_r n T_r|
    bool has_to = false;
    double to = 0.0;   // |S n T| / |T|
    double mo = 0.0;   // 2|S n T| / (|S| + |T|)
    bool has_fn = false;
    double fn = 0.0;   // |T \ S| / |T|
    bool has_fp = false;
    double fp = 0.0;   // |S \ T| / |S|
    double vs = 0.0;   // 2(|S| - |T|) / (|S| + |T|)
};

struct OverlapReport {
    std::vector<RegionOverlap> regions;
    double to_mean = 0.0, mo_mean = 0.0, fn_mean = 0.0, fp_mean = 0.0, vs_mean = 0.0;
    double to_klein = 0.0, mo_klein = 0.0, fn_klein = 0.0, fp_klein = 0.0, vs_klein = 0.0;
};

OverlapReport overlap_report(const LabelImage& warped, const LabelImage& fixed);

// Maps fixed-space physical points through phi and reports Euclidean
// millimeter distances to the matched moving-space points.
struct LandmarkErrors {
    std::vector<double> distances_mm;
    double mean = 0.0;
    double max = 0.0;
};

LandmarkErrors landmark_error(const LandmarkSet& fixed_pts, const LandmarkSet& moving_pts,
                              const DisplacementField& phi,
                              const GridMeta& fixed_meta, const GridMeta& moving_meta);

}  // namespace difform
