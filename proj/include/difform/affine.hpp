#pragma once

#include <array>

#include "difform/core.hpp"

namespace difform {

enum class LossKind { ssd, lncc, dice };

// phi_A(x) = A x + t in voxel units of the fixed grid. Row-major A.
struct AffineTransform {
    int ndim = 3;
    std::array<double, 9> A{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<double, 3> t{0, 0, 0};
};

AffineTransform identity_affine(int ndim);
double affine_det(const AffineTransform& T);

struct AffineResult {
    AffineTransform transform;  // best-loss iterate (last finite one on divergence)
    double loss = 0.0;
    bool diverged = false;
    int64_t iterations = 0;
};

// Gradient descent with Adam on (A, t) from (I, 0), multi-scale; the
// parameter gradient contracts the loss gradient against x and 1. Returns the
// best-loss iterate; a non-finite loss stops the run and flags divergence.
AffineResult affine_register(const ScalarImage& fixed, const ScalarImage& moving,
                             LossKind loss, const std::vector<double>& scales,
                             const std::vector<int>& iters, double eta,
                             int lncc_radius = 2);

// u(x) = (A - I) x + t sampled on meta.
DisplacementField affine_to_field(const AffineTransform& T, const GridMeta& meta);

// Same transform expressed on a working grid whose coords map to the frame of
// T by x_full = scale_to_full * x_work: u(x) = S^-1 (A S x + t) - x.
DisplacementField affine_to_working_field(const AffineTransform& T, const GridMeta& meta,
                                          const std::array<double, 3>& scale_to_full);

struct AffineGrad {
    double value = 0.0;
    std::array<double, 9> dA{};
    std::array<double, 3> dt{};
};

// Loss and analytic parameter gradient of T on a working-scale image pair.
// scale_to_full maps working voxel coords to the full-resolution frame the
// parameters live in (all 1 when evaluating at full resolution).
AffineGrad affine_param_gradient(const ScalarImage& fixed, const ScalarImage& moving,
                                 LossKind loss, const AffineTransform& T,
                                 const std::array<double, 3>& scale_to_full,
                                 int lncc_radius = 2);

}  // namespace difform
