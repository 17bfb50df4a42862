#pragma once

#include <array>

#include "difform/core.hpp"

namespace difform {

// Bilinear/trilinear sample at continuous voxel coordinates; coordinates
// outside [0, dim-1] are clamped to the boundary first.
double sample_linear(const ScalarImage& img, const std::array<double, 3>& point);

// Exact spatial gradient of the multilinear interpolant at the given point
// (node differences weighted by the complementary lerp weights). Zero along
// axes where the point is clamped outside the domain.
std::array<double, 3> sample_linear_gradient(const ScalarImage& img,
                                             const std::array<double, 3>& point);

// Per-component linear sample of a vector field.
std::array<double, 3> sample_field(const VectorField& f, const std::array<double, 3>& point);

// d x d spatial Jacobian of the interpolant of f at a continuous point:
// J[c][a] = d f_c / d x_a. Zero columns along clamped axes.
std::array<std::array<double, 3>, 3> sample_field_jacobian(const VectorField& f,
                                                           const std::array<double, 3>& point);

// out(x) = sample_linear(img, x + u(x)).
ScalarImage warp_image(const ScalarImage& img, const DisplacementField& phi);

// Nearest-neighbor warp for label maps.
LabelImage warp_labels(const LabelImage& labels, const DisplacementField& phi);

// Group composition (phi o psi)(x) = phi(psi(x)):
// u_out(x) = u_psi(x) + lerp-sample of u_phi at x + u_psi(x).
DisplacementField compose(const DisplacementField& phi, const DisplacementField& psi);

// Per-voxel J(phi) = I + du_i/dx_j, central differences in voxel units
// (one-sided at the boundary). Stored as ndim*ndim doubles per voxel,
// row-major (row = component, column = axis).
struct JacobianImage {
    GridMeta meta;
    std::vector<double> data;

    double at(int64_t x, int64_t y, int64_t z, int i, int j) const {
        return data[(voxel_index(meta, x, y, z) * meta.ndim + i) * meta.ndim + j];
    }
};

JacobianImage jacobian(const DisplacementField& phi);
ScalarImage jacobian_det(const DisplacementField& phi);

// Separable Gaussian, kernel truncated at radius ceil(3*sigma) and
// renormalized over in-range taps at the boundary; sigma=0 skips the axis.
ScalarImage gaussian_smooth(const ScalarImage& img, const std::array<double, 3>& sigma);
VectorField gaussian_smooth_field(const VectorField& f, const std::array<double, 3>& sigma);
ScalarImage gaussian_smooth(const ScalarImage& img, double sigma);
VectorField gaussian_smooth_field(const VectorField& f, double sigma);

enum class UpsampleMethod { linear, cubic };

// Corner-aligned resample of each displacement component onto new_meta
// (old = new * (old_dim-1)/(new_dim-1)), then per-axis rescale by
// (new_dim-1)/(old_dim-1) to stay in voxel units of the new grid. The cubic
// kernel is Catmull-Rom and exists only for the folding demonstration.
DisplacementField upsample_field(const DisplacementField& phi, const GridMeta& new_meta,
                                 UpsampleMethod method = UpsampleMethod::linear);

// Same corner-aligned resample without the displacement rescale (used for
// second-moment fields, which scale with the squared factor instead).
VectorField resample_field_linear(const VectorField& f, const GridMeta& new_meta);

// Corner-aligned displacement resample with per-axis rescale, any direction
// (upsample_field minus the no-shrink guard; used to bring init fields to the
// coarsest working grid).
DisplacementField resample_displacement(const DisplacementField& phi, const GridMeta& new_meta);

}  // namespace difform
