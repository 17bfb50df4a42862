#include "difform/core.hpp"

#include <cmath>
#include <stdexcept>

#include "difform/interp.hpp"

namespace difform {

GridMeta make_meta_2d(int64_t nx, int64_t ny, double sx, double sy) {
    GridMeta m;
    m.ndim = 2;
    m.dims = {nx, ny, 1};
    m.spacing = {sx, sy, 1.0};
    return m;
}

GridMeta make_meta_3d(int64_t nx, int64_t ny, int64_t nz, double sx, double sy, double sz) {
    GridMeta m;
    m.ndim = 3;
    m.dims = {nx, ny, nz};
    m.spacing = {sx, sy, sz};
    return m;
}

void validate_meta(const GridMeta& m) {
    if (m.ndim != 2 && m.ndim != 3)
        throw std::invalid_argument("grid must have 2 or 3 axes");
    for (int a = 0; a < m.ndim; ++a) {
        if (m.dims[a] < 2)
            throw std::invalid_argument("grid dims must be >= 2 per axis");
        if (!(m.spacing[a] > 0.0) || !std::isfinite(m.spacing[a]))
            throw std::invalid_argument("grid spacing must be > 0");
    }
    if (m.ndim == 2 && m.dims[2] != 1)
        throw std::invalid_argument("2D grid must have dims[2] == 1");
}

ScalarImage make_image(const GridMeta& m, double fill) {
    validate_meta(m);
    return {m, std::vector<double>(static_cast<size_t>(m.voxel_count()), fill)};
}

LabelImage make_labels(const GridMeta& m, int32_t fill) {
    validate_meta(m);
    return {m, std::vector<int32_t>(static_cast<size_t>(m.voxel_count()), fill)};
}

VectorField make_field(const GridMeta& m, double fill) {
    validate_meta(m);
    return {m, std::vector<double>(static_cast<size_t>(m.voxel_count() * m.ndim), fill)};
}

DisplacementField new_identity_field(const GridMeta& meta) {
    return make_field(meta, 0.0);
}

ScalarImage downsample_image(const ScalarImage& img, const std::array<double, 3>& factor) {
    validate_meta(img.meta);
    GridMeta out_meta = img.meta;
    std::array<double, 3> sigma{0.0, 0.0, 0.0};
    bool any_blur = false;
    for (int a = 0; a < img.meta.ndim; ++a) {
        if (!(factor[a] >= 1.0))
            throw std::invalid_argument("downsample factor must be >= 1");
        out_meta.dims[a] = static_cast<int64_t>(std::ceil(img.meta.dims[a] / factor[a]));
        if (out_meta.dims[a] < 2)
            throw std::invalid_argument("downsample would leave < 2 samples on an axis");
        out_meta.spacing[a] = img.meta.spacing[a] *
            (static_cast<double>(img.meta.dims[a]) / out_meta.dims[a]);
        if (factor[a] > 1.0) {
            sigma[a] = factor[a] / 2.0;
            any_blur = true;
        }
    }
    if (out_meta.dims == img.meta.dims && !any_blur)
        return img;  // factor 1 on every axis: bit-identical copy

    const ScalarImage blurred = any_blur ? gaussian_smooth(img, sigma) : img;

    ScalarImage out = make_image(out_meta);
    // corner-aligned: old = new * (old_dim-1)/(new_dim-1)
    std::array<double, 3> step{0.0, 0.0, 0.0};
    for (int a = 0; a < img.meta.ndim; ++a)
        step[a] = static_cast<double>(img.meta.dims[a] - 1) / (out_meta.dims[a] - 1);
    for (int64_t z = 0; z < out_meta.dims[2]; ++z)
        for (int64_t y = 0; y < out_meta.dims[1]; ++y)
            for (int64_t x = 0; x < out_meta.dims[0]; ++x)
                out.at(x, y, z) = sample_linear(
                    blurred, {x * step[0], y * step[1], z * step[2]});
    return out;
}

ScalarImage downsample_image(const ScalarImage& img, double factor) {
    return downsample_image(img, {factor, factor, factor});
}

}  // namespace difform
