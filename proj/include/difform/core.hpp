#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace difform {

// Grid geometry. Axis order is fixed fastest-to-slowest = x,y,z; a 2D grid
// uses ndim=2 and dims[2]=1. Spacing/origin are millimeters per axis.
struct GridMeta {
    int ndim = 3;
    std::array<int64_t, 3> dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    bool same_grid(const GridMeta& o) const {
        return ndim == o.ndim && dims == o.dims;
    }
};

GridMeta make_meta_2d(int64_t nx, int64_t ny, double sx = 1.0, double sy = 1.0);
GridMeta make_meta_3d(int64_t nx, int64_t ny, int64_t nz,
                      double sx = 1.0, double sy = 1.0, double sz = 1.0);

// Throws std::invalid_argument if dims < 2 on an active axis or spacing <= 0.
void validate_meta(const GridMeta& m);

inline int64_t voxel_index(const GridMeta& m, int64_t x, int64_t y, int64_t z) {
    return (z * m.dims[1] + y) * m.dims[0] + x;
}

struct ScalarImage {
    GridMeta meta;
    std::vector<double> data;  // length = voxel_count

    double& at(int64_t x, int64_t y, int64_t z) { return data[voxel_index(meta, x, y, z)]; }
    double at(int64_t x, int64_t y, int64_t z) const { return data[voxel_index(meta, x, y, z)]; }
};

struct LabelImage {
    GridMeta meta;
    std::vector<int32_t> data;  // 0 = background

    int32_t& at(int64_t x, int64_t y, int64_t z) { return data[voxel_index(meta, x, y, z)]; }
    int32_t at(int64_t x, int64_t y, int64_t z) const { return data[voxel_index(meta, x, y, z)]; }
};

// Dense per-voxel d-vector field, interleaved components, voxel-index units
// of its own grid. phi(x) = x + u(x); u == 0 is the identity element.
struct VectorField {
    GridMeta meta;
    std::vector<double> data;  // length = voxel_count * ndim

    double& at(int64_t x, int64_t y, int64_t z, int c) {
        return data[voxel_index(meta, x, y, z) * meta.ndim + c];
    }
    double at(int64_t x, int64_t y, int64_t z, int c) const {
        return data[voxel_index(meta, x, y, z) * meta.ndim + c];
    }
};

using DisplacementField = VectorField;
using VelocityField = VectorField;

struct Landmark {
    std::array<double, 3> point_mm{0.0, 0.0, 0.0};
    std::string id;
};

using LandmarkSet = std::vector<Landmark>;

ScalarImage make_image(const GridMeta& m, double fill = 0.0);
LabelImage make_labels(const GridMeta& m, int32_t fill = 0);
VectorField make_field(const GridMeta& m, double fill = 0.0);

// u == 0 everywhere. Throws std::invalid_argument on bad meta.
DisplacementField new_identity_field(const GridMeta& meta);

// Gaussian pre-blur (sigma = factor/2 voxels per axis, skipped where
// factor == 1) followed by corner-aligned linear resampling. Output dims =
// ceil(dims/factor), output spacing = spacing * (in_dims/out_dims).
ScalarImage downsample_image(const ScalarImage& img, const std::array<double, 3>& factor);
ScalarImage downsample_image(const ScalarImage& img, double factor);

}  // namespace difform
