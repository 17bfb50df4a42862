#pragma once

// Shared fixtures and reference implementations for the test suites. The
// reference samplers/convolutions here are written independently of the
// library code paths so the suites cross-check two implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "difform/core.hpp"

namespace testsupport {

using difform::GridMeta;
using difform::ScalarImage;
using difform::VectorField;

// nested one-axis-at-a-time linear interpolation with index clamping
inline double ref_lerp_axis(const std::vector<double>& vals, double frac) {
    return vals[0] * (1.0 - frac) + vals[1] * frac;
}

inline double ref_sample_linear(const ScalarImage& img, double x, double y, double z) {
    const GridMeta& m = img.meta;
    std::array<double, 3> p{x, y, z};
    std::array<int64_t, 3> i0{0, 0, 0};
    std::array<double, 3> f{0.0, 0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
        if (a >= m.ndim) {
            i0[a] = 0;
            f[a] = 0.0;
            continue;
        }
        double v = p[a];
        if (v < 0.0) v = 0.0;
        if (v > static_cast<double>(m.dims[a] - 1)) v = static_cast<double>(m.dims[a] - 1);
        int64_t i = static_cast<int64_t>(std::floor(v));
        if (i > m.dims[a] - 2) i = m.dims[a] - 2;
        if (i < 0) i = 0;
        i0[a] = i;
        f[a] = v - static_cast<double>(i);
    }
    auto val = [&](int64_t dx, int64_t dy, int64_t dz) {
        const int64_t xx = std::min(i0[0] + dx, m.dims[0] - 1);
        const int64_t yy = std::min(i0[1] + dy, m.dims[1] - 1);
        const int64_t zz = std::min(i0[2] + dz, m.dims[2] - 1);
        return img.at(xx, yy, zz);
    };
    // collapse z, then y, then x
    std::array<std::array<double, 2>, 2> plane{};
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            std::vector<double> zs{val(dx, dy, 0), val(dx, dy, m.ndim == 3 ? 1 : 0)};
            plane[static_cast<size_t>(dy)][static_cast<size_t>(dx)] =
                ref_lerp_axis(zs, m.ndim == 3 ? f[2] : 0.0);
        }
    std::vector<double> ys{ref_lerp_axis({plane[0][0], plane[0][1]}, f[0]),
                           ref_lerp_axis({plane[1][0], plane[1][1]}, f[0])};
    return ref_lerp_axis(ys, f[1]);
}

inline double ref_sample_field_comp(const VectorField& fld, int c, double x, double y,
                                    double z) {
    ScalarImage comp;
    comp.meta = fld.meta;
    comp.data.resize(static_cast<size_t>(fld.meta.voxel_count()));
    for (int64_t i = 0; i < fld.meta.voxel_count(); ++i)
        comp.data[static_cast<size_t>(i)] =
            fld.data[static_cast<size_t>(i * fld.meta.ndim + c)];
    return ref_sample_linear(comp, x, y, z);
}

// deterministic smooth scalar test image from a small sinusoid bank
inline ScalarImage smooth_image(const GridMeta& m, uint64_t seed) {
    std::mt19937_64 eng(seed * 7919 + 13);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    struct Wave { double ax, ay, az, ph, amp; };
    std::vector<Wave> waves;
    for (int k = 0; k < 6; ++k)
        waves.push_back({uni(eng) * 0.7, uni(eng) * 0.7, uni(eng) * 0.7,
                         uni(eng) * 3.14159, 0.2 + 0.1 * std::abs(uni(eng))});
    ScalarImage img = difform::make_image(m);
    for (int64_t z = 0; z < m.dims[2]; ++z)
        for (int64_t y = 0; y < m.dims[1]; ++y)
            for (int64_t x = 0; x < m.dims[0]; ++x) {
                double v = 0.5;
                for (const Wave& w : waves)
                    v += w.amp * std::sin(w.ax * x + w.ay * y + w.az * z + w.ph);
                img.at(x, y, z) = v;
            }
    return img;
}

// deterministic smooth displacement with |u| <= amp, zero outside nothing
inline VectorField smooth_field(const GridMeta& m, double amp, uint64_t seed) {
    std::mt19937_64 eng(seed * 104729 + 7);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    VectorField f = difform::make_field(m);
    for (int c = 0; c < m.ndim; ++c) {
        const double ax = uni(eng) * 0.5, ay = uni(eng) * 0.5, az = uni(eng) * 0.5;
        const double ph = uni(eng) * 3.0;
        for (int64_t z = 0; z < m.dims[2]; ++z)
            for (int64_t y = 0; y < m.dims[1]; ++y)
                for (int64_t x = 0; x < m.dims[0]; ++x)
                    f.at(x, y, z, c) = amp * std::sin(ax * x + ay * y + az * z + ph);
    }
    return f;
}

// smooth mask with values in [0, 1]
inline ScalarImage smooth_mask(const GridMeta& m, uint64_t seed) {
    ScalarImage img = smooth_image(m, seed);
    double lo = img.data[0], hi = img.data[0];
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double& v : img.data)
        v = (v - lo) / (hi - lo);
    return img;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool bytes_equal(const std::string& a, const std::string& b) {
    return slurp(a) == slurp(b);
}

inline double rel_err(double got, double want, double floor_ = 1e-12) {
    return std::abs(got - want) / std::max(std::abs(want), floor_);
}

}  // namespace testsupport
