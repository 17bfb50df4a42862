#include "difform/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "difform/parallel.hpp"

namespace difform {

namespace {

struct CellCoord {
    int64_t i0[3];   // lower node, clamped to [0, dim-2] on active axes
    double f[3];     // fractional weight toward the upper node
    bool clamped[3]; // point fell outside [0, dim-1] on this axis
};

CellCoord locate(const GridMeta& m, const std::array<double, 3>& point) {
    CellCoord c{};
    for (int a = 0; a < 3; ++a) {
        if (a >= m.ndim || m.dims[a] == 1) {
            c.i0[a] = 0;
            c.f[a] = 0.0;
            c.clamped[a] = false;
            continue;
        }
        double p = point[a];
        c.clamped[a] = (p < 0.0 || p > static_cast<double>(m.dims[a] - 1));
        p = std::clamp(p, 0.0, static_cast<double>(m.dims[a] - 1));
        int64_t i = static_cast<int64_t>(std::floor(p));
        i = std::clamp<int64_t>(i, 0, m.dims[a] - 2);
        c.i0[a] = i;
        c.f[a] = p - static_cast<double>(i);
    }
    return c;
}

// weight of corner (cx,cy,cz) excluding the axis `skip` (-1 = none)
double corner_weight(const CellCoord& c, int cx, int cy, int cz, int skip) {
    double w = 1.0;
    const int corner[3] = {cx, cy, cz};
    for (int a = 0; a < 3; ++a) {
        if (a == skip)
            continue;
        w *= corner[a] ? c.f[a] : (1.0 - c.f[a]);
    }
    return w;
}

double cell_value(const ScalarImage& img, const CellCoord& c, int cx, int cy, int cz) {
    const GridMeta& m = img.meta;
    const int64_t x = c.i0[0] + (m.dims[0] > 1 ? cx : 0);
    const int64_t y = c.i0[1] + (m.dims[1] > 1 ? cy : 0);
    const int64_t z = (m.ndim == 3 && m.dims[2] > 1) ? c.i0[2] + cz : 0;
    return img.at(x, y, z);
}

// Catmull-Rom kernel
double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0)
        return ((1.5 * t - 2.5) * t) * t + 1.0;
    if (t < 2.0)
        return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

double sample_cubic_component(const VectorField& f, int comp, const std::array<double, 3>& point) {
    const GridMeta& m = f.meta;
    int64_t base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        if (a >= m.ndim || m.dims[a] == 1) {
            base[a] = 0;
            frac[a] = 0.0;
            continue;
        }
        const double p = std::clamp(point[a], 0.0, static_cast<double>(m.dims[a] - 1));
        base[a] = static_cast<int64_t>(std::floor(p));
        base[a] = std::clamp<int64_t>(base[a], 0, m.dims[a] - 2);
        frac[a] = p - static_cast<double>(base[a]);
    }
    const int na = (m.ndim == 3 && m.dims[2] > 1) ? 4 : 1;
    double acc = 0.0;
    for (int kz = 0; kz < na; ++kz) {
        const double wz = (na == 4) ? cubic_weight(frac[2] - (kz - 1)) : 1.0;
        const int64_t z = (na == 4)
            ? std::clamp<int64_t>(base[2] + kz - 1, 0, m.dims[2] - 1) : 0;
        for (int ky = 0; ky < 4; ++ky) {
            const double wy = cubic_weight(frac[1] - (ky - 1));
            const int64_t y = std::clamp<int64_t>(base[1] + ky - 1, 0, m.dims[1] - 1);
            for (int kx = 0; kx < 4; ++kx) {
                const double wx = cubic_weight(frac[0] - (kx - 1));
                const int64_t x = std::clamp<int64_t>(base[0] + kx - 1, 0, m.dims[0] - 1);
                acc += wz * wy * wx * f.at(x, y, z, comp);
            }
        }
    }
    return acc;
}

void check_same_grid(const GridMeta& a, const GridMeta& b, const char* what) {
    if (!a.same_grid(b))
        throw std::invalid_argument(std::string(what) + ": grid dims mismatch");
}

// smooth one axis of an interleaved buffer (stride-aware), taps renormalized
// over the in-range part near the ends
void smooth_axis(std::vector<double>& data, const GridMeta& m, int comps, int axis,
                 double sigma) {
    if (sigma <= 0.0 || m.dims[axis] == 1)
        return;
    const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<size_t>(2 * radius + 1));
    double tap_sum = 0.0;
    for (int64_t j = -radius; j <= radius; ++j) {
        const double t = std::exp(-0.5 * (j / sigma) * (j / sigma));
        taps[static_cast<size_t>(j + radius)] = t;
        tap_sum += t;
    }
    for (double& t : taps)
        t /= tap_sum;

    const int64_t n = m.dims[axis];
    int64_t stride = comps;
    for (int a = 0; a < axis; ++a)
        stride *= m.dims[a];
    const int64_t lines = (m.voxel_count() / n) * comps;
    std::vector<double> out(data.size());
    parallel_for(lines, [&](int64_t lo, int64_t hi) {
        for (int64_t line = lo; line < hi; ++line) {
            // decompose line id into (slow block, within-stride offset)
            const int64_t block = line / stride;
            const int64_t off = line % stride;
            const int64_t start = block * stride * n + off;
            for (int64_t i = 0; i < n; ++i) {
                const int64_t jlo = std::max<int64_t>(-radius, -i);
                const int64_t jhi = std::min<int64_t>(radius, n - 1 - i);
                double acc = 0.0, wsum = 0.0;
                for (int64_t j = jlo; j <= jhi; ++j) {
                    const double w = taps[static_cast<size_t>(j + radius)];
                    acc += w * data[static_cast<size_t>(start + (i + j) * stride)];
                    wsum += w;
                }
                out[static_cast<size_t>(start + i * stride)] = acc / wsum;
            }
        }
    });
    data.swap(out);
}

}  // namespace

double sample_linear(const ScalarImage& img, const std::array<double, 3>& point) {
    const CellCoord c = locate(img.meta, point);
    double acc = 0.0;
    const int nz = (img.meta.ndim == 3 && img.meta.dims[2] > 1) ? 2 : 1;
    for (int cz = 0; cz < nz; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx)
                acc += corner_weight(c, cx, cy, cz, -1) * cell_value(img, c, cx, cy, cz);
    return acc;
}

std::array<double, 3> sample_linear_gradient(const ScalarImage& img,
                                             const std::array<double, 3>& point) {
    const CellCoord c = locate(img.meta, point);
    std::array<double, 3> g{0.0, 0.0, 0.0};
    const int nz = (img.meta.ndim == 3 && img.meta.dims[2] > 1) ? 2 : 1;
    for (int a = 0; a < img.meta.ndim; ++a) {
        if (img.meta.dims[a] == 1 || c.clamped[a])
            continue;  // flat axis or clamp saturated: derivative 0
        double acc = 0.0;
        for (int cz = 0; cz < nz; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const int corner[3] = {cx, cy, cz};
                    const double sign = corner[a] ? 1.0 : -1.0;
                    acc += sign * corner_weight(c, cx, cy, cz, a) *
                           cell_value(img, c, cx, cy, cz);
                }
        g[a] = acc;
    }
    return g;
}

std::array<double, 3> sample_field(const VectorField& f, const std::array<double, 3>& point) {
    const CellCoord c = locate(f.meta, point);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    const int nz = (f.meta.ndim == 3 && f.meta.dims[2] > 1) ? 2 : 1;
    for (int cz = 0; cz < nz; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
                const double w = corner_weight(c, cx, cy, cz, -1);
                const int64_t x = c.i0[0] + (f.meta.dims[0] > 1 ? cx : 0);
                const int64_t y = c.i0[1] + (f.meta.dims[1] > 1 ? cy : 0);
                const int64_t z = (nz == 2) ? c.i0[2] + cz : 0;
                for (int comp = 0; comp < f.meta.ndim; ++comp)
                    out[comp] += w * f.at(x, y, z, comp);
            }
    return out;
}

std::array<std::array<double, 3>, 3> sample_field_jacobian(const VectorField& f,
                                                           const std::array<double, 3>& point) {
    const CellCoord c = locate(f.meta, point);
    std::array<std::array<double, 3>, 3> J{};
    const int nz = (f.meta.ndim == 3 && f.meta.dims[2] > 1) ? 2 : 1;
    for (int a = 0; a < f.meta.ndim; ++a) {
        if (f.meta.dims[a] == 1 || c.clamped[a])
            continue;
        for (int cz = 0; cz < nz; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const int corner[3] = {cx, cy, cz};
                    const double sign = corner[a] ? 1.0 : -1.0;
                    const double w = sign * corner_weight(c, cx, cy, cz, a);
                    const int64_t x = c.i0[0] + (f.meta.dims[0] > 1 ? cx : 0);
                    const int64_t y = c.i0[1] + (f.meta.dims[1] > 1 ? cy : 0);
                    const int64_t z = (nz == 2) ? c.i0[2] + cz : 0;
                    for (int comp = 0; comp < f.meta.ndim; ++comp)
                        J[comp][a] += w * f.at(x, y, z, comp);
                }
    }
    return J;
}

ScalarImage warp_image(const ScalarImage& img, const DisplacementField& phi) {
    check_same_grid(img.meta, phi.meta, "warp_image");
    ScalarImage out = make_image(img.meta);
    const GridMeta& m = img.meta;
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                    static_cast<double>(z)};
            for (int c = 0; c < m.ndim; ++c)
                p[c] += phi.data[static_cast<size_t>(i * m.ndim + c)];
            out.data[static_cast<size_t>(i)] = sample_linear(img, p);
        }
    });
    return out;
}

LabelImage warp_labels(const LabelImage& labels, const DisplacementField& phi) {
    check_same_grid(labels.meta, phi.meta, "warp_labels");
    LabelImage out = make_labels(labels.meta);
    const GridMeta& m = labels.meta;
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            int64_t q[3] = {x, y, z};
            for (int c = 0; c < m.ndim; ++c) {
                const double p = static_cast<double>(q[c]) +
                                 phi.data[static_cast<size_t>(i * m.ndim + c)];
                q[c] = std::clamp<int64_t>(std::llround(p), 0, m.dims[c] - 1);
            }
            out.data[static_cast<size_t>(i)] = labels.at(q[0], q[1], q[2]);
        }
    });
    return out;
}

DisplacementField compose(const DisplacementField& phi, const DisplacementField& psi) {
    check_same_grid(phi.meta, psi.meta, "compose");
    DisplacementField out = make_field(phi.meta);
    const GridMeta& m = phi.meta;
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                    static_cast<double>(z)};
            for (int c = 0; c < m.ndim; ++c)
                p[c] += psi.data[static_cast<size_t>(i * m.ndim + c)];
            const std::array<double, 3> up = sample_field(phi, p);
            for (int c = 0; c < m.ndim; ++c)
                out.data[static_cast<size_t>(i * m.ndim + c)] =
                    psi.data[static_cast<size_t>(i * m.ndim + c)] + up[c];
        }
    });
    return out;
}

JacobianImage jacobian(const DisplacementField& phi) {
    validate_meta(phi.meta);
    const GridMeta& m = phi.meta;
    JacobianImage J;
    J.meta = m;
    J.data.assign(static_cast<size_t>(m.voxel_count() * m.ndim * m.ndim), 0.0);
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            const int64_t pos[3] = {x, y, z};
            for (int a = 0; a < m.ndim; ++a) {
                // central differences, one-sided at the boundary
                int64_t lo_n[3] = {x, y, z}, hi_n[3] = {x, y, z};
                double denom;
                if (pos[a] == 0) {
                    hi_n[a] = 1;
                    denom = 1.0;
                } else if (pos[a] == m.dims[a] - 1) {
                    lo_n[a] = m.dims[a] - 2;
                    denom = 1.0;
                } else {
                    lo_n[a] = pos[a] - 1;
                    hi_n[a] = pos[a] + 1;
                    denom = 2.0;
                }
                for (int comp = 0; comp < m.ndim; ++comp) {
                    const double d = (phi.at(hi_n[0], hi_n[1], hi_n[2], comp) -
                                      phi.at(lo_n[0], lo_n[1], lo_n[2], comp)) / denom;
                    J.data[static_cast<size_t>((i * m.ndim + comp) * m.ndim + a)] =
                        d + (comp == a ? 1.0 : 0.0);
                }
            }
        }
    });
    return J;
}

ScalarImage jacobian_det(const DisplacementField& phi) {
    const JacobianImage J = jacobian(phi);
    const GridMeta& m = phi.meta;
    ScalarImage out = make_image(m);
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const double* j = &J.data[static_cast<size_t>(i * m.ndim * m.ndim)];
            double det;
            if (m.ndim == 2) {
                det = j[0] * j[3] - j[1] * j[2];
            } else {
                det = j[0] * (j[4] * j[8] - j[5] * j[7]) -
                      j[1] * (j[3] * j[8] - j[5] * j[6]) +
                      j[2] * (j[3] * j[7] - j[4] * j[6]);
            }
            out.data[static_cast<size_t>(i)] = det;
        }
    });
    return out;
}

ScalarImage gaussian_smooth(const ScalarImage& img, const std::array<double, 3>& sigma) {
    validate_meta(img.meta);
    for (int a = 0; a < img.meta.ndim; ++a)
        if (sigma[a] < 0.0)
            throw std::invalid_argument("gaussian_smooth: sigma must be >= 0");
    ScalarImage out = img;
    for (int a = 0; a < img.meta.ndim; ++a)
        smooth_axis(out.data, out.meta, 1, a, sigma[a]);
    return out;
}

VectorField gaussian_smooth_field(const VectorField& f, const std::array<double, 3>& sigma) {
    validate_meta(f.meta);
    for (int a = 0; a < f.meta.ndim; ++a)
        if (sigma[a] < 0.0)
            throw std::invalid_argument("gaussian_smooth_field: sigma must be >= 0");
    VectorField out = f;
    for (int a = 0; a < f.meta.ndim; ++a)
        smooth_axis(out.data, out.meta, f.meta.ndim, a, sigma[a]);
    return out;
}

ScalarImage gaussian_smooth(const ScalarImage& img, double sigma) {
    return gaussian_smooth(img, {sigma, sigma, sigma});
}

VectorField gaussian_smooth_field(const VectorField& f, double sigma) {
    return gaussian_smooth_field(f, {sigma, sigma, sigma});
}

VectorField resample_field_linear(const VectorField& f, const GridMeta& new_meta) {
    validate_meta(f.meta);
    validate_meta(new_meta);
    if (new_meta.ndim != f.meta.ndim)
        throw std::invalid_argument("resample_field_linear: dimensionality mismatch");
    if (new_meta.dims == f.meta.dims)
        return f;
    VectorField out = make_field(new_meta);
    const GridMeta& m = new_meta;
    std::array<double, 3> step{0.0, 0.0, 0.0};
    for (int a = 0; a < m.ndim; ++a)
        step[a] = (m.dims[a] > 1)
            ? static_cast<double>(f.meta.dims[a] - 1) / (m.dims[a] - 1) : 0.0;
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            const std::array<double, 3> p{x * step[0], y * step[1], z * step[2]};
            const std::array<double, 3> v = sample_field(f, p);
            for (int c = 0; c < m.ndim; ++c)
                out.data[static_cast<size_t>(i * m.ndim + c)] = v[c];
        }
    });
    return out;
}

DisplacementField upsample_field(const DisplacementField& phi, const GridMeta& new_meta,
                                 UpsampleMethod method) {
    validate_meta(phi.meta);
    validate_meta(new_meta);
    if (new_meta.ndim != phi.meta.ndim)
        throw std::invalid_argument("upsample_field: dimensionality mismatch");
    for (int a = 0; a < phi.meta.ndim; ++a)
        if (new_meta.dims[a] < phi.meta.dims[a])
            throw std::invalid_argument("upsample_field: shrinking not allowed");
    if (new_meta.dims == phi.meta.dims)
        return phi;

    DisplacementField out = make_field(new_meta);
    const GridMeta& m = new_meta;
    std::array<double, 3> step{0.0, 0.0, 0.0}, rescale{1.0, 1.0, 1.0};
    for (int a = 0; a < m.ndim; ++a) {
        step[a] = static_cast<double>(phi.meta.dims[a] - 1) / (m.dims[a] - 1);
        rescale[a] = static_cast<double>(m.dims[a] - 1) / (phi.meta.dims[a] - 1);
    }
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % m.dims[0];
            const int64_t y = (i / m.dims[0]) % m.dims[1];
            const int64_t z = i / (m.dims[0] * m.dims[1]);
            const std::array<double, 3> p{x * step[0], y * step[1], z * step[2]};
            if (method == UpsampleMethod::linear) {
                const std::array<double, 3> v = sample_field(phi, p);
                for (int c = 0; c < m.ndim; ++c)
                    out.data[static_cast<size_t>(i * m.ndim + c)] = v[c] * rescale[c];
            } else {
                for (int c = 0; c < m.ndim; ++c)
                    out.data[static_cast<size_t>(i * m.ndim + c)] =
                        sample_cubic_component(phi, c, p) * rescale[c];
            }
        }
    });
    return out;
}

DisplacementField resample_displacement(const DisplacementField& phi, const GridMeta& new_meta) {
    validate_meta(phi.meta);
    validate_meta(new_meta);
    if (new_meta.ndim != phi.meta.ndim)
        throw std::invalid_argument("resample_displacement: dimensionality mismatch");
    if (new_meta.dims == phi.meta.dims)
        return phi;
    DisplacementField out = resample_field_linear(phi, new_meta);
    const GridMeta& m = new_meta;
    std::array<double, 3> rescale{1.0, 1.0, 1.0};
    for (int a = 0; a < m.ndim; ++a)
        rescale[a] = static_cast<double>(m.dims[a] - 1) / (phi.meta.dims[a] - 1);
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            for (int c = 0; c < m.ndim; ++c)
                out.data[static_cast<size_t>(i * m.ndim + c)] *= rescale[c];
    });
    return out;
}

}  // namespace difform
