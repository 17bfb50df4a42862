#include "difform/synth.hpp"

#include <cmath>

#include "difform/interp.hpp"
#include "difform/rng.hpp"

namespace difform {

namespace {

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// smoothstep border window so the warp vanishes on the domain boundary
double taper(const GridMeta& m, int64_t x, int64_t y, int64_t z, double width) {
    const int64_t pos[3] = {x, y, z};
    double w = 1.0;
    for (int a = 0; a < m.ndim; ++a) {
        const double edge = std::min<double>(static_cast<double>(pos[a]),
                                             static_cast<double>(m.dims[a] - 1 - pos[a]));
        w *= smoothstep01(edge / width);
    }
    return w;
}

}  // namespace

DisplacementField synth_warp(const GridMeta& meta, uint64_t seed) {
    validate_meta(meta);
    Rng rng(seed);
    const GridMeta& m = meta;
    // bump parameters scale with the grid (reference values quoted at 32^3)
    const double ref = 32.0;
    double min_dim = static_cast<double>(m.dims[0]);
    for (int a = 1; a < m.ndim; ++a)
        min_dim = std::min(min_dim, static_cast<double>(m.dims[a]));
    const double gs = min_dim / ref;
    const double taper_width = std::max(2.0, 8.0 * gs);

    struct Bump {
        double amp, sigma;
        double center[3];
    };
    std::vector<std::vector<Bump>> bumps(static_cast<size_t>(m.ndim));
    for (int c = 0; c < m.ndim; ++c)
        for (int k = 0; k < 3; ++k) {
            Bump b{};
            b.amp = rng.uniform(3.0, 6.0) * gs * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            b.sigma = rng.uniform(10.0, 14.0) * gs;
            for (int a = 0; a < 3; ++a)
                b.center[a] = (a < m.ndim)
                    ? rng.uniform(0.35, 0.65) * static_cast<double>(m.dims[a]) : 0.0;
            bumps[static_cast<size_t>(c)].push_back(b);
        }

    DisplacementField u = make_field(m);
    for (int64_t z = 0; z < m.dims[2]; ++z)
        for (int64_t y = 0; y < m.dims[1]; ++y)
            for (int64_t x = 0; x < m.dims[0]; ++x) {
                const double w = taper(m, x, y, z, taper_width);
                const double pos[3] = {static_cast<double>(x), static_cast<double>(y),
                                       static_cast<double>(z)};
                for (int c = 0; c < m.ndim; ++c) {
                    double acc = 0.0;
                    for (const Bump& b : bumps[static_cast<size_t>(c)]) {
                        double d2 = 0.0;
                        for (int a = 0; a < m.ndim; ++a) {
                            const double d = pos[a] - b.center[a];
                            d2 += d * d;
                        }
                        acc += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
                    }
                    u.at(x, y, z, c) = acc * w;
                }
            }

    // shrink until the Jacobian determinant sits inside [0.5, 2]
    for (int tries = 0; tries < 200; ++tries) {
        const ScalarImage det = jacobian_det(u);
        double lo = det.data[0], hi = det.data[0];
        for (double v : det.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (lo >= 0.5 && hi <= 2.0)
            break;
        for (double& d : u.data)
            d *= 0.9;
    }
    return u;
}

ScalarImage synth_phantom(const GridMeta& meta, uint64_t seed) {
    validate_meta(meta);
    Rng rng(seed);
    ScalarImage img = make_image(meta);
    for (double& v : img.data)
        v = rng.uniform();
    img = gaussian_smooth(img, 1.0);
    double lo = img.data[0], hi = img.data[0];
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    for (double& v : img.data)
        v = (v - lo) / range;
    return img;
}

void synth_landmarks(const GridMeta& meta, const DisplacementField& truth,
                     int count, uint64_t seed,
                     LandmarkSet& fixed_out, LandmarkSet& moving_out) {
    validate_meta(meta);
    Rng rng(seed);
    fixed_out.clear();
    moving_out.clear();
    for (int i = 0; i < count; ++i) {
        std::array<double, 3> vox{0.0, 0.0, 0.0};
        for (int a = 0; a < meta.ndim; ++a)
            vox[static_cast<size_t>(a)] =
                rng.uniform(2.0, static_cast<double>(meta.dims[a] - 3));
        const std::array<double, 3> u = sample_field(truth, vox);
        Landmark f, mv;
        f.id = mv.id = "p" + std::to_string(i);
        for (int a = 0; a < meta.ndim; ++a) {
            f.point_mm[static_cast<size_t>(a)] =
                vox[static_cast<size_t>(a)] * meta.spacing[static_cast<size_t>(a)] +
                meta.origin[static_cast<size_t>(a)];
            mv.point_mm[static_cast<size_t>(a)] =
                (vox[static_cast<size_t>(a)] + u[static_cast<size_t>(a)]) *
                    meta.spacing[static_cast<size_t>(a)] +
                meta.origin[static_cast<size_t>(a)];
        }
        fixed_out.push_back(f);
        moving_out.push_back(mv);
    }
}

}  // namespace difform
