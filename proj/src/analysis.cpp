#include "difform/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "difform/interp.hpp"
#include "difform/parallel.hpp"

namespace difform {

namespace {

constexpr double kLambdaFloor = 1e-12;
constexpr int kHistBins = 32;
constexpr double kHistLo = 1.0;     // kappa >= 1 always
constexpr double kHistHi = 1e8;

bool interior_voxel(const GridMeta& m, int64_t x, int64_t y, int64_t z) {
    if (x < 1 || x > m.dims[0] - 2 || y < 1 || y > m.dims[1] - 2)
        return false;
    if (m.ndim == 3 && (z < 1 || z > m.dims[2] - 2))
        return false;
    return true;
}

}  // namespace

std::array<double, 3> symmetric_eigenvalues(const std::array<double, 9>& H, int ndim) {
    if (ndim == 2) {
        const double a = H[0], b = H[1], c = H[3];
        const double mid = 0.5 * (a + c);
        const double r = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        return {mid - r, mid + r, 0.0};
    }
    // closed-form symmetric 3x3 (trigonometric method)
    const double a00 = H[0], a01 = H[1], a02 = H[2];
    const double a11 = H[4], a12 = H[5], a22 = H[8];
    const double p1 = a01 * a01 + a02 * a02 + a12 * a12;
    if (p1 == 0.0) {
        std::array<double, 3> l{a00, a11, a22};
        std::sort(l.begin(), l.end());
        return l;
    }
    const double q = (a00 + a11 + a22) / 3.0;
    const double p2 = (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) +
                      (a22 - q) * (a22 - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const double b00 = (a00 - q) / p, b01 = a01 / p, b02 = a02 / p;
    const double b11 = (a11 - q) / p, b12 = a12 / p, b22 = (a22 - q) / p;
    const double detB = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                        b02 * (b01 * b12 - b11 * b02);
    const double r = std::clamp(detB / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double l1 = q + 2.0 * p * std::cos(phi);
    const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double l2 = 3.0 * q - l1 - l3;
    return {l3, l2, l1};
}

std::array<double, 9> conditioning_hessian(const ScalarImage& fixed, const ScalarImage& moving,
                                           int64_t x, int64_t y, int64_t z) {
    const GridMeta& m = fixed.meta;
    if (!fixed.meta.same_grid(moving.meta))
        throw std::invalid_argument("conditioning_hessian: grid mismatch");
    if (!interior_voxel(m, x, y, z))
        throw std::invalid_argument("conditioning_hessian: central differences need an interior voxel");
    const int d = m.ndim;
    const int64_t e[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    double grad[3] = {0.0, 0.0, 0.0};
    double hess[3][3] = {{0.0}};
    for (int a = 0; a < d; ++a) {
        grad[a] = (moving.at(x + e[a][0], y + e[a][1], z + e[a][2]) -
                   moving.at(x - e[a][0], y - e[a][1], z - e[a][2])) / 2.0;
        hess[a][a] = moving.at(x + e[a][0], y + e[a][1], z + e[a][2]) -
                     2.0 * moving.at(x, y, z) +
                     moving.at(x - e[a][0], y - e[a][1], z - e[a][2]);
        for (int b = a + 1; b < d; ++b) {
            const double v =
                (moving.at(x + e[a][0] + e[b][0], y + e[a][1] + e[b][1], z + e[a][2] + e[b][2]) -
                 moving.at(x + e[a][0] - e[b][0], y + e[a][1] - e[b][1], z + e[a][2] - e[b][2]) -
                 moving.at(x - e[a][0] + e[b][0], y - e[a][1] + e[b][1], z - e[a][2] + e[b][2]) +
                 moving.at(x - e[a][0] - e[b][0], y - e[a][1] - e[b][1], z - e[a][2] - e[b][2])) /
                4.0;
            hess[a][b] = hess[b][a] = v;
        }
    }
    const double resid = moving.at(x, y, z) - fixed.at(x, y, z);
    std::array<double, 9> H{};
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            H[static_cast<size_t>(a * d + b)] = 2.0 * (grad[a] * grad[b] + resid * hess[a][b]);
    return H;
}

ConditioningReport conditioning_report(const ScalarImage& fixed, const ScalarImage& moving) {
    if (!fixed.meta.same_grid(moving.meta))
        throw std::invalid_argument("conditioning_report: grid mismatch");
    ConditioningReport rep;
    for (double factor : {1.0, 2.0, 4.0}) {
        const ScalarImage f = downsample_image(fixed, factor);
        const ScalarImage mv = downsample_image(moving, factor);
        const GridMeta& m = f.meta;
        ConditioningLevel lev;
        lev.factor = factor;
        lev.kappa = make_image(m);
        lev.foreground.assign(static_cast<size_t>(m.voxel_count()), 0);
        double maxabs = 0.0;
        for (double v : f.data)
            maxabs = std::max(maxabs, std::abs(v));
        const double fg_thresh = 0.01 * maxabs;

        lev.hist_edges.resize(kHistBins + 1);
        for (int i = 0; i <= kHistBins; ++i)
            lev.hist_edges[static_cast<size_t>(i)] =
                kHistLo * std::pow(kHistHi / kHistLo, static_cast<double>(i) / kHistBins);
        lev.hist_counts.assign(kHistBins, 0);

        int64_t defined = 0, above10 = 0;
        for (int64_t z = 0; z < m.dims[2]; ++z)
            for (int64_t y = 0; y < m.dims[1]; ++y)
                for (int64_t x = 0; x < m.dims[0]; ++x) {
                    if (!interior_voxel(m, x, y, z))
                        continue;
                    if (std::abs(f.at(x, y, z)) <= fg_thresh)
                        continue;
                    const int64_t i = voxel_index(m, x, y, z);
                    lev.foreground[static_cast<size_t>(i)] = 1;
                    ++lev.foreground_count;
                    const auto H = conditioning_hessian(f, mv, x, y, z);
                    const auto l = symmetric_eigenvalues(H, m.ndim);
                    double lo = std::abs(l[0]), hi = std::abs(l[0]);
                    for (int k = 1; k < m.ndim; ++k) {
                        lo = std::min(lo, std::abs(l[static_cast<size_t>(k)]));
                        hi = std::max(hi, std::abs(l[static_cast<size_t>(k)]));
                    }
                    if (lo < kLambdaFloor) {
                        ++lev.excluded;
                        continue;
                    }
                    const double kappa = hi / lo;
                    lev.kappa.data[static_cast<size_t>(i)] = kappa;
                    ++defined;
                    if (kappa > 10.0)
                        ++above10;
                    int bin = static_cast<int>(std::floor(
                        std::log(kappa / kHistLo) / std::log(kHistHi / kHistLo) * kHistBins));
                    bin = std::clamp(bin, 0, kHistBins - 1);
                    ++lev.hist_counts[static_cast<size_t>(bin)];
                }
        lev.fraction_above_10 =
            defined > 0 ? static_cast<double>(above10) / static_cast<double>(defined) : 0.0;
        rep.levels.push_back(std::move(lev));
    }
    return rep;
}

double singularity_fraction(const DisplacementField& phi) {
    const ScalarImage det = jacobian_det(phi);
    int64_t bad = 0;
    for (double v : det.data)
        if (v <= 0.0)
            ++bad;
    return static_cast<double>(bad) / static_cast<double>(det.data.size());
}

OverlapReport overlap_report(const LabelImage& warped, const LabelImage& fixed) {
    if (!warped.meta.same_grid(fixed.meta))
        throw std::invalid_argument("overlap_report: grid mismatch");
    std::map<int32_t, RegionOverlap> regions;
    const size_t n = warped.data.size();
    for (size_t i = 0; i < n; ++i) {
        const int32_t s = warped.data[i];
        const int32_t t = fixed.data[i];
        if (s > 0) {
            auto& r = regions[s];
            r.label = s;
            ++r.warped_count;
        }
        if (t > 0) {
            auto& r = regions[t];
            r.label = t;
            ++r.fixed_count;
        }
        if (s > 0 && s == t)
            ++regions[s].intersection;
    }

    OverlapReport rep;
    int64_t pool_s = 0, pool_t = 0, pool_i = 0, pool_fn = 0, pool_fp = 0;
    int to_n = 0, fp_n = 0, vs_n = 0;
    for (auto& [label, r] : regions) {
        const int64_t fn_count = r.fixed_count - r.intersection;   // |T \ S|
        const int64_t fp_count = r.warped_count - r.intersection;  // |S \ T|
        if (r.fixed_count > 0) {
            r.has_to = r.has_fn = true;
            r.to = static_cast<double>(r.intersection) / static_cast<double>(r.fixed_count);
            r.fn = static_cast<double>(fn_count) / static_cast<double>(r.fixed_count);
            rep.to_mean += r.to;
            rep.fn_mean += r.fn;
            ++to_n;
        }
        if (r.warped_count > 0) {
            r.has_fp = true;
            r.fp = static_cast<double>(fp_count) / static_cast<double>(r.warped_count);
            rep.fp_mean += r.fp;
            ++fp_n;
        }
        const int64_t denom = r.warped_count + r.fixed_count;
        r.mo = 2.0 * static_cast<double>(r.intersection) / static_cast<double>(denom);
        r.vs = 2.0 * static_cast<double>(r.warped_count - r.fixed_count) /
               static_cast<double>(denom);
        rep.mo_mean += r.mo;
        rep.vs_mean += r.vs;
        ++vs_n;
        pool_s += r.warped_count;
        pool_t += r.fixed_count;
        pool_i += r.intersection;
        pool_fn += fn_count;
        pool_fp += fp_count;
        rep.regions.push_back(r);
    }
    if (to_n > 0) {
        rep.to_mean /= to_n;
        rep.fn_mean /= to_n;
    }
    if (fp_n > 0)
        rep.fp_mean /= fp_n;
    if (vs_n > 0) {
        rep.mo_mean /= vs_n;
        rep.vs_mean /= vs_n;
    }
    if (pool_t > 0) {
        rep.to_klein = static_cast<double>(pool_i) / static_cast<double>(pool_t);
        rep.fn_klein = static_cast<double>(pool_fn) / static_cast<double>(pool_t);
    }
    if (pool_s > 0)
        rep.fp_klein = static_cast<double>(pool_fp) / static_cast<double>(pool_s);
    if (pool_s + pool_t > 0) {
        rep.mo_klein = 2.0 * static_cast<double>(pool_i) / static_cast<double>(pool_s + pool_t);
        rep.vs_klein = 2.0 * static_cast<double>(pool_s - pool_t) /
                       static_cast<double>(pool_s + pool_t);
    }
    return rep;
}

LandmarkErrors landmark_error(const LandmarkSet& fixed_pts, const LandmarkSet& moving_pts,
                              const DisplacementField& phi,
                              const GridMeta& fixed_meta, const GridMeta& moving_meta) {
    if (fixed_pts.size() != moving_pts.size())
        throw std::invalid_argument("landmark_error: landmark counts differ");
    if (!phi.meta.same_grid(fixed_meta))
        throw std::invalid_argument("landmark_error: field must live on the fixed grid");
    LandmarkErrors out;
    out.distances_mm.reserve(fixed_pts.size());
    for (size_t i = 0; i < fixed_pts.size(); ++i) {
        std::array<double, 3> vox{0.0, 0.0, 0.0};
        for (int a = 0; a < fixed_meta.ndim; ++a)
            vox[static_cast<size_t>(a)] =
                (fixed_pts[i].point_mm[static_cast<size_t>(a)] -
                 fixed_meta.origin[static_cast<size_t>(a)]) /
                fixed_meta.spacing[static_cast<size_t>(a)];
        const std::array<double, 3> u = sample_field(phi, vox);
        double d2 = 0.0;
        for (int a = 0; a < fixed_meta.ndim; ++a) {
            const double mapped_mm =
                (vox[static_cast<size_t>(a)] + u[static_cast<size_t>(a)]) *
                    moving_meta.spacing[static_cast<size_t>(a)] +
                moving_meta.origin[static_cast<size_t>(a)];
            const double diff = mapped_mm - moving_pts[i].point_mm[static_cast<size_t>(a)];
            d2 += diff * diff;
        }
        const double d = std::sqrt(d2);
        out.distances_mm.push_back(d);
        out.mean += d;
        out.max = std::max(out.max, d);
    }
    if (!out.distances_mm.empty())
        out.mean /= static_cast<double>(out.distances_mm.size());
    return out;
}

}  // namespace difform
