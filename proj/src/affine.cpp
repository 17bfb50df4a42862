#include "difform/affine.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "difform/interp.hpp"
#include "difform/parallel.hpp"
#include "difform/similarity.hpp"

namespace difform {

namespace {

LossEval eval_loss(const ScalarImage& fixed, const ScalarImage& moving,
                   const DisplacementField& phi, LossKind loss, int lncc_radius) {
    switch (loss) {
        case LossKind::ssd: return ssd_eval(fixed, moving, phi);
        case LossKind::lncc: return lncc_eval(fixed, moving, phi, lncc_radius);
        case LossKind::dice: return dice_soft_eval(fixed, moving, phi);
    }
    throw std::invalid_argument("unknown loss");
}

// displacement realizing T on the working grid: u(x) = S^-1 (A S x + t) - x
DisplacementField working_field(const AffineTransform& T, const GridMeta& meta,
                                const std::array<double, 3>& S) {
    DisplacementField u = make_field(meta);
    const int d = meta.ndim;
    parallel_for(meta.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const int64_t x = i % meta.dims[0];
            const int64_t y = (i / meta.dims[0]) % meta.dims[1];
            const int64_t z = i / (meta.dims[0] * meta.dims[1]);
            const double xw[3] = {static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(z)};
            for (int r = 0; r < d; ++r) {
                double acc = T.t[static_cast<size_t>(r)];
                for (int c = 0; c < d; ++c)
                    acc += T.A[static_cast<size_t>(r * d + c)] * S[static_cast<size_t>(c)] *
                           xw[c];
                u.data[static_cast<size_t>(i * d + r)] =
                    acc / S[static_cast<size_t>(r)] - xw[r];
            }
        }
    });
    return u;
}

}  // namespace

AffineTransform identity_affine(int ndim) {
    AffineTransform T;
    T.ndim = ndim;
    T.A.fill(0.0);
    for (int i = 0; i < ndim; ++i)
        T.A[static_cast<size_t>(i * ndim + i)] = 1.0;
    T.t = {0.0, 0.0, 0.0};
    return T;
}

double affine_det(const AffineTransform& T) {
    const auto& a = T.A;
    if (T.ndim == 2)
        return a[0] * a[3] - a[1] * a[2];
    return a[0] * (a[4] * a[8] - a[5] * a[7]) -
           a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
}

DisplacementField affine_to_field(const AffineTransform& T, const GridMeta& meta) {
    validate_meta(meta);
    if (T.ndim != meta.ndim)
        throw std::invalid_argument("affine_to_field: dimensionality mismatch");
    return working_field(T, meta, {1.0, 1.0, 1.0});
}

DisplacementField affine_to_working_field(const AffineTransform& T, const GridMeta& meta,
                                          const std::array<double, 3>& scale_to_full) {
    validate_meta(meta);
    if (T.ndim != meta.ndim)
        throw std::invalid_argument("affine_to_working_field: dimensionality mismatch");
    for (int a = 0; a < meta.ndim; ++a)
        if (!(scale_to_full[static_cast<size_t>(a)] > 0.0))
            throw std::invalid_argument("affine_to_working_field: scale must be positive");
    return working_field(T, meta, scale_to_full);
}

AffineGrad affine_param_gradient(const ScalarImage& fixed, const ScalarImage& moving,
                                 LossKind loss, const AffineTransform& T,
                                 const std::array<double, 3>& S, int lncc_radius) {
    const GridMeta& m = fixed.meta;
    const int d = m.ndim;
    const DisplacementField u = working_field(T, m, S);
    const LossEval ev = eval_loss(fixed, moving, u, loss, lncc_radius);

    AffineGrad g;
    g.value = ev.value;
    // dL/dA_rc = sum_x (g_w,r / S_r) * (S_c * x_c);  dL/dt_r = sum_x g_w,r / S_r
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            g.dA[static_cast<size_t>(r * d + c)] =
                parallel_sum(m.voxel_count(), [&](int64_t i) {
                    const int64_t xi = i % m.dims[0];
                    const int64_t yi = (i / m.dims[0]) % m.dims[1];
                    const int64_t zi = i / (m.dims[0] * m.dims[1]);
                    const double xw[3] = {static_cast<double>(xi), static_cast<double>(yi),
                                          static_cast<double>(zi)};
                    return ev.grad.data[static_cast<size_t>(i * d + r)] /
                           S[static_cast<size_t>(r)] * S[static_cast<size_t>(c)] * xw[c];
                });
        }
        g.dt[static_cast<size_t>(r)] = parallel_sum(m.voxel_count(), [&](int64_t i) {
            return ev.grad.data[static_cast<size_t>(i * d + r)] / S[static_cast<size_t>(r)];
        });
    }
    return g;
}

AffineResult affine_register(const ScalarImage& fixed, const ScalarImage& moving,
                             LossKind loss, const std::vector<double>& scales,
                             const std::vector<int>& iters, double eta, int lncc_radius) {
    if (!fixed.meta.same_grid(moving.meta))
        throw std::invalid_argument("affine_register: images must share a grid");
    if (scales.size() != iters.size() || scales.empty())
        throw std::invalid_argument("affine_register: bad schedule");
    const int d = fixed.meta.ndim;
    const int np = d * d + d;

    AffineTransform T = identity_affine(d);
    AffineResult best;
    best.transform = T;
    best.loss = std::numeric_limits<double>::infinity();

    // parameter-space Adam (shared across scales; parameters keep their frame)
    std::vector<double> am(static_cast<size_t>(np), 0.0), anu(static_cast<size_t>(np), 0.0);
    int64_t t = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int64_t total_iters = 0;

    for (size_t si = 0; si < scales.size(); ++si) {
        const ScalarImage f = downsample_image(fixed, scales[si]);
        const ScalarImage mv = downsample_image(moving, scales[si]);
        std::array<double, 3> S{1.0, 1.0, 1.0};
        for (int a = 0; a < d; ++a)
            S[static_cast<size_t>(a)] = static_cast<double>(fixed.meta.dims[a] - 1) /
                                        (f.meta.dims[a] - 1);
        for (int it = 0; it < iters[si]; ++it) {
            const AffineGrad g = affine_param_gradient(f, mv, loss, T, S, lncc_radius);
            ++total_iters;
            if (!std::isfinite(g.value)) {
                best.diverged = true;
                best.iterations = total_iters;
                return best;
            }
            if (g.value < best.loss) {
                best.loss = g.value;
                best.transform = T;
            }
            // flatten gradient, one Adam step on the parameter vector
            ++t;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (int p = 0; p < np; ++p) {
                const double gp = (p < d * d) ? g.dA[static_cast<size_t>(p)]
                                              : g.dt[static_cast<size_t>(p - d * d)];
                am[static_cast<size_t>(p)] = b1 * am[static_cast<size_t>(p)] + (1.0 - b1) * gp;
                anu[static_cast<size_t>(p)] =
                    b2 * anu[static_cast<size_t>(p)] + (1.0 - b2) * gp * gp;
                const double dir = (am[static_cast<size_t>(p)] / c1) /
                                   (std::sqrt(anu[static_cast<size_t>(p)] / c2) + eps);
                if (p < d * d)
                    T.A[static_cast<size_t>(p)] -= eta * dir;
                else
                    T.t[static_cast<size_t>(p - d * d)] -= eta * dir;
            }
        }
    }
    best.iterations = total_iters;
    if (std::abs(affine_det(best.transform)) < 1e-3)
        throw std::runtime_error("affine_register: transform collapsed (|det A| < 1e-3)");
    return best;
}

}  // namespace difform
