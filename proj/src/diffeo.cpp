#include "difform/diffeo.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "difform/parallel.hpp"

namespace difform {

VectorField eulerian_direction(const VectorField& grad, const DisplacementField& phi,
                               bool use_jac) {
    if (!grad.meta.same_grid(phi.meta))
        throw std::invalid_argument("eulerian_direction: grid mismatch");
    const GridMeta& m = grad.meta;
    VectorField v = make_field(m);
    if (!use_jac) {
        const int64_t n = static_cast<int64_t>(grad.data.size());
        parallel_for(n, [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i)
                v.data[static_cast<size_t>(i)] = -grad.data[static_cast<size_t>(i)];
        });
        return v;
    }
    const JacobianImage J = jacobian(phi);
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const double* j = &J.data[static_cast<size_t>(i * m.ndim * m.ndim)];
            const double* g = &grad.data[static_cast<size_t>(i * m.ndim)];
            double* out = &v.data[static_cast<size_t>(i * m.ndim)];
            for (int a = 0; a < m.ndim; ++a) {
                double acc = 0.0;
                for (int comp = 0; comp < m.ndim; ++comp)
                    acc += j[comp * m.ndim + a] * g[comp];  // J^T g
                out[a] = -acc;
            }
        }
    });
    return v;
}

DisplacementField apply_update(const DisplacementField& phi, const VectorField& v,
                               double eta, double sigma_warp, double cap) {
    if (!phi.meta.same_grid(v.meta))
        throw std::invalid_argument("apply_update: grid mismatch");
    const GridMeta& m = phi.meta;
    DisplacementField step = make_field(m);
    const int64_t n = static_cast<int64_t>(v.data.size());
    std::atomic<bool> bad{false};
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const double s = eta * v.data[static_cast<size_t>(i)];
            if (!std::isfinite(s))
                bad.store(true, std::memory_order_relaxed);
            step.data[static_cast<size_t>(i)] = std::clamp(s, -cap, cap);
        }
    });
    if (bad.load())
        throw std::runtime_error("apply_update: non-finite step");
    DisplacementField out = compose(phi, step);
    if (sigma_warp > 0.0)
        out = gaussian_smooth_field(out, sigma_warp);
    return out;
}

DisplacementField exp_map(const VelocityField& v, int M) {
    if (M < 0)
        throw std::invalid_argument("exp_map: M must be >= 0");
    validate_meta(v.meta);
    DisplacementField u = v;
    const double scale = std::ldexp(1.0, -M);  // 1/2^M
    for (double& d : u.data)
        d *= scale;
    for (int k = 0; k < M; ++k)
        u = compose(u, u);
    return u;
}

VectorField svf_pullback(const VelocityField& v, const VectorField& grad_phi, int M) {
    if (!v.meta.same_grid(grad_phi.meta))
        throw std::invalid_argument("svf_pullback: grid mismatch");
    if (M < 0)
        throw std::invalid_argument("svf_pullback: M must be >= 0");
    const GridMeta& m = v.meta;
    const double scale = std::ldexp(1.0, -M);

    // forward pass: keep every intermediate level u_k
    std::vector<DisplacementField> levels;
    levels.reserve(static_cast<size_t>(M) + 1);
    DisplacementField u = v;
    for (double& d : u.data)
        d *= scale;
    levels.push_back(u);
    for (int k = 0; k < M; ++k) {
        u = compose(u, u);
        levels.push_back(u);
    }

    // reverse pass: the squaring u' = u + interp(u)(x+u(x)) sends a cotangent
    // w through (a) the direct term, (b) the Jacobian of the interpolant at
    // the sample point, and (c) a scatter of the lerp weights onto the nodes
    // the sample read. The scatter runs serially for bit-stable accumulation.
    VectorField w = grad_phi;
    for (int k = M - 1; k >= 0; --k) {
        const DisplacementField& uk = levels[static_cast<size_t>(k)];
        VectorField wn = w;
        // terms (a)+(b), voxel-parallel
        std::vector<std::array<double, 3>> sample_pts(
            static_cast<size_t>(m.voxel_count()));
        parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) {
                const int64_t x = i % m.dims[0];
                const int64_t y = (i / m.dims[0]) % m.dims[1];
                const int64_t z = i / (m.dims[0] * m.dims[1]);
                std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                        static_cast<double>(z)};
                for (int c = 0; c < m.ndim; ++c)
                    p[c] += uk.data[static_cast<size_t>(i * m.ndim + c)];
                sample_pts[static_cast<size_t>(i)] = p;
                const auto J = sample_field_jacobian(uk, p);
                const double* wi = &w.data[static_cast<size_t>(i * m.ndim)];
                double* wo = &wn.data[static_cast<size_t>(i * m.ndim)];
                for (int a = 0; a < m.ndim; ++a) {
                    double acc = 0.0;
                    for (int comp = 0; comp < m.ndim; ++comp)
                        acc += J[comp][a] * wi[comp];
                    wo[a] += acc;
                }
            }
        });
        // term (c): serial scatter in voxel order
        for (int64_t i = 0; i < m.voxel_count(); ++i) {
            const std::array<double, 3>& p = sample_pts[static_cast<size_t>(i)];
            // same cell walk as sample_field
            int64_t i0[3] = {0, 0, 0};
            double f[3] = {0.0, 0.0, 0.0};
            for (int a = 0; a < 3; ++a) {
                if (a >= m.ndim || m.dims[a] == 1)
                    continue;
                double pc = std::clamp(p[a], 0.0, static_cast<double>(m.dims[a] - 1));
                i0[a] = std::clamp<int64_t>(static_cast<int64_t>(std::floor(pc)), 0,
                                            m.dims[a] - 2);
                f[a] = pc - static_cast<double>(i0[a]);
            }
            const int nz = (m.ndim == 3) ? 2 : 1;
            const double* wi = &w.data[static_cast<size_t>(i * m.ndim)];
            for (int cz = 0; cz < nz; ++cz)
                for (int cy = 0; cy < 2; ++cy)
                    for (int cx = 0; cx < 2; ++cx) {
                        const double wt = (cx ? f[0] : 1.0 - f[0]) *
                                          (cy ? f[1] : 1.0 - f[1]) *
                                          ((nz == 2) ? (cz ? f[2] : 1.0 - f[2]) : 1.0);
                        if (wt == 0.0)
                            continue;
                        const int64_t idx =
                            voxel_index(m, i0[0] + cx, i0[1] + cy,
                                        (nz == 2) ? i0[2] + cz : 0);
                        for (int c = 0; c < m.ndim; ++c)
                            wn.data[static_cast<size_t>(idx * m.ndim + c)] += wt * wi[c];
                    }
        }
        w = std::move(wn);
    }
    for (double& d : w.data)
        d *= scale;
    return w;
}

}  // namespace difform
