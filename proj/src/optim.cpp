#include "difform/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "difform/interp.hpp"
#include "difform/parallel.hpp"

namespace difform {

AdaptiveState make_adaptive_state(const GridMeta& meta, double beta1, double beta2,
                                  double eps) {
    AdaptiveState s;
    s.m = make_field(meta);
    s.nu = make_field(meta);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

VectorField adam_step(AdaptiveState& state, const VectorField& v) {
    if (!state.m.meta.same_grid(v.meta))
        throw std::invalid_argument("adam_step: state/input grid mismatch");
    state.t += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    VectorField dir = make_field(v.meta);
    const int64_t n = static_cast<int64_t>(v.data.size());
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const size_t s = static_cast<size_t>(i);
            state.m.data[s] = b1 * state.m.data[s] + (1.0 - b1) * v.data[s];
            state.nu.data[s] = b2 * state.nu.data[s] + (1.0 - b2) * v.data[s] * v.data[s];
            const double mhat = state.m.data[s] / corr1;
            const double nuhat = state.nu.data[s] / corr2;
            dir.data[s] = mhat / (std::sqrt(nuhat) + state.eps);
        }
    });
    return dir;
}

VectorField sgd_step(VectorField& mu, const VectorField& v, double momentum) {
    if (momentum == 0.0)
        return v;
    if (!mu.meta.same_grid(v.meta))
        throw std::invalid_argument("sgd_step: momentum/input grid mismatch");
    const int64_t n = static_cast<int64_t>(v.data.size());
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const size_t s = static_cast<size_t>(i);
            mu.data[s] = momentum * mu.data[s] + v.data[s];
        }
    });
    return mu;
}

AdaptiveState upsample_state(const AdaptiveState& state, const GridMeta& new_meta) {
    validate_meta(new_meta);
    for (int a = 0; a < new_meta.ndim; ++a)
        if (new_meta.dims[a] < state.m.meta.dims[a])
            throw std::invalid_argument("upsample_state: shrinking not allowed");
    AdaptiveState out;
    out.t = state.t;
    out.beta1 = state.beta1;
    out.beta2 = state.beta2;
    out.eps = state.eps;
    // m rescales like a displacement; nu by the squared per-axis factor
    out.m = upsample_field(state.m, new_meta, UpsampleMethod::linear);
    out.nu = resample_field_linear(state.nu, new_meta);
    std::array<double, 3> sq{1.0, 1.0, 1.0};
    for (int a = 0; a < new_meta.ndim; ++a) {
        const double r = static_cast<double>(new_meta.dims[a] - 1) /
                         (state.nu.meta.dims[a] - 1);
        sq[a] = r * r;
    }
    const GridMeta& m = new_meta;
    parallel_for(m.voxel_count(), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            for (int c = 0; c < m.ndim; ++c)
                out.nu.data[static_cast<size_t>(i * m.ndim + c)] *= sq[c];
    });
    return out;
}

}  // namespace difform
