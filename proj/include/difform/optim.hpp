#pragma once

#include "difform/core.hpp"

namespace difform {

// Per-voxel Adam accumulators living in the tangent space at identity.
struct AdaptiveState {
    VectorField m;    // first moment
    VectorField nu;   // second moment, componentwise >= 0
    int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdaptiveState make_adaptive_state(const GridMeta& meta,
                                  double beta1 = 0.9, double beta2 = 0.999,
                                  double eps = 1e-8);

// One Adam update: advances (m, nu, t) and returns the bias-corrected
// direction m_hat / (sqrt(nu_hat) + eps).
VectorField adam_step(AdaptiveState& state, const VectorField& v);

// Classic momentum direction: mu <- momentum*mu + v, returns mu.
// momentum == 0 returns v unchanged and leaves mu untouched.
VectorField sgd_step(VectorField& mu, const VectorField& v, double momentum);

// Linear resample of the state onto a finer grid: m rescaled like
// displacements, nu by the squared per-axis factor, t preserved.
AdaptiveState upsample_state(const AdaptiveState& state, const GridMeta& new_meta);

}  // namespace difform
