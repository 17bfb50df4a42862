#pragma once

#include "difform/core.hpp"
#include "difform/interp.hpp"

namespace difform {

// Descent direction at identity. use_jac=false: v = -grad (Jacobian-free);
// use_jac=true: v(x) = -J(phi)(x)^T grad(x).
VectorField eulerian_direction(const VectorField& grad, const DisplacementField& phi,
                               bool use_jac);

// Retraction update: step = eta*v capped componentwise at +-cap voxels,
// phi' = compose(phi, id + step), then the total displacement is smoothed
// with sigma_warp (greedy-SyN convention).
DisplacementField apply_update(const DisplacementField& phi, const VectorField& v,
                               double eta, double sigma_warp, double cap = 0.5);

// Scaling and squaring: u = v/2^M followed by M self-compositions.
DisplacementField exp_map(const VelocityField& v, int M);

// Exact discrete adjoint of the exp_map recursion: pushes the cotangent
// grad_phi back through the M squarings (scatter of lerp weights for the
// outer factor, identity + Jacobian-transpose for the inner factor) and
// applies the 1/2^M base scaling. Scatter accumulation is serial, so results
// are bit-identical across thread counts.
VectorField svf_pullback(const VelocityField& v, const VectorField& grad_phi, int M);

}  // namespace difform
