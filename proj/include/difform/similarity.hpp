#pragma once

#include "difform/core.hpp"

namespace difform {

// value plus the raw Gateaux gradient dU/dphi evaluated at phi, one d-vector
// per fixed-grid voxel.
struct LossEval {
    double value = 0.0;
    VectorField grad;
};

// value = mean squared residual; grad(x) = (M(phi(x)) - F(x)) * grad M(phi(x)) / N.
// The constant factor 2 is omitted from the gradient (absorbed by the step
// size); finite differences of the value therefore equal exactly 2x this grad.
LossEval ssd_eval(const ScalarImage& fixed, const ScalarImage& moving,
                  const DisplacementField& phi);

// Windowed normalized cross-correlation over (2r+1)^d box windows (clipped at
// the boundary): value = -mean over voxels of CC(x)^2. Windows whose fixed or
// warped variance falls below 1e-5 contribute zero to value and grad.
LossEval lncc_eval(const ScalarImage& fixed, const ScalarImage& moving,
                   const DisplacementField& phi, int window_radius);

// Soft Dice on [0,1] masks: value = 1 - 2*sum(F*W) / (sum F + sum W + 1e-7).
LossEval dice_soft_eval(const ScalarImage& fixed_mask, const ScalarImage& moving_mask,
                        const DisplacementField& phi);

}  // namespace difform
