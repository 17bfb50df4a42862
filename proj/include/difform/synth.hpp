#pragma once

#include "difform/core.hpp"

namespace difform {

// Smooth random ground-truth warp: per axis the sum of 3 random-amplitude
// Gaussian bumps (amplitude +-[3,6], sigma [10,14], centers in the middle
// third, all scaled with the grid), tapered to zero at the boundary, then
// shrunk by 0.9 steps until jacobian_det lands in [0.5, 2].
DisplacementField synth_warp(const GridMeta& meta, uint64_t seed);

// Textured phantom: uniform white noise smoothed with a sigma=1 Gaussian,
// min-max normalized to [0,1].
ScalarImage synth_phantom(const GridMeta& meta, uint64_t seed);

// Random interior voxel positions converted to fixed-space millimeters,
// paired with their images under the warp (moving-space millimeters).
void synth_landmarks(const GridMeta& meta, const DisplacementField& truth,
                     int count, uint64_t seed,
                     LandmarkSet& fixed_out, LandmarkSet& moving_out);

}  // namespace difform
