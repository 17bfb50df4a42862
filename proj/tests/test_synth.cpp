#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "difform/analysis.hpp"
#include "difform/core.hpp"
#include "difform/interp.hpp"
#include "difform/synth.hpp"

using namespace difform;

TEST_CASE("synthetic warp is nontrivial, bounded and fold-free") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const GridMeta m = make_meta_3d(32, 32, 32);
        const DisplacementField u = synth_warp(m, seed);
        double maxmag = 0.0;
        for (double v : u.data)
            maxmag = std::max(maxmag, std::abs(v));
        CHECK(maxmag > 0.5);  // a warp worth recovering

        const ScalarImage det = jacobian_det(u);
        double lo = det.data[0], hi = det.data[0];
        for (double v : det.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.5);
        CHECK(hi <= 2.0);
        CHECK(singularity_fraction(u) == 0.0);
    }
}

TEST_CASE("synthetic warp vanishes on the domain boundary") {
    const GridMeta m = make_meta_3d(32, 32, 32);
    const DisplacementField u = synth_warp(m, 7);
    for (int64_t z = 0; z < 32; ++z)
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x) {
                if (x > 0 && x < 31 && y > 0 && y < 31 && z > 0 && z < 31)
                    continue;
                for (int c = 0; c < 3; ++c)
                    CHECK(u.data[static_cast<size_t>(
                              voxel_index(m, x, y, z) * 3 + c)] == 0.0);
            }
}

TEST_CASE("synthetic warp is deterministic in the seed") {
    const GridMeta m = make_meta_3d(16, 16, 16);
    const DisplacementField a = synth_warp(m, 11);
    const DisplacementField b = synth_warp(m, 11);
    const DisplacementField c = synth_warp(m, 12);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
}

TEST_CASE("phantom is textured and normalized to the unit interval") {
    const GridMeta m = make_meta_3d(24, 24, 24);
    const ScalarImage p = synth_phantom(m, 5);
    double lo = p.data[0], hi = p.data[0];
    for (double v : p.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-15));

    double mean = 0.0;
    for (double v : p.data)
        mean += v;
    mean /= static_cast<double>(p.data.size());
    double var = 0.0;
    for (double v : p.data)
        var += (v - mean) * (v - mean);
    var /= static_cast<double>(p.data.size());
    CHECK(var > 1e-3);  // smoothing must not flatten the noise away

    const ScalarImage q = synth_phantom(m, 5);
    CHECK(p.data == q.data);
}

TEST_CASE("landmark pairs correspond through the truth warp") {
    GridMeta m = make_meta_3d(32, 32, 32, 1.5, 1.5, 1.5);
    const DisplacementField truth = synth_warp(m, 3);
    LandmarkSet fpts, mpts;
    synth_landmarks(m, truth, 12, 9, fpts, mpts);
    REQUIRE(fpts.size() == 12);
    REQUIRE(mpts.size() == 12);

    // pushing the fixed points through the truth field lands on the moving
    // points: the reported error of the generating warp is zero
    const LandmarkErrors err = landmark_error(fpts, mpts, truth, m, m);
    CHECK(err.max < 1e-9);

    for (size_t i = 0; i < fpts.size(); ++i) {
        CHECK(fpts[i].id == mpts[i].id);
        for (int a = 0; a < 3; ++a) {
            const double vox = fpts[i].point_mm[static_cast<size_t>(a)] / 1.5;
            CHECK(vox >= 2.0);
            CHECK(vox <= 29.0);
        }
    }
}
