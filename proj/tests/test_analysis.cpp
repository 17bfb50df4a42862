#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "difform/analysis.hpp"
#include "difform/core.hpp"
#include "difform/interp.hpp"
#include "support.hpp"

using namespace difform;
using testsupport::smooth_image;

namespace {

std::array<double, 9> sym3(double a00, double a01, double a02, double a11, double a12,
                           double a22) {
    return {a00, a01, a02, a01, a11, a12, a02, a12, a22};
}

// quadratic image I(p) = a + b.p + p'Qp/2 sampled on voxel coordinates
ScalarImage quad_image(const GridMeta& m, double a, const std::array<double, 3>& b,
                       const std::array<double, 9>& Q,
                       const std::array<double, 3>& center) {
    ScalarImage img = make_image(m);
    for (int64_t z = 0; z < m.dims[2]; ++z)
        for (int64_t y = 0; y < m.dims[1]; ++y)
            for (int64_t x = 0; x < m.dims[0]; ++x) {
                const double p[3] = {static_cast<double>(x) - center[0],
                                     static_cast<double>(y) - center[1],
                                     static_cast<double>(z) - center[2]};
                double v = a;
                for (int i = 0; i < 3; ++i) {
                    v += b[static_cast<size_t>(i)] * p[i];
                    for (int j = 0; j < 3; ++j)
                        v += 0.5 * Q[static_cast<size_t>(i * 3 + j)] * p[i] * p[j];
                }
                img.data[static_cast<size_t>(voxel_index(m, x, y, z))] = v;
            }
    return img;
}

}  // namespace

TEST_CASE("symmetric eigenvalues: diagonal and 2x2 closed forms") {
    const auto l3 = symmetric_eigenvalues(sym3(3, 0, 0, -1, 0, 2), 3);
    CHECK(l3[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(l3[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(l3[2] == doctest::Approx(3.0).epsilon(1e-12));

    // [[2,1],[1,2]] has eigenvalues 1 and 3
    std::array<double, 9> H2{2, 1, 1, 2, 0, 0, 0, 0, 0};
    const auto l2 = symmetric_eigenvalues(H2, 2);
    CHECK(l2[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l2[1] == doctest::Approx(3.0).epsilon(1e-12));

    const auto iso = symmetric_eigenvalues(sym3(5, 0, 0, 5, 0, 5), 3);
    for (int i = 0; i < 3; ++i)
        CHECK(iso[static_cast<size_t>(i)] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("symmetric eigenvalues satisfy the characteristic invariants") {
    std::mt19937_64 eng(61);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 40; ++trial) {
        const auto H = sym3(dist(eng), dist(eng), dist(eng), dist(eng), dist(eng),
                            dist(eng));
        const auto l = symmetric_eigenvalues(H, 3);
        CHECK(l[0] <= l[1]);
        CHECK(l[1] <= l[2]);
        const double tr = H[0] + H[4] + H[8];
        const double tr2 = H[0] * H[0] + H[4] * H[4] + H[8] * H[8] +
                           2.0 * (H[1] * H[1] + H[2] * H[2] + H[5] * H[5]);
        const double det = H[0] * (H[4] * H[8] - H[5] * H[5]) -
                           H[1] * (H[1] * H[8] - H[5] * H[2]) +
                           H[2] * (H[1] * H[5] - H[4] * H[2]);
        CHECK(l[0] + l[1] + l[2] == doctest::Approx(tr).epsilon(1e-9));
        CHECK(l[0] * l[1] + l[0] * l[2] + l[1] * l[2] ==
              doctest::Approx(0.5 * (tr * tr - tr2)).scale(1.0).epsilon(1e-8));
        CHECK(l[0] * l[1] * l[2] == doctest::Approx(det).scale(1.0).epsilon(1e-8));
    }
}

TEST_CASE("per-voxel hessian matches the quadratic closed form") {
    const GridMeta m = make_meta_3d(9, 9, 9);
    const std::array<double, 3> b{0.3, -0.2, 0.1};
    const auto Q = sym3(0.5, 0.1, 0.0, 0.4, -0.1, 0.3);
    const ScalarImage moving = quad_image(m, 0.7, b, Q, {0, 0, 0});
    ScalarImage fixed = moving;
    for (double& v : fixed.data)
        v -= 1.0;  // residual is exactly one everywhere

    for (auto [x, y, z] : {std::array<int64_t, 3>{2, 3, 4},
                           std::array<int64_t, 3>{4, 4, 4},
                           std::array<int64_t, 3>{6, 2, 5}}) {
        const auto H = conditioning_hessian(fixed, moving, x, y, z);
        const double p[3] = {static_cast<double>(x), static_cast<double>(y),
                             static_cast<double>(z)};
        double g[3];
        for (int i = 0; i < 3; ++i) {
            g[i] = b[static_cast<size_t>(i)];
            for (int j = 0; j < 3; ++j)
                g[i] += Q[static_cast<size_t>(i * 3 + j)] * p[j];
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double want =
                    2.0 * (g[i] * g[j] + Q[static_cast<size_t>(i * 3 + j)]);
                CHECK(H[static_cast<size_t>(i * 3 + j)] ==
                      doctest::Approx(want).scale(1.0).epsilon(1e-9));
            }
    }
    CHECK_THROWS_AS(conditioning_hessian(fixed, moving, 0, 4, 4), std::invalid_argument);
}

TEST_CASE("conditioning report hits an engineered condition number of ten") {
    // centered quadratic with hessian diag(1, 0.1, 0.1); the gradient term
    // vanishes at the center voxel, so kappa there is exactly 10
    const GridMeta m = make_meta_3d(9, 9, 9);
    const auto Q = sym3(1.0, 0.0, 0.0, 0.1, 0.0, 0.1);
    const ScalarImage moving = quad_image(m, 0.0, {0, 0, 0}, Q, {4, 4, 4});
    ScalarImage fixed = moving;
    for (double& v : fixed.data)
        v -= 1.0;

    const ConditioningReport rep = conditioning_report(fixed, moving);
    REQUIRE(rep.levels.size() == 3);
    CHECK(rep.levels[0].factor == 1.0);
    CHECK(rep.levels[1].factor == 2.0);
    CHECK(rep.levels[2].factor == 4.0);

    const ConditioningLevel& lev = rep.levels[0];
    const int64_t c = voxel_index(m, 4, 4, 4);
    CHECK(lev.foreground[static_cast<size_t>(c)] == 1);
    CHECK(lev.kappa.data[static_cast<size_t>(c)] == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("conditioning report structural invariants on a textured pair") {
    const GridMeta m = make_meta_3d(32, 32, 32);
    const ScalarImage F = smooth_image(m, 71);
    const ScalarImage M = smooth_image(m, 72);
    const ConditioningReport rep = conditioning_report(F, M);
    REQUIRE(rep.levels.size() == 3);
    for (const ConditioningLevel& lev : rep.levels) {
        REQUIRE(lev.hist_edges.size() == 33);
        CHECK(lev.hist_edges.front() == doctest::Approx(1.0));
        CHECK(lev.hist_edges.back() == doctest::Approx(1e8));
        for (size_t i = 1; i < lev.hist_edges.size(); ++i)
            CHECK(lev.hist_edges[i] > lev.hist_edges[i - 1]);
        const int64_t binned =
            std::accumulate(lev.hist_counts.begin(), lev.hist_counts.end(), int64_t{0});
        int64_t defined = 0;
        for (double k : lev.kappa.data)
            if (k > 0.0)
                ++defined;
        CHECK(binned == defined);
        CHECK(defined + lev.excluded == lev.foreground_count);
        CHECK(lev.foreground_count > 0);
        // anisotropic local structure is the normal case for smooth texture
        CHECK(lev.fraction_above_10 > 0.0);
        CHECK(lev.fraction_above_10 <= 1.0);
    }
}

TEST_CASE("singularity fraction counts folded voxels exactly") {
    const GridMeta m = make_meta_2d(8, 8);
    CHECK(singularity_fraction(new_identity_field(m)) == 0.0);

    // u_x = -3 on the column x = 3: the central difference at x = 2 gives
    // det = 1 - 3/2 < 0 on that column and nowhere else
    DisplacementField u = make_field(m);
    for (int64_t y = 0; y < 8; ++y)
        u.data[static_cast<size_t>(voxel_index(m, 3, y, 0) * 2)] = -3.0;
    CHECK(singularity_fraction(u) == doctest::Approx(8.0 / 64.0).epsilon(1e-15));
}

TEST_CASE("overlap report on a hand-built three-region fixture") {
    const GridMeta m = make_meta_2d(6, 6);
    LabelImage fixed = make_labels(m);
    LabelImage warped = make_labels(m);
    for (int64_t i = 0; i < 8; ++i)
        fixed.data[static_cast<size_t>(i)] = 1;  // |T_1| = 8
    for (int64_t i = 0; i < 4; ++i)
        warped.data[static_cast<size_t>(i)] = 1;  // |S_1| = 4, all inside T_1
    for (int64_t i = 10; i < 15; ++i)
        fixed.data[static_cast<size_t>(i)] = 2;  // fixed-only region
    for (int64_t i = 20; i < 26; ++i)
        warped.data[static_cast<size_t>(i)] = 3;  // warped-only region

    const OverlapReport rep = overlap_report(warped, fixed);
    REQUIRE(rep.regions.size() == 3);

    const RegionOverlap& r1 = rep.regions[0];
    CHECK(r1.label == 1);
    CHECK(r1.to == doctest::Approx(0.5));
    CHECK(r1.mo == doctest::Approx(2.0 / 3.0));
    CHECK(r1.fn == doctest::Approx(0.5));
    CHECK(r1.has_fp);
    CHECK(r1.fp == doctest::Approx(0.0));
    CHECK(r1.vs == doctest::Approx(-2.0 / 3.0));

    const RegionOverlap& r2 = rep.regions[1];
    CHECK(r2.label == 2);
    CHECK(r2.has_to);
    CHECK(r2.to == doctest::Approx(0.0));
    CHECK(r2.fn == doctest::Approx(1.0));
    CHECK_FALSE(r2.has_fp);
    CHECK(r2.vs == doctest::Approx(-2.0));

    const RegionOverlap& r3 = rep.regions[2];
    CHECK(r3.label == 3);
    CHECK_FALSE(r3.has_to);
    CHECK(r3.has_fp);
    CHECK(r3.fp == doctest::Approx(1.0));
    CHECK(r3.vs == doctest::Approx(2.0));

    CHECK(rep.to_mean == doctest::Approx(0.25));
    CHECK(rep.fn_mean == doctest::Approx(0.75));
    CHECK(rep.fp_mean == doctest::Approx(0.5));
    CHECK(rep.mo_mean == doctest::Approx((2.0 / 3.0) / 3.0));
    CHECK(rep.vs_mean == doctest::Approx(-2.0 / 9.0));

    CHECK(rep.to_klein == doctest::Approx(4.0 / 13.0));
    CHECK(rep.fn_klein == doctest::Approx(9.0 / 13.0));
    CHECK(rep.fp_klein == doctest::Approx(0.6));
    CHECK(rep.mo_klein == doctest::Approx(8.0 / 23.0));
    CHECK(rep.vs_klein == doctest::Approx(-6.0 / 23.0));
}

TEST_CASE("klein pooling weighs regions by size") {
    const GridMeta m = make_meta_2d(16, 16);
    LabelImage fixed = make_labels(m);
    LabelImage warped = make_labels(m);
    for (int64_t i = 0; i < 100; ++i) {
        fixed.data[static_cast<size_t>(i)] = 1;
        warped.data[static_cast<size_t>(i)] = 1;  // big region, perfect overlap
    }
    for (int64_t i = 120; i < 124; ++i)
        fixed.data[static_cast<size_t>(i)] = 2;  // tiny region, fully missed

    const OverlapReport rep = overlap_report(warped, fixed);
    CHECK(rep.to_mean == doctest::Approx(0.5));
    CHECK(rep.to_klein == doctest::Approx(100.0 / 104.0));
}

TEST_CASE("landmark errors convert voxels to millimeters through the field") {
    GridMeta fm = make_meta_2d(8, 8, 2.0, 2.0);
    fm.origin = {10.0, 0.0, 0.0};
    GridMeta mm = make_meta_2d(8, 8, 1.0, 1.0);
    mm.origin = {0.0, 5.0, 0.0};

    DisplacementField phi = make_field(fm);
    for (int64_t i = 0; i < fm.voxel_count(); ++i)
        phi.data[static_cast<size_t>(i * 2)] = 2.0;  // constant +2 voxels in x

    LandmarkSet fpts, mpts;
    fpts.push_back({{14.0, 6.0, 0.0}, "a"});
    mpts.push_back({{4.0, 8.0, 0.0}, "a"});  // lands exactly on it
    fpts.push_back({{10.0, 0.0, 0.0}, "b"});
    mpts.push_back({{2.0, 1.0, 0.0}, "b"});  // off by 4 mm in y
    fpts.push_back({{12.0, 4.0, 0.0}, "c"});
    mpts.push_back({{3.0, 4.0, 0.0}, "c"});  // off by 3 mm in y

    const LandmarkErrors err = landmark_error(fpts, mpts, phi, fm, mm);
    REQUIRE(err.distances_mm.size() == 3);
    CHECK(err.distances_mm[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(err.distances_mm[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(err.distances_mm[2] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(err.mean == doctest::Approx(7.0 / 3.0).epsilon(1e-12));
    CHECK(err.max == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("landmark validation") {
    const GridMeta fm = make_meta_2d(6, 6);
    const DisplacementField phi = new_identity_field(fm);
    LandmarkSet one{{{1.0, 1.0, 0.0}, "p"}};
    CHECK_THROWS_AS(landmark_error(one, {}, phi, fm, fm), std::invalid_argument);
    CHECK_THROWS_AS(landmark_error(one, one, phi, make_meta_2d(6, 7), fm),
                    std::invalid_argument);
    const LandmarkErrors empty = landmark_error({}, {}, phi, fm, fm);
    CHECK(empty.distances_mm.empty());
    CHECK(empty.mean == 0.0);
    CHECK(empty.max == 0.0);
}
