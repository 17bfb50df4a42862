#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "difform/core.hpp"
#include "difform/optim.hpp"
#include "support.hpp"

using namespace difform;

namespace {

// scalar reference recurrence, coded independently of the library
struct ScalarAdam {
    double m = 0.0, nu = 0.0;
    int64_t t = 0;
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double step(double g) {
        t += 1;
        m = b1 * m + (1.0 - b1) * g;
        nu = b2 * nu + (1.0 - b2) * g * g;
        const double mh = m / (1.0 - std::pow(b1, static_cast<double>(t)));
        const double nh = nu / (1.0 - std::pow(b2, static_cast<double>(t)));
        return mh / (std::sqrt(nh) + eps);
    }
};

}  // namespace

TEST_CASE("adam matches the scalar recurrence componentwise") {
    const GridMeta meta = make_meta_2d(3, 2);
    AdaptiveState st = make_adaptive_state(meta);
    std::vector<ScalarAdam> ref(st.m.data.size());

    std::mt19937_64 eng(42);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int it = 0; it < 25; ++it) {
        VectorField g = make_field(meta);
        for (double& v : g.data)
            v = dist(eng);
        const VectorField dir = adam_step(st, g);
        CHECK(st.t == it + 1);
        for (size_t i = 0; i < g.data.size(); ++i) {
            const double want = ref[i].step(g.data[i]);
            CHECK(dir.data[i] == doctest::Approx(want).epsilon(1e-14));
            CHECK(st.nu.data[i] >= 0.0);
        }
    }
}

TEST_CASE("first adam step normalizes the gradient magnitude") {
    const GridMeta meta = make_meta_2d(2, 2);
    AdaptiveState st = make_adaptive_state(meta);
    VectorField g = make_field(meta);
    g.data[0] = 0.3;
    g.data[1] = -2.0;
    g.data[2] = 1e-3;
    const VectorField dir = adam_step(st, g);
    // m_hat = g, nu_hat = g^2 at t=1, so the direction is g / (|g| + eps)
    CHECK(dir.data[0] == doctest::Approx(0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(dir.data[1] == doctest::Approx(-2.0 / (2.0 + 1e-8)).epsilon(1e-12));
    CHECK(dir.data[2] == doctest::Approx(1e-3 / (1e-3 + 1e-8)).epsilon(1e-12));
    CHECK(dir.data[3] == 0.0);
}

TEST_CASE("adam rejects a grid mismatch") {
    AdaptiveState st = make_adaptive_state(make_meta_2d(3, 3));
    const VectorField g = make_field(make_meta_2d(3, 4));
    CHECK_THROWS_AS(adam_step(st, g), std::invalid_argument);
}

TEST_CASE("sgd momentum recurrence") {
    const GridMeta meta = make_meta_2d(2, 2);
    VectorField mu = make_field(meta);
    VectorField g = make_field(meta, 1.0);

    SUBCASE("momentum zero passes the gradient through") {
        const VectorField d = sgd_step(mu, g, 0.0);
        for (size_t i = 0; i < d.data.size(); ++i) {
            CHECK(d.data[i] == 1.0);
            CHECK(mu.data[i] == 0.0);
        }
    }
    SUBCASE("accumulates a geometric series") {
        double want = 0.0;
        for (int it = 0; it < 6; ++it) {
            const VectorField d = sgd_step(mu, g, 0.5);
            want = 0.5 * want + 1.0;
            for (double v : d.data)
                CHECK(v == doctest::Approx(want).epsilon(1e-15));
        }
    }
}

TEST_CASE("upsample_state rescales moments and keeps the step count") {
    const GridMeta coarse = make_meta_3d(5, 5, 5, 2.0, 2.0, 2.0);
    AdaptiveState st = make_adaptive_state(coarse, 0.8, 0.95, 1e-7);
    st.m = testsupport::smooth_field(coarse, 0.5, 3);
    st.nu = testsupport::smooth_field(coarse, 0.5, 4);
    for (double& v : st.nu.data)
        v = v * v;  // keep the second moment nonnegative
    st.t = 17;

    const GridMeta fine = make_meta_3d(9, 9, 9);
    const AdaptiveState up = upsample_state(st, fine);
    CHECK(up.t == 17);
    CHECK(up.beta1 == 0.8);
    CHECK(up.beta2 == 0.95);
    CHECK(up.eps == 1e-7);
    CHECK(up.m.meta.same_grid(fine));
    CHECK(up.nu.meta.same_grid(fine));
    for (double v : up.nu.data)
        CHECK(v >= 0.0);

    // fine node 2i coincides with coarse node i; the per-axis factor is 2
    for (int64_t z = 0; z < 5; ++z)
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t x = 0; x < 5; ++x) {
                const int64_t ci = voxel_index(coarse, x, y, z);
                const int64_t fi = voxel_index(fine, 2 * x, 2 * y, 2 * z);
                for (int c = 0; c < 3; ++c) {
                    const double mc = st.m.data[static_cast<size_t>(ci * 3 + c)];
                    const double nc = st.nu.data[static_cast<size_t>(ci * 3 + c)];
                    CHECK(up.m.data[static_cast<size_t>(fi * 3 + c)] ==
                          doctest::Approx(2.0 * mc).epsilon(1e-12));
                    CHECK(up.nu.data[static_cast<size_t>(fi * 3 + c)] ==
                          doctest::Approx(4.0 * nc).epsilon(1e-12));
                }
            }
}

TEST_CASE("upsample_state refuses to shrink") {
    AdaptiveState st = make_adaptive_state(make_meta_3d(6, 6, 6));
    CHECK_THROWS_AS(upsample_state(st, make_meta_3d(5, 6, 6)), std::invalid_argument);
}
