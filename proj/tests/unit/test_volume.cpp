#include <doctest.h>

#include "support.hpp"

using namespace mvseg;
using namespace testsupport;

namespace {

/// Volume holding f(world) at every voxel center.
template <class F>
ScalarVolume field(const VolumeGrid& g, F f)
{
    ScalarVolume v(g);
    for (std::size_t x = 0; x < v.values.size(); ++x) {
        v.values[x] = f(g.world(x));
    }
    return v;
}

}  // namespace

TEST_SUITE("volume")
{
    TEST_CASE("grid offsets are row-major with x fastest")
    {
        const VolumeGrid g({4, 3, 2}, Vec3(1.0, 2.0, 0.5), Vec3(-1.0, 0.0, 3.0));
        CHECK(g.offset(1, 0, 0) == 1);
        CHECK(g.offset(0, 1, 0) == 4);
        CHECK(g.offset(0, 0, 1) == 12);
        for (std::size_t v = 0; v < g.voxel_count(); ++v) {
            CHECK(g.offset(g.index_of(v)) == v);
        }
        const Vec3 w = g.world(Index3{2, 1, 1});
        CHECK(w.isApprox(Vec3(1.0, 2.0, 3.5)));
        CHECK(g.continuous_index(w).isApprox(Vec3(2.0, 1.0, 1.0)));
    }

    TEST_CASE("invalid grids and volumes are rejected")
    {
        CHECK_THROWS_AS(VolumeGrid({0, 1, 1}, Vec3::Ones()).validate(), GridError);
        CHECK_THROWS_AS(VolumeGrid({1, 1, 1}, Vec3(1.0, -1.0, 1.0)).validate(), GridError);
        const VolumeGrid g({2, 2, 2}, Vec3::Ones());
        CHECK_THROWS_AS(ScalarVolume(g, std::vector<double>(7)).validate(), GridError);
        ScalarVolume nan(g);
        nan.values[3] = std::nan("");
        CHECK_THROWS_AS(nan.validate(), GridError);
        LabelVolume neg(g);
        neg.labels[0] = -1;
        CHECK_THROWS_AS(neg.validate(), GridError);
    }

    TEST_CASE("trilinear sampling of constants and nodes")
    {
        const VolumeGrid g({5, 4, 3}, Vec3(1.0, 1.5, 2.0), Vec3(2.0, -1.0, 0.0));
        const ScalarVolume c(g, 7.0);
        CHECK(sample_trilinear(c, Vec3(3.3, 0.7, 1.9)) == doctest::Approx(7.0));
        ScalarVolume v(g);
        v.at(2, 1, 1) = 3.5;
        CHECK(sample_trilinear(v, g.world(Index3{2, 1, 1})) == 3.5);
    }

    TEST_CASE("midpoint of a two-value ramp")
    {
        const VolumeGrid g({2, 1, 1}, Vec3::Ones());
        const ScalarVolume v(g, std::vector<double>{0.0, 10.0});
        CHECK(sample_trilinear(v, Vec3(0.5, 0.0, 0.0)) == doctest::Approx(5.0));
    }

    TEST_CASE("points outside the hull return the background")
    {
        const VolumeGrid g({3, 3, 3}, Vec3::Ones());
        const ScalarVolume v(g, 5.0);
        CHECK(sample_trilinear(v, Vec3(-0.01, 1.0, 1.0), -2.0) == -2.0);
        CHECK(sample_trilinear(v, Vec3(1.0, 2.01, 1.0)) == 0.0);
        CHECK(sample_gradient(v, Vec3(5.0, 1.0, 1.0)).isZero());
    }

    TEST_CASE("trilinear weights match a hand evaluation at random points")
    {
        Rng rng(3);
        const VolumeGrid g({4, 4, 4}, Vec3(1.0, 2.0, 0.5), Vec3(1.0, 1.0, 1.0));
        ScalarVolume v(g);
        for (auto& x : v.values) {
            x = uniform(rng, -5.0, 5.0);
        }
        for (int t = 0; t < 200; ++t) {
            const Vec3 q(uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 3.0));
            const Vec3 p = g.origin + q.cwiseProduct(g.spacing);
            const Index3 b{static_cast<std::int64_t>(std::min(std::floor(q[0]), 2.0)),
                           static_cast<std::int64_t>(std::min(std::floor(q[1]), 2.0)),
                           static_cast<std::int64_t>(std::min(std::floor(q[2]), 2.0))};
            double expect = 0.0;
            for (int dz = 0; dz < 2; ++dz) {
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double fx = q[0] - static_cast<double>(b[0]);
                        const double fy = q[1] - static_cast<double>(b[1]);
                        const double fz = q[2] - static_cast<double>(b[2]);
                        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                        expect += w * v.at(b[0] + dx, b[1] + dy, b[2] + dz);
                    }
                }
            }
            CHECK(sample_trilinear(v, p) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    TEST_CASE("gradient of constant and linear fields")
    {
        const VolumeGrid g({6, 6, 6}, Vec3(1.0, 0.5, 2.0), Vec3(-3.0, 0.0, 1.0));
        CHECK(sample_gradient(ScalarVolume(g, 4.0), Vec3(-1.2, 1.1, 4.3)).isZero());
        const ScalarVolume xs = field(g, [](const Vec3& p) { return p[0]; });
        const ScalarVolume ys = field(g, [](const Vec3& p) { return 2.0 * p[1]; });
        for (const Vec3& p : {Vec3(-1.2, 1.1, 4.3), g.world(Index3{2, 3, 2}), Vec3(0.5, 1.75, 6.0)}) {
            CHECK((sample_gradient(xs, p) - Vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
            CHECK((sample_gradient(ys, p) - Vec3(0.0, 2.0, 0.0)).norm() < 1e-12);
        }
    }

    TEST_CASE("on-lattice gradient is the central difference")
    {
        Rng rng(8);
        const VolumeGrid g({5, 5, 5}, Vec3(1.0, 2.0, 0.5));
        ScalarVolume v(g);
        for (auto& x : v.values) {
            x = uniform(rng, 0.0, 1.0);
        }
        const Vec3 grad = sample_gradient(v, g.world(Index3{2, 2, 2}));
        CHECK(grad[0] == doctest::Approx((v.at(3, 2, 2) - v.at(1, 2, 2)) / 2.0));
        CHECK(grad[1] == doctest::Approx((v.at(2, 3, 2) - v.at(2, 1, 2)) / 4.0));
        CHECK(grad[2] == doctest::Approx((v.at(2, 2, 3) - v.at(2, 2, 1)) / 1.0));
    }

    TEST_CASE("in-cell gradient matches finite differences of the interpolant")
    {
        Rng rng(9);
        const VolumeGrid g({4, 4, 4}, Vec3(1.0, 1.0, 1.5));
        ScalarVolume v(g);
        for (auto& x : v.values) {
            x = uniform(rng, -1.0, 1.0);
        }
        for (int t = 0; t < 50; ++t) {
            const Vec3 p(uniform(rng, 0.2, 2.8), uniform(rng, 0.2, 2.8), uniform(rng, 0.3, 4.2));
            const ValueAndGradient vg = sample_with_gradient(v, p);
            CHECK(vg.value == doctest::Approx(sample_trilinear(v, p)));
            for (int a = 0; a < 3; ++a) {
                Vec3 e = Vec3::Zero();
                e[a] = 1e-6;
                const double fd = (sample_trilinear(v, p + e) - sample_trilinear(v, p - e)) / 2e-6;
                CHECK(vg.gradient[a] == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }

    TEST_CASE("resampling")
    {
        const VolumeGrid g({6, 6, 6}, Vec3::Ones(), Vec3(0.0, 0.0, 0.0));
        const ScalarVolume ramp = field(g, [](const Vec3& p) { return 3.0 * p[0] - p[1] + 0.5 * p[2]; });
        const ScalarVolume same = resample_to_grid(ramp, g);
        for (std::size_t x = 0; x < ramp.values.size(); ++x) {
            CHECK(std::abs(same.values[x] - ramp.values[x]) < 1e-12);
        }
        const VolumeGrid coarse({3, 3, 3}, Vec3::Constant(2.0), Vec3::Constant(0.5));
        const ScalarVolume down = resample_to_grid(ramp, coarse);
        for (std::size_t x = 0; x < down.values.size(); ++x) {
            const Vec3 p = coarse.world(x);
            CHECK(down.values[x] == doctest::Approx(3.0 * p[0] - p[1] + 0.5 * p[2]));
        }
        const ScalarVolume c = resample_to_grid(ScalarVolume(g, 2.5), coarse);
        for (double x : c.values) {
            CHECK(x == doctest::Approx(2.5));
        }
        const VolumeGrid far({2, 2, 2}, Vec3::Ones(), Vec3::Constant(100.0));
        CHECK_THROWS_AS(resample_to_grid(ramp, far), GridError);
    }

    TEST_CASE("nearest-neighbour label resampling")
    {
        const VolumeGrid g({4, 1, 1}, Vec3::Ones());
        const LabelVolume l(g, std::vector<std::int32_t>{0, 1, 2, 3});
        const VolumeGrid shifted({4, 1, 1}, Vec3::Ones(), Vec3(0.8, 0.0, 0.0));
        const LabelVolume r = resample_labels(l, shifted, 9);
        CHECK(r.labels == std::vector<std::int32_t>{1, 2, 3, 9});
    }
}
