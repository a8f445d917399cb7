#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace geolab;
using geolab::fixtures::pt;

namespace {

std::vector<ManifoldPtr> zoo() {
    return {std::make_shared<FlatPlane>(), std::make_shared<FlatTorus>(1.0, 1.0),
            std::make_shared<RoundSphere>(1.0, 0.05), SurfaceOfRevolution::hyperboloid(),
            SurfaceOfRevolution::polynomial({1.0, 0.0, 0.2}, 1.0, -2.0, 2.0)};
}

Point sample(const Manifold& m, std::mt19937_64& rng, double r = 1.5) {
    const Box b = m.sampling_box(r);
    Point p(m.dimension());
    for (int i = 0; i < p.size(); ++i) p(i) = std::uniform_real_distribution<double>(b.lo(i), b.hi(i))(rng);
    return p;
}

}  // namespace

TEST(Christoffel, FlatModelsVanish) {
    for (const ManifoldPtr& m : {ManifoldPtr(std::make_shared<FlatPlane>()), ManifoldPtr(std::make_shared<FlatTorus>())}) {
        const Christoffel c = christoffel(*m, pt(0.3, -0.7));
        for (int i = 0; i < 2; ++i) EXPECT_EQ(c.gamma[i].norm(), 0.0);
    }
}

TEST(Christoffel, SphereEquator) {
    RoundSphere s;
    const Christoffel c = christoffel(s, pt(std::numbers::pi / 2, 0.0));
    EXPECT_NEAR(c(0, 1, 1), 0.0, 1e-15);
    const Christoffel off = christoffel(s, pt(1.0, 0.4));
    EXPECT_NEAR(off(0, 1, 1), -std::sin(1.0) * std::cos(1.0), 1e-14);
    EXPECT_NEAR(off(1, 0, 1), std::cos(1.0) / std::sin(1.0), 1e-14);
}

TEST(Christoffel, DifferenceModeMatchesAnalytic) {
    std::mt19937_64 rng(4);
    for (const auto& m : zoo()) {
        for (int t = 0; t < 20; ++t) {
            const Point p = sample(*m, rng);
            const Christoffel a = christoffel(*m, p), f = christoffel(*m, p, ChristoffelMode::finite_difference, 1e-4);
            for (int i = 0; i < 2; ++i) {
                EXPECT_LT((a.gamma[i] - f.gamma[i]).norm(), 1e-6) << m->name();
                EXPECT_LT((a.gamma[i] - a.gamma[i].transpose()).norm(), 1e-14);
            }
        }
    }
}

TEST(Christoffel, OutsideDomainThrows) {
    RoundSphere s(1.0, 0.05);
    EXPECT_THROW(christoffel(s, pt(0.01, 0.0)), DomainError);
}

TEST(Metric, PositiveDefiniteOnSamples) {
    std::mt19937_64 rng(2);
    for (const auto& m : zoo())
        for (int t = 0; t < 100; ++t) {
            const Matrix g = m->metric(sample(*m, rng));
            EXPECT_LT((g - g.transpose()).norm(), 1e-15);
            EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff(), 0.0);
        }
}

TEST(Exhaustion, MustIncrease) {
    FlatPlane p;
    EXPECT_THROW(p.set_exhaustion({1.0, 1.0}), ConfigError);
    p.set_exhaustion({1.0, 2.0});
    EXPECT_TRUE(p.in_exhaustion_region(pt(0.5, 0.5), 0));
    EXPECT_FALSE(p.in_exhaustion_region(pt(1.5, 0.0), 0));
    EXPECT_TRUE(p.in_exhaustion_region(pt(1.5, 0.0), 1));
}

TEST(Shoot, PlaneStraightLine) {
    FlatPlane p;
    const GeodesicSegment g = geodesic_shoot(p, pt(0, 0), pt(1, 0), 1.0);
    EXPECT_NEAR((g.end_point() - pt(1, 0)).norm(), 0.0, 1e-14);
}

TEST(Shoot, GreatCircleCloses) {
    RoundSphere s;
    const GeodesicSegment g = geodesic_shoot(s, pt(std::numbers::pi / 2, 0), pt(0, 1), 2 * std::numbers::pi);
    EXPECT_LT(s.chart_distance(g.end_point(), pt(std::numbers::pi / 2, 0)), 1e-8);
}

TEST(Shoot, WaistCloses) {
    auto h = SurfaceOfRevolution::hyperboloid();
    // waist has radius 1, so unit speed is dphi/dt = 1
    const GeodesicSegment g = geodesic_shoot(*h, pt(0, 0), pt(0, 1), 2 * std::numbers::pi);
    EXPECT_LT(h->chart_distance(g.end_point(), pt(0, 0)), 1e-9);
    EXPECT_LT(std::abs(g.end_point()(0)), 1e-12);
}

TEST(Shoot, SpeedIsConstant) {
    std::mt19937_64 rng(8);
    for (const auto& m : zoo()) {
        for (int t = 0; t < 10; ++t) {
            const Point p = sample(*m, rng, 1.0);
            Vector v = Vector::Random(2) * 0.3;
            try {
                const GeodesicSegment g = geodesic_shoot(*m, p, v, 1.0);
                EXPECT_LT(speed_drift(*m, g), 10 * g.tolerance + 1e-12) << m->name();
            } catch (const ChartExitError&) {
            }
        }
    }
}

TEST(Shoot, ChartExitReportsTime) {
    RoundSphere s(1.0, 0.05);
    try {
        geodesic_shoot(s, pt(std::numbers::pi / 2, 0), pt(1, 0), 3.0);
        FAIL() << "expected chart exit";
    } catch (const ChartExitError& e) {
        EXPECT_NEAR(e.exit_time(), std::numbers::pi / 2 - 0.05, 1e-2);
    }
}

TEST(ShortDistance, Examples) {
    FlatPlane p;
    EXPECT_NEAR(short_distance(p, pt(0, 0), pt(3, 4)).length, 5.0, 1e-14);
    RoundSphere s;
    EXPECT_NEAR(short_distance(s, pt(1.2, 0.1), pt(1.5, 0.1)).length, 0.3, 1e-12);
    // opaque sphere goes through shooting
    fixtures::Opaque os(std::make_shared<RoundSphere>());
    EXPECT_NEAR(short_distance(os, pt(1.2, 0.1), pt(1.5, 0.1)).length, 0.3, 1e-9);
    auto h = SurfaceOfRevolution::hyperboloid();
    EXPECT_NEAR(short_distance(*h, pt(0, 0), pt(0, 0.1)).length, 0.1, 1e-6);
}

TEST(ShortDistance, SymmetricOnNearPairs) {
    std::mt19937_64 rng(6);
    for (const auto& m : zoo()) {
        for (int t = 0; t < 100; ++t) {
            const Point p = sample(*m, rng, 1.0);
            const Point q = p + Vector::Random(2) * 0.15;
            if (!m->in_domain(q)) continue;
            EXPECT_NEAR(short_distance(*m, p, q).length, short_distance(*m, q, p).length, 1e-8) << m->name();
        }
    }
}

TEST(ShortDistance, ClosedFormMatchesShooting) {
    std::mt19937_64 rng(12);
    const auto s = std::make_shared<RoundSphere>();
    fixtures::Opaque os(s);
    for (int t = 0; t < 20; ++t) {
        const Point p = sample(*s, rng), q = p + Vector::Random(2) * 0.3;
        if (!s->in_domain(q)) continue;
        const SegmentSolution a = solve_segment(*s, p, q, true), b = solve_segment(os, p, q, true);
        EXPECT_NEAR(a.sqdist, b.sqdist, 1e-10);
        EXPECT_LT((a.gradient - b.gradient).norm(), 1e-8);
        EXPECT_LT((a.hessian - b.hessian).norm(), 1e-6);
    }
}

TEST(ShortDistance, TooLongThrows) {
    FlatPlane p;
    p.set_injectivity_floor(1.0);
    EXPECT_THROW(solve_segment(p, pt(0, 0), pt(2, 0), false), NotShortError);
}
