#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace geolab;
using fixtures::pt;

namespace {

constexpr double pi = std::numbers::pi;

BrokenLoop square() {
    Matrix n(2, 4);
    n << 0, 1, 1, 0, 0, 0, 1, 1;
    return BrokenLoop(n);
}

BrokenLoop torus_horizontal(int k) {
    static const FlatTorus t;
    return periodic_sweep_seed(t, pt(0.0, 0.3), 0, 1, k);
}

}  // namespace

TEST(Energy, Examples) {
    FlatPlane p;
    EXPECT_DOUBLE_EQ(energy(p, square()), 16.0);
    Matrix c = Matrix::Constant(2, 6, 0.4);
    EXPECT_EQ(energy(p, BrokenLoop(c)), 0.0);
    RoundSphere s(1.0, 0.05);
    EXPECT_NEAR(energy(s, fixtures::equator(64)), 4 * pi * pi, 1e-6);
}

TEST(Energy, LongSegmentRejected) {
    FlatPlane p;
    p.set_injectivity_floor(0.5);
    EXPECT_THROW(energy(p, square()), NotShortError);
}

TEST(Energy, PlaneGradientIsDiscreteLaplacian) {
    FlatPlane p;
    const BrokenLoop l = square();
    const EnergyDerivatives d = energy_derivatives(p, l, false);
    for (int i = 0; i < 4; ++i) {
        const Vector expect = 2.0 * 4 * (2 * l.node(i) - l.node(i - 1 + 4) - l.node(i + 1));
        EXPECT_LT((d.differential.segment(2 * i, 2) - expect).norm(), 1e-12);
    }
}

TEST(Energy, EquatorIsCritical) {
    RoundSphere s(1.0, 0.05);
    EXPECT_LT(energy_derivatives(s, fixtures::equator(64), false).gradient_norm(), 1e-8);
}

TEST(Hessian, TorusKernelIsConstants) {
    FlatTorus t;
    const HessianSpectrum h = hessian(t, torus_horizontal(32));
    EXPECT_EQ(h.kernel_dimension(), 2);
    EXPECT_EQ(h.negative_count(), 0);
    EXPECT_TRUE(h.decided());
    const HessianSpectrum b = based_spectrum(h, 32, 2);
    EXPECT_EQ(b.kernel_dimension(), 0);
    EXPECT_EQ(b.negative_count(), 0);
}

TEST(Hessian, EigenResiduals) {
    RoundSphere s(1.0, 0.05);
    const HessianSpectrum h = hessian(s, fixtures::equator(32));
    for (int i = 0; i < h.eigenvalues.size(); ++i) {
        const Vector x = h.eigenvectors.col(i);
        EXPECT_LE((h.matrix * x - h.eigenvalues(i) * h.metric * x).norm(), 1e-8 * std::max(1.0, x.norm()));
    }
}

TEST(Hessian, SphereEquatorCounts) {
    RoundSphere s(1.0, 0.05);
    const HessianSpectrum h = hessian(s, fixtures::equator(64));
    EXPECT_EQ(h.negative_count(), 1);
    EXPECT_EQ(h.kernel_dimension(), 3);
    const HessianSpectrum b = based_spectrum(h, 64, 2);
    EXPECT_EQ(b.negative_count(), 1);
    EXPECT_EQ(b.kernel_dimension(), 1);
}

TEST(Derivatives, FiniteDifferenceAgreement) {
    std::mt19937_64 rng(21);
    std::vector<ManifoldPtr> zoo{std::make_shared<FlatPlane>(), std::make_shared<FlatTorus>(),
                                 std::make_shared<RoundSphere>(1.0, 0.05), SurfaceOfRevolution::hyperboloid()};
    for (const auto& m : zoo) {
        for (int t = 0; t < 5; ++t) {
            const DerivativeCheck c = derivative_check(*m, random_seed(*m, rng, 2.0, 8, 0.3));
            EXPECT_LT(c.gradient_rel, 1e-6) << m->name();
            EXPECT_LT(c.hessian_rel, 1e-6) << m->name();
            EXPECT_LT(c.hessian_asymmetry, 1e-10) << m->name();
        }
    }
}

TEST(Rotate, WholeStepIsShift) {
    FlatPlane p;
    const BrokenLoop l = square(), r = rotate(p, l, 0.25);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(r.node(i), l.node(i + 1));
}

TEST(Rotate, HalfSegmentCutsCorners) {
    FlatPlane p;
    EXPECT_LT(energy(p, rotate(p, square(), 1.0 / 8)), 16.0 - 1e-9);
}

TEST(Rotate, EquatorInvariant) {
    RoundSphere s(1.0, 0.05);
    const BrokenLoop e = fixtures::equator(64);
    EXPECT_NEAR(energy(s, rotate(s, e, 0.3)), energy(s, e), 1e-10);
}

TEST(Rotate, NeverIncreasesEnergy) {
    std::mt19937_64 rng(3);
    auto h = SurfaceOfRevolution::hyperboloid();
    for (int t = 0; t < 10; ++t) {
        const BrokenLoop l = random_seed(*h, rng, 1.5, 8, 0.5);
        const double s = std::uniform_real_distribution<double>(0, 1)(rng);
        EXPECT_LE(energy(*h, rotate(*h, l, s)), energy(*h, l) * (1 + 1e-12));
    }
}

TEST(Iterate, EnergyScalesQuadratically) {
    FlatPlane p;
    EXPECT_EQ(iterate(square(), 1).nodes, square().nodes);
    EXPECT_NEAR(energy(p, iterate(square(), 3)), 144.0, 144.0 * 1e-12);
    RoundSphere s(1.0, 0.05);
    EXPECT_NEAR(energy(s, iterate(fixtures::equator(64), 2)), 16 * pi * pi, 1e-6);
}

TEST(Multiplicity, Examples) {
    FlatPlane p;
    RoundSphere s(1.0, 0.05);
    EXPECT_EQ(multiplicity(p, square()), 1);
    EXPECT_EQ(multiplicity(s, iterate(fixtures::equator(16), 5)), 5);
    // twice-around equator has multiplicity 2; six copies give 12
    EXPECT_EQ(multiplicity(s, iterate(fixtures::equator(32, 2), 6)), 12);
}

TEST(Iterate, VelocityInKernel) {
    RoundSphere s(1.0, 0.05);
    auto h = SurfaceOfRevolution::hyperboloid();
    for (const auto& [m, l] : {std::pair<const Manifold*, BrokenLoop>{&s, fixtures::equator(32)},
                               {h.get(), fixtures::waist(*h, 32)}}) {
        const EnergyDerivatives d = energy_derivatives(*m, l, true);
        const LoopTangent v = discrete_velocity(*m, l);
        EXPECT_LE((d.hessian * v).norm(), 1e-6 * v.norm() * d.hessian.norm());
    }
}

TEST(Refine, DoublesNodesKeepsGeodesics) {
    RoundSphere s(1.0, 0.05);
    const BrokenLoop r = refine(s, fixtures::equator(16));
    EXPECT_EQ(r.k(), 32);
    EXPECT_NEAR(energy(s, r), 4 * pi * pi, 1e-9);
    EXPECT_EQ(default_k(2 * pi, pi), 16);
    EXPECT_EQ(default_k(20.0, 1.0), 160);
}

TEST(LoopCsv, RoundTrip) {
    const BrokenLoop l = fixtures::equator(8);
    EXPECT_EQ(loop_from_csv(loop_to_csv(l)).nodes, l.nodes);
}
