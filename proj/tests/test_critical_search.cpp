#include <gtest/gtest.h>

#include "support.hpp"

using namespace geolab;
using fixtures::pt;

namespace {

constexpr double pi = std::numbers::pi;

std::vector<BrokenLoop> jittered(const BrokenLoop& base, int count, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<BrokenLoop> out;
    for (int i = 0; i < count; ++i) out.push_back(perturbed(base, noise, rng));
    return out;
}

}  // namespace

TEST(FindCircles, HyperboloidWaist) {
    auto h = SurfaceOfRevolution::hyperboloid();
    SearchOptions opt;
    opt.m_max = 6;
    const SearchReport r = find_circles(*h, jittered(fixtures::waist(*h, 24), 4, 0.02, 3), opt);
    ASSERT_EQ(r.circles.size(), 1u);
    const CriticalCircle& c = r.circles.front();
    EXPECT_NEAR(c.energy, 4 * pi * pi, 1e-6);
    EXPECT_EQ(c.multiplicity, 1);
    EXPECT_EQ(c.indices.ind, 0);
    EXPECT_EQ(c.indices.nul, 0);
    EXPECT_EQ(c.isolated, Isolation::yes);
    EXPECT_EQ(c.certificate.kind, HomologyCase::nondegenerate);
    EXPECT_EQ(c.certificate.degree, 0);
    EXPECT_FALSE(c.certificate.hypothesis_ii);
}

TEST(FindCircles, DoubleEquatorMultiplicity) {
    RoundSphere s(1.0, 0.05);
    SearchOptions opt;
    opt.classify = false;
    opt.energy_cap = 200.0;
    std::vector<BrokenLoop> seeds{fixtures::equator(24, 1), fixtures::equator(48, 2)};
    const SearchReport r = find_circles(s, seeds, opt);
    ASSERT_EQ(r.circles.size(), 2u);
    EXPECT_EQ(r.circles[0].multiplicity, 1);
    EXPECT_EQ(r.circles[1].multiplicity, 2);
    EXPECT_NEAR(r.circles[1].energy, 16 * pi * pi, 1e-6);
}

TEST(FindCircles, PlaneSeedsEscape) {
    FlatPlane p;
    std::mt19937_64 rng(11);
    std::vector<BrokenLoop> seeds;
    for (int i = 0; i < 8; ++i) seeds.push_back(random_seed(p, rng, 2.0, 12, 1.0));
    const SearchReport r = find_circles(p, seeds);
    EXPECT_TRUE(r.circles.empty());
    EXPECT_EQ(r.escaped, 8);
}

TEST(Align, RotationAndReversal) {
    RoundSphere s(1.0, 0.05);
    const BrokenLoop l = fixtures::equator(12);
    BrokenLoop shifted = l;
    for (int i = 0; i < 12; ++i) shifted.nodes.col(i) = l.nodes.col((i + 5) % 12);
    EXPECT_LT(align(s, l, shifted).distance, 1e-12);
    EXPECT_LT(align(s, l, detail::reversed(l)).distance, 1e-12);
    EXPECT_GT(align(s, l, detail::reversed(l), false).distance, 1e-3);
}

TEST(WitnessBall, StrictMaximumCertified) {
    std::mt19937_64 rng(1);
    auto f = [](const Vector& y) { return -y(0) * y(0) - std::pow(y(1), 4); };
    const WitnessBall w = witness_ball(f, 0.0, 2, 0.1, 1e-14, rng);
    EXPECT_TRUE(w.certified);
    EXPECT_FALSE(w.mixed_signs);
    EXPECT_EQ(w.samples, 400);
}

TEST(WitnessBall, MixedSignsRejected) {
    std::mt19937_64 rng(1);
    auto f = [](const Vector& y) { return -y(0) * y(0) + std::pow(y(1), 4); };
    const WitnessBall w = witness_ball(f, 0.0, 2, 1.0, 1e-14, rng);
    EXPECT_FALSE(w.certified);
    EXPECT_TRUE(w.mixed_signs);
}

TEST(Certificate, ConsistencyRecomputed) {
    RoundSphere s(1.0, 0.05);
    const BottData b = bott_data(s, fixtures::equator(32), {6, false});
    LocalHomologyCertificate cert;
    for (const auto& row : b.table)
        if (row.nul == b.table.front().nul) cert.mu_sign[row.m] = (row.ind - b.table.front().ind) % 2 == 0 ? 1 : -1;
    cert.inclusion_injectivity = {3, 5};  // identity monodromy: no nontrivial roots in the N-support
    EXPECT_TRUE(certificate_consistent(cert, b, {2, 3, 5}));
    LocalHomologyCertificate bad = cert;
    bad.mu_sign.begin()->second *= -1;
    EXPECT_FALSE(certificate_consistent(bad, b, {2, 3, 5}));
    LocalHomologyCertificate missing = cert;
    missing.inclusion_injectivity = {3};
    EXPECT_FALSE(certificate_consistent(missing, b, {2, 3, 5}));
}
