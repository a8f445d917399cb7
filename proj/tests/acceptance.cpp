// Runs the acceptance criteria and prints one PASS/FAIL line for each.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "geolab/reports.hpp"
#include "support.hpp"

using namespace geolab;
using fixtures::pt;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Circle {
    std::string name;
    ManifoldPtr manifold;
    BrokenLoop loop;
};

std::vector<Circle> reference_circles() {
    auto torus = std::make_shared<FlatTorus>();
    auto sphere = std::make_shared<RoundSphere>(1.0, 0.05);
    auto hyp = SurfaceOfRevolution::hyperboloid();
    return {{"torus", torus, periodic_sweep_seed(*torus, pt(0.0, 0.3), 0, 1, 16)},
            {"sphere", sphere, fixtures::equator(32)},
            {"hyperboloid", hyp, fixtures::waist(*hyp, 32)}};
}

// Bott tables for m <= 12 are shared by several criteria.
const BottData& bott(const Circle& c) {
    static std::map<std::string, BottData> cache;
    auto it = cache.find(c.name);
    if (it == cache.end()) it = cache.emplace(c.name, bott_data(*c.manifold, c.loop, {12, true})).first;
    return it->second;
}

Outcome c1_bott_formula() {
    std::ostringstream os;
    bool ok = true;
    for (const auto& c : reference_circles()) {
        const BottData& b = bott(c);
        int bad = 0;
        for (const auto& r : b.table) bad += !r.consistent();
        ok = ok && bad == 0 && b.table.size() == 12 && b.undecided_samples.empty();
        os << c.name << ": " << 12 - bad << "/12 rows; ";
    }
    return {ok, os.str()};
}

Outcome c2_sphere_law() {
    RoundSphere s(1.0, 0.05);
    std::ostringstream os;
    bool ok = true;
    for (int m = 1; m <= 6; ++m) {
        const IndexReport r = indices(s, iterate(fixtures::equator(64), m));
        const ConjugateInstants conj = conjugate_instants(s, pt(pi / 2, 0), pt(0, 1), 2 * pi * m);
        const bool row = r.ind == 2 * m - 1 && r.nul == 2 && r.ind_omega == 2 * m - 1 && r.nul_omega == 1 &&
                         r.gap >= 1e3 * r.tau0 && static_cast<int>(conj.times.size()) == r.ind_omega &&
                         conj.endpoint_conjugate;
        ok = ok && row;
        os << "m=" << m << ":" << r.ind << "/" << r.nul << "/" << r.ind_omega << "/" << r.nul_omega
           << " conj=" << conj.times.size() << (row ? "" : "!") << " ";
    }
    return {ok, os.str()};
}

Outcome c3_iteration_inequalities() {
    std::ostringstream os;
    bool ok = true;
    for (const auto& c : reference_circles()) {
        const BottData& b = bott(c);
        const IterationCertificate it = iteration_inequalities_check(b.table, b.average_index, 2, {2, 3, 5, 7, 11});
        ok = ok && it.all_pass;
        bool all_eq = true, strict = true;
        for (const auto& r : it.rows) {
            all_eq = all_eq && r.equality;
            strict = strict && r.upper_slack > 0 && r.lower_slack > 0;
        }
        if (c.name == "sphere") ok = ok && it.hypothesis_ii && all_eq;
        if (c.name == "hyperboloid") ok = ok && !it.hypothesis_ii && strict;
        os << c.name << ": pass=" << it.all_pass << " (ii)=" << it.hypothesis_ii << "; ";
    }
    return {ok, os.str()};
}

Outcome c4_sandwich_superadditivity() {
    std::ostringstream os;
    bool ok = true;
    for (const auto& c : reference_circles()) {
        int sandwich = 0;
        for (int m = 1; m <= 12; ++m) sandwich += indices(*c.manifold, iterate(c.loop, m)).sandwich_holds(2);
        const auto rows = superadditivity_check(*c.manifold, c.loop, 12, c.name != "sphere");
        int sup = 0, slack = 0;
        for (const auto& r : rows) {
            sup += r.pass() && r.segment_route_agrees;
            slack += r.index_slack == r.m - 1;
        }
        ok = ok && sandwich == 12 && sup == 12 && rows.size() == 12;
        if (c.name == "sphere") ok = ok && slack == 12;
        os << c.name << ": sandwich " << sandwich << "/12, superadditive " << sup << "/12; ";
    }
    return {ok, os.str()};
}

Outcome c5_based_identity() {
    std::ostringstream os;
    bool ok = true;
    int certified = 0;
    for (const auto& c : reference_circles()) {
        const BottData& b = bott(c);
        const IterationCertificate it = iteration_inequalities_check(b.table, b.average_index, 2, {2, 3, 5, 7, 11});
        if (!it.hypothesis_ii) continue;
        ++certified;
        int good = 0;
        for (int m = 1; m <= 12; ++m) {
            const IndexReport r = indices(*c.manifold, iterate(c.loop, m));
            good += r.ind_omega + r.nul_omega == r.ind + r.nul - 1;
        }
        ok = ok && good == 12 && based_identity_check(it, indices(*c.manifold, c.loop), 2);
        os << c.name << ": " << good << "/12; ";
    }
    return {ok && certified >= 1, os.str()};
}

Outcome c6_energy_decomposition() {
    const HingstonChart ch = model_chart({});
    std::mt19937_64 rng(6);
    double worst = 0.0, worst_f = 0.0;
    for (int m : {2, 3, 5}) {
        for (int i = 0; i < 1000; ++i) {
            const Vector q = detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng);
            const Vector q2 = detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng);
            std::vector<Vector> p;
            for (int j = 0; j < m; ++j) p.push_back(detail::random_in_ball(ch.bprime_dim, ch.radius_p, rng));
            worst = std::max(worst, energy_decomposition(ch, q, q2, p).relative_error());
            worst_f = std::max(worst_f, std::abs(interaction(ch, q, p[0], q, p[m - 1])));
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "max relative defect %.2e, max |f(q,p,q,p')| %.2e", worst, worst_f);
    return {worst < 1e-10 && worst_f <= 1e-12, buf};
}

Outcome c7_cycle_push() {
    const HingstonChart ch = model_chart({});
    const RhoEnvelope env = interaction_modulus(ch);
    const double eps0 = boundary_margin(ch, 1000);
    const HomotopyBudget b = budget(ch, env, eps0 / 2, 1000);
    int m = 3;
    while (!(is_odd_prime(m) && m > b.m_bar)) ++m;
    const CycleTrace t = cycle_push(ch, b, m, 2000);
    char buf[256];
    std::snprintf(buf, sizeof buf, "eps0=%.4g eps=%.4g delta=%.4g mu=%.4g m_bar=%.3f m=%d final/m^2c=%.6f boundary/m^2c=%.6f",
                  eps0, b.eps, b.delta, b.mu, b.m_bar, m, t.final.value / t.bound_final,
                  t.boundary.value / t.bound_final);
    return {t.final_ok && t.boundary_ok && t.homotopy.ok() && t.samples >= 1000 && b.rho_3delta < b.eps, buf};
}

// m < mu L <= m + 0.25 / m (eps_m = 0.5 / m, l = 1) in integers, for L = 0.7, 1, sqrt 2.
bool in_window_exact(long m, long mu, int which) {
    switch (which) {
        case 0: return 28 * mu * m > 40 * m * m && 28 * mu * m <= 40 * m * m + 10;
        case 1: return mu > m && 4 * mu * m <= 4 * m * m + 1;
        default: {
            const long rhs = (4 * m * m + 1) * (4 * m * m + 1);
            return 2 * mu * mu > m * m && 32 * mu * mu * m * m <= rhs;
        }
    }
}

Outcome c8_windows() {
    const std::vector<double> Ls{0.7, 1.0, std::sqrt(2.0)};
    std::vector<int> ms;
    std::vector<double> eps;
    for (int m = 1; m <= 50; ++m) {
        ms.push_back(m);
        eps.push_back(0.5 / m);
    }
    const PigeonholeCertificate cert = pigeonhole_distinctness(ms, eps, 1.0, Ls);
    bool ok = cert.rows.size() == 150;
    std::ostringstream os;
    for (int w = 0; w < 3; ++w) {
        int brute_cutoff = 0;
        for (long m = 1; m <= 50; ++m) {
            std::vector<long> brute;
            for (long mu = 1; mu <= 200; ++mu)
                if (in_window_exact(m, mu, w)) brute.push_back(mu);
            if (!brute.empty()) brute_cutoff = static_cast<int>(m);
            const WindowRow& r = cert.rows[w * 50 + m - 1];
            ok = ok && r.multiples == brute && r.lo == double(m) && r.hi == m + 0.5 / m / 2.0;
        }
        ok = ok && cert.cutoff.at(Ls[w]) == brute_cutoff && brute_cutoff < 50;
        os << "L=" << detail::shortest(Ls[w]) << " cutoff " << brute_cutoff << "; ";
    }
    return {ok, os.str()};
}

Outcome c9_penalization() {
    ExperimentConfig hc;
    hc.manifold = {{"type", "hyperboloid"}};
    hc.exhaustion = {1.5, 2.5, 3.5};
    hc.k = 32;
    hc.seeds = 10;
    hc.seed = 3;
    hc.energy_cap = 64;
    const ManifoldPtr h = make_manifold(hc);
    const PenaltySchedule f = make_schedule(hc, *h);
    const PenalizedSearchReport rh = penalized_search(*h, f, 0, search_seeds(*h, hc), search_options(hc));
    int bad_artifacts = 0;
    for (const auto& a : rh.artifacts) bad_artifacts += !artifact_index_filter(a, 4.0, 2).pass;
    const bool genuine_ok = rh.genuine.size() == 1 && std::abs(rh.genuine[0].energy - 4 * pi * pi) <= 1e-6;

    ExperimentConfig pc;
    pc.manifold = {{"type", "flat_plane"}, {"injectivity_floor", 1.0}};
    pc.exhaustion = {1.0, 2.0, 3.0};
    pc.k = 16;
    pc.seeds = 100;
    pc.seed = 11;
    const ManifoldPtr p = make_manifold(pc);
    const PenalizedSearchReport rp = penalized_search(*p, make_schedule(pc, *p), 0, search_seeds(*p, pc), search_options(pc));

    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "hyperboloid: %zu genuine (E-4pi^2 = %.1e), %zu artifacts, %d over the index bound; plane: %zu genuine of 100 seeds",
                  rh.genuine.size(), rh.genuine.empty() ? NAN : rh.genuine[0].energy - 4 * pi * pi,
                  rh.artifacts.size(), bad_artifacts, rp.genuine.size());
    return {genuine_ok && bad_artifacts == 0 && rp.genuine.empty(), buf};
}

Outcome c10_derivatives() {
    std::vector<ManifoldPtr> ms{std::make_shared<FlatPlane>(), std::make_shared<FlatTorus>(),
                                std::make_shared<RoundSphere>(1.0, 0.05), SurfaceOfRevolution::hyperboloid()};
    std::mt19937_64 rng(10);
    double g = 0, hs = 0, asym = 0, kern = 0;
    for (const auto& m : ms)
        for (int i = 0; i < 50; ++i) {
            const DerivativeCheck d = derivative_check(*m, random_seed(*m, rng, 2.0, 8, 0.3));
            g = std::max(g, d.gradient_rel);
            hs = std::max(hs, d.hessian_rel);
            asym = std::max(asym, d.hessian_asymmetry);
        }
    for (const auto& c : reference_circles()) {
        const EnergyDerivatives d = energy_derivatives(*c.manifold, c.loop, true);
        const LoopTangent v = discrete_velocity(*c.manifold, c.loop);
        kern = std::max(kern, (d.hessian * v).norm() / (d.hessian.norm() * v.norm()));
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "gradient %.1e, hessian %.1e, asymmetry %.1e, velocity residual %.1e", g, hs,
                  asym, kern);
    return {g < 1e-6 && hs < 1e-6 && asym < 1e-10 && kern < 1e-6, buf};
}

Outcome c11_certificates() {
    std::ostringstream os;
    bool ok = true;
    const std::vector<int> primes{2, 3, 5, 7, 11};
    SearchOptions opt;
    opt.m_max = 12;
    opt.primes = primes;
    for (const auto& c : reference_circles()) {
        const SearchReport r = find_circles(*c.manifold, {c.loop}, opt);
        for (const auto& circle : r.circles) {
            const BottData& b = bott(c);
            const LocalHomologyCertificate cert = certify_local_homology(*c.manifold, circle, b, opt);
            const bool good = certificate_consistent(cert, b, primes) &&
                              (circle.certificate.mu_sign.empty() || certificate_consistent(circle.certificate, b, primes));
            ok = ok && good;
            os << c.name << ": " << (good ? "consistent" : "INCONSISTENT") << " (" << cert.mu_sign.size()
               << " signs, injective at " << cert.inclusion_injectivity.size() << " primes); ";
        }
        ok = ok && r.circles.size() == 1;
    }
    return {ok, os.str()};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double limit_s;  // 0: no runtime limit
    };
    const std::vector<Criterion> all{
        {"bott formula oracle equivalence", c1_bott_formula, 120},
        {"sphere index law", c2_sphere_law, 60},
        {"iteration inequalities", c3_iteration_inequalities, 0},
        {"sandwich and superadditivity", c4_sandwich_superadditivity, 0},
        {"based index identity", c5_based_identity, 0},
        {"energy decomposition", c6_energy_decomposition, 0},
        {"cycle push budget", c7_cycle_push, 300},
        {"length windows", c8_windows, 0},
        {"penalization", c9_penalization, 0},
        {"gradient and hessian numerics", c10_derivatives, 0},
        {"certificates", c11_certificates, 0},
    };
    int failed = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = all[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (all[i].limit_s > 0 && s > all[i].limit_s) {
            o.pass = false;
            o.detail += " runtime over " + std::to_string(int(all[i].limit_s)) + " s";
        }
        failed += !o.pass;
        std::printf("[%s] %2zu %-32s %6.1fs  %s\n", o.pass ? "PASS" : "FAIL", i + 1, all[i].name, s, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", all.size() - failed, all.size());
    return failed == 0 ? 0 : 1;
}
