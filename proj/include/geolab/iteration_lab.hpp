#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geolab/critical_search.hpp"

namespace geolab {

/// Affine hyperplane through q_* with g-normal the initial velocity; loops
/// in the lifted slice have node 0 on it.
struct TransversalSlice {
    Point q_star;
    Vector normal;  ///< gamma'(0)
    Matrix frame;   ///< g-orthonormal basis of the hyperplane, n x (n - 1)
    double radius = 0.0;

    /// |<v, normal>_g| / (|v| |normal|) for v = gamma'(0); 1 by construction.
    double transversality(const Matrix& g) const {
        const double vn = normal.dot(g * normal);
        return std::abs(vn) / vn;
    }
};

/// Product chart phi: Sigma_0 x B' -> B^d with ev(phi(q, p)) = q. q and p
/// are coordinates centred at q_* and p_* (both zero).
struct HingstonChart {
    ManifoldPtr manifold;
    int k = 0;
    int sigma_dim = 0;   ///< dim M - 1
    int bprime_dim = 0;  ///< d - (dim M - 1)
    double radius_q = 0.0;
    double radius_p = 0.0;
    double c = 0.0;      ///< E at the centre
    double margin = 0.0; ///< smallest c - E over off-centre samples, when measured
    std::function<BrokenLoop(const Vector&, const Vector&)> phi;
    std::function<Point(const Vector&)> base_point;  ///< ev(phi(q, .))

    int d() const { return sigma_dim + bprime_dim; }
    double energy(const Vector& q, const Vector& p) const { return geolab::energy(*manifold, phi(q, p)); }
    /// dim U_m = dim Sigma_0 + m dim B'.
    int dim_U(int m) const { return sigma_dim + m * bprime_dim; }
};

/// Parameters of the synthetic landscape on the flat plane: phi(q, p) is the
/// regular k-gon inscribed in the circle of radius R0 (1 - a q^2 - b |p|^2)
/// through (0, q), tangent there to the vertical line Sigma_0 = {x = 0}.
struct ModelLandscape {
    int k = 8;
    double R0 = 1.0;
    double a = 2.0;
    double b = 1.0;
    double radius_q = 0.5;
    double radius_p = 0.5;
    int bprime_dim = 1;
};

inline HingstonChart model_chart(const ModelLandscape& ml) {
    if (!(1.0 - ml.a * ml.radius_q * ml.radius_q - ml.b * ml.radius_p * ml.radius_p > 0))
        throw ConfigError("model landscape: radius must stay positive on the chart");
    HingstonChart ch;
    ch.manifold = std::make_shared<FlatPlane>();
    ch.k = ml.k;
    ch.sigma_dim = 1;
    ch.bprime_dim = ml.bprime_dim;
    ch.radius_q = ml.radius_q;
    ch.radius_p = ml.radius_p;
    ch.base_point = [](const Vector& q) {
        Point x(2);
        x << 0.0, q(0);
        return x;
    };
    ch.phi = [ml](const Vector& q, const Vector& p) {
        const double R = ml.R0 * (1.0 - ml.a * q.squaredNorm() - ml.b * p.squaredNorm());
        Matrix nodes(2, ml.k);
        for (int i = 0; i < ml.k; ++i) {
            const double t = 2.0 * M_PI * i / ml.k;
            nodes(0, i) = -R + R * std::cos(t);
            nodes(1, i) = q(0) + R * std::sin(t);
        }
        return BrokenLoop(nodes);
    };
    ch.c = ch.energy(Vector::Zero(1), Vector::Zero(ml.bprime_dim));
    return ch;
}

namespace detail {

inline Vector random_in_ball(int dim, double radius, std::mt19937_64& rng) {
    if (dim == 0) return Vector(0);
    std::normal_distribution<double> normal;
    Vector u(dim);
    for (int i = 0; i < dim; ++i) u(i) = normal(rng);
    u.normalize();
    const double r = radius * std::pow(std::uniform_real_distribution<double>(0, 1)(rng), 1.0 / dim);
    return r * u;
}

inline Vector random_on_sphere(int dim, double radius, std::mt19937_64& rng) {
    if (dim == 0) return Vector(0);
    std::normal_distribution<double> normal;
    Vector u(dim);
    for (int i = 0; i < dim; ++i) u(i) = normal(rng);
    return radius * u.normalized();
}

}  // namespace detail

/// Slice and product chart of a circle through the subspace E_- + E_0 of
/// the slice. The Sigma_0 directions have prescribed node-0 components and
/// the B' directions none, so ev(phi(q, p)) = q holds exactly.
inline std::pair<TransversalSlice, HingstonChart> build_slice_and_chart(
    const ManifoldPtr& mp, const CriticalCircle& circle, const BottData& bott,
    const std::vector<int>& primes = {3, 5, 7, 11}, double r_min = 1e-4, int samples = 400,
    std::uint64_t seed = 1) {
    const Manifold& m = *mp;
    const int n = m.dimension();
    if (circle.isolated != Isolation::yes)
        throw HypothesisError("build_slice_and_chart: circle is not certified isolated");
    const IterationCertificate it = iteration_inequalities_check(bott.table, bott.average_index, n, primes);
    if (!based_identity_check(it, circle.indices, n) || !it.hypothesis_ii)
        throw HypothesisError("build_slice_and_chart: based index identity not verified on the primes");
    const int d = circle.indices.ind + circle.indices.nul;
    if (d - (n - 1) < 0)
        throw HypothesisError("build_slice_and_chart: B' would have negative dimension " +
                              std::to_string(d - (n - 1)));
    if (circle.certificate.kind != HomologyCase::maximal_degree)
        throw HypothesisError("build_slice_and_chart: no maximal-degree certificate");

    const BrokenLoop& loop = circle.representative;
    const int k = loop.k();
    const EnergyDerivatives der = energy_derivatives(m, loop, true);
    const HessianSpectrum s = spectrum(der.hessian, der.metric, true);
    const LoopTangent vel = discrete_velocity(m, loop);
    const Matrix null_dirs = detail::slice_null_directions(s, vel);
    std::vector<Vector> cols;
    for (int i = 0; i < s.eigenvalues.size(); ++i)
        if (s.eigenvalues(i) < -s.tau0) cols.push_back(s.eigenvectors.col(i));
    for (int c = 0; c < null_dirs.cols(); ++c) cols.push_back(null_dirs.col(c));
    Matrix B(der.metric.rows(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) B.col(c) = cols[c];

    TransversalSlice slice;
    slice.q_star = loop.node(0);
    slice.normal = vel.head(n);
    const Matrix g0 = m.metric(slice.q_star);
    slice.frame = normal_frame(g0, slice.normal);
    const Matrix A = slice.frame.transpose() * g0 * B.topRows(n);
    Eigen::FullPivLU<Matrix> lu(A);
    if (lu.rank() < n - 1) throw HypothesisError("build_slice_and_chart: evaluation map is not a submersion");
    const Matrix X = A.completeOrthogonalDecomposition().pseudoInverse();  // A X = I
    const Matrix sigma_dirs = B * X;
    const Matrix K = lu.kernel();
    const Matrix bprime_dirs = (K.cols() == 1 && K.isZero()) ? Matrix(B.rows(), 0) : Matrix(B * K);

    HingstonChart ch;
    ch.manifold = mp;
    ch.k = k;
    ch.sigma_dim = n - 1;
    ch.bprime_dim = static_cast<int>(bprime_dirs.cols());
    ch.c = circle.energy;
    const Point q_star = slice.q_star;
    const Matrix frame = slice.frame;
    ch.base_point = [q_star, frame](const Vector& q) -> Point { return q_star + frame * q; };
    ch.phi = [loop, sigma_dirs, bprime_dirs, q_star, frame, n](const Vector& q, const Vector& p) {
        LoopTangent delta = sigma_dirs * q;
        if (p.size() > 0) delta += bprime_dirs * p;
        BrokenLoop out = detail::displaced(loop, delta);
        out.nodes.col(0) = q_star + frame * q;
        return out;
    };
    // Shrink until E < c off centre on the samples.
    double r = std::max(circle.certificate.ball.radius, r_min);
    std::mt19937_64 rng(seed);
    for (; r >= r_min; r *= 0.5) {
        ch.radius_q = ch.radius_p = r;
        double worst = -std::numeric_limits<double>::infinity();
        bool ok = true;
        for (int i = 0; i < samples && ok; ++i) {
            const Vector q = detail::random_in_ball(ch.sigma_dim, r, rng);
            const Vector p = detail::random_in_ball(ch.bprime_dim, r, rng);
            if (q.norm() + p.norm() < 1e-12) continue;
            try {
                worst = std::max(worst, ch.energy(q, p) - ch.c);
            } catch (const Error&) {
                ok = false;
            }
            ok = ok && worst < 0;
        }
        if (ok) {
            ch.margin = -worst;
            slice.radius = r;
            return {slice, ch};
        }
    }
    throw HypothesisError("build_slice_and_chart: chart radius fell below r_min with E >= c off centre");
}

/// The m-block loop Phi_m(q, q', p_0..p_{m-1}): blocks j < m/2 use q and
/// the rest q'. With q = q' it is the concatenation phi_m(q, p).
inline BrokenLoop phi_m_assemble(const HingstonChart& ch, const Vector& q, const Vector& q2,
                                 const std::vector<Vector>& p) {
    const int m = static_cast<int>(p.size());
    if (m < 2) throw PreconditionError("phi_m_assemble: needs m >= 2");
    const int half = m / 2;
    const int n = ch.manifold->dimension();
    Matrix nodes(n, m * ch.k);
    for (int j = 0; j < m; ++j) nodes.middleCols(j * ch.k, ch.k) = ch.phi(j < half ? q : q2, p[j]).nodes;
    return BrokenLoop(nodes);
}

/// k (d(x, q')^2 + d(x', q)^2 - d(x, q)^2 - d(x', q')^2) with x, x' the
/// last nodes of phi(q, p) and phi(q', p').
inline double interaction(const HingstonChart& ch, const Vector& q, const Vector& p, const Vector& q2,
                          const Vector& p2) {
    const Manifold& m = *ch.manifold;
    const BrokenLoop a = ch.phi(q, p), b = ch.phi(q2, p2);
    const Point x = a.node(ch.k - 1), x2 = b.node(ch.k - 1);
    const Point base = a.node(0), base2 = b.node(0);
    auto sq = [&](const Point& u, const Point& v) { return solve_segment(m, u, v, false).sqdist; };
    return ch.k * ((sq(x, base2) - sq(x, base)) + (sq(x2, base) - sq(x2, base2)));
}

struct EnergyDecomposition {
    double direct = 0.0;        ///< E(Phi_m)
    double sum_q = 0.0;         ///< sum over the q blocks of E(phi(q, p_i))
    double sum_q2 = 0.0;
    double interaction = 0.0;   ///< f(q, p_{m/2 - 1}, q', p_{m - 1})
    double decomposed = 0.0;    ///< m (sum_q + sum_q2 + interaction)

    double relative_error() const { return std::abs(direct - decomposed) / std::max(std::abs(direct), 1e-300); }
};

/// Both sides of the splicing identity. The second block boundary of the
/// loop closes the last q' block onto node 0 of the first q block, so the
/// interaction reads p_{m - 1} there.
inline EnergyDecomposition energy_decomposition(const HingstonChart& ch, const Vector& q, const Vector& q2,
                                                const std::vector<Vector>& p) {
    const int m = static_cast<int>(p.size());
    const int half = m / 2;
    EnergyDecomposition e;
    e.direct = energy(*ch.manifold, phi_m_assemble(ch, q, q2, p));
    for (int j = 0; j < m; ++j) (j < half ? e.sum_q : e.sum_q2) += ch.energy(j < half ? q : q2, p[j]);
    e.interaction = interaction(ch, q, p[half - 1], q2, p[m - 1]);
    e.decomposed = m * (e.sum_q + e.sum_q2 + e.interaction);
    return e;
}

/// Sampled monotone envelope of |f| as a function of dist(q, q'). The
/// envelope underestimates the true modulus between samples.
struct RhoEnvelope {
    std::vector<double> edges;  ///< upper bin edges, ascending
    std::vector<double> rho;    ///< running maximum up to each edge
    double lipschitz = 0.0;     ///< largest |f| / dist over the samples
    int samples = 0;

    /// Envelope value for distances up to t; -1 beyond the sampled range.
    double operator()(double t) const {
        if (t <= 0) return 0.0;
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (t <= edges[i]) return rho[i];
        return -1.0;
    }
    double range() const { return edges.empty() ? 0.0 : edges.back(); }
};

inline RhoEnvelope interaction_modulus(const HingstonChart& ch, int samples = 4000, int bins = 40,
                                       std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    RhoEnvelope env;
    const double tmax = 2.0 * ch.radius_q;
    env.edges.resize(bins);
    env.rho.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) env.edges[b] = tmax * (b + 1) / bins;
    std::vector<double> bin_max(bins, 0.0);
    for (int s = 0; s < samples; ++s) {
        const Vector q = detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng);
        Vector q2 = detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng);
        if (s % 4 == 0) q2 = q;  // exercise the q = q' identity
        const Vector p = detail::random_in_ball(ch.bprime_dim, ch.radius_p, rng);
        const Vector p2 = detail::random_in_ball(ch.bprime_dim, ch.radius_p, rng);
        const double f = std::abs(interaction(ch, q, p, q2, p2));
        const double t = (ch.base_point(q) - ch.base_point(q2)).norm() > 0
                             ? ch.manifold->chart_distance(ch.base_point(q), ch.base_point(q2))
                             : 0.0;
        ++env.samples;
        if (t == 0.0) continue;
        if (t > 0) env.lipschitz = std::max(env.lipschitz, f / t);
        const int b = std::min(bins - 1, static_cast<int>(std::floor(t / tmax * bins)));
        bin_max[b] = std::max(bin_max[b], f);
    }
    double run = 0.0;
    for (int b = 0; b < bins; ++b) {
        run = std::max(run, bin_max[b]);
        env.rho[b] = run;
    }
    return env;
}

/// theta_s = (alpha_s, beta_s): q -> q +- s delta chi(q) e_1 with
/// chi(q) = clamp((r_q - |q|) / delta, 0, 1), pinned on the boundary.
struct SplittingHomotopy {
    double delta = 0.0;
    double radius_q = 0.0;

    double chi(const Vector& q) const { return std::clamp((radius_q - q.norm()) / delta, 0.0, 1.0); }
    Vector alpha(const Vector& q, double s) const {
        Vector out = q;
        out(0) += s * delta * chi(q);
        return out;
    }
    Vector beta(const Vector& q, double s) const {
        Vector out = q;
        out(0) -= s * delta * chi(q);
        return out;
    }
};

inline double m_bar(double eps, double mu) { return 2.0 * (eps / mu + 1.0); }

struct HomotopyBudget {
    double c = 0.0;
    double ell = 0.0;
    double eps0 = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    double mu = 0.0;
    double m_bar = 0.0;
    double rho_3delta = 0.0;
    std::string binding;  ///< which constraint limited delta
    int samples = 0;
    RhoEnvelope envelope;

    SplittingHomotopy homotopy(double radius_q) const { return {delta, radius_q}; }
};

/// Sampled check of the homotopy constraints: pinned boundary, separation
/// at most 3 delta, and at s = 1 one of the two images at least delta from q_*.
struct HomotopyCheck {
    bool identity_at_zero = true;
    bool boundary_pinned = true;
    bool separation = true;
    bool escapes = true;
    bool inside_ball = true;
    bool ok() const { return identity_at_zero && boundary_pinned && separation && escapes && inside_ball; }
};

inline HomotopyCheck check_homotopy(const SplittingHomotopy& h, int dim, int samples, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    HomotopyCheck c;
    const double tol = 1e-12;
    for (int i = 0; i < samples; ++i) {
        const Vector q = detail::random_in_ball(dim, h.radius_q, rng);
        const Vector qb = detail::random_on_sphere(dim, h.radius_q, rng);
        c.identity_at_zero = c.identity_at_zero && (h.alpha(q, 0) - q).norm() <= tol && (h.beta(q, 0) - q).norm() <= tol;
        for (double s : {0.25, 0.5, 1.0}) {
            c.boundary_pinned = c.boundary_pinned && (h.alpha(qb, s) - qb).norm() <= tol && (h.beta(qb, s) - qb).norm() <= tol;
            c.separation = c.separation && (h.alpha(q, s) - h.beta(q, s)).norm() <= 3 * h.delta + tol;
            c.inside_ball = c.inside_ball && h.alpha(q, s).norm() <= h.radius_q + tol && h.beta(q, s).norm() <= h.radius_q + tol;
        }
        c.escapes = c.escapes && std::max(h.alpha(q, 1).norm(), h.beta(q, 1).norm()) >= h.delta - tol;
    }
    return c;
}

namespace detail {

/// Sample of the boundary of Sigma_0 x B'.
inline std::pair<Vector, Vector> boundary_sample(const HingstonChart& ch, std::mt19937_64& rng) {
    const bool q_face = ch.bprime_dim == 0 || std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    if (q_face)
        return {random_on_sphere(ch.sigma_dim, ch.radius_q, rng), random_in_ball(ch.bprime_dim, ch.radius_p, rng)};
    return {random_in_ball(ch.sigma_dim, ch.radius_q, rng), random_on_sphere(ch.bprime_dim, ch.radius_p, rng)};
}

}  // namespace detail

/// eps0 = c - max E(phi) over sampled points of the boundary of the chart.
inline double boundary_margin(const HingstonChart& ch, int samples = 1000, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed + 17);
    double bmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        const auto [q, p] = detail::boundary_sample(ch, rng);
        bmax = std::max(bmax, ch.energy(q, p));
    }
    return ch.c - bmax;
}

/// Budget constants for a given eps: eps0 from the boundary maximum, the
/// largest delta <= r_q / 2 with rho(3 delta) < eps, mu from the maximum of
/// E(phi) away from q_*, and m_bar = 2 (eps / mu + 1).
inline HomotopyBudget budget(const HingstonChart& ch, const RhoEnvelope& env, double eps, int samples = 1000,
                             std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    HomotopyBudget b;
    b.c = ch.c;
    b.ell = std::sqrt(ch.c);
    b.eps = eps;
    b.samples = samples;
    b.envelope = env;
    b.eps0 = boundary_margin(ch, samples, seed);
    if (!(eps > 0 && eps < b.eps0))
        throw HypothesisError("budget: eps must lie in (0, eps0 = " + std::to_string(b.eps0) + ")");
    double delta = 0.5 * ch.radius_q;
    b.binding = "ball radius (r_q >= 2 delta)";
    for (; delta > 1e-12; delta *= 0.9) {
        if (3 * delta > env.range()) {
            b.binding = "envelope range";
            continue;
        }
        const double r = env(3 * delta);
        if (r >= 0 && r < eps) break;
        b.binding = "rho(3 delta) < eps";
    }
    if (!(delta > 1e-12) || env(3 * delta) < 0)
        throw UndecidedError("budget: envelope too coarse to certify rho(3 delta) < eps; refine sampling");
    b.delta = delta;
    b.rho_3delta = env(3 * delta);
    double far_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        Vector q = detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng);
        if (q.norm() < delta) q = q.normalized() * (delta + (ch.radius_q - delta) * q.norm() / delta);
        if (q.norm() < delta) continue;
        const Vector p = detail::random_in_ball(ch.bprime_dim, ch.radius_p, rng);
        far_max = std::max(far_max, ch.energy(q, p));
    }
    // The maximum away from q_* sits on the sphere |q| = delta.
    for (int i = 0; i < samples; ++i) {
        const Vector q = detail::random_on_sphere(ch.sigma_dim, delta, rng);
        const Vector p = detail::random_in_ball(ch.bprime_dim, ch.radius_p * (i % 2 ? 1.0 : 0.01), rng);
        far_max = std::max(far_max, ch.energy(q, p));
    }
    b.mu = ch.c - far_max;
    if (!(b.mu > 0)) throw HypothesisError("budget: E(phi) does not drop below c away from q_*");
    b.m_bar = m_bar(eps, b.mu);
    return b;
}

/// Scans eps over a grid of fractions of eps0 and keeps the budget with the
/// smallest m_bar. Small eps forces small delta, and mu shrinks like delta^2.
inline HomotopyBudget best_budget(const HingstonChart& ch, const RhoEnvelope& env, int grid = 19,
                                  int samples = 1000, std::uint64_t seed = 1) {
    const double eps0 = boundary_margin(ch, samples, seed);
    if (!(eps0 > 0)) throw HypothesisError("best_budget: boundary energy reaches c");
    std::optional<HomotopyBudget> best;
    for (int i = 1; i <= grid; ++i) {
        try {
            HomotopyBudget b = budget(ch, env, eps0 * i / (grid + 1), samples, seed);
            if (!best || b.m_bar < best->m_bar) best = b;
        } catch (const UndecidedError&) {
        } catch (const HypothesisError&) {
        }
    }
    if (!best) throw UndecidedError("best_budget: no eps on the grid admits a certified delta");
    return *best;
}

struct Witness {
    double value = -std::numeric_limits<double>::infinity();
    double s = 0.0;
    Vector q;
    std::vector<Vector> p;
};

struct CycleTrace {
    int m = 0;
    HomotopyBudget budget;
    int samples = 0;
    int s_steps = 0;
    Witness boundary;  ///< max over s and boundary samples of E(phi_{m,s})
    Witness final;     ///< max over samples of E(phi_{m,1})
    Witness overall;   ///< max over s and samples
    double bound_final = 0.0;    ///< m^2 c
    double bound_overall = 0.0;  ///< m^2 c + m eps
    bool boundary_ok = false;
    bool final_ok = false;
    bool overall_ok = false;
    HomotopyCheck homotopy;

    bool ok() const { return boundary_ok && final_ok && overall_ok && homotopy.ok(); }
};

inline bool is_odd_prime(int m) {
    if (m < 3 || m % 2 == 0) return false;
    for (int d = 3; d * d <= m; d += 2)
        if (m % d == 0) return false;
    return true;
}

/// Samples the deformation phi_{m,s}(q, p) = Phi_m(alpha_s(q), beta_s(q), p)
/// over U_m and records the boundary, final and overall maxima.
inline CycleTrace cycle_push(const HingstonChart& ch, const HomotopyBudget& b, int m, int samples = 2000,
                             int s_steps = 10, std::uint64_t seed = 1) {
    if (!is_odd_prime(m)) throw PreconditionError("cycle_push: m must be an odd prime");
    if (!(m > b.m_bar))
        throw PreconditionError("cycle_push: m = " + std::to_string(m) + " does not exceed the threshold m_bar = " +
                                std::to_string(b.m_bar));
    CycleTrace t;
    t.m = m;
    t.budget = b;
    t.samples = samples;
    t.s_steps = s_steps;
    t.bound_final = m * m * ch.c;
    t.bound_overall = m * m * ch.c + m * b.eps;
    const SplittingHomotopy h = b.homotopy(ch.radius_q);
    t.homotopy = check_homotopy(h, ch.sigma_dim, 1000, seed);

    std::mt19937_64 rng(seed);
    struct Sample {
        Vector q;
        std::vector<Vector> p;
        bool boundary;
    };
    std::vector<Sample> pts;
    for (int i = 0; i < samples; ++i) {
        Sample sm{detail::random_in_ball(ch.sigma_dim, ch.radius_q, rng), {}, i % 2 == 1};
        for (int j = 0; j < m; ++j) sm.p.push_back(detail::random_in_ball(ch.bprime_dim, ch.radius_p, rng));
        if (i % 8 == 0) {  // near the centre, where the energy is largest
            sm.q *= 0.05;
            for (auto& p : sm.p) p *= 0.05;
        }
        if (sm.boundary) {
            const int j = std::uniform_int_distribution<int>(0, m - 1)(rng);
            auto [qb, pb] = detail::boundary_sample(ch, rng);
            if (pb.size() > 0 && pb.norm() >= ch.radius_p * (1 - 1e-12)) sm.p[j] = pb;
            else sm.q = qb;
        }
        pts.push_back(std::move(sm));
    }
    auto evaluate = [&](const Sample& sm, double s) {
        return energy(*ch.manifold, phi_m_assemble(ch, h.alpha(sm.q, s), h.beta(sm.q, s), sm.p));
    };
    auto record = [](Witness& w, double v, double s, const Vector& q, const std::vector<Vector>& p) {
        if (v > w.value) w = {v, s, q, p};
    };
    std::vector<std::vector<double>> values(pts.size(), std::vector<double>(s_steps + 1));
    parallel_for(static_cast<int>(pts.size()), [&](int i) {
        for (int si = 0; si <= s_steps; ++si) values[i][si] = evaluate(pts[i], double(si) / s_steps);
    });
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (int si = 0; si <= s_steps; ++si) {
            const double s = double(si) / s_steps, v = values[i][si];
            record(t.overall, v, s, pts[i].q, pts[i].p);
            if (pts[i].boundary) record(t.boundary, v, s, pts[i].q, pts[i].p);
            if (si == s_steps) record(t.final, v, s, pts[i].q, pts[i].p);
        }
    }
    // Oversample around the final-time argmax.
    for (int i = 0; i < 10 * 20; ++i) {
        Sample sm{t.final.q, t.final.p, false};
        sm.q += detail::random_in_ball(ch.sigma_dim, 0.02 * ch.radius_q, rng);
        if (sm.q.norm() > ch.radius_q) sm.q *= ch.radius_q / sm.q.norm();
        for (auto& p : sm.p) {
            p += detail::random_in_ball(ch.bprime_dim, 0.02 * ch.radius_p, rng);
            if (p.norm() > ch.radius_p) p *= ch.radius_p / p.norm();
        }
        const double v = evaluate(sm, 1.0);
        record(t.final, v, 1.0, sm.q, sm.p);
        record(t.overall, v, 1.0, sm.q, sm.p);
    }
    t.boundary_ok = t.boundary.value < t.bound_final;
    t.final_ok = t.final.value < t.bound_final;
    t.overall_ok = t.overall.value < t.bound_overall;
    return t;
}

/// dim U_m = d_m = ind(gamma^m) + nul(gamma^m) for every row of the table;
/// only meaningful when hypothesis (ii) holds.
inline bool dim_U_matches(const HingstonChart& ch, const std::vector<BottRow>& table) {
    for (const auto& r : table)
        if (ch.dim_U(r.m) != r.ind + r.nul) return false;
    return true;
}

/// (m l, m l + eps / (2 l)]
inline std::pair<double, double> length_window(int m, double eps, double ell) {
    return {m * ell, m * ell + eps / (2.0 * ell)};
}

/// Integers mu with lo < mu L <= hi, from the floor formula.
inline std::vector<long> admissible_multiples(double lo, double hi, double L) {
    std::vector<long> out;
    const long first = static_cast<long>(std::floor(lo / L)) + 1;
    const long last = static_cast<long>(std::floor(hi / L));
    for (long mu = first; mu <= last; ++mu)
        if (mu * L > lo && mu * L <= hi) out.push_back(mu);
    return out;
}

struct WindowRow {
    int m = 0;
    double lo = 0.0;
    double hi = 0.0;
    double candidate = std::numeric_limits<double>::quiet_NaN();  ///< NaN: window only
    std::vector<long> multiples;
};

struct PigeonholeCertificate {
    std::vector<WindowRow> rows;
    std::map<double, int> cutoff;  ///< per candidate: largest m whose window admits a multiple, 0 if none
    std::map<double, int> windows_served;
};

/// For each window (m l, m l + eps_m / (2 l)] and candidate length L, lists
/// the multiples of L inside the window.
inline PigeonholeCertificate pigeonhole_distinctness(const std::vector<int>& ms, const std::vector<double>& eps,
                                                     double ell, const std::vector<double>& candidates) {
    if (ms.size() != eps.size()) throw PreconditionError("pigeonhole_distinctness: one eps per window");
    PigeonholeCertificate cert;
    if (candidates.empty())
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const auto [lo, hi] = length_window(ms[i], eps[i], ell);
            cert.rows.push_back({ms[i], lo, hi});
        }
    for (double L : candidates) {
        if (!(L > 0)) throw PreconditionError("pigeonhole_distinctness: lengths must be positive");
        cert.cutoff[L] = 0;
        cert.windows_served[L] = 0;
        for (std::size_t i = 0; i < ms.size(); ++i) {
            const auto [lo, hi] = length_window(ms[i], eps[i], ell);
            WindowRow r{ms[i], lo, hi, L, admissible_multiples(lo, hi, L)};
            if (!r.multiples.empty()) {
                cert.cutoff[L] = std::max(cert.cutoff[L], ms[i]);
                ++cert.windows_served[L];
            }
            cert.rows.push_back(std::move(r));
        }
    }
    return cert;
}

namespace detail {

inline std::string shortest(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::string windows_csv(const PigeonholeCertificate& c) {
    std::ostringstream os;
    os << "m,window_lo,window_hi,candidate_L,admissible_multiples\n";
    for (const auto& r : c.rows) {
        os << r.m << ',' << detail::shortest(r.lo) << ',' << detail::shortest(r.hi) << ','
           << (std::isnan(r.candidate) ? std::string() : detail::shortest(r.candidate)) << ',';
        for (std::size_t i = 0; i < r.multiples.size(); ++i) os << (i ? ";" : "") << r.multiples[i];
        os << '\n';
    }
    return os.str();
}

}  // namespace geolab
