#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geolab/jacobi_index.hpp"

namespace geolab {

struct DescentOptions {
    int max_iterations = 20000;
    double tau_grad = 0.0;        ///< 0 selects 1e-9 k
    double newton_switch = 0.2;   ///< Newton is tried when |grad| < newton_switch * sqrt(E)
    double armijo = 1e-4;
    double kernel_filter = 1e-6;  ///< relative eigenvalue cutoff for the Newton pseudo-inverse
    bool record_trace = false;
};

struct DescentStep {
    int iteration;
    double energy;
    double gradient_norm;
    double step;
    bool newton;
};

enum class DescentStatus { critical, escaped };

struct DescentResult {
    DescentStatus status = DescentStatus::critical;
    BrokenLoop loop;
    double energy = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::vector<DescentStep> trace;
};

namespace detail {

inline BrokenLoop displaced(const BrokenLoop& loop, const LoopTangent& delta) {
    BrokenLoop out = loop;
    out.nodes += Eigen::Map<const Matrix>(delta.data(), loop.dim(), loop.k());
    return out;
}

}  // namespace detail

/// Extra term f(node 0) added to the energy, with chart derivatives.
struct NodePotential {
    std::function<double(const Point&)> value;
    std::function<Vector(const Point&)> differential;
    std::function<Matrix(const Point&)> hessian;
};

/// Adds a node-0 potential to energy derivatives computed for E alone.
inline void add_node_potential(EnergyDerivatives& d, const BrokenLoop& loop, const NodePotential& pot) {
    const int n = loop.dim();
    const Point x0 = loop.node(0);
    d.energy += pot.value(x0);
    d.differential.head(n) += pot.differential(x0);
    d.gradient = d.metric.ldlt().solve(d.differential);
    if (d.hessian.size() > 0) d.hessian.topLeftCorner(n, n) += pot.hessian(x0);
}

namespace detail {

/// Energy derivatives, or nullopt when the loop leaves the chart or a
/// segment stops being short.
inline std::optional<EnergyDerivatives> try_derivatives(const Manifold& m, const BrokenLoop& loop,
                                                        bool with_hessian,
                                                        const NodePotential* pot = nullptr) {
    try {
        EnergyDerivatives d = energy_derivatives(m, loop, with_hessian);
        if (pot) add_node_potential(d, loop, *pot);
        return d;
    } catch (const DomainError&) {
    } catch (const NotShortError&) {
    } catch (const ChartExitError&) {
    }
    return std::nullopt;
}

/// Newton step with the Hessian inverted on eigenvalues away from zero.
inline LoopTangent filtered_newton_step(const EnergyDerivatives& d, double filter) {
    const HessianSpectrum s = spectrum(d.hessian, d.metric, true);
    const double cut = filter * s.eigenvalues.cwiseAbs().maxCoeff();
    LoopTangent step = LoopTangent::Zero(d.differential.size());
    for (int i = 0; i < s.eigenvalues.size(); ++i) {
        const double l = s.eigenvalues(i);
        if (std::abs(l) <= cut) continue;
        step -= (s.eigenvectors.col(i).dot(d.differential) / l) * s.eigenvectors.col(i);
    }
    return step;
}

/// H^1-type preconditioner: the flat discrete Laplacian plus the node metric.
inline Matrix sobolev_preconditioner(const EnergyDerivatives& d, int k, int n) {
    Matrix P = d.metric;
    for (int i = 0; i < k; ++i) {
        const int j = (i + 1) % k;
        for (int c = 0; c < n; ++c) {
            P(i * n + c, i * n + c) += 2.0 * k;
            P(j * n + c, j * n + c) += 2.0 * k;
            P(i * n + c, j * n + c) -= 2.0 * k;
            P(j * n + c, i * n + c) -= 2.0 * k;
        }
    }
    return P;
}

}  // namespace detail

/// Preconditioned gradient flow with Armijo backtracking, followed by filtered Newton
/// iterations once the gradient is small. Stops when the gradient norm is
/// below tau_grad (critical) or the energy drops below the floor (escaped).
inline DescentResult descend(const Manifold& m, const BrokenLoop& seed, double floor,
                             const DescentOptions& opt = {}, const NodePotential* potential = nullptr) {
    const int k = seed.k();
    const double tau = opt.tau_grad > 0 ? opt.tau_grad : critical_threshold(k);
    DescentResult res;
    res.loop = seed;
    auto d = detail::try_derivatives(m, seed, false, potential);
    if (!d) throw PreconditionError("descend: seed is not a broken geodesic loop in the chart");
    double step = 1.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        res.energy = d->energy;
        res.gradient_norm = d->gradient_norm();
        res.iterations = it;
        if (res.energy < floor) {
            res.status = DescentStatus::escaped;
            return res;
        }
        if (res.gradient_norm <= tau) {
            res.status = DescentStatus::critical;
            return res;
        }
        bool moved = false;
        if (res.gradient_norm < opt.newton_switch * std::sqrt(res.energy)) {
            const auto dh = detail::try_derivatives(m, res.loop, true, potential);
            if (dh) {
                const LoopTangent dir = detail::filtered_newton_step(*dh, opt.kernel_filter);
                for (double lam = 1.0; lam > 1e-4 && !moved; lam *= 0.5) {
                    const BrokenLoop trial = detail::displaced(res.loop, lam * dir);
                    auto dt = detail::try_derivatives(m, trial, false, potential);
                    if (dt && dt->gradient_norm() < res.gradient_norm) {
                        res.loop = trial;
                        d = std::move(dt);
                        moved = true;
                        if (opt.record_trace) res.trace.push_back({it, d->energy, d->gradient_norm(), lam, true});
                    }
                }
            }
        }
        if (!moved) {
            const LoopTangent dir =
                -detail::sobolev_preconditioner(*d, k, seed.dim()).ldlt().solve(d->differential);
            const double slope = d->differential.dot(dir);
            for (int bt = 0; bt < 60 && !moved; ++bt, step *= 0.5) {
                const BrokenLoop trial = detail::displaced(res.loop, step * dir);
                auto dt = detail::try_derivatives(m, trial, false, potential);
                if (dt && dt->energy <= res.energy + opt.armijo * step * slope) {
                    res.loop = trial;
                    d = std::move(dt);
                    moved = true;
                    if (opt.record_trace) res.trace.push_back({it, d->energy, d->gradient_norm(), step, false});
                    step = std::min(1.0, 4.0 * step);
                }
            }
        }
        if (!moved) {
            std::ostringstream os;
            os << "descend: step size collapsed at iteration " << it << ", energy " << res.energy
               << ", |grad| " << res.gradient_norm;
            throw StagnationError(os.str());
        }
    }
    std::ostringstream os;
    os << "descend: no convergence after " << opt.max_iterations << " iterations, |grad| "
       << d->gradient_norm();
    throw StagnationError(os.str());
}

/// Largest chart distance between corresponding nodes of a and b after
/// aligning b to a by the circle action and, when allowed, reversal.
/// Loops with different node counts are never identified.
struct Alignment {
    double distance = std::numeric_limits<double>::infinity();
    bool reflected = false;
    double shift = 0.0;
};

namespace detail {

inline BrokenLoop reversed(const BrokenLoop& loop) {
    BrokenLoop out = loop;
    const int k = loop.k();
    for (int i = 0; i < k; ++i) out.nodes.col(i) = loop.nodes.col((k - i) % k);
    return out;
}

inline double node_distance(const Manifold& m, const BrokenLoop& a, const BrokenLoop& b) {
    double worst = 0.0;
    for (int i = 0; i < a.k(); ++i) worst = std::max(worst, m.chart_distance(a.node(i), b.node(i)));
    return worst;
}

}  // namespace detail

inline Alignment align(const Manifold& m, const BrokenLoop& a, const BrokenLoop& b, bool allow_reflection = true) {
    Alignment best;
    if (a.k() != b.k() || a.dim() != b.dim()) return best;
    const int k = a.k();
    const Point a0 = a.node(0);
    for (int refl = 0; refl < (allow_reflection ? 2 : 1); ++refl) {
        const BrokenLoop c = refl ? detail::reversed(b) : b;
        // Segment whose nodes bracket a's node 0 most closely.
        int j0 = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
            const double dj = m.chart_distance(a0, c.node(j));
            if (dj < dmin) {
                dmin = dj;
                j0 = j;
            }
        }
        for (int j : {(j0 + k - 1) % k, j0}) {
            double lo = 0.0, hi = 1.0;
            const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
            auto f = [&](double t) {
                try {
                    return m.chart_distance(a0, point_on_segment(m, c.node(j), c.node(j + 1), t));
                } catch (const Error&) {
                    return std::numeric_limits<double>::infinity();
                }
            };
            double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
            double f1 = f(x1), f2 = f(x2);
            for (int it = 0; it < 60; ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - phi * (hi - lo);
                    f1 = f(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + phi * (hi - lo);
                    f2 = f(x2);
                }
            }
            const double s = (j + 0.5 * (lo + hi)) / k;
            try {
                const double dist = detail::node_distance(m, a, rotate(m, c, s));
                if (dist < best.distance) best = {dist, refl == 1, s};
            } catch (const Error&) {
            }
        }
    }
    return best;
}

/// Loop sweeping `wraps` times along periodic coordinate `coord` from base.
inline BrokenLoop periodic_sweep_seed(const Manifold& m, const Point& base, int coord, int wraps, int k) {
    const double period = m.periods()(coord);
    if (!(period > 0)) throw PreconditionError("periodic_sweep_seed: coordinate is not periodic");
    Matrix nodes(base.size(), k);
    for (int i = 0; i < k; ++i) {
        nodes.col(i) = base;
        nodes(coord, i) += period * wraps * double(i) / k;
    }
    return BrokenLoop(nodes);
}

/// Small closed polygon around a random point of the region radial <= radial_max.
inline BrokenLoop random_seed(const Manifold& m, std::mt19937_64& rng, double radial_max, int k, double size) {
    const int n = m.dimension();
    const Box box = m.sampling_box(radial_max);
    for (int tries = 0; tries < 10000; ++tries) {
        Point c(n);
        for (int i = 0; i < n; ++i) c(i) = std::uniform_real_distribution<double>(box.lo(i), box.hi(i))(rng);
        if (!m.in_domain(c) || m.radial(c) > radial_max) continue;
        std::normal_distribution<double> normal;
        Vector a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a(i) = normal(rng);
            b(i) = normal(rng);
        }
        a.normalize();
        b -= b.dot(a) * a;
        if (b.norm() < 1e-6) continue;
        b.normalize();
        Matrix nodes(n, k);
        bool ok = true;
        for (int i = 0; i < k && ok; ++i) {
            const double t = 2 * M_PI * i / k;
            nodes.col(i) = c + size * (std::cos(t) * a + std::sin(t) * b);
            ok = m.in_domain(nodes.col(i));
        }
        if (ok) return BrokenLoop(nodes);
    }
    throw PreconditionError("random_seed: could not place a seed in the region");
}

inline BrokenLoop perturbed(const BrokenLoop& loop, double noise, std::mt19937_64& rng) {
    BrokenLoop out = loop;
    std::normal_distribution<double> normal(0.0, noise);
    for (Eigen::Index i = 0; i < out.nodes.size(); ++i) out.nodes.data()[i] += normal(rng);
    return out;
}

enum class Isolation { yes, no, undecided };

inline const char* to_string(Isolation i) {
    switch (i) {
        case Isolation::yes: return "yes";
        case Isolation::no: return "no";
        default: return "undecided";
    }
}

enum class HomologyCase { nondegenerate, maximal_degree, unclassified };

inline const char* to_string(HomologyCase c) {
    switch (c) {
        case HomologyCase::nondegenerate: return "nondegenerate";
        case HomologyCase::maximal_degree: return "maximal-degree";
        default: return "unclassified";
    }
}

/// Result of sampling a ball in the nonpositive directions.
struct WitnessBall {
    bool certified = false;
    bool mixed_signs = false;
    double radius = 0.0;
    double margin = 0.0;  ///< -(largest f - c) over the samples
    int samples = 0;
};

struct LocalHomologyCertificate {
    HomologyCase kind = HomologyCase::unclassified;
    int degree = -1;  ///< degree where the local homology is concentrated
    std::map<int, int> mu_sign;  ///< only for m with nul(g^m) = nul(g)
    std::vector<int> inclusion_injectivity;
    WitnessBall ball;
    bool hypothesis_i_star = false;  ///< certified degree equals avg index + dim - 1
    bool hypothesis_ii = false;
    std::string note;
};

struct CriticalCircle {
    BrokenLoop representative;
    double energy = 0.0;
    double length = 0.0;
    double gradient_norm = 0.0;
    IndexReport indices;
    bool indices_decided = false;
    int multiplicity = 1;
    Isolation isolated = Isolation::undecided;
    LocalHomologyCertificate certificate;
};

/// Samples f on spheres of radius r, r/2, r/4 in the span of the basis
/// (G-orthonormal columns); certified when f < c - tau on all samples.
inline WitnessBall witness_ball(const std::function<double(const Vector&)>& f, double c, int dim,
                                double radius, double tau, std::mt19937_64& rng, int per_dim = 200) {
    WitnessBall w;
    w.radius = radius;
    if (dim == 0) {
        w.certified = true;
        w.margin = std::numeric_limits<double>::infinity();
        return w;
    }
    std::normal_distribution<double> normal;
    double worst = -std::numeric_limits<double>::infinity();
    bool below = false;
    const int total = per_dim * dim;
    for (int s = 0; s < total; ++s) {
        Vector u(dim);
        for (int i = 0; i < dim; ++i) u(i) = normal(rng);
        u.normalize();
        const double r = radius * std::pow(0.5, s % 3);
        double val;
        try {
            val = f(r * u) - c;
        } catch (const Error&) {
            val = std::numeric_limits<double>::infinity();
        }
        worst = std::max(worst, val);
        below = below || val < 0.0;
        ++w.samples;
    }
    w.margin = -worst;
    w.certified = worst <= -tau;
    w.mixed_signs = below && worst > 0.0;
    return w;
}

struct SearchOptions {
    double energy_cap = 100.0;
    double energy_floor = 1e-3;
    double tau_dedup = 0.0;  ///< 0 selects 1e-5 l / k
    DescentOptions descent{};
    bool classify = true;    ///< run isolation test and certificate
    std::vector<int> primes{2, 3, 5, 7, 11};
    int m_max = 12;
    double probe_radius = 0.0;  ///< per-node displacement; 0 selects 0.02 l / (2 pi)
    double delta_probe = 0.0;   ///< 0 selects 1e-3 * gap * shell radius
    double tau_ball = 1e-12;
    std::uint64_t seed = 1;
};

inline double dedup_tolerance(const SearchOptions& opt, double length, int k) {
    return opt.tau_dedup > 0 ? opt.tau_dedup : 1e-5 * length / k;
}

namespace detail {

/// G-orthonormal basis of the kernel with the circle direction removed.
inline Matrix slice_null_directions(const HessianSpectrum& s, const LoopTangent& velocity) {
    const Matrix K = s.kernel_basis();
    const Matrix& G = s.metric;
    const LoopTangent v = velocity / std::sqrt(velocity.dot(G * velocity));
    std::vector<Vector> out;
    for (int c = 0; c < K.cols(); ++c) {
        Vector w = K.col(c);
        for (int pass = 0; pass < 2; ++pass) {
            w -= v.dot(G * w) * v;
            for (const auto& b : out) w -= b.dot(G * w) * b;
        }
        const double len = std::sqrt(w.dot(G * w));
        if (len > 1e-6) out.push_back(w / len);
    }
    // The velocity itself lies in the kernel, so at most dim K - 1 survive.
    while (static_cast<int>(out.size()) > K.cols() - 1) out.pop_back();
    Matrix B(G.rows(), out.size());
    for (std::size_t i = 0; i < out.size(); ++i) B.col(i) = out[i];
    return B;
}

}  // namespace detail

/// Searches for critical points of E restricted to a slice through the
/// circle: a distinct critical loop near a null direction gives "no", a
/// gradient floor on a sampled shell gives "yes".
inline Isolation isolation_test(const Manifold& m, const CriticalCircle& circle, const SearchOptions& opt = {}) {
    const BrokenLoop& loop = circle.representative;
    const int k = loop.k();
    const double ell = circle.length;
    const double per_node = opt.probe_radius > 0 ? opt.probe_radius : 0.02 * ell / (2 * M_PI);
    const double r = per_node * std::sqrt(double(k));
    const double tau = dedup_tolerance(opt, ell, k);
    EnergyDerivatives d0;
    HessianSpectrum s;
    try {
        d0 = energy_derivatives(m, loop, true);
        s = spectrum(d0.hessian, d0.metric, true);
    } catch (const Error&) {
        return Isolation::undecided;
    }
    if (!s.decided()) return Isolation::undecided;
    const LoopTangent vel = discrete_velocity(m, loop);
    const Matrix null_dirs = detail::slice_null_directions(s, vel);
    DescentOptions newton = opt.descent;
    newton.newton_switch = 1e9;
    newton.max_iterations = 200;
    for (int c = 0; c < null_dirs.cols(); ++c) {
        for (double sign : {1.0, -1.0}) {
            try {
                const BrokenLoop start = detail::displaced(loop, sign * r * null_dirs.col(c));
                const DescentResult res = descend(m, start, 0.0, newton);
                if (std::abs(res.energy - circle.energy) > 1e-6 * circle.energy) continue;
                const Alignment a = align(m, loop, res.loop);
                if (a.distance > tau && a.distance <= 4 * r) return Isolation::no;
            } catch (const Error&) {
            }
        }
    }
    // Gradient floor on a shell in the slice orthogonal to the circle.
    const double gap = s.gap();
    const double floor = opt.delta_probe > 0 ? opt.delta_probe : 1e-3 * gap * r;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    const Matrix& G = d0.metric;
    const LoopTangent vhat = vel / std::sqrt(vel.dot(G * vel));
    double weakest = std::numeric_limits<double>::infinity();
    for (int sample = 0; sample < 64; ++sample) {
        LoopTangent u(vel.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
        u -= vhat.dot(G * u) * vhat;
        u /= std::sqrt(u.dot(G * u));
        const auto d = detail::try_derivatives(m, detail::displaced(loop, r * u), false);
        if (!d) return Isolation::undecided;
        LoopTangent g = d->gradient;
        g -= vhat.dot(G * g) * vhat;
        weakest = std::min(weakest, std::sqrt(g.dot(d->metric * g)));
    }
    return weakest >= floor ? Isolation::yes : Isolation::undecided;
}

/// Fills the local homology certificate of a circle from its index data.
inline LocalHomologyCertificate certify_local_homology(const Manifold& m, const CriticalCircle& circle,
                                                       const BottData& bott, const SearchOptions& opt = {}) {
    LocalHomologyCertificate cert;
    const int dim = m.dimension();
    const IterationCertificate it = iteration_inequalities_check(bott.table, bott.average_index, dim, opt.primes);
    cert.hypothesis_ii = it.hypothesis_ii;
    const int ind1 = bott.table.at(0).ind, nul1 = bott.table.at(0).nul;
    for (const auto& row : bott.table) {
        if (row.nul == nul1) cert.mu_sign[row.m] = ((row.ind - ind1) % 2 == 0) ? 1 : -1;
    }
    const MonodromyMatrix mono = monodromy(m, circle.representative);
    for (int p : opt.primes) {
        if (p < 3 || p % 2 == 0) continue;
        bool clear = true;
        for (int j = 1; j < p && clear; ++j) clear = bott_N(mono, root_of_unity(j, p)) == 0;
        if (clear) cert.inclusion_injectivity.push_back(p);
    }
    if (circle.isolated != Isolation::yes) {
        cert.note = "circle not certified isolated";
        return cert;
    }
    if (circle.multiplicity != 1) cert.note = "iterated closed geodesic";
    const IndexReport& r = circle.indices;
    if (r.nul == 0) {
        cert.kind = HomologyCase::nondegenerate;
        cert.degree = r.ind;
    } else {
        const BrokenLoop& loop = circle.representative;
        const EnergyDerivatives d = energy_derivatives(m, loop, true);
        const HessianSpectrum s = spectrum(d.hessian, d.metric, true);
        const LoopTangent vel = discrete_velocity(m, loop);
        const Matrix null_dirs = detail::slice_null_directions(s, vel);
        std::vector<Vector> cols;
        for (int i = 0; i < s.eigenvalues.size(); ++i)
            if (s.eigenvalues(i) < -s.tau0) cols.push_back(s.eigenvectors.col(i));
        for (int c = 0; c < null_dirs.cols(); ++c) cols.push_back(null_dirs.col(c));
        Matrix B(d.metric.rows(), cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) B.col(c) = cols[c];
        // Third-derivative scale from the change of the Hessian along B.
        double third = 1e-12;
        const double h = 1e-4;
        for (int c = 0; c < B.cols(); ++c) {
            try {
                const Matrix Hp = energy_derivatives(m, detail::displaced(loop, h * B.col(c)), true).hessian;
                const Matrix Hm = energy_derivatives(m, detail::displaced(loop, -h * B.col(c)), true).hessian;
                third = std::max(third, (Hp - Hm).norm() / (2 * h));
            } catch (const Error&) {
            }
        }
        const double radius = 0.1 * std::sqrt(s.gap()) / third;
        std::mt19937_64 rng(opt.seed);
        auto f = [&](const Vector& y) { return energy(m, detail::displaced(loop, B * y)); };
        cert.ball = witness_ball(f, circle.energy, static_cast<int>(B.cols()), radius, opt.tau_ball, rng);
        if (cert.ball.certified) {
            cert.kind = HomologyCase::maximal_degree;
            cert.degree = r.ind + r.nul;
        } else {
            cert.note = cert.ball.mixed_signs ? "energy minus c changes sign on the witness ball"
                                              : "witness ball margin below tau_ball";
        }
    }
    if (cert.degree >= 0)
        cert.hypothesis_i_star =
            std::abs(cert.degree - (bott.average_index + dim - 1)) < 1e-9;
    return cert;
}

/// Recomputes the sign and prime predicates of a certificate from Bott data:
/// mu_sign against the parity of ind(g^m) - ind(g) over rows with
/// nul(g^m) = nul(g), and injectivity against the N-support.
inline bool certificate_consistent(const LocalHomologyCertificate& cert, const BottData& bott,
                                   const std::vector<int>& primes) {
    if (bott.table.empty()) return false;
    const int ind1 = bott.table.front().ind, nul1 = bott.table.front().nul;
    std::size_t expected = 0;
    for (const auto& row : bott.table) {
        if (row.nul != nul1) continue;
        ++expected;
        const auto it = cert.mu_sign.find(row.m);
        const int parity = (row.ind - ind1) % 2 == 0 ? 1 : -1;
        if (it == cert.mu_sign.end() || it->second != parity) return false;
    }
    if (expected != cert.mu_sign.size()) return false;
    const int m_max = bott.table.back().m;
    for (int p : primes) {
        if (p < 3 || p % 2 == 0 || p > m_max) continue;
        bool clear = true;
        for (const auto& [z, N] : bott.N_support)
            if (std::abs(z - Complex(1.0)) > 1e-9 && std::abs(std::pow(z, p) - Complex(1.0)) < 1e-9) clear = false;
        const bool listed = std::find(cert.inclusion_injectivity.begin(), cert.inclusion_injectivity.end(), p) !=
                            cert.inclusion_injectivity.end();
        if (clear != listed) return false;
    }
    return true;
}

inline bool loop_less(const BrokenLoop& a, const BrokenLoop& b) {
    return std::lexicographical_compare(a.nodes.data(), a.nodes.data() + a.nodes.size(), b.nodes.data(),
                                        b.nodes.data() + b.nodes.size());
}

struct SearchReport {
    std::vector<CriticalCircle> circles;
    int escaped = 0;
    int failed = 0;      ///< stagnation or chart failures
    int above_cap = 0;
    std::vector<std::string> failures;
};

/// Descends from every seed and merges the critical loops into circles,
/// identified modulo rotation and reversal.
inline SearchReport find_circles(const Manifold& m, const std::vector<BrokenLoop>& seeds,
                                 const SearchOptions& opt = {}) {
    SearchReport rep;
    std::vector<std::optional<DescentResult>> results(seeds.size());
    std::vector<std::string> errors(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), [&](int i) {
        try {
            results[i] = descend(m, seeds[i], opt.energy_floor, opt.descent);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    std::vector<DescentResult> critical;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!results[i]) {
            ++rep.failed;
            rep.failures.push_back(errors[i]);
            continue;
        }
        if (results[i]->status == DescentStatus::escaped) {
            ++rep.escaped;
            continue;
        }
        if (results[i]->energy > opt.energy_cap) {
            ++rep.above_cap;
            continue;
        }
        critical.push_back(std::move(*results[i]));
    }
    std::sort(critical.begin(), critical.end(), [](const DescentResult& a, const DescentResult& b) {
        if (a.energy != b.energy) return a.energy < b.energy;
        return loop_less(a.loop, b.loop);
    });
    for (auto& c : critical) {
        const double ell = std::sqrt(c.energy);
        const double tau = dedup_tolerance(opt, ell, c.loop.k());
        bool dup = false;
        for (const auto& known : rep.circles) {
            if (std::abs(known.energy - c.energy) > 1e-6 * std::max(1.0, c.energy)) continue;
            if (align(m, known.representative, c.loop).distance <= tau) {
                dup = true;
                break;
            }
        }
        if (dup) continue;
        CriticalCircle circle;
        circle.representative = c.loop;
        circle.energy = c.energy;
        circle.length = ell;
        circle.gradient_norm = c.gradient_norm;
        circle.multiplicity = multiplicity(m, c.loop);
        rep.circles.push_back(std::move(circle));
    }
    for (auto& circle : rep.circles) {
        try {
            circle.indices = indices(m, circle.representative);
            circle.indices_decided = true;
        } catch (const UndecidedError&) {
        }
        if (!opt.classify) continue;
        circle.isolated = isolation_test(m, circle, opt);
        if (circle.isolated == Isolation::yes && circle.indices_decided) {
            try {
                const BottData bott = bott_data(m, circle.representative, {opt.m_max, false});
                circle.indices.average_index = bott.average_index;
                circle.certificate = certify_local_homology(m, circle, bott, opt);
            } catch (const Error& e) {
                circle.certificate.note = e.what();
            }
        } else {
            circle.certificate.note = "circle not certified isolated";
        }
    }
    return rep;
}

inline std::string circles_csv(const std::vector<CriticalCircle>& circles) {
    std::ostringstream os;
    os.precision(17);
    os << "energy,length,ind,nul,mult,isolated,case\n";
    for (const auto& c : circles) {
        os << c.energy << ',' << c.length << ',';
        if (c.indices_decided) os << c.indices.ind << ',' << c.indices.nul;
        else os << "undecided,undecided";
        os << ',' << c.multiplicity << ',' << to_string(c.isolated) << ',' << to_string(c.certificate.kind) << '\n';
    }
    return os.str();
}

}  // namespace geolab
