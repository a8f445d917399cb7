#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "geolab/critical_search.hpp"

namespace geolab {

/// Penalties f_alpha(p) = A_alpha h((radial(p) - R_alpha) / w) on the
/// exhaustion radii R_alpha, with h(t) = 0 for t <= 0, t^3 on [0, 1] and
/// 1 + 3(t - 1) + 3(t - 1)^2 beyond. h is C^2, nondecreasing and proper, so
/// f_alpha vanishes on K_alpha, is positive outside it and decreases in alpha.
class PenaltySchedule {
public:
    PenaltySchedule(std::vector<double> radii, std::vector<double> amplitudes, double width)
        : radii_(std::move(radii)), amplitudes_(std::move(amplitudes)), width_(width) {
        if (radii_.empty()) throw ConfigError("penalty schedule needs at least one radius");
        for (std::size_t i = 1; i < radii_.size(); ++i)
            if (!(radii_[i] > radii_[i - 1])) throw ConfigError("penalty radii must be strictly increasing");
        if (amplitudes_.size() == 1) amplitudes_.assign(radii_.size(), amplitudes_.front());
        if (amplitudes_.size() != radii_.size())
            throw ConfigError("penalty amplitudes must be one value or one per radius");
        for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
            if (!(amplitudes_[i] > 0)) throw ConfigError("penalty amplitudes must be positive");
            if (i > 0 && amplitudes_[i] > amplitudes_[i - 1])
                throw ConfigError("penalty amplitudes must be nonincreasing");
        }
        if (!(width_ > 0)) throw ConfigError("penalty width must be positive");
    }

    /// Schedule on the manifold's exhaustion with a common width equal to
    /// the smallest shell spacing (1 for a single radius).
    static PenaltySchedule on_exhaustion(const Manifold& m, double amplitude = 1.0) {
        const auto& r = m.exhaustion();
        double w = 1.0;
        for (std::size_t i = 1; i < r.size(); ++i) w = i == 1 ? r[1] - r[0] : std::min(w, r[i] - r[i - 1]);
        return PenaltySchedule(r, {amplitude}, w);
    }

    int size() const { return static_cast<int>(radii_.size()); }
    double radius(int alpha) const { return radii_.at(alpha); }
    double amplitude(int alpha) const { return amplitudes_.at(alpha); }
    double width() const { return width_; }

    static double h(double t) {
        if (t <= 0) return 0.0;
        if (t <= 1) return t * t * t;
        const double s = t - 1;
        return 1 + 3 * s + 3 * s * s;
    }
    static double dh(double t) {
        if (t <= 0) return 0.0;
        if (t <= 1) return 3 * t * t;
        return 3 + 6 * (t - 1);
    }
    static double d2h(double t) {
        if (t <= 0) return 0.0;
        if (t <= 1) return 6 * t;
        return 6.0;
    }

    double value(const Manifold& m, int alpha, const Point& p) const {
        return amplitude(alpha) * h((m.radial(p) - radius(alpha)) / width_);
    }

    /// Chart differential; the radial function is differentiated centrally.
    Vector differential(const Manifold& m, int alpha, const Point& p) const {
        const double t = (m.radial(p) - radius(alpha)) / width_;
        const Vector dr = radial_gradient(m, p);
        return amplitude(alpha) * dh(t) / width_ * dr;
    }

    Vector gradient(const Manifold& m, int alpha, const Point& p) const {
        return m.metric(p).ldlt().solve(differential(m, alpha, p));
    }

    Matrix hessian(const Manifold& m, int alpha, const Point& p) const {
        const int n = m.dimension();
        const double step = 1e-5;
        Matrix H(n, n);
        for (int c = 0; c < n; ++c) {
            const Vector e = Vector::Unit(n, c) * step;
            H.col(c) = (differential(m, alpha, p + e) - differential(m, alpha, p - e)) / (2 * step);
        }
        return 0.5 * (H + H.transpose());
    }

    bool in_support(const Manifold& m, int alpha, const Point& p) const { return m.radial(p) >= radius(alpha); }

    NodePotential potential(const Manifold& m, int alpha) const {
        return {[this, &m, alpha](const Point& p) { return value(m, alpha, p); },
                [this, &m, alpha](const Point& p) { return differential(m, alpha, p); },
                [this, &m, alpha](const Point& p) { return hessian(m, alpha, p); }};
    }

    /// Smallest alpha whose support misses every sampled point of the set.
    int vanishing_index(const Manifold& m, const std::vector<Point>& compact) const {
        double rmax = 0.0;
        for (const auto& p : compact) rmax = std::max(rmax, m.radial(p));
        for (int a = 0; a < size(); ++a)
            if (radius(a) > rmax) return a;
        return -1;
    }

    std::map<std::string, double> metadata() const {
        std::map<std::string, double> out{{"width", width_}};
        for (int a = 0; a < size(); ++a) {
            out["radius_" + std::to_string(a)] = radii_[a];
            out["amplitude_" + std::to_string(a)] = amplitudes_[a];
        }
        return out;
    }

private:
    static Vector radial_gradient(const Manifold& m, const Point& p) {
        const int n = m.dimension();
        const double step = 1e-6;
        Vector g(n);
        for (int c = 0; c < n; ++c) {
            const Vector e = Vector::Unit(n, c) * step;
            g(c) = (m.radial(p + e) - m.radial(p - e)) / (2 * step);
        }
        return g;
    }

    std::vector<double> radii_;
    std::vector<double> amplitudes_;
    double width_;
};

inline double penalized_energy(const Manifold& m, const PenaltySchedule& f, int alpha, const BrokenLoop& loop) {
    return energy(m, loop) + f.value(m, alpha, loop.node(0));
}

inline EnergyDerivatives penalized_derivatives(const Manifold& m, const PenaltySchedule& f, int alpha,
                                               const BrokenLoop& loop, bool with_hessian) {
    EnergyDerivatives d = energy_derivatives(m, loop, with_hessian);
    add_node_potential(d, loop, f.potential(m, alpha));
    return d;
}

inline LoopTangent penalized_gradient(const Manifold& m, const PenaltySchedule& f, int alpha,
                                      const BrokenLoop& loop) {
    return penalized_derivatives(m, f, alpha, loop, false).gradient;
}

enum class CriticalKind { genuine, artifact };

inline const char* to_string(CriticalKind k) { return k == CriticalKind::genuine ? "genuine" : "artifact"; }

struct PenalizedCriticalPoint {
    BrokenLoop loop;
    int alpha = 0;
    CriticalKind kind = CriticalKind::artifact;
    double energy = 0.0;     ///< E_alpha
    double jump_defect = 0.0;
    bool base_in_support = false;
    int ind = 0;
    int nul = 0;             ///< full kernel dimension of the E_alpha Hessian
    bool indices_decided = false;
};

/// |2 (v(0-) - v(0+)) + grad f_alpha|_g at node 0. Criticality of
/// E + f_alpha(node 0) in the node-0 direction is exactly its vanishing.
inline double jump_defect(const Manifold& m, const PenaltySchedule& f, int alpha, const BrokenLoop& loop) {
    const int k = loop.k();
    const Point x0 = loop.node(0);
    const SegmentSolution first = solve_segment(m, x0, loop.node(1), false);
    const SegmentSolution last = solve_segment(m, loop.node(k - 1), x0, false);
    const Vector jump = 2.0 * k * (last.w1 - first.w0) + f.gradient(m, alpha, x0);
    return std::sqrt(jump.dot(m.metric(x0) * jump));
}

inline PenalizedCriticalPoint classify_penalized_critical(const Manifold& m, const PenaltySchedule& f, int alpha,
                                                          const BrokenLoop& loop, double tau_grad = 0.0) {
    const double tau = tau_grad > 0 ? tau_grad : critical_threshold(loop.k());
    const EnergyDerivatives d = penalized_derivatives(m, f, alpha, loop, true);
    if (!(d.gradient_norm() <= tau))
        throw PreconditionError("classify_penalized_critical: penalized gradient " +
                                std::to_string(d.gradient_norm()) + " above tau_grad");
    PenalizedCriticalPoint pt;
    pt.loop = loop;
    pt.alpha = alpha;
    pt.energy = d.energy;
    pt.jump_defect = jump_defect(m, f, alpha, loop);
    if (pt.jump_defect > 10 * tau)
        throw AccuracyError("classify_penalized_critical: jump defect " + std::to_string(pt.jump_defect) +
                            " inconsistent with a critical point");
    pt.base_in_support = f.in_support(m, alpha, loop.node(0));
    pt.kind = pt.base_in_support ? CriticalKind::artifact : CriticalKind::genuine;
    const HessianSpectrum s = spectrum(d.hessian, d.metric, false);
    pt.ind = s.negative_count();
    pt.nul = s.kernel_dimension();
    pt.indices_decided = s.decided();
    return pt;
}

struct PenalizedSearchReport {
    std::vector<PenalizedCriticalPoint> genuine;
    std::vector<PenalizedCriticalPoint> artifacts;
    int escaped = 0;
    int failed = 0;
    int above_cap = 0;
    std::vector<std::string> failures;
};

/// Multi-start descent on E_alpha. Genuine points are deduplicated up to
/// rotation and reversal; artifacts only node by node, since node 0 is marked.
inline PenalizedSearchReport penalized_search(const Manifold& m, const PenaltySchedule& f, int alpha,
                                              const std::vector<BrokenLoop>& seeds, const SearchOptions& opt = {}) {
    PenalizedSearchReport rep;
    const NodePotential pot = f.potential(m, alpha);
    std::vector<std::optional<PenalizedCriticalPoint>> found(seeds.size());
    std::vector<std::string> errors(seeds.size());
    std::vector<char> escaped(seeds.size(), 0), capped(seeds.size(), 0);
    parallel_for(static_cast<int>(seeds.size()), [&](int i) {
        try {
            const DescentResult r = descend(m, seeds[i], opt.energy_floor, opt.descent, &pot);
            if (r.status == DescentStatus::escaped) {
                escaped[i] = 1;
                return;
            }
            if (r.energy > opt.energy_cap) {
                capped[i] = 1;
                return;
            }
            found[i] = classify_penalized_critical(m, f, alpha, r.loop, opt.descent.tau_grad);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    std::vector<PenalizedCriticalPoint> pts;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (escaped[i]) ++rep.escaped;
        else if (capped[i]) ++rep.above_cap;
        else if (!found[i]) {
            ++rep.failed;
            rep.failures.push_back(errors[i]);
        } else pts.push_back(std::move(*found[i]));
    }
    std::sort(pts.begin(), pts.end(), [](const PenalizedCriticalPoint& a, const PenalizedCriticalPoint& b) {
        if (a.energy != b.energy) return a.energy < b.energy;
        return loop_less(a.loop, b.loop);
    });
    for (auto& p : pts) {
        const double tau = dedup_tolerance(opt, std::sqrt(p.energy), p.loop.k());
        auto& bucket = p.kind == CriticalKind::genuine ? rep.genuine : rep.artifacts;
        bool dup = false;
        for (const auto& q : bucket) {
            if (std::abs(q.energy - p.energy) > 1e-6 * std::max(1.0, p.energy)) continue;
            const double d = p.kind == CriticalKind::genuine ? align(m, q.loop, p.loop).distance
                                                              : detail::node_distance(m, q.loop, p.loop);
            if (d <= tau) {
                dup = true;
                break;
            }
        }
        if (!dup) bucket.push_back(std::move(p));
    }
    return rep;
}

/// ind + nul of E_alpha at an artifact, compared against dim M.
struct ArtifactFilter {
    bool applicable = false;  ///< artifact with energy <= (2 l)^2
    bool pass = false;
    int ind_plus_nul = 0;
    int bound = 0;
    std::string note;
};

inline ArtifactFilter artifact_index_filter(const PenalizedCriticalPoint& p, double ell, int dim) {
    ArtifactFilter f;
    f.bound = dim;
    f.ind_plus_nul = p.ind + p.nul;
    f.applicable = p.kind == CriticalKind::artifact && p.energy <= 4 * ell * ell;
    if (!f.applicable) {
        f.pass = true;
        f.note = "not an artifact within the energy budget";
        return f;
    }
    f.pass = f.ind_plus_nul <= dim;
    if (!f.pass) f.note = "index bound violated: alpha too small for the conjugate point condition";
    else if (!p.indices_decided) f.note = "spectral gap small; nullity may be overcounted";
    return f;
}

struct MorseTally {
    int degree = 0;
    bool bounded = false;  ///< upper_bound is meaningful
    int upper_bound = 0;   ///< on rank H_d of the sublevel pair
    int geodesic_circles = 0;
    std::map<int, int> artifact_count_by_index;
    std::vector<std::string> notes;
};

/// Rank over Z/2 of the local homology of a critical circle in degree d,
/// or -1 when the certificate does not determine it. A non-iterated circle
/// whose point homology is Z/2 in degree e has circle homology in e, e + 1.
inline int circle_local_rank(const CriticalCircle& c, int d) {
    if (c.certificate.kind == HomologyCase::unclassified || c.multiplicity != 1) return -1;
    const int e = c.certificate.degree;
    return (d == e || d == e + 1) ? 1 : 0;
}

/// Morse inequality bookkeeping in the energy window (a, b). The enumeration
/// of critical data is best effort, as found by the search.
inline MorseTally morse_tally(const std::vector<CriticalCircle>& circles,
                              const std::vector<PenalizedCriticalPoint>& artifacts, double a, double b, int d,
                              int dim) {
    MorseTally t;
    t.degree = d;
    t.bounded = d > dim;
    if (!t.bounded) t.notes.push_back("degree <= dim M: artifacts may contribute");
    for (const auto& c : circles) {
        if (!(c.energy > a && c.energy < b)) continue;
        ++t.geodesic_circles;
        const int r = circle_local_rank(c, d);
        if (r < 0) {
            t.bounded = false;
            t.notes.push_back("circle at energy " + std::to_string(c.energy) + " is " +
                              (c.isolated == Isolation::yes ? "unclassified" : "not certified isolated"));
        } else {
            t.upper_bound += r;
        }
    }
    for (const auto& p : artifacts) {
        if (p.kind != CriticalKind::artifact || !(p.energy > a && p.energy < b)) continue;
        ++t.artifact_count_by_index[p.ind];
        if (d > dim && p.ind + p.nul > dim) {
            t.bounded = false;
            t.notes.push_back("artifact violating the index bound in the window");
        }
    }
    if (!t.bounded) t.upper_bound = -1;
    return t;
}

inline std::string penalty_csv(const std::vector<PenalizedCriticalPoint>& pts) {
    std::ostringstream os;
    os.precision(17);
    os << "alpha,kind,energy,ind,nul,base_in_support\n";
    for (const auto& p : pts)
        os << p.alpha << ',' << to_string(p.kind) << ',' << p.energy << ',' << p.ind << ',' << p.nul << ','
           << (p.base_in_support ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace geolab
