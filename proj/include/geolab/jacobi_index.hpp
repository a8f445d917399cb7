#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geolab/loop_space.hpp"
#include "geolab/parallel.hpp"

namespace geolab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

/// Gradient threshold below which a broken loop counts as critical.
inline double critical_threshold(int k) { return 1e-9 * k; }

inline void require_critical(const Manifold& m, const BrokenLoop& loop, const char* who) {
    const EnergyDerivatives d = energy_derivatives(m, loop, false);
    if (!(d.gradient_norm() < critical_threshold(loop.k())))
        throw PreconditionError(std::string(who) + ": loop is not a closed geodesic (|grad| = " +
                                std::to_string(d.gradient_norm()) + ")");
}

/// Columns form a g-orthonormal basis of the g-orthogonal complement of v.
inline Matrix normal_frame(const Matrix& g, const Vector& v) {
    const int n = static_cast<int>(v.size());
    std::vector<Vector> basis{v / std::sqrt(v.dot(g * v))};
    for (int c = 0; c < n && static_cast<int>(basis.size()) < n; ++c) {
        Vector w = Vector::Unit(n, c);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) w -= b.dot(g * w) * b;
        const double len = std::sqrt(w.dot(g * w));
        if (len > 1e-8) basis.push_back(w / len);
    }
    Matrix out(n, n - 1);
    for (int c = 1; c < n; ++c) out.col(c - 1) = basis[c];
    return out;
}

/// Linearised return map of the geodesic flow on the normal bundle, in a
/// g-orthonormal frame with (position, covariant derivative) coordinates.
struct MonodromyMatrix {
    Matrix matrix;
    std::vector<Complex> multipliers;  ///< sorted by modulus, then argument
    double determinant_defect = 0.0;
    double symplectic_defect = 0.0;
    double pairing_defect = 0.0;
};

inline std::vector<Complex> sorted_multipliers(const Matrix& M) {
    Eigen::EigenSolver<Matrix> es(M, false);
    std::vector<Complex> out(es.eigenvalues().data(), es.eigenvalues().data() + M.rows());
    std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (std::abs(ma - mb) > 1e-9 * std::max(1.0, ma)) return ma < mb;
        return std::arg(a) < std::arg(b);
    });
    return out;
}

inline MonodromyMatrix monodromy(const Manifold& m, const BrokenLoop& loop,
                                 const IntegratorOptions& opt = {}) {
    require_critical(m, loop, "monodromy");
    const int n = loop.dim();
    const Point q = loop.node(0);
    const Vector v = discrete_velocity(m, loop).head(n);
    const FlowJacobian f = geodesic_flow_jacobian(m, q, v, 1.0, opt);
    if (m.chart_distance(q, f.x) > 1e-6 * (1.0 + v.norm()) ||
        (f.v - v).norm() > 1e-6 * (1.0 + v.norm()))
        throw AccuracyError("monodromy: geodesic through node 0 does not close up");

    const Christoffel gam = christoffel(m, q);
    Matrix cv(n, n);
    for (int c = 0; c < n; ++c) cv.col(c) = gam.contract(v, Vector::Unit(n, c));
    Matrix T = Matrix::Identity(2 * n, 2 * n), Tinv = Matrix::Identity(2 * n, 2 * n);
    T.block(n, 0, n, n) = cv;
    Tinv.block(n, 0, n, n) = -cv;
    const Matrix covariant = T * f.jacobian * Tinv;

    const Matrix g = m.metric(q);
    const Matrix E = normal_frame(g, v);
    const int r = n - 1;
    Matrix P = Matrix::Zero(2 * r, 2 * n), Q = Matrix::Zero(2 * n, 2 * r);
    P.block(0, 0, r, n) = E.transpose() * g;
    P.block(r, n, r, n) = E.transpose() * g;
    Q.block(0, 0, n, r) = E;
    Q.block(n, r, n, r) = E;

    MonodromyMatrix out;
    out.matrix = P * covariant * Q;
    Matrix omega = Matrix::Zero(2 * r, 2 * r);
    omega.block(0, r, r, r) = Matrix::Identity(r, r);
    omega.block(r, 0, r, r) = -Matrix::Identity(r, r);
    out.determinant_defect = std::abs(out.matrix.determinant() - 1.0);
    out.symplectic_defect =
        (out.matrix.transpose() * omega * out.matrix - omega).cwiseAbs().maxCoeff() /
        std::max(1.0, out.matrix.squaredNorm());
    out.multipliers = sorted_multipliers(out.matrix);
    for (Complex l : out.multipliers) {
        double best = std::numeric_limits<double>::infinity();
        for (Complex mu : out.multipliers) best = std::min(best, std::abs(l * mu - 1.0));
        out.pairing_defect = std::max(out.pairing_defect, best);
    }
    if (out.symplectic_defect > 1e-6)
        throw AccuracyError("monodromy: symplectic defect " + std::to_string(out.symplectic_defect));
    return out;
}

/// Complex kernel dimension of (mono - z id). Singular values below
/// relative_threshold * max(1, |mono|) count as zero.
inline int bott_N(const Matrix& mono, Complex z, double relative_threshold = 1e-7) {
    const int d = static_cast<int>(mono.rows());
    const ComplexMatrix A =
        mono.cast<Complex>() - z * ComplexMatrix::Identity(d, d);
    Eigen::JacobiSVD<ComplexMatrix> svd(A);
    const double tau = relative_threshold * std::max(1.0, mono.norm());
    return static_cast<int>((svd.singularValues().array() <= tau).count());
}

inline int bott_N(const MonodromyMatrix& mono, Complex z, double relative_threshold = 1e-7) {
    return bott_N(mono.matrix, z, relative_threshold);
}

/// Spectrum of the z-twisted Hessian, fields with xi_k = z xi_0.
struct TwistedSpectrum {
    Complex z;
    Vector eigenvalues;
    double tau0 = 0.0;

    int index() const { return static_cast<int>((eigenvalues.array() < -tau0).count()); }
    int kernel_dimension() const {
        return static_cast<int>((eigenvalues.array().abs() <= tau0).count());
    }
    double gap() const {
        double g = std::numeric_limits<double>::infinity();
        for (double l : eigenvalues)
            if (std::abs(l) > tau0) g = std::min(g, std::abs(l));
        return g;
    }
    bool decided() const { return gap() >= 1e3 * tau0; }
};

/// Segment Hessians of a critical loop, reused across many twists.
struct TwistData {
    std::vector<Matrix> segment_hessians;
    Matrix metric;
    int k = 0;
    int n = 0;
};

inline TwistData twist_data(const Manifold& m, const BrokenLoop& loop) {
    const EnergyDerivatives d = energy_derivatives(m, loop, true);
    TwistData t{{}, d.metric, loop.k(), loop.dim()};
    for (const auto& s : d.segments) t.segment_hessians.push_back(s.hessian);
    return t;
}

inline TwistedSpectrum twisted_spectrum(const TwistData& t, Complex z,
                                        double relative_threshold = 1e-8) {
    const int n = t.n, k = t.k;
    ComplexMatrix H = ComplexMatrix::Zero(n * k, n * k);
    for (int i = 0; i < k; ++i)
        add_segment_blocks(H, t.segment_hessians[i], i, (i + 1) % k, n, double(k),
                           i == k - 1 ? z : Complex(1.0));
    // Reduce H v = lambda G v to a standard Hermitian problem.
    const Eigen::LLT<Matrix> llt(t.metric);
    const Matrix L = llt.matrixL();
    const ComplexMatrix Linv = L.triangularView<Eigen::Lower>()
                                   .solve(Matrix::Identity(n * k, n * k))
                                   .cast<Complex>();
    ComplexMatrix A = Linv * H * Linv.adjoint();
    A = 0.5 * (A + A.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(A, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw UndecidedError("twisted eigensolver failed");
    TwistedSpectrum s{z, es.eigenvalues(), 0.0};
    s.tau0 = relative_threshold * s.eigenvalues.cwiseAbs().maxCoeff();
    return s;
}

/// Morse index of the z-twisted index form.
inline int bott_Lambda(const Manifold& m, const BrokenLoop& loop, Complex z) {
    require_critical(m, loop, "bott_Lambda");
    return twisted_spectrum(twist_data(m, loop), z).index();
}

inline Complex root_of_unity(int j, int m) {
    const double a = 2.0 * M_PI * j / m;
    return {std::cos(a), std::sin(a)};
}

/// One row of the iteration table: direct eigencounts of the m-th iterate
/// next to the root-of-unity sums.
struct BottRow {
    int m = 0;
    int ind = 0;
    int nul = 0;
    int sum_Lambda = 0;
    int sum_N = 0;
    double avg_residual = 0.0;  ///< |ind / m - average index|

    bool consistent() const { return ind == sum_Lambda && nul == sum_N; }
};

struct BottData {
    std::vector<std::pair<Complex, int>> N_support;
    /// Lambda at e^{2 pi i j / m}, keyed by the reduced fraction (j, m).
    std::map<std::pair<int, int>, int> Lambda_samples;
    /// Sampled twists whose spectrum had an eigenvalue too close to zero.
    std::vector<std::pair<int, int>> undecided_samples;
    double average_index = 0.0;
    int max_Lambda = 0;
    std::vector<BottRow> table;

    bool consistent() const {
        return std::all_of(table.begin(), table.end(), [](const BottRow& r) { return r.consistent(); });
    }
    /// Lambda(z) == Lambda(conj z) at every sample.
    bool conjugation_symmetric() const {
        for (const auto& [key, value] : Lambda_samples) {
            const auto [j, m] = key;
            const int jc = (m - j) % m;
            const int g = std::gcd(jc, m);
            auto it = Lambda_samples.find({jc / g, m / g});
            if (it != Lambda_samples.end() && it->second != value) return false;
        }
        return true;
    }
    double max_residual() const {
        double r = 0.0;
        for (const auto& row : table) r = std::max(r, row.avg_residual);
        return r;
    }
    int lambda_at(int j, int m) const {
        const int g = std::gcd(j, m);
        return Lambda_samples.at({j / g, m / g});
    }
};

struct BottOptions {
    int m_max = 12;
    bool direct_eigencount = true;  ///< fill ind/nul from Hessians of iterates
};

namespace detail {

/// Angles in [0, 1) (fractions of a turn) of the unit-modulus multipliers.
inline std::vector<double> unit_multiplier_turns(const MonodromyMatrix& mono, double tol = 1e-6) {
    std::vector<double> out{0.0};
    for (Complex l : mono.multipliers) {
        if (std::abs(std::abs(l) - 1.0) > tol) continue;
        double t = std::arg(l) / (2.0 * M_PI);
        if (t < 0) t += 1.0;
        if (t >= 1.0 - 1e-12) t = 0.0;
        out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              out.end());
    return out;
}

}  // namespace detail

/// Integral of Lambda over the unit circle: Lambda is constant between
/// consecutive unit multipliers, so one evaluation per arc is exact.
inline double average_index(const TwistData& t, const MonodromyMatrix& mono) {
    const std::vector<double> cuts = detail::unit_multiplier_turns(mono);
    double avg = 0.0;
    for (std::size_t a = 0; a < cuts.size(); ++a) {
        const double lo = cuts[a], hi = a + 1 < cuts.size() ? cuts[a + 1] : 1.0 + cuts[0];
        const double mid = 2.0 * M_PI * 0.5 * (lo + hi);
        avg += (hi - lo) * twisted_spectrum(t, {std::cos(mid), std::sin(mid)}).index();
    }
    return avg;
}

inline double average_index(const BottData& bott) { return bott.average_index; }

inline BottData bott_data(const Manifold& m, const BrokenLoop& loop, const BottOptions& opt = {}) {
    require_critical(m, loop, "bott_data");
    const TwistData t = twist_data(m, loop);
    const MonodromyMatrix mono = monodromy(m, loop);
    BottData out;
    for (Complex l : mono.multipliers) {
        if (std::abs(std::abs(l) - 1.0) > 1e-6) continue;
        const Complex z = l / std::abs(l);
        const bool seen = std::any_of(out.N_support.begin(), out.N_support.end(),
                                      [&](const auto& e) { return std::abs(e.first - z) < 1e-6; });
        if (seen) continue;
        if (const int N = bott_N(mono, z); N > 0) out.N_support.emplace_back(z, N);
    }
    if (std::none_of(out.N_support.begin(), out.N_support.end(),
                     [](const auto& e) { return std::abs(e.first - 1.0) < 1e-6; }))
        if (const int N = bott_N(mono, 1.0); N > 0) out.N_support.emplace_back(1.0, N);

    std::vector<std::pair<int, int>> keys;
    for (int mm = 1; mm <= opt.m_max; ++mm)
        for (int j = 0; j < mm; ++j)
            if (std::gcd(j, mm) == 1) keys.emplace_back(j, mm);
    std::vector<int> lambda(keys.size());
    std::vector<char> undecided(keys.size(), 0);
    parallel_for(static_cast<int>(keys.size()), [&](int i) {
        const TwistedSpectrum s = twisted_spectrum(t, root_of_unity(keys[i].first, keys[i].second));
        lambda[i] = s.index();
        undecided[i] = !s.decided();
    });
    for (std::size_t i = 0; i < keys.size(); ++i) {
        out.Lambda_samples[keys[i]] = lambda[i];
        out.max_Lambda = std::max(out.max_Lambda, lambda[i]);
        if (undecided[i]) out.undecided_samples.push_back(keys[i]);
    }
    out.average_index = average_index(t, mono);

    out.table.resize(opt.m_max);
    parallel_for(opt.m_max, [&](int i) {
        const int mm = i + 1;
        BottRow& row = out.table[i];
        row.m = mm;
        for (int j = 0; j < mm; ++j) {
            row.sum_Lambda += out.lambda_at(j, mm);
            row.sum_N += bott_N(mono, root_of_unity(j, mm));
        }
        if (opt.direct_eigencount) {
            const HessianSpectrum h = hessian(m, iterate(loop, mm), false);
            row.ind = h.negative_count();
            row.nul = h.kernel_dimension() - 1;
        } else {
            row.ind = row.sum_Lambda;
            row.nul = row.sum_N;
        }
        row.avg_residual = std::abs(double(row.ind) / mm - out.average_index);
    });
    return out;
}

inline std::string bott_csv(const BottData& b) {
    std::ostringstream os;
    os.precision(17);
    os << "m,ind,nul,sum_Lambda,sum_N,avg_residual\n";
    for (const auto& r : b.table)
        os << r.m << ',' << r.ind << ',' << r.nul << ',' << r.sum_Lambda << ',' << r.sum_N << ','
           << r.avg_residual << '\n';
    return os.str();
}

/// Free and based Morse data of a closed geodesic.
struct IndexReport {
    int ind = 0;
    int nul = 0;
    int ind_omega = 0;
    int nul_omega = 0;
    double average_index = std::numeric_limits<double>::quiet_NaN();
    double gap = 0.0;   ///< smallest nonzero |eigenvalue| over both spectra
    double tau0 = 0.0;
    int k = 0;

    /// ind_O <= ind and ind_O + nul_O <= ind + nul <= ind_O + nul_O + dim - 1.
    bool sandwich_holds(int dim) const {
        return ind_omega <= ind && ind_omega + nul_omega <= ind + nul &&
               ind + nul <= ind_omega + nul_omega + dim - 1;
    }
};

namespace detail {

inline IndexReport raw_indices(const Manifold& m, const BrokenLoop& loop) {
    const HessianSpectrum free = hessian(m, loop, false);
    const HessianSpectrum based = based_spectrum(free, loop.k(), loop.dim());
    if (!free.decided() || !based.decided())
        throw UndecidedError("indices: spectral gap " + std::to_string(std::min(free.gap(), based.gap())) +
                             " below 1e3 * tau0; refine k or the tolerance");
    if (free.kernel_dimension() < 1)
        throw PreconditionError("indices: Hessian has no kernel, loop is not a closed geodesic");
    IndexReport r;
    r.ind = free.negative_count();
    r.nul = free.kernel_dimension() - 1;
    r.ind_omega = based.negative_count();
    r.nul_omega = based.kernel_dimension();
    r.gap = std::min(free.gap(), based.gap());
    r.tau0 = free.tau0;
    r.k = loop.k();
    return r;
}

}  // namespace detail

/// Morse indices and nullities of a closed geodesic. With check_refinement
/// the computation is repeated on the midpoint refinement and any change in
/// an integer output is reported as undecided.
inline IndexReport indices(const Manifold& m, const BrokenLoop& loop, bool check_refinement = false) {
    require_critical(m, loop, "indices");
    IndexReport r = detail::raw_indices(m, loop);
    if (check_refinement) {
        const IndexReport f = detail::raw_indices(m, refine(m, loop));
        if (f.ind != r.ind || f.nul != r.nul || f.ind_omega != r.ind_omega || f.nul_omega != r.nul_omega)
            throw UndecidedError("indices: integers changed under k-doubling");
    }
    return r;
}

struct IterationRow {
    int m = 0;
    int ind = 0;
    int nul = 0;
    double lower_slack = 0.0;  ///< ind - (m avg - (dim - 1))
    double upper_slack = 0.0;  ///< m avg + dim - 1 - (ind + nul)
    bool pass = false;
    bool equality = false;     ///< upper bound attained
};

struct IterationCertificate {
    std::vector<IterationRow> rows;
    bool all_pass = true;
    bool hypothesis_ii = false;  ///< upper equality at m = 1 and every tested prime
};

inline IterationCertificate iteration_inequalities_check(const std::vector<BottRow>& table,
                                                         double average, int dim,
                                                         const std::vector<int>& primes = {2, 3, 5, 7, 11},
                                                         double tol = 1e-9) {
    IterationCertificate c;
    bool eq1 = false, eq_primes = true, any_prime = false;
    for (const auto& t : table) {
        IterationRow r{t.m, t.ind, t.nul};
        r.lower_slack = t.ind - (t.m * average - (dim - 1));
        r.upper_slack = t.m * average + dim - 1 - (t.ind + t.nul);
        r.pass = r.lower_slack >= -tol && r.upper_slack >= -tol;
        r.equality = std::abs(r.upper_slack) <= tol;
        c.all_pass = c.all_pass && r.pass;
        if (t.m == 1) eq1 = r.equality;
        if (std::find(primes.begin(), primes.end(), t.m) != primes.end()) {
            any_prime = true;
            eq_primes = eq_primes && r.equality;
        }
        c.rows.push_back(r);
    }
    c.hypothesis_ii = eq1 && any_prime && eq_primes;
    return c;
}

/// When hypothesis (ii) holds, the based and free data satisfy
/// ind_O + nul_O = ind + nul - (dim - 1). Returns true if the identity holds
/// or the hypothesis fails.
inline bool based_identity_check(const IterationCertificate& c, const IndexReport& r, int dim) {
    if (!c.hypothesis_ii) return true;
    return r.ind_omega + r.nul_omega == r.ind + r.nul - (dim - 1);
}

/// Index and nullity of the energy on paths with fixed endpoints, along the
/// geodesic t -> exp_p(t v) restricted to [t1, t2].
struct SegmentIndex {
    int index = 0;
    int nullity = 0;
    double gap = 0.0;
};

inline SegmentIndex segment_index(const Manifold& m, const Point& p, const Vector& v, double t1,
                                  double t2, int nodes = 0) {
    if (!(t2 > t1)) throw PreconditionError("segment_index: need t1 < t2");
    const int n = m.dimension();
    const double speed = std::sqrt(v.dot(m.metric(p) * v));
    const double length = speed * (t2 - t1);
    int K = nodes;
    if (K <= 0) K = std::max(8, static_cast<int>(std::ceil(4.0 * length / std::min(m.injectivity_floor(p), 1e3))));
    const IntegratorOptions io{};
    std::vector<Point> x(K + 1);
    Point start = t1 > 0 ? geodesic_shoot(m, p, v, t1, io).end_point() : p;
    Vector vel = t1 > 0 ? geodesic_shoot(m, p, v, t1, io).end_velocity() : v;
    const double h = (t2 - t1) / K;
    x[0] = start;
    for (int j = 1; j <= K; ++j) {
        const GeodesicSegment s = geodesic_shoot(m, x[j - 1], vel, h, io);
        x[j] = s.end_point();
        vel = s.end_velocity();
    }
    if (K < 2) return {};
    const int inner = (K - 1) * n;
    Matrix H = Matrix::Zero((K + 1) * n, (K + 1) * n);
    for (int j = 0; j < K; ++j) {
        const SegmentSolution s = solve_segment(m, x[j], x[j + 1], true);
        add_segment_blocks(H, s.hessian, j, j + 1, n, double(K), 1.0);
    }
    Matrix G = Matrix::Zero(inner, inner);
    for (int j = 1; j < K; ++j) G.block((j - 1) * n, (j - 1) * n, n, n) = m.metric(x[j]);
    const HessianSpectrum s = spectrum(H.block(n, n, inner, inner), G, false);
    if (!s.decided()) throw UndecidedError("segment_index: spectral gap below 1e3 * tau0");
    return {s.negative_count(), s.kernel_dimension(), s.gap()};
}

struct SuperadditivityRow {
    int m = 0;
    int ind_omega = 0;
    int nul_omega = 0;
    int index_slack = 0;  ///< ind_O(g^m) - m ind_O(g)
    int sum_slack = 0;    ///< (ind_O + nul_O)(g^m) - m (ind_O + nul_O)(g)
    bool segment_route_agrees = true;
    bool pass() const { return index_slack >= 0 && sum_slack >= 0; }
};

/// Superadditivity of the based indices under iteration, computed from the
/// based Hessian of each iterate and cross-checked on the fixed-endpoint
/// path space over [0, m].
inline std::vector<SuperadditivityRow> superadditivity_check(const Manifold& m, const BrokenLoop& loop,
                                                             int m_max, bool segment_route = true) {
    require_critical(m, loop, "superadditivity_check");
    const int n = loop.dim();
    const Point q = loop.node(0);
    const Vector v = discrete_velocity(m, loop).head(n);
    std::vector<SuperadditivityRow> rows(m_max);
    parallel_for(m_max, [&](int i) {
        const int mm = i + 1;
        const BrokenLoop it = iterate(loop, mm);
        const HessianSpectrum based = based_spectrum(hessian(m, it, false), it.k(), n);
        if (!based.decided()) throw UndecidedError("superadditivity_check: spectral gap too small");
        rows[i].m = mm;
        rows[i].ind_omega = based.negative_count();
        rows[i].nul_omega = based.kernel_dimension();
        if (segment_route) {
            const SegmentIndex s = segment_index(m, q, v, 0.0, double(mm), it.k());
            rows[i].segment_route_agrees = s.index == rows[i].ind_omega && s.nullity == rows[i].nul_omega;
        }
    });
    for (auto& r : rows) {
        r.index_slack = r.ind_omega - r.m * rows[0].ind_omega;
        r.sum_slack = r.ind_omega + r.nul_omega - r.m * (rows[0].ind_omega + rows[0].nul_omega);
    }
    return rows;
}

/// Zeros of the normal Jacobi determinant along t -> exp_p(t v), t in (0, T].
struct ConjugateInstants {
    std::vector<double> times;  ///< interior instants, ascending
    bool endpoint_conjugate = false;
};

struct ConjugateOptions {
    double sample_step = 0.0173;  ///< in arclength
    double tolerance = 1e-6;      ///< bisection resolution in arclength
    IntegratorOptions integrator{};
};

namespace detail {

struct JacobiState {
    Point x;
    Vector v;
    Matrix phi;  ///< flow Jacobian from time 0
};

inline JacobiState advance(const Manifold& m, const JacobiState& s, double h, const IntegratorOptions& io) {
    if (h <= 0) return s;
    const FlowJacobian f = geodesic_flow_jacobian(m, s.x, s.v, h, io);
    return {f.x, f.v, f.jacobian * s.phi};
}

inline double jacobi_det(const JacobiState& s, const Matrix& frame) {
    const int n = static_cast<int>(s.x.size());
    Matrix d(n, n);
    d.col(0) = s.v;
    d.rightCols(n - 1) = s.phi.block(0, n, n, n) * frame;
    return d.determinant();
}

}  // namespace detail

inline ConjugateInstants conjugate_instants(const Manifold& m, const Point& p, const Vector& v, double T,
                                            const ConjugateOptions& opt = {}) {
    const int n = m.dimension();
    const Matrix g = m.metric(p);
    const double speed = std::sqrt(v.dot(g * v));
    const Matrix frame = normal_frame(g, v);
    const double dt = opt.sample_step / speed, tol_t = opt.tolerance / speed;
    ConjugateInstants out;
    detail::JacobiState cur{p, v, Matrix::Identity(2 * n, 2 * n)};
    double t = 0.0, d_prev = 0.0;
    while (t < T) {
        const double h = std::min(dt, T - t);
        detail::JacobiState next = detail::advance(m, cur, h, opt.integrator);
        const double d_next = detail::jacobi_det(next, frame);
        if (t > 0.0 && d_prev * d_next < 0.0) {
            double a = 0.0, b = h, da = d_prev;
            while (b - a > tol_t) {
                const double mid = 0.5 * (a + b);
                const double dm = detail::jacobi_det(detail::advance(m, cur, mid, opt.integrator), frame);
                if (da * dm <= 0.0) {
                    b = mid;
                } else {
                    a = mid;
                    da = dm;
                }
            }
            const double root = t + 0.5 * (a + b);
            if (root < T - 2 * tol_t) out.times.push_back(root);
        }
        if (t == 0.0 || d_next != 0.0) d_prev = d_next;
        cur = std::move(next);
        t += h;
    }
    // Endpoint: the normal Jacobi fields vanishing at 0 span a degenerate
    // set at T.
    const Matrix X = (frame.transpose() * m.metric(cur.x) * cur.phi.block(0, n, n, n) * frame);
    Eigen::JacobiSVD<Matrix> svd(X);
    const double scale = std::max(1.0, cur.phi.block(0, n, n, n).norm());
    out.endpoint_conjugate = svd.singularValues().minCoeff() <= 1e-6 * scale * speed;
    return out;
}

struct ConjugateSample {
    int shell = 0;
    Point start;
    Vector direction;  ///< g-unit
    double first_conjugate_length = std::numeric_limits<double>::infinity();
    bool skipped = false;  ///< left the chart before length ell
};

/// Sampled surrogate for the absence of close conjugate points: shell 0 is
/// K_0, shell a is K_a minus K_{a-1}, and one extra shell of the last width
/// lies beyond the final radius.
struct ConjugateReport {
    double ell = 0.0;
    std::vector<ConjugateSample> samples;
    std::vector<int> shell_samples;
    std::vector<int> shell_conjugate;
    int skipped = 0;
    int alpha1 = 0;
    bool condition_violated = false;
};

struct ConjugateScanOptions {
    int points_per_shell = 12;
    int directions = 8;
    std::uint64_t seed = 1;
    ConjugateOptions conjugate{0.05, 1e-6, {}};
};

inline ConjugateReport conjugate_scan(const Manifold& m, double ell, const ConjugateScanOptions& opt = {}) {
    const int n = m.dimension();
    std::vector<double> radii = m.exhaustion();
    const double width = radii.size() > 1 ? radii.back() - radii[radii.size() - 2] : 1.0;
    radii.push_back(radii.back() + width);
    const int shells = static_cast<int>(radii.size());
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    ConjugateReport rep;
    rep.ell = ell;
    rep.shell_samples.assign(shells, 0);
    rep.shell_conjugate.assign(shells, 0);
    for (int a = 0; a < shells; ++a) {
        const double lo = a == 0 ? -std::numeric_limits<double>::infinity() : radii[a - 1];
        const Box box = m.sampling_box(radii[a]);
        int found = 0;
        for (int tries = 0; found < opt.points_per_shell && tries < 200 * opt.points_per_shell; ++tries) {
            Point p(n);
            for (int i = 0; i < n; ++i)
                p(i) = std::uniform_real_distribution<double>(box.lo(i), box.hi(i))(rng);
            if (!m.in_domain(p)) continue;
            const double r = m.radial(p);
            if (!(r > lo && r <= radii[a])) continue;
            ++found;
            const Matrix g = m.metric(p);
            for (int d = 0; d < opt.directions; ++d) {
                Vector w(n);
                if (n == 2) {
                    const double ang = M_PI * (d + 0.5) / opt.directions;
                    w << std::cos(ang), std::sin(ang);
                } else {
                    for (int i = 0; i < n; ++i) w(i) = normal(rng);
                }
                w /= std::sqrt(w.dot(g * w));
                rep.samples.push_back({a, p, w});
            }
        }
    }
    parallel_for(static_cast<int>(rep.samples.size()), [&](int i) {
        ConjugateSample& s = rep.samples[i];
        try {
            const ConjugateInstants ci = conjugate_instants(m, s.start, s.direction, ell, opt.conjugate);
            if (!ci.times.empty()) s.first_conjugate_length = ci.times.front();
            else if (ci.endpoint_conjugate) s.first_conjugate_length = ell;
        } catch (const ChartExitError&) {
            s.skipped = true;
        }
    });
    for (const auto& s : rep.samples) {
        if (s.skipped) {
            ++rep.skipped;
            continue;
        }
        ++rep.shell_samples[s.shell];
        if (std::isfinite(s.first_conjugate_length)) ++rep.shell_conjugate[s.shell];
    }
    int last_nonempty = -1;
    for (int a = 0; a < shells; ++a)
        if (rep.shell_samples[a] > 0) last_nonempty = a;
    rep.alpha1 = 0;
    for (int a = 0; a < shells; ++a)
        if (rep.shell_conjugate[a] > 0) rep.alpha1 = a + 1;
    rep.condition_violated = last_nonempty < 0 || rep.alpha1 > last_nonempty;
    return rep;
}

inline std::string conjugate_csv(const ConjugateReport& r) {
    std::ostringstream os;
    os.precision(17);
    const int n = r.samples.empty() ? 0 : static_cast<int>(r.samples.front().start.size());
    os << "shell_alpha";
    for (int i = 0; i < n; ++i) os << ",start_point_" << i;
    for (int i = 0; i < n; ++i) os << ",direction_" << i;
    os << ",first_conjugate_length\n";
    for (const auto& s : r.samples) {
        if (s.skipped) continue;
        os << s.shell;
        for (int i = 0; i < n; ++i) os << ',' << s.start(i);
        for (int i = 0; i < n; ++i) os << ',' << s.direction(i);
        os << ',';
        if (std::isfinite(s.first_conjugate_length)) os << s.first_conjugate_length;
        else os << "inf";
        os << '\n';
    }
    return os.str();
}

}  // namespace geolab
