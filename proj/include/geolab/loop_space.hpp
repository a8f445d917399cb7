#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "geolab/geodesic.hpp"

namespace geolab {

/// A closed broken geodesic: k chart nodes, node i standing for gamma(i/k),
/// joined cyclically by short geodesics. Nodes are stored as columns.
struct BrokenLoop {
    Matrix nodes;

    BrokenLoop() = default;
    explicit BrokenLoop(Matrix n) : nodes(std::move(n)) {
        if (nodes.cols() < 2) throw PreconditionError("BrokenLoop: need at least two nodes");
    }

    int k() const { return static_cast<int>(nodes.cols()); }
    int dim() const { return static_cast<int>(nodes.rows()); }
    Point node(int i) const { return nodes.col(((i % k()) + k()) % k()); }
};

/// Tangent vector to the space of broken loops: node-major, the components
/// of node i occupy entries [i*n, (i+1)*n).
using LoopTangent = Vector;

/// Loop whose nodes are `count` equally spaced samples of the geodesic
/// through p with initial velocity v over one period.
inline BrokenLoop sample_geodesic_loop(const Manifold& m, const Point& p, const Vector& v,
                                       double period, int count) {
    Matrix nodes(m.dimension(), count);
    Point x = p;
    Vector w = v;
    nodes.col(0) = p;
    for (int i = 1; i < count; ++i) {
        const GeodesicSegment seg = geodesic_shoot(m, x, w, period / count);
        x = seg.end_point();
        w = seg.end_velocity();
        nodes.col(i) = x;
    }
    return BrokenLoop(nodes);
}

/// Solutions for every segment i -> i+1 (cyclic). Throws NotShortError
/// when the loop leaves the space of broken geodesics.
inline std::vector<SegmentSolution> solve_segments(const Manifold& m, const BrokenLoop& loop,
                                                   bool with_hessian) {
    std::vector<SegmentSolution> out;
    out.reserve(loop.k());
    for (int i = 0; i < loop.k(); ++i)
        out.push_back(solve_segment(m, loop.node(i), loop.node(i + 1), with_hessian));
    return out;
}

inline std::vector<double> segment_lengths(const Manifold& m, const BrokenLoop& loop) {
    std::vector<double> out;
    for (const auto& s : solve_segments(m, loop, false)) out.push_back(s.length());
    return out;
}

/// Energy of the broken geodesic: k * sum of squared segment lengths.
inline double energy(const Manifold& m, const BrokenLoop& loop) {
    double e = 0.0;
    for (const auto& s : solve_segments(m, loop, false)) e += s.sqdist;
    return loop.k() * e;
}

/// Block-diagonal node-sum metric G = diag(g(x_0), ..., g(x_{k-1})).
inline Matrix node_metric(const Manifold& m, const BrokenLoop& loop) {
    const int n = loop.dim(), k = loop.k();
    Matrix G = Matrix::Zero(n * k, n * k);
    for (int i = 0; i < k; ++i) G.block(i * n, i * n, n, n) = m.metric(loop.node(i));
    return G;
}

struct EnergyDerivatives {
    double energy = 0.0;
    LoopTangent differential;  ///< dE in chart coordinates (a covector)
    LoopTangent gradient;      ///< G^{-1} dE
    Matrix hessian;            ///< chart Hessian, empty unless requested
    Matrix metric;             ///< node-sum metric G
    std::vector<SegmentSolution> segments;

    double gradient_norm() const { return std::sqrt(gradient.dot(metric * gradient)); }
};

namespace detail {
inline double conjugate(double x) { return x; }
inline std::complex<double> conjugate(std::complex<double> x) { return std::conj(x); }
}  // namespace detail

/// Adds the Hessian of one segment's squared distance (scaled) into the
/// cyclic block structure. `twist` multiplies the (i, j) coupling block and
/// its conjugate the (j, i) block.
template <class Mat, class Scalar>
void add_segment_blocks(Mat& H, const Matrix& seg_hessian, int i, int j, int n, double scale,
                        Scalar twist) {
    using detail::conjugate;
    H.block(i * n, i * n, n, n) += (scale * seg_hessian.block(0, 0, n, n)).template cast<typename Mat::Scalar>();
    H.block(j * n, j * n, n, n) += (scale * seg_hessian.block(n, n, n, n)).template cast<typename Mat::Scalar>();
    H.block(i * n, j * n, n, n) += (scale * seg_hessian.block(0, n, n, n)).template cast<typename Mat::Scalar>() * twist;
    H.block(j * n, i * n, n, n) += (scale * seg_hessian.block(n, 0, n, n)).template cast<typename Mat::Scalar>() * conjugate(twist);
}

inline EnergyDerivatives energy_derivatives(const Manifold& m, const BrokenLoop& loop,
                                            bool with_hessian) {
    const int n = loop.dim(), k = loop.k();
    EnergyDerivatives d;
    d.segments = solve_segments(m, loop, with_hessian);
    d.differential = Vector::Zero(n * k);
    if (with_hessian) d.hessian = Matrix::Zero(n * k, n * k);
    for (int i = 0; i < k; ++i) {
        const int j = (i + 1) % k;
        const SegmentSolution& s = d.segments[i];
        d.energy += k * s.sqdist;
        d.differential.segment(i * n, n) += k * s.gradient.head(n);
        d.differential.segment(j * n, n) += k * s.gradient.tail(n);
        if (with_hessian) add_segment_blocks(d.hessian, s.hessian, i, j, n, double(k), 1.0);
    }
    d.metric = node_metric(m, loop);
    d.gradient = d.metric.ldlt().solve(d.differential);
    return d;
}

/// Eigen-decomposition of a Hessian against the node-sum metric, with the
/// relative zero threshold used for kernel counting.
struct HessianSpectrum {
    Matrix matrix;      ///< chart Hessian
    Matrix metric;      ///< G
    Vector eigenvalues; ///< ascending, of G^{-1} H
    Matrix eigenvectors;
    double tau0 = 0.0;
    double relative_threshold = 1e-8;

    int negative_count() const {
        return static_cast<int>((eigenvalues.array() < -tau0).count());
    }
    int kernel_dimension() const {
        return static_cast<int>((eigenvalues.array().abs() <= tau0).count());
    }
    /// Smallest |lambda| among eigenvalues not declared to be zero.
    double gap() const {
        double g = std::numeric_limits<double>::infinity();
        for (double l : eigenvalues)
            if (std::abs(l) > tau0) g = std::min(g, std::abs(l));
        return g;
    }
    /// Largest |lambda| among eigenvalues declared to be zero.
    double kernel_residual() const {
        double r = 0.0;
        for (double l : eigenvalues)
            if (std::abs(l) <= tau0) r = std::max(r, std::abs(l));
        return r;
    }
    bool decided() const { return gap() >= 1e3 * tau0; }
    Matrix kernel_basis() const {
        Matrix out(eigenvectors.rows(), kernel_dimension());
        int c = 0;
        for (int i = 0; i < eigenvalues.size(); ++i)
            if (std::abs(eigenvalues(i)) <= tau0) out.col(c++) = eigenvectors.col(i);
        return out;
    }
    Matrix nonpositive_basis() const {
        int cnt = negative_count() + kernel_dimension();
        Matrix out(eigenvectors.rows(), cnt);
        int c = 0;
        for (int i = 0; i < eigenvalues.size(); ++i)
            if (eigenvalues(i) <= tau0) out.col(c++) = eigenvectors.col(i);
        return out;
    }
};

inline HessianSpectrum spectrum(const Matrix& H, const Matrix& G, bool vectors = true,
                                double relative_threshold = 1e-8) {
    HessianSpectrum s;
    s.matrix = 0.5 * (H + H.transpose());
    s.metric = G;
    s.relative_threshold = relative_threshold;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(
        s.matrix, G, (vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly) | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw UndecidedError("generalized eigensolver failed");
    s.eigenvalues = es.eigenvalues();
    if (vectors) s.eigenvectors = es.eigenvectors();
    s.tau0 = relative_threshold * s.eigenvalues.cwiseAbs().maxCoeff();
    return s;
}

inline HessianSpectrum hessian(const Manifold& m, const BrokenLoop& loop, bool vectors = true) {
    const EnergyDerivatives d = energy_derivatives(m, loop, true);
    return spectrum(d.hessian, d.metric, vectors);
}

/// Coordinates of the based subspace: every node except node 0.
inline std::vector<int> based_projector(int k, int n) {
    std::vector<int> idx;
    for (int i = n; i < k * n; ++i) idx.push_back(i);
    return idx;
}

inline Matrix restrict_matrix(const Matrix& A, const std::vector<int>& idx) {
    Matrix out(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = A(idx[a], idx[b]);
    return out;
}

/// Spectrum of the Hessian restricted to loops with node 0 fixed.
inline HessianSpectrum based_spectrum(const HessianSpectrum& free, int k, int n,
                                      bool vectors = false) {
    const auto idx = based_projector(k, n);
    return spectrum(restrict_matrix(free.matrix, idx), restrict_matrix(free.metric, idx), vectors,
                    free.relative_threshold);
}

/// Discrete velocity field: node i carries gamma'(i/k) = k * c_i'(0).
inline LoopTangent discrete_velocity(const Manifold& m, const BrokenLoop& loop) {
    const int n = loop.dim(), k = loop.k();
    LoopTangent v(n * k);
    const auto segs = solve_segments(m, loop, false);
    for (int i = 0; i < k; ++i) v.segment(i * n, n) = k * segs[i].w0;
    return v;
}

/// The S^1 action by s followed by re-projection onto broken geodesics:
/// node i of the result is the point of the loop at time (i + s k) / k.
inline BrokenLoop rotate(const Manifold& m, const BrokenLoop& loop, double s) {
    const int k = loop.k();
    const double shift = (s - std::floor(s)) * k;
    int j = static_cast<int>(std::floor(shift));
    double frac = shift - j;
    if (frac > 1.0 - 1e-14) {
        frac = 0.0;
        ++j;
    }
    Matrix nodes(loop.dim(), k);
    for (int i = 0; i < k; ++i) {
        if (frac == 0.0)
            nodes.col(i) = loop.node(i + j);
        else
            nodes.col(i) = point_on_segment(m, loop.node(i + j), loop.node(i + j + 1), frac);
    }
    return BrokenLoop(nodes);
}

/// The m-th iterate: node list repeated m times (k -> m k).
inline BrokenLoop iterate(const BrokenLoop& loop, int times) {
    if (times < 1) throw PreconditionError("iterate: multiplicity must be >= 1");
    Matrix nodes(loop.dim(), loop.k() * times);
    for (int r = 0; r < times; ++r) nodes.middleCols(r * loop.k(), loop.k()) = loop.nodes;
    return BrokenLoop(nodes);
}

/// Doubles k by inserting geodesic midpoints.
inline BrokenLoop refine(const Manifold& m, const BrokenLoop& loop) {
    Matrix nodes(loop.dim(), 2 * loop.k());
    for (int i = 0; i < loop.k(); ++i) {
        nodes.col(2 * i) = loop.node(i);
        nodes.col(2 * i + 1) = point_on_segment(m, loop.node(i), loop.node(i + 1), 0.5);
    }
    return BrokenLoop(nodes);
}

/// Largest divisor d of k such that the node list is invariant under the
/// cyclic shift by k/d, within `tolerance` in chart distance.
inline int multiplicity(const Manifold& m, const BrokenLoop& loop, double tolerance = 1e-8) {
    const int k = loop.k();
    for (int d = k; d >= 1; --d) {
        if (k % d != 0) continue;
        const int shift = k / d;
        bool ok = true;
        for (int i = 0; i < k && ok; ++i)
            ok = m.chart_distance(loop.node(i), loop.node(i + shift)) <= tolerance;
        if (ok) return d;
    }
    return 1;
}

/// CSV with header node_index,x_0,...,x_{d-1}.
inline std::string loop_to_csv(const BrokenLoop& loop) {
    std::ostringstream os;
    os.precision(17);
    os << "node_index";
    for (int c = 0; c < loop.dim(); ++c) os << ",x_" << c;
    os << '\n';
    for (int i = 0; i < loop.k(); ++i) {
        os << i;
        for (int c = 0; c < loop.dim(); ++c) os << ',' << loop.nodes(c, i);
        os << '\n';
    }
    return os.str();
}

inline BrokenLoop loop_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("node_index", 0) != 0)
        throw ConfigError("loop CSV: missing node_index header");
    const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("loop CSV line " + std::to_string(lineno) + ": bad number '" +
                                  cell + "'");
            }
        }
        if (static_cast<int>(vals.size()) != dim + 1 ||
            static_cast<int>(vals[0]) != static_cast<int>(rows.size()))
            throw ConfigError("loop CSV line " + std::to_string(lineno) + ": malformed row");
        rows.push_back(std::move(vals));
    }
    Matrix nodes(dim, rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < dim; ++c) nodes(c, i) = rows[i][c + 1];
    return BrokenLoop(nodes);
}

/// Node count for a loop of the given length: max(16, ceil(8 L / floor)).
inline int default_k(double length, double injectivity_floor) {
    return std::max(16, static_cast<int>(std::ceil(8.0 * length / injectivity_floor)));
}

/// Finite-difference audit of dE and the chart Hessian (five-point stencil).
struct DerivativeCheck {
    double gradient_rel = 0.0;
    double hessian_rel = 0.0;
    double hessian_asymmetry = 0.0;  ///< largest per-segment value before symmetrizing
};

inline DerivativeCheck derivative_check(const Manifold& m, const BrokenLoop& loop, double h = 1e-4) {
    const EnergyDerivatives d = energy_derivatives(m, loop, true);
    const int N = static_cast<int>(d.differential.size());
    Vector fd_grad(N);
    Matrix fd_hess(N, N);
    auto shifted = [&](int j, double t) {
        BrokenLoop l = loop;
        l.nodes(j % loop.dim(), j / loop.dim()) += t;
        return energy_derivatives(m, l, false);
    };
    for (int j = 0; j < N; ++j) {
        const EnergyDerivatives p2 = shifted(j, 2 * h), p1 = shifted(j, h), m1 = shifted(j, -h), m2 = shifted(j, -2 * h);
        fd_grad(j) = (-p2.energy + 8 * p1.energy - 8 * m1.energy + m2.energy) / (12 * h);
        fd_hess.col(j) = (-p2.differential + 8 * p1.differential - 8 * m1.differential + m2.differential) / (12 * h);
    }
    DerivativeCheck c;
    c.gradient_rel = (fd_grad - d.differential).norm() / std::max(d.differential.norm(), 1e-300);
    c.hessian_rel = (fd_hess - d.hessian).norm() / std::max(d.hessian.norm(), 1e-300);
    for (const auto& s : d.segments) c.hessian_asymmetry = std::max(c.hessian_asymmetry, s.hessian_asymmetry);
    c.hessian_asymmetry = std::max(c.hessian_asymmetry,
                                   (d.hessian - d.hessian.transpose()).norm() / std::max(d.hessian.norm(), 1e-300));
    return c;
}

}  // namespace geolab
