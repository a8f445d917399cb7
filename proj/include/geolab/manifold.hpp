#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "geolab/errors.hpp"

namespace geolab {

using Point = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Levi-Civita symbols in a chart, stored as one lower-index matrix per
/// upper index: gamma[i](j, k) = Gamma^i_jk.
struct Christoffel {
    std::vector<Matrix> gamma;

    explicit Christoffel(int n = 0) : gamma(n, Matrix::Zero(n, n)) {}
    int dimension() const { return static_cast<int>(gamma.size()); }
    double operator()(int i, int j, int k) const { return gamma[i](j, k); }
    double& operator()(int i, int j, int k) { return gamma[i](j, k); }

    /// Gamma(v, w)^i = Gamma^i_jk v^j w^k.
    Vector contract(const Vector& v, const Vector& w) const {
        Vector out(dimension());
        for (int i = 0; i < dimension(); ++i) out(i) = v.dot(gamma[i] * w);
        return out;
    }
};

/// Value, gradient and Hessian of (x, y) -> dist(x, y)^2 in chart
/// coordinates, with the 2n variables ordered (x, y).
struct SquaredDistance {
    double value = 0.0;
    Vector gradient;
    Matrix hessian;
};

/// Axis-aligned chart box used for sampling points.
struct Box {
    Point lo;
    Point hi;
};

enum class ChristoffelMode { analytic, finite_difference };

/// A complete Riemannian manifold described in a single chart. Instances
/// are immutable once built and safe to share between threads.
class Manifold {
public:
    virtual ~Manifold() = default;

    virtual std::string name() const = 0;
    virtual int dimension() const = 0;

    virtual bool in_domain(const Point& p) const {
        (void)p;
        return true;
    }

    /// Symmetric positive-definite g_ij at p.
    virtual Matrix metric_unchecked(const Point& p) const = 0;

    Matrix metric(const Point& p) const {
        require_domain(p);
        return metric_unchecked(p);
    }

    virtual std::optional<Christoffel> christoffel_analytic(const Point& p) const {
        (void)p;
        return std::nullopt;
    }

    /// Period of each chart coordinate; 0 marks a non-periodic coordinate.
    virtual Vector periods() const { return Vector::Zero(dimension()); }

    /// Lower bound for the injectivity radius at p, in chart-length units.
    virtual double injectivity_floor(const Point& p) const = 0;

    /// Proper function whose sublevel sets define the compact exhaustion.
    virtual double radial(const Point& p) const = 0;

    /// Chart box containing every point with radial(p) <= radial_max.
    virtual Box sampling_box(double radial_max) const = 0;

    virtual std::optional<SquaredDistance> closed_form_sqdist(const Point& x,
                                                              const Point& y) const {
        (void)x;
        (void)y;
        return std::nullopt;
    }

    /// Numeric parameters echoed in reports.
    virtual std::map<std::string, double> parameters() const { return {}; }

    void require_domain(const Point& p) const {
        if (p.size() != dimension() || !in_domain(p) || !p.allFinite())
            throw DomainError(name() + ": point outside chart domain");
    }

    /// Chart difference b - a reduced to the nearest periodic representative.
    Vector wrap_difference(const Vector& diff) const {
        Vector out = diff;
        const Vector per = periods();
        for (int i = 0; i < out.size(); ++i) {
            if (per(i) > 0.0) out(i) -= per(i) * std::round(out(i) / per(i));
        }
        return out;
    }

    Vector difference(const Point& a, const Point& b) const { return wrap_difference(b - a); }

    /// Chart-coordinate distance after periodic reduction.
    double chart_distance(const Point& a, const Point& b) const {
        return difference(a, b).norm();
    }

    /// Exhaustion radii R_0 < R_1 < ...; K_alpha = {radial <= R_alpha}.
    const std::vector<double>& exhaustion() const { return exhaustion_; }
    void set_exhaustion(std::vector<double> radii) {
        for (std::size_t i = 1; i < radii.size(); ++i) {
            if (!(radii[i] > radii[i - 1]))
                throw ConfigError("exhaustion radii must be strictly increasing");
        }
        exhaustion_ = std::move(radii);
    }
    bool in_exhaustion_region(const Point& p, std::size_t alpha) const {
        return radial(p) <= exhaustion_.at(alpha);
    }

    /// Derivatives of the metric: result[c] = d g / d x^c.
    virtual std::vector<Matrix> metric_derivative(const Point& p) const {
        return five_point([this](const Point& q) { return metric(q); }, p);
    }

protected:
    /// Fourth-order central differences of a matrix-valued map.
    template <class F>
    std::vector<Matrix> five_point(F&& fn, const Point& p, double h = 1e-3) const {
        std::vector<Matrix> out;
        const int n = dimension();
        out.reserve(n);
        for (int c = 0; c < n; ++c) {
            Point e = Point::Zero(n);
            e(c) = h;
            out.push_back((-fn(p + 2 * e) + 8 * fn(p + e) - 8 * fn(p - e) + fn(p - 2 * e)) /
                          (12 * h));
        }
        return out;
    }

private:
    std::vector<double> exhaustion_{0.0};
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

/// Central-difference Christoffel symbols built from the metric with step h.
inline Christoffel christoffel_from_metric(const Manifold& m, const Point& p, double h = 1e-5) {
    m.require_domain(p);
    const int n = m.dimension();
    std::vector<Matrix> dg(n);
    for (int c = 0; c < n; ++c) {
        Point e = Point::Zero(n);
        e(c) = h;
        dg[c] = (m.metric(p + e) - m.metric(p - e)) / (2 * h);
    }
    const Matrix ginv = m.metric(p).inverse();
    Christoffel out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                double s = 0.0;
                for (int l = 0; l < n; ++l)
                    s += ginv(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
                out(i, j, k) = 0.5 * s;
            }
    return out;
}

/// Gamma^i_jk at p. Analytic mode falls back to finite differences for
/// manifolds without a closed form.
inline Christoffel christoffel(const Manifold& m, const Point& p,
                               ChristoffelMode mode = ChristoffelMode::analytic,
                               double h = 1e-5) {
    m.require_domain(p);
    if (mode == ChristoffelMode::analytic) {
        if (auto c = m.christoffel_analytic(p)) return *c;
    }
    return christoffel_from_metric(m, p, h);
}

/// d Gamma / d x^c by fourth-order central differences of christoffel().
inline std::vector<Christoffel> christoffel_derivative(const Manifold& m, const Point& p,
                                                       double h = 1e-3) {
    const int n = m.dimension();
    std::vector<Christoffel> out(n, Christoffel(n));
    for (int c = 0; c < n; ++c) {
        Point e = Point::Zero(n);
        e(c) = h;
        const Christoffel a = christoffel(m, p + 2 * e), b = christoffel(m, p + e),
                          d = christoffel(m, p - e), f = christoffel(m, p - 2 * e);
        for (int i = 0; i < n; ++i)
            out[c].gamma[i] = (-a.gamma[i] + 8 * b.gamma[i] - 8 * d.gamma[i] + f.gamma[i]) / (12 * h);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Built-in manifolds
// ---------------------------------------------------------------------------

class FlatPlane final : public Manifold {
public:
    std::string name() const override { return "flat_plane"; }
    int dimension() const override { return 2; }
    Matrix metric_unchecked(const Point&) const override { return Matrix::Identity(2, 2); }
    std::optional<Christoffel> christoffel_analytic(const Point&) const override {
        return Christoffel(2);
    }
    std::vector<Matrix> metric_derivative(const Point&) const override {
        return {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    }
    double injectivity_floor(const Point&) const override { return floor_; }
    double radial(const Point& p) const override { return p.norm(); }
    Box sampling_box(double r) const override {
        return {Point::Constant(2, -r), Point::Constant(2, r)};
    }
    std::optional<SquaredDistance> closed_form_sqdist(const Point& x,
                                                      const Point& y) const override {
        return euclidean_sqdist(difference(x, y));
    }
    void set_injectivity_floor(double f) { floor_ = f; }

    static SquaredDistance euclidean_sqdist(const Vector& d) {
        const int n = static_cast<int>(d.size());
        SquaredDistance s;
        s.value = d.squaredNorm();
        s.gradient.resize(2 * n);
        s.gradient << -2 * d, 2 * d;
        s.hessian.resize(2 * n, 2 * n);
        const Matrix id = 2 * Matrix::Identity(n, n);
        s.hessian << id, -id, -id, id;
        return s;
    }

private:
    // The plane has infinite injectivity radius; any large constant works.
    double floor_ = 1e6;
};

/// Flat torus R^2 / (aZ x bZ) in its periodic chart.
class FlatTorus final : public Manifold {
public:
    FlatTorus(double a = 1.0, double b = 1.0) : a_(a), b_(b) {
        if (!(a > 0 && b > 0)) throw ConfigError("flat_torus: side lengths must be positive");
    }
    std::string name() const override { return "flat_torus"; }
    int dimension() const override { return 2; }
    Matrix metric_unchecked(const Point&) const override { return Matrix::Identity(2, 2); }
    std::optional<Christoffel> christoffel_analytic(const Point&) const override {
        return Christoffel(2);
    }
    std::vector<Matrix> metric_derivative(const Point&) const override {
        return {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    }
    Vector periods() const override { return Eigen::Vector2d(a_, b_); }
    double injectivity_floor(const Point&) const override { return 0.5 * std::min(a_, b_); }
    double radial(const Point&) const override { return 0.0; }
    Box sampling_box(double) const override {
        return {Point::Zero(2), Eigen::Vector2d(a_, b_)};
    }
    std::optional<SquaredDistance> closed_form_sqdist(const Point& x,
                                                      const Point& y) const override {
        return FlatPlane::euclidean_sqdist(difference(x, y));
    }
    std::map<std::string, double> parameters() const override { return {{"a", a_}, {"b", b_}}; }

private:
    double a_, b_;
};

/// Round sphere of radius R in the spherical chart (colatitude, longitude).
/// The chart excludes a neighbourhood of the poles.
class RoundSphere final : public Manifold {
public:
    explicit RoundSphere(double radius = 1.0, double pole_margin = 1e-3)
        : r_(radius), margin_(pole_margin) {
        if (!(radius > 0)) throw ConfigError("sphere: radius must be positive");
    }
    std::string name() const override { return "sphere"; }
    int dimension() const override { return 2; }
    bool in_domain(const Point& p) const override {
        return p(0) > margin_ && p(0) < std::numbers::pi - margin_;
    }
    Matrix metric_unchecked(const Point& p) const override {
        Matrix g = Matrix::Zero(2, 2);
        g(0, 0) = r_ * r_;
        g(1, 1) = r_ * r_ * std::sin(p(0)) * std::sin(p(0));
        return g;
    }
    std::vector<Matrix> metric_derivative(const Point& p) const override {
        std::vector<Matrix> d(2, Matrix::Zero(2, 2));
        d[0](1, 1) = r_ * r_ * std::sin(2 * p(0));
        return d;
    }
    std::optional<Christoffel> christoffel_analytic(const Point& p) const override {
        Christoffel c(2);
        const double s = std::sin(p(0)), co = std::cos(p(0));
        c(0, 1, 1) = -s * co;
        c(1, 0, 1) = c(1, 1, 0) = co / s;
        return c;
    }
    Vector periods() const override { return Eigen::Vector2d(0.0, 2 * std::numbers::pi); }
    double injectivity_floor(const Point&) const override { return std::numbers::pi * r_; }
    double radial(const Point&) const override { return 0.0; }
    Box sampling_box(double) const override {
        return {Eigen::Vector2d(0.2, 0.0), Eigen::Vector2d(std::numbers::pi - 0.2, 2 * std::numbers::pi)};
    }
    std::optional<SquaredDistance> closed_form_sqdist(const Point& x,
                                                      const Point& y) const override;
    std::map<std::string, double> parameters() const override { return {{"radius", r_}}; }
    double radius() const { return r_; }

private:
    double r_;
    double margin_;
};

namespace detail {
using AdInner = Eigen::AutoDiffScalar<Eigen::Vector4d>;
using AdOuter = Eigen::AutoDiffScalar<Eigen::Matrix<AdInner, 4, 1>>;

template <class T>
T sphere_sqdist(const T* z, double radius) {
    using std::atan2;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const T ax = sin(z[0]) * cos(z[1]), ay = sin(z[0]) * sin(z[1]), az = cos(z[0]);
    const T bx = sin(z[2]) * cos(z[3]), by = sin(z[2]) * sin(z[3]), bz = cos(z[2]);
    const T cx = ay * bz - az * by, cy = az * bx - ax * bz, cz = ax * by - ay * bx;
    const T cross = sqrt(cx * cx + cy * cy + cz * cz);
    const T dot = ax * bx + ay * by + az * bz;
    const T d = radius * atan2(cross, dot);
    return d * d;
}
}  // namespace detail

inline std::optional<SquaredDistance> RoundSphere::closed_form_sqdist(const Point& x,
                                                                      const Point& y) const {
    require_domain(x);
    require_domain(y);
    SquaredDistance s;
    if (difference(x, y).norm() < 1e-12) {
        // d^2 is smooth at the diagonal with Hessian 2 [[g, -g], [-g, g]].
        const Matrix g = metric(x);
        s.value = 0.0;
        s.gradient = Vector::Zero(4);
        s.hessian.resize(4, 4);
        s.hessian << 2 * g, -2 * g, -2 * g, 2 * g;
        return s;
    }
    using detail::AdInner;
    using detail::AdOuter;
    const double in[4] = {x(0), x(1), y(0), y(1)};
    AdOuter z[4];
    for (int i = 0; i < 4; ++i) {
        z[i].value() = AdInner(in[i], Eigen::Vector4d::Unit(i));
        z[i].derivatives().resize(4);
        for (int j = 0; j < 4; ++j)
            z[i].derivatives()(j) = AdInner(i == j ? 1.0 : 0.0, Eigen::Vector4d::Zero());
    }
    const AdOuter r = detail::sphere_sqdist(z, r_);
    s.value = r.value().value();
    s.gradient.resize(4);
    s.hessian.resize(4, 4);
    for (int i = 0; i < 4; ++i) {
        s.gradient(i) = r.value().derivatives()(i);
        for (int j = 0; j < 4; ++j) s.hessian(i, j) = r.derivatives()(i).derivatives()(j);
    }
    s.hessian = 0.5 * (s.hessian + s.hessian.transpose()).eval();
    return s;
}

/// Profile of a surface of revolution in a meridian coordinate u:
/// metric diag(h(u), r(u)^2) on chart (u, angle).
struct RevolutionProfile {
    std::function<double(double)> r, dr, h, dh;
    /// Height function used as radial exhaustion coordinate.
    std::function<double(double)> height;
    double u_min = -std::numeric_limits<double>::infinity();
    double u_max = std::numeric_limits<double>::infinity();
};

class SurfaceOfRevolution final : public Manifold {
public:
    SurfaceOfRevolution(std::string name, RevolutionProfile profile, double inj_floor,
                        std::map<std::string, double> params = {})
        : name_(std::move(name)), prof_(std::move(profile)), floor_(inj_floor),
          params_(std::move(params)) {
        if (!(inj_floor > 0)) throw ConfigError(name_ + ": injectivity floor must be positive");
    }

    /// x^2 + y^2 - z^2 = 1 with u = asinh(z): metric diag(cosh 2u, cosh^2 u).
    static std::shared_ptr<SurfaceOfRevolution> hyperboloid() {
        RevolutionProfile p;
        p.r = [](double u) { return std::cosh(u); };
        p.dr = [](double u) { return std::sinh(u); };
        p.h = [](double u) { return std::cosh(2 * u); };
        p.dh = [](double u) { return 2 * std::sinh(2 * u); };
        p.height = [](double u) { return std::sinh(u); };
        p.u_min = -8.0;
        p.u_max = 8.0;
        // Every geodesic loop winds around the neck, whose shortest loop has length 2 pi.
        return std::make_shared<SurfaceOfRevolution>("hyperboloid_one_sheet", p, std::numbers::pi);
    }

    /// Radius r(z) given by a polynomial in the height z (coefficients in
    /// increasing degree); metric diag(1 + r'(z)^2, r(z)^2).
    static std::shared_ptr<SurfaceOfRevolution> polynomial(std::vector<double> coeffs,
                                                           double inj_floor, double z_min,
                                                           double z_max) {
        if (coeffs.empty()) throw ConfigError("surface_of_revolution: empty profile");
        auto eval = [coeffs](double z, int deriv) {
            double s = 0.0;
            for (int i = static_cast<int>(coeffs.size()) - 1; i >= deriv; --i) {
                double c = coeffs[i];
                for (int k = 0; k < deriv; ++k) c *= (i - k);
                s = s * z + c;
            }
            return s;
        };
        RevolutionProfile p;
        p.r = [eval](double z) { return eval(z, 0); };
        p.dr = [eval](double z) { return eval(z, 1); };
        p.h = [eval](double z) { double d = eval(z, 1); return 1 + d * d; };
        p.dh = [eval](double z) { return 2 * eval(z, 1) * eval(z, 2); };
        p.height = [](double z) { return z; };
        p.u_min = z_min;
        p.u_max = z_max;
        std::map<std::string, double> params;
        for (std::size_t i = 0; i < coeffs.size(); ++i)
            params["c" + std::to_string(i)] = coeffs[i];
        return std::make_shared<SurfaceOfRevolution>("surface_of_revolution", p, inj_floor, params);
    }

    std::string name() const override { return name_; }
    int dimension() const override { return 2; }
    bool in_domain(const Point& p) const override {
        return p(0) > prof_.u_min && p(0) < prof_.u_max && prof_.r(p(0)) > 0.0;
    }
    Matrix metric_unchecked(const Point& p) const override {
        Matrix g = Matrix::Zero(2, 2);
        const double r = prof_.r(p(0));
        g(0, 0) = prof_.h(p(0));
        g(1, 1) = r * r;
        return g;
    }
    std::vector<Matrix> metric_derivative(const Point& p) const override {
        std::vector<Matrix> d(2, Matrix::Zero(2, 2));
        d[0](0, 0) = prof_.dh(p(0));
        d[0](1, 1) = 2 * prof_.r(p(0)) * prof_.dr(p(0));
        return d;
    }
    std::optional<Christoffel> christoffel_analytic(const Point& p) const override {
        const double u = p(0), r = prof_.r(u), dr = prof_.dr(u), h = prof_.h(u), dh = prof_.dh(u);
        Christoffel c(2);
        c(0, 0, 0) = dh / (2 * h);
        c(0, 1, 1) = -r * dr / h;
        c(1, 0, 1) = c(1, 1, 0) = dr / r;
        return c;
    }
    Vector periods() const override { return Eigen::Vector2d(0.0, 2 * std::numbers::pi); }
    double injectivity_floor(const Point&) const override { return floor_; }
    double radial(const Point& p) const override { return std::abs(prof_.height(p(0))); }
    Box sampling_box(double radial_max) const override {
        // Bisection for the largest |u| with |height(u)| <= radial_max on each side.
        auto edge = [&](double bound) {
            double lo = 0.0, hi = bound;
            if (std::abs(prof_.height(hi)) <= radial_max) return hi;
            for (int i = 0; i < 80; ++i) {
                const double mid = 0.5 * (lo + hi);
                (std::abs(prof_.height(mid)) <= radial_max ? lo : hi) = mid;
            }
            return lo;
        };
        const double lo = std::max(edge(std::max(prof_.u_min, -50.0)), prof_.u_min);
        const double hi = std::min(edge(std::min(prof_.u_max, 50.0)), prof_.u_max);
        return {Eigen::Vector2d(lo, 0.0), Eigen::Vector2d(hi, 2 * std::numbers::pi)};
    }
    std::map<std::string, double> parameters() const override { return params_; }

private:
    std::string name_;
    RevolutionProfile prof_;
    double floor_;
    std::map<std::string, double> params_;
};

}  // namespace geolab
