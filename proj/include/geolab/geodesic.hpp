#pragma once

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <vector>

#include "geolab/manifold.hpp"

namespace geolab {

struct GeodesicSample {
    double t;
    Point x;
    Vector v;
};

/// A geodesic t -> exp_p(t v), t in [0, duration], with its sampled trace.
struct GeodesicSegment {
    Point start;
    Vector velocity;
    double duration = 0.0;
    double tolerance = 0.0;
    std::vector<GeodesicSample> trace;

    const Point& end_point() const { return trace.back().x; }
    const Vector& end_velocity() const { return trace.back().v; }
};

struct IntegratorOptions {
    double tolerance = 1e-12;
    double initial_step = 1e-2;
};

namespace detail {

using State = std::vector<double>;

inline Vector slice(const State& s, int offset, int n) {
    return Eigen::Map<const Vector>(s.data() + offset, n);
}

inline void put(State& s, int offset, const Vector& v) {
    Eigen::Map<Vector>(s.data() + offset, v.size()) = v;
}

struct GeodesicSystem {
    const Manifold& m;
    void operator()(const State& s, State& ds, double t) const {
        const int n = m.dimension();
        const Point x = slice(s, 0, n);
        const Vector v = slice(s, n, n);
        if (!m.in_domain(x) || !x.allFinite())
            throw ChartExitError(m.name() + ": geodesic left the chart", t);
        const Christoffel g = christoffel(m, x);
        ds.resize(s.size());
        put(ds, 0, v);
        put(ds, n, -g.contract(v, v));
    }
};

/// Geodesic equation together with its linearisation, propagating all 2n
/// columns of the fundamental matrix.
struct VariationalSystem {
    const Manifold& m;
    void operator()(const State& s, State& ds, double t) const {
        const int n = m.dimension();
        const Point x = slice(s, 0, n);
        const Vector v = slice(s, n, n);
        if (!m.in_domain(x) || !x.allFinite())
            throw ChartExitError(m.name() + ": geodesic left the chart", t);
        const Christoffel g = christoffel(m, x);
        const std::vector<Christoffel> dg = christoffel_derivative(m, x);
        ds.resize(s.size());
        put(ds, 0, v);
        put(ds, n, -g.contract(v, v));
        Matrix dgvv(n, n);  // column c: (d_c Gamma)(v, v)
        for (int c = 0; c < n; ++c) dgvv.col(c) = dg[c].contract(v, v);
        const int base = 2 * n;
        for (int j = 0; j < 2 * n; ++j) {
            const Vector X = slice(s, base + j * 2 * n, n);
            const Vector V = slice(s, base + j * 2 * n + n, n);
            put(ds, base + j * 2 * n, V);
            put(ds, base + j * 2 * n + n, -dgvv * X - 2 * g.contract(v, V));
        }
    }
};

template <class System, class Observer>
void integrate(System sys, State& state, double duration, const IntegratorOptions& opt,
               Observer obs) {
    namespace odeint = boost::numeric::odeint;
    if (duration <= 0.0) {
        obs(state, 0.0);
        return;
    }
    auto stepper = odeint::make_controlled<odeint::runge_kutta_fehlberg78<State>>(
        opt.tolerance, opt.tolerance);
    State last = state;
    double t_last = 0.0;
    auto record = [&](const State& st, double t) {
        last = st;
        t_last = t;
        obs(st, t);
    };
    try {
        odeint::integrate_adaptive(stepper, sys, state, 0.0, duration,
                                   std::min(opt.initial_step, duration), record);
    } catch (const ChartExitError& e) {
        // Stage evaluations overshoot; walk from the last accepted state in
        // small fixed steps to place the exit time.
        odeint::runge_kutta4<State> rk4;
        const double h = 1e-4;
        double t = t_last;
        try {
            while (t < std::min(duration, e.exit_time())) {
                rk4.do_step(sys, last, t, h);
                t += h;
            }
        } catch (const ChartExitError&) {
            throw ChartExitError(e.what(), t);
        }
        throw;
    }
}

}  // namespace detail

/// Integrates the geodesic equation from (p, v) for the given duration.
inline GeodesicSegment geodesic_shoot(const Manifold& m, const Point& p, const Vector& v,
                                      double duration, const IntegratorOptions& opt = {}) {
    m.require_domain(p);
    const int n = m.dimension();
    if (v.size() != n) throw PreconditionError("geodesic_shoot: velocity dimension mismatch");
    if (duration < 0) throw PreconditionError("geodesic_shoot: negative duration");
    GeodesicSegment seg{p, v, duration, opt.tolerance, {}};
    detail::State s(2 * n);
    detail::put(s, 0, p);
    detail::put(s, n, v);
    detail::integrate(detail::GeodesicSystem{m}, s, duration, opt,
                      [&](const detail::State& st, double t) {
                          seg.trace.push_back({t, detail::slice(st, 0, n), detail::slice(st, n, n)});
                      });
    return seg;
}

/// End state of the geodesic flow and its derivative with respect to the
/// initial data, in chart coordinates: [dx1; dv1] = jacobian [dx0; dv0].
struct FlowJacobian {
    Point x;
    Vector v;
    Matrix jacobian;
};

inline FlowJacobian geodesic_flow_jacobian(const Manifold& m, const Point& p, const Vector& v,
                                           double duration, const IntegratorOptions& opt = {}) {
    m.require_domain(p);
    const int n = m.dimension();
    detail::State s(2 * n + 4 * n * n, 0.0);
    detail::put(s, 0, p);
    detail::put(s, n, v);
    for (int j = 0; j < 2 * n; ++j) s[2 * n + j * 2 * n + j] = 1.0;
    detail::integrate(detail::VariationalSystem{m}, s, duration, opt,
                      [](const detail::State&, double) {});
    FlowJacobian out{detail::slice(s, 0, n), detail::slice(s, n, n), Matrix(2 * n, 2 * n)};
    for (int j = 0; j < 2 * n; ++j)
        out.jacobian.col(j) = detail::slice(s, 2 * n + j * 2 * n, 2 * n);
    return out;
}

/// Relative drift of g(v, v) along a sampled geodesic.
inline double speed_drift(const Manifold& m, const GeodesicSegment& seg) {
    const double e0 = seg.velocity.dot(m.metric(seg.start) * seg.velocity);
    double worst = 0.0;
    for (const auto& s : seg.trace)
        worst = std::max(worst, std::abs(s.v.dot(m.metric(s.x) * s.v) - e0));
    return worst / std::max(e0, 1e-300);
}

/// The minimizing geodesic c: [0, 1] -> M from x to y together with the
/// squared distance and its chart derivatives.
struct SegmentSolution {
    double sqdist = 0.0;
    Vector w0;  ///< c'(0)
    Vector w1;  ///< c'(1)
    Vector gradient;  ///< d(dist^2)/d(x, y)
    Matrix hessian;   ///< empty unless requested
    double hessian_asymmetry = 0.0;  ///< |H - H^T| / |H| before symmetrizing

    double length() const { return std::sqrt(sqdist); }
};

struct ShootingOptions {
    IntegratorOptions integrator{};
    int max_iterations = 40;
    double residual_tolerance = 1e-13;
};

namespace detail {

/// Damped Newton on the initial velocity of a [0,1]-parametrised geodesic.
inline std::pair<Vector, FlowJacobian> shoot_boundary(const Manifold& m, const Point& x,
                                                      const Point& y,
                                                      const ShootingOptions& opt) {
    const int n = m.dimension();
    Vector w = m.difference(x, y);
    auto residual = [&](const FlowJacobian& f) { return m.difference(y, f.x); };
    FlowJacobian flow = geodesic_flow_jacobian(m, x, w, 1.0, opt.integrator);
    Vector r = residual(flow);
    const double scale = 1.0 + y.norm();
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (r.norm() <= opt.residual_tolerance * scale) return {w, flow};
        const Matrix B = flow.jacobian.block(0, n, n, n);
        const Vector step = B.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        double lambda = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, lambda *= 0.5) {
            try {
                const Vector trial = w + lambda * step;
                FlowJacobian f = geodesic_flow_jacobian(m, x, trial, 1.0, opt.integrator);
                const Vector rt = residual(f);
                if (rt.norm() < r.norm() || rt.norm() <= opt.residual_tolerance * scale) {
                    w = trial;
                    flow = std::move(f);
                    r = rt;
                    accepted = true;
                    break;
                }
            } catch (const ChartExitError&) {
            }
        }
        if (!accepted) break;
    }
    // Stagnation at round-off level still counts as converged.
    if (r.norm() <= 1e3 * opt.residual_tolerance * scale) return {w, flow};
    throw NotShortError(m.name() + ": boundary value shooting did not converge");
}

}  // namespace detail

/// Solves for the short geodesic from x to y. Uses the manifold's closed
/// form when it has one, otherwise single shooting. The Hessian comes from
/// the variational flow on the shooting route.
inline SegmentSolution solve_segment(const Manifold& m, const Point& x, const Point& y,
                                     bool with_hessian, const ShootingOptions& opt = {}) {
    m.require_domain(x);
    m.require_domain(y);
    const int n = m.dimension();
    SegmentSolution sol;
    if (auto cf = m.closed_form_sqdist(x, y)) {
        sol.sqdist = cf->value;
        sol.gradient = cf->gradient;
        sol.w0 = -0.5 * m.metric(x).ldlt().solve(cf->gradient.head(n));
        sol.w1 = 0.5 * m.metric(y).ldlt().solve(cf->gradient.tail(n));
        if (with_hessian) sol.hessian = cf->hessian;
    } else {
        auto [w0, flow] = detail::shoot_boundary(m, x, y, opt);
        const Matrix gx = m.metric(x), gy = m.metric(flow.x);
        sol.w0 = w0;
        sol.w1 = flow.v;
        sol.sqdist = w0.dot(gx * w0);
        sol.gradient.resize(2 * n);
        sol.gradient << -2 * gx * sol.w0, 2 * gy * sol.w1;
        if (with_hessian) {
            const Matrix A = flow.jacobian.block(0, 0, n, n), B = flow.jacobian.block(0, n, n, n),
                         C = flow.jacobian.block(n, 0, n, n), D = flow.jacobian.block(n, n, n, n);
            const Eigen::FullPivLU<Matrix> binv(B);
            const Matrix dw0_dx = -binv.solve(A), dw0_dy = binv.inverse();
            const Matrix dw1_dx = C + D * dw0_dx, dw1_dy = D * dw0_dy;
            const std::vector<Matrix> dgx = m.metric_derivative(x), dgy = m.metric_derivative(flow.x);
            Matrix dgx_w(n, n), dgy_w(n, n);
            for (int c = 0; c < n; ++c) {
                dgx_w.col(c) = dgx[c] * sol.w0;
                dgy_w.col(c) = dgy[c] * sol.w1;
            }
            Matrix H(2 * n, 2 * n);
            H.block(0, 0, n, n) = -2 * (dgx_w + gx * dw0_dx);
            H.block(0, n, n, n) = -2 * gx * dw0_dy;
            H.block(n, 0, n, n) = 2 * gy * dw1_dx;
            H.block(n, n, n, n) = 2 * (dgy_w + gy * dw1_dy);
            sol.hessian_asymmetry = (H - H.transpose()).norm() / std::max(H.norm(), 1e-300);
            sol.hessian = 0.5 * (H + H.transpose());
        }
    }
    if (!(sol.length() < m.injectivity_floor(x)))
        throw NotShortError(m.name() + ": segment longer than the injectivity floor");
    return sol;
}

/// Length of the short geodesic from p to q and the geodesic itself,
/// parametrised on [0, 1].
struct ShortDistance {
    double length;
    GeodesicSegment geodesic;
};

inline ShortDistance short_distance(const Manifold& m, const Point& p, const Point& q,
                                    const ShootingOptions& opt = {}) {
    const SegmentSolution s = solve_segment(m, p, q, false, opt);
    return {s.length(), geodesic_shoot(m, p, s.w0, 1.0, opt.integrator)};
}

/// Point at parameter t in [0, 1] on the short geodesic from x to y.
inline Point point_on_segment(const Manifold& m, const Point& x, const Point& y, double t,
                              const ShootingOptions& opt = {}) {
    if (t <= 0.0) return x;
    const SegmentSolution s = solve_segment(m, x, y, false, opt);
    return geodesic_shoot(m, x, s.w0, t, opt.integrator).end_point();
}

}  // namespace geolab
