#pragma once

#include <cmath>
#include <numbers>

#include "geolab/penalization.hpp"

namespace geolab::fixtures {

/// Forwards to a manifold but hides its closed forms, so distances come from
/// shooting and Christoffel symbols from metric differences.
class Opaque final : public Manifold {
public:
    explicit Opaque(ManifoldPtr inner) : inner_(std::move(inner)) {
        if (!inner_->exhaustion().empty()) set_exhaustion(inner_->exhaustion());
    }
    std::string name() const override { return "opaque_" + inner_->name(); }
    int dimension() const override { return inner_->dimension(); }
    bool in_domain(const Point& p) const override { return inner_->in_domain(p); }
    Matrix metric_unchecked(const Point& p) const override { return inner_->metric_unchecked(p); }
    Vector periods() const override { return inner_->periods(); }
    double injectivity_floor(const Point& p) const override { return inner_->injectivity_floor(p); }
    double radial(const Point& p) const override { return inner_->radial(p); }
    Box sampling_box(double r) const override { return inner_->sampling_box(r); }

private:
    ManifoldPtr inner_;
};

/// Round sphere whose exhaustion coordinate is sin^2 of the colatitude, so
/// penalty shells sit in positive curvature around the equator.
class EquatorialSphere final : public Manifold {
public:
    std::string name() const override { return "equatorial_sphere"; }
    int dimension() const override { return 2; }
    bool in_domain(const Point& p) const override { return sphere_.in_domain(p); }
    Matrix metric_unchecked(const Point& p) const override { return sphere_.metric_unchecked(p); }
    std::optional<Christoffel> christoffel_analytic(const Point& p) const override {
        return sphere_.christoffel_analytic(p);
    }
    Vector periods() const override { return sphere_.periods(); }
    double injectivity_floor(const Point& p) const override { return sphere_.injectivity_floor(p); }
    double radial(const Point& p) const override { return std::pow(std::sin(p(0)), 2); }
    Box sampling_box(double r) const override { return sphere_.sampling_box(r); }
    std::optional<SquaredDistance> closed_form_sqdist(const Point& x, const Point& y) const override {
        return sphere_.closed_form_sqdist(x, y);
    }

private:
    RoundSphere sphere_{1.0, 0.05};
};

inline Point pt(double a, double b) {
    Point p(2);
    p << a, b;
    return p;
}

inline BrokenLoop equator(int k, int wraps = 1) {
    static const RoundSphere s(1.0, 0.05);
    return periodic_sweep_seed(s, pt(std::numbers::pi / 2, 0.0), 1, wraps, k);
}

inline BrokenLoop waist(const Manifold& hyperboloid, int k) {
    return periodic_sweep_seed(hyperboloid, pt(0.0, 0.0), 1, 1, k);
}

}  // namespace geolab::fixtures
