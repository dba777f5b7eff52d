#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qer/error.hpp"

namespace qer {

using Vec2 = Eigen::Vector2d;

inline Vec2 rotate_left(const Vec2& v) { return {-v.y(), v.x()}; }

// ---------------------------------------------------------------------------
// Ambient domains M
// ---------------------------------------------------------------------------

enum class DomainKind { rectangle, disk, stadium, polygon };

inline const char* to_string(DomainKind k) {
    switch (k) {
        case DomainKind::rectangle: return "rectangle";
        case DomainKind::disk: return "disk";
        case DomainKind::stadium: return "stadium";
        case DomainKind::polygon: return "polygon";
    }
    return "?";
}

struct DomainSpec {
    DomainKind kind = DomainKind::rectangle;
    double a = 1.0;       // rectangle side along x
    double b = 1.0;       // rectangle side along y
    double radius = 1.0;  // disk
    double alpha = 1.0;   // stadium half straight length
    double r = 1.0;       // stadium cap radius
    std::vector<Vec2> vertices;  // polygon, counter-clockwise or not
};

struct BoundingBox {
    double x0, y0, x1, y1;
};

// Planar region with Dirichlet boundary.
//   rectangle: [0,a] x [0,b]
//   disk:      |p| < R
//   stadium:   points within r of the segment [-alpha, alpha] x {0}
//   polygon:   simple polygon given by its vertices
class Domain {
public:
    static Domain rectangle(double a, double b) {
        DomainSpec s;
        s.kind = DomainKind::rectangle;
        s.a = a;
        s.b = b;
        return Domain(s);
    }
    static Domain disk(double radius) {
        DomainSpec s;
        s.kind = DomainKind::disk;
        s.radius = radius;
        return Domain(s);
    }
    static Domain stadium(double alpha, double r) {
        DomainSpec s;
        s.kind = DomainKind::stadium;
        s.alpha = alpha;
        s.r = r;
        return Domain(s);
    }
    static Domain polygon(std::vector<Vec2> vertices) {
        DomainSpec s;
        s.kind = DomainKind::polygon;
        s.vertices = std::move(vertices);
        return Domain(s);
    }

    explicit Domain(DomainSpec spec) : spec_(std::move(spec)) {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw DomainError("geometry", std::string("parameter '") + name +
                                                  "' must be positive");
        };
        switch (spec_.kind) {
            case DomainKind::rectangle:
                positive(spec_.a, "a");
                positive(spec_.b, "b");
                area_ = spec_.a * spec_.b;
                break;
            case DomainKind::disk:
                positive(spec_.radius, "radius");
                area_ = std::numbers::pi * spec_.radius * spec_.radius;
                break;
            case DomainKind::stadium:
                positive(spec_.alpha, "alpha");
                positive(spec_.r, "r");
                area_ = 4.0 * spec_.alpha * spec_.r + std::numbers::pi * spec_.r * spec_.r;
                break;
            case DomainKind::polygon: {
                if (spec_.vertices.size() < 3)
                    throw DomainError("geometry", "parameter 'vertices' needs at least 3 points");
                double twice = 0.0;
                const auto& v = spec_.vertices;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const auto& p = v[i];
                    const auto& q = v[(i + 1) % v.size()];
                    twice += p.x() * q.y() - q.x() * p.y();
                }
                area_ = 0.5 * std::abs(twice);
                positive(area_, "vertices (area)");
                break;
            }
        }
    }

    DomainKind kind() const { return spec_.kind; }
    const DomainSpec& spec() const { return spec_; }
    double area() const { return area_; }

    // Liouville volume of S*M for a flat planar domain: circle fibre times area.
    double liouville_volume() const { return 2.0 * std::numbers::pi * area_; }

    // Signed distance to the boundary, positive inside.
    double distance(const Vec2& p) const {
        switch (spec_.kind) {
            case DomainKind::rectangle: {
                const double dx = std::min(p.x(), spec_.a - p.x());
                const double dy = std::min(p.y(), spec_.b - p.y());
                if (dx >= 0.0 && dy >= 0.0) return std::min(dx, dy);
                const double ox = std::max(0.0, -dx);
                const double oy = std::max(0.0, -dy);
                return -std::hypot(ox, oy);
            }
            case DomainKind::disk:
                return spec_.radius - p.norm();
            case DomainKind::stadium: {
                const double cx = std::clamp(p.x(), -spec_.alpha, spec_.alpha);
                return spec_.r - std::hypot(p.x() - cx, p.y());
            }
            case DomainKind::polygon: {
                const auto& v = spec_.vertices;
                double dmin = std::numeric_limits<double>::infinity();
                bool in = false;
                for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
                    const Vec2& a = v[j];
                    const Vec2& b = v[i];
                    const Vec2 e = b - a;
                    const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
                    dmin = std::min(dmin, (p - (a + t * e)).norm());
                    if ((a.y() > p.y()) != (b.y() > p.y())) {
                        const double xc = a.x() + (p.y() - a.y()) * e.x() / e.y();
                        if (p.x() < xc) in = !in;
                    }
                }
                return in ? dmin : -dmin;
            }
        }
        return 0.0;
    }

    bool inside(const Vec2& p) const { return distance(p) > 0.0; }

    BoundingBox bounding_box() const {
        switch (spec_.kind) {
            case DomainKind::rectangle: return {0.0, 0.0, spec_.a, spec_.b};
            case DomainKind::disk:
                return {-spec_.radius, -spec_.radius, spec_.radius, spec_.radius};
            case DomainKind::stadium:
                return {-spec_.alpha - spec_.r, -spec_.r, spec_.alpha + spec_.r, spec_.r};
            case DomainKind::polygon: {
                BoundingBox bb{1e300, 1e300, -1e300, -1e300};
                for (const auto& p : spec_.vertices) {
                    bb.x0 = std::min(bb.x0, p.x());
                    bb.y0 = std::min(bb.y0, p.y());
                    bb.x1 = std::max(bb.x1, p.x());
                    bb.y1 = std::max(bb.y1, p.y());
                }
                return bb;
            }
        }
        return {};
    }

    // Smallest geometric feature; used to sanity-check grid resolution.
    double narrowest_feature() const {
        switch (spec_.kind) {
            case DomainKind::rectangle: return std::min(spec_.a, spec_.b);
            case DomainKind::disk: return 2.0 * spec_.radius;
            case DomainKind::stadium: return 2.0 * spec_.r;
            case DomainKind::polygon: {
                const auto bb = bounding_box();
                return std::min(bb.x1 - bb.x0, bb.y1 - bb.y0);
            }
        }
        return 0.0;
    }

    // Canonical text echo of the shape parameters (archived and hashed).
    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        os << to_string(spec_.kind);
        switch (spec_.kind) {
            case DomainKind::rectangle: os << " a=" << spec_.a << " b=" << spec_.b; break;
            case DomainKind::disk: os << " radius=" << spec_.radius; break;
            case DomainKind::stadium: os << " alpha=" << spec_.alpha << " r=" << spec_.r; break;
            case DomainKind::polygon:
                os << " vertices=";
                for (const auto& p : spec_.vertices) os << p.x() << ',' << p.y() << ';';
                break;
        }
        return os.str();
    }

private:
    DomainSpec spec_;
    double area_ = 0.0;
};

inline Domain build_domain(const DomainSpec& spec) { return Domain(spec); }

// ---------------------------------------------------------------------------
// Interior curves H
// ---------------------------------------------------------------------------

enum class CurveKind { circle, segment, spline };

inline const char* to_string(CurveKind k) {
    switch (k) {
        case CurveKind::circle: return "circle";
        case CurveKind::segment: return "segment";
        case CurveKind::spline: return "spline";
    }
    return "?";
}

struct CurveSpec {
    CurveKind kind = CurveKind::circle;
    Vec2 center{0.0, 0.0};
    double radius = 0.5;
    Vec2 start{0.0, 0.0};
    Vec2 end{1.0, 0.0};
    std::vector<Vec2> control_points;  // closed periodic spline
};

namespace detail {

// Closed C^2 periodic cubic spline through control points with uniform
// knots, re-parametrized by arclength.
class PeriodicSpline {
public:
    explicit PeriodicSpline(std::vector<Vec2> pts) : p_(std::move(pts)) {
        const int n = static_cast<int>(p_.size());
        if (n < 4) throw DomainError("geometry", "spline curve needs at least 4 control points");
        double twice = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto& a = p_[i];
            const auto& b = p_[(i + 1) % n];
            twice += a.x() * b.y() - b.x() * a.y();
        }
        if (twice < 0.0) std::reverse(p_.begin(), p_.end());

        // Periodic second-derivative system: m_{i-1} + 4 m_i + m_{i+1} = 6 (p_{i+1} - 2p_i + p_{i-1}).
        Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n, n);
        Eigen::MatrixXd rhs(n, 2);
        for (int i = 0; i < n; ++i) {
            sys(i, i) = 4.0;
            sys(i, (i + 1) % n) += 1.0;
            sys(i, (i + n - 1) % n) += 1.0;
            const Vec2 d = p_[(i + 1) % n] - 2.0 * p_[i] + p_[(i + n - 1) % n];
            rhs(i, 0) = 6.0 * d.x();
            rhs(i, 1) = 6.0 * d.y();
        }
        const Eigen::MatrixXd m = sys.partialPivLu().solve(rhs);
        m_.resize(n);
        for (int i = 0; i < n; ++i) m_[i] = Vec2(m(i, 0), m(i, 1));

        cum_.assign(n + 1, 0.0);
        for (int i = 0; i < n; ++i) {
            auto speed = [&](double t) { return d1(i + t).norm(); };
            cum_[i + 1] = cum_[i] + boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                                        speed, 0.0, 1.0, 15, 1e-14);
        }
    }

    int segments() const { return static_cast<int>(p_.size()); }
    double length() const { return cum_.back(); }

    Vec2 d0(double u) const { return eval(u, 0); }
    Vec2 d1(double u) const { return eval(u, 1); }
    Vec2 d2(double u) const { return eval(u, 2); }

    // Parameter u with arclength(u) = s.
    double param(double s) const {
        const double L = length();
        s = std::fmod(s, L);
        if (s < 0) s += L;
        const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
        int i = std::clamp(static_cast<int>(it - cum_.begin()) - 1, 0, segments() - 1);
        double lo = 0.0, hi = 1.0, t = (s - cum_[i]) / (cum_[i + 1] - cum_[i]);
        for (int iter = 0; iter < 60; ++iter) {
            const double f = partial(i, t) - (s - cum_[i]);
            if (std::abs(f) < 1e-15 * L) break;
            if (f > 0) hi = t; else lo = t;
            double tn = t - f / d1(i + t).norm();
            if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
            const bool settled = std::abs(tn - t) < 1e-16;
            t = tn;
            if (settled) break;
        }
        return i + t;
    }

private:
    double partial(int i, double t) const {
        auto speed = [&](double x) { return d1(i + x).norm(); };
        return boost::math::quadrature::gauss<double, 30>::integrate(speed, 0.0, t);
    }

    Vec2 eval(double u, int order) const {
        const int n = segments();
        double fl = std::floor(u);
        int i = static_cast<int>(fl) % n;
        if (i < 0) i += n;
        const double t = u - fl;
        const Vec2& p0 = p_[i];
        const Vec2& p1 = p_[(i + 1) % n];
        const Vec2& m0 = m_[i];
        const Vec2& m1 = m_[(i + 1) % n];
        const Vec2 c1 = (p1 - p0) - (2.0 * m0 + m1) / 6.0;
        switch (order) {
            case 0:
                return p0 + c1 * t + m0 * (t * t / 2.0) + (m1 - m0) * (t * t * t / 6.0);
            case 1:
                return c1 + m0 * t + (m1 - m0) * (t * t / 2.0);
            default:
                return m0 + (m1 - m0) * t;
        }
    }

    std::vector<Vec2> p_;
    std::vector<Vec2> m_;
    std::vector<double> cum_;
};

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
    };
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return (o1 * o2 < 0.0) && (o3 * o4 < 0.0);
}

}  // namespace detail

// Oriented, arclength-parametrized curve. Closed curves run counter-clockwise
// so that the left normal nu = rot90(t) points into the enclosed region M_+.
class Curve {
public:
    Curve(const CurveSpec& spec, const Domain& domain) : spec_(spec) {
        switch (spec_.kind) {
            case CurveKind::circle:
                if (!(spec_.radius > 0.0))
                    throw DomainError("geometry", "parameter 'radius' must be positive");
                length_ = 2.0 * std::numbers::pi * spec_.radius;
                closed_ = true;
                break;
            case CurveKind::segment:
                length_ = (spec_.end - spec_.start).norm();
                if (!(length_ > 0.0))
                    throw DomainError("geometry", "segment endpoints coincide");
                closed_ = false;
                break;
            case CurveKind::spline:
                spline_ = std::make_shared<detail::PeriodicSpline>(spec_.control_points);
                length_ = spline_->length();
                closed_ = true;
                break;
        }
        validate(domain);
    }

    CurveKind kind() const { return spec_.kind; }
    const CurveSpec& spec() const { return spec_; }
    double length() const { return length_; }
    bool closed() const { return closed_; }
    double collar_max() const { return collar_max_; }

    Vec2 point(double s) const {
        switch (spec_.kind) {
            case CurveKind::circle: {
                const double th = s / spec_.radius;
                return spec_.center + spec_.radius * Vec2(std::cos(th), std::sin(th));
            }
            case CurveKind::segment:
                return spec_.start + (s / length_) * (spec_.end - spec_.start);
            case CurveKind::spline:
                return spline_->d0(spline_->param(s));
        }
        return {};
    }

    Vec2 tangent(double s) const {
        switch (spec_.kind) {
            case CurveKind::circle: {
                const double th = s / spec_.radius;
                return {-std::sin(th), std::cos(th)};
            }
            case CurveKind::segment:
                return (spec_.end - spec_.start) / length_;
            case CurveKind::spline:
                return spline_->d1(spline_->param(s)).normalized();
        }
        return {};
    }

    Vec2 normal(double s) const { return rotate_left(tangent(s)); }

    // Signed curvature with respect to nu: J = 1 - kappa x_n.
    double curvature(double s) const {
        switch (spec_.kind) {
            case CurveKind::circle: return 1.0 / spec_.radius;
            case CurveKind::segment: return 0.0;
            case CurveKind::spline: {
                const double u = spline_->param(s);
                const Vec2 d1 = spline_->d1(u);
                const Vec2 d2 = spline_->d2(u);
                return (d1.x() * d2.y() - d1.y() * d2.x()) / std::pow(d1.norm(), 3);
            }
        }
        return 0.0;
    }

    double curvature_derivative(double s) const {
        if (spec_.kind != CurveKind::spline) return 0.0;
        const double e = 1e-4 * length_;
        auto k = [&](double t) { return curvature(closed_ ? std::fmod(t + length_, length_) : t); };
        return (k(s - 2 * e) - 8 * k(s - e) + 8 * k(s + e) - k(s + 2 * e)) / (12 * e);
    }

    // Tangential node positions used for traces: uniform, including s=0 for
    // closed curves; cell midpoints for open arcs.
    std::vector<double> nodes(int n) const {
        std::vector<double> s(n);
        for (int i = 0; i < n; ++i) s[i] = (closed_ ? i : i + 0.5) * length_ / n;
        return s;
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        os << to_string(spec_.kind);
        switch (spec_.kind) {
            case CurveKind::circle:
                os << " center=" << spec_.center.x() << ',' << spec_.center.y()
                   << " radius=" << spec_.radius;
                break;
            case CurveKind::segment:
                os << " start=" << spec_.start.x() << ',' << spec_.start.y()
                   << " end=" << spec_.end.x() << ',' << spec_.end.y();
                break;
            case CurveKind::spline:
                os << " points=";
                for (const auto& p : spec_.control_points) os << p.x() << ',' << p.y() << ';';
                break;
        }
        return os.str();
    }

private:
    void validate(const Domain& domain) {
        const int n = std::max(512, static_cast<int>(std::ceil(length_ / 0.005)));
        std::vector<Vec2> pts(n + (closed_ ? 0 : 1));
        double kmax = 0.0;
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double s = length_ * static_cast<double>(i) / n;
            pts[i] = point(s);
            kmax = std::max(kmax, std::abs(curvature(s)));
            dmin = std::min(dmin, domain.distance(pts[i]));
        }
        if (!(dmin > 0.0))
            throw DomainError("geometry", "curve " + describe() + " intersects the domain boundary");

        const std::size_t m = pts.size();
        const std::size_t segs = closed_ ? m : m - 1;
        for (std::size_t i = 0; i < segs; ++i) {
            for (std::size_t j = i + 2; j < segs; ++j) {
                if (closed_ && i == 0 && j == segs - 1) continue;
                if (detail::segments_cross(pts[i], pts[(i + 1) % m], pts[j], pts[(j + 1) % m]))
                    throw DomainError("geometry", "curve " + describe() + " self-intersects");
            }
        }

        // Global injectivity of the collar: points far apart along the curve
        // must stay at least 2*eps apart in the plane.
        double reach = std::numeric_limits<double>::infinity();
        const double sep = kmax > 0.0 ? std::min(std::numbers::pi / kmax, 0.5 * length_)
                                      : 0.5 * length_;
        const std::size_t stride = std::max<std::size_t>(1, m / 512);
        for (std::size_t i = 0; i < m; i += stride) {
            for (std::size_t j = i + 1; j < m; j += stride) {
                double ds = length_ * static_cast<double>(j - i) / n;
                if (closed_) ds = std::min(ds, length_ - ds);
                if (ds < sep) continue;
                reach = std::min(reach, 0.5 * (pts[i] - pts[j]).norm());
            }
        }

        const double jac = kmax > 0.0 ? 0.5 / kmax : std::numeric_limits<double>::infinity();
        // strictly inside the open domain and with J > 1/2
        collar_max_ = (1.0 - 1e-3) * std::min({jac, dmin, reach});
    }

    CurveSpec spec_;
    std::shared_ptr<detail::PeriodicSpline> spline_;
    double length_ = 0.0;
    bool closed_ = true;
    double collar_max_ = 0.0;
};

inline Curve build_curve(const CurveSpec& spec, const Domain& domain) { return Curve(spec, domain); }

// ---------------------------------------------------------------------------
// Fermi collar chart (s, x_n) -> gamma(s) + x_n nu(s)
// ---------------------------------------------------------------------------

class FermiChart {
public:
    FermiChart(const Curve& curve, double eps, int ns, int nn) : curve_(&curve), eps_(eps) {
        if (!(eps > 0.0)) throw DomainError("geometry", "collar width must be positive");
        if (eps > curve.collar_max() * (1.0 + 1e-12))
            throw DomainError("geometry", "collar width " + std::to_string(eps) +
                                              " exceeds eps_max " +
                                              std::to_string(curve.collar_max()));
        if (ns < 4 || nn < 3 || nn % 2 == 0)
            throw DomainError("geometry", "chart needs ns >= 4 and an odd nn >= 3");
        s_ = curve.nodes(ns);
        xn_.resize(nn);
        for (int m = 0; m < nn; ++m) xn_[m] = -eps + 2.0 * eps * m / (nn - 1);
        kappa_.resize(ns);
        jac_.resize(ns, nn);
        for (int i = 0; i < ns; ++i) {
            kappa_[i] = curve.curvature(s_[i]);
            for (int m = 0; m < nn; ++m) {
                jac_(i, m) = 1.0 - kappa_[i] * xn_[m];
                if (!(jac_(i, m) > 0.5))
                    throw DomainError("geometry", "Fermi Jacobian drops to 1/2 on the collar");
            }
        }
    }

    const Curve& curve() const { return *curve_; }
    double eps() const { return eps_; }
    int ns() const { return static_cast<int>(s_.size()); }
    int nn() const { return static_cast<int>(xn_.size()); }
    int center_index() const { return nn() / 2; }
    double ds() const { return curve_->length() / ns(); }
    double dn() const { return xn_[1] - xn_[0]; }
    const std::vector<double>& s() const { return s_; }
    const std::vector<double>& xn() const { return xn_; }
    double kappa(int i) const { return kappa_[i]; }
    double jacobian(int i, int m) const { return jac_(i, m); }

    Vec2 to_cartesian(double s, double xn) const {
        return curve_->point(s) + xn * curve_->normal(s);
    }

    // Nearest-point projection onto the curve; valid on the collar.
    Vec2 to_fermi(const Vec2& p) const {
        const double L = curve_->length();
        const int probe = 256;
        double best = 0.0, bestd = std::numeric_limits<double>::infinity();
        for (int k = 0; k < probe; ++k) {
            const double s = (curve_->closed() ? k : k + 0.5) * L / probe;
            const double d = (p - curve_->point(s)).squaredNorm();
            if (d < bestd) { bestd = d; best = s; }
        }
        double s = best;
        for (int iter = 0; iter < 50; ++iter) {
            const Vec2 g = curve_->point(s);
            const Vec2 t = curve_->tangent(s);
            const double f = (p - g).dot(t);
            const double df = -1.0 + curve_->curvature(s) * (p - g).dot(curve_->normal(s));
            const double step = f / df;
            s -= step;
            if (curve_->closed()) {
                s = std::fmod(s, L);
                if (s < 0) s += L;
            }
            if (std::abs(step) < 1e-15 * L) break;
        }
        return {s, (p - curve_->point(s)).dot(curve_->normal(s))};
    }

private:
    const Curve* curve_;
    double eps_;
    std::vector<double> s_;
    std::vector<double> xn_;
    std::vector<double> kappa_;
    Eigen::MatrixXd jac_;
};

inline FermiChart fermi_chart(const Curve& curve, double eps, int ns, int nn) {
    return FermiChart(curve, eps, ns, nn);
}

}  // namespace qer
