#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qer/eigensolver.hpp"
#include "qer/geometry.hpp"
#include "qer/lifts.hpp"
#include "qer/psido.hpp"

namespace qer {

// Samples of u and h D_{x_n} u on the Fermi chart nodes, stored (s index, x_n index).
struct CollarField {
    const FermiChart* chart = nullptr;
    double h = 0.0;
    Eigen::MatrixXcd u;
    Eigen::MatrixXcd dn;  // h D_{x_n} u, empty when unknown
};

// d/dx_n along the chart is nu(s) . grad, so both samples are exact for
// closed-form modes and interpolated for grid modes.
inline CollarField sample_collar(const EigenMode& mode, const FermiChart& chart) {
    CollarField f;
    f.chart = &chart;
    f.h = mode.h;
    f.u.resize(chart.ns(), chart.nn());
    f.dn.resize(chart.ns(), chart.nn());
    const cplx factor(0.0, -mode.h);
    for (int i = 0; i < chart.ns(); ++i) {
        const double s = chart.s()[i];
        const Vec2 nu = chart.curve().normal(s);
        for (int m = 0; m < chart.nn(); ++m) {
            const Vec2 p = chart.to_cartesian(s, chart.xn()[m]);
            f.u(i, m) = mode.value(p);
            const Vec2c g = mode.gradient(p);
            f.dn(i, m) = factor * (g[0] * nu.x() + g[1] * nu.y());
        }
    }
    return f;
}

// Normal cutoff chi on [-1, 1].
struct CutoffProfile {
    std::string id;
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    double support = 1.0;  // chi = 0 for |t| >= support
};

namespace profiles {

// 1 on |t| <= 1/2, 0 on |t| >= 1, chi'(0) = 0.
inline CutoffProfile standard() {
    CutoffProfile p;
    p.id = "standard";
    p.value = [](double t) { return symbols::smooth_step(2.0 * (1.0 - std::abs(t))); };
    p.derivative = [](double t) {
        const double sgn = t < 0.0 ? -1.0 : 1.0;
        return -2.0 * sgn * symbols::smooth_step_derivative(2.0 * (1.0 - std::abs(t)));
    };
    return p;
}

// standard(t) * (1 + slope t): chi(0) = 1 but chi'(0) = slope.
inline CutoffProfile tilted(double slope) {
    const auto base = standard();
    CutoffProfile p;
    p.id = "tilted(" + std::to_string(slope) + ")";
    p.value = [base, slope](double t) { return base.value(t) * (1.0 + slope * t); };
    p.derivative = [base, slope](double t) {
        return base.derivative(t) * (1.0 + slope * t) + base.value(t) * slope;
    };
    return p;
}

inline CutoffProfile zero() {
    CutoffProfile p;
    p.id = "zero";
    p.value = p.derivative = [](double) { return 0.0; };
    return p;
}

}  // namespace profiles

// A = chi(x_n / eps) h D_{x_n} a^w(s, h D_s)
struct TestOperatorSpec {
    SymbolFn a;
    double eps = 0.1;
    CutoffProfile chi = profiles::standard();
};

// chi' vanishes on [-1/2, 1/2] (sampled).
inline bool flat_near_zero(const CutoffProfile& chi, int samples = 201) {
    for (int k = 0; k < samples; ++k)
        if (chi.derivative(-0.5 + static_cast<double>(k) / (samples - 1)) != 0.0) return false;
    return true;
}

namespace detail {

inline void check_collar_resolution(const CollarField& u) {
    const FermiChart& c = *u.chart;
    const double need = 2.0 * std::numbers::pi * u.h / 6.0;
    if (c.ds() > need || c.dn() > need)
        throw DomainError("rellich", "collar chart under-resolves h=" + std::to_string(u.h) +
                                         ": need spacing <= " + std::to_string(need));
}

inline QuantizedOperator slice_operator(const SymbolFn& a, const CollarField& u) {
    const FermiChart& c = *u.chart;
    return quantize(a, u.h, c.ns(), c.curve().length(), c.curve().closed());
}

// Centered difference in x_n, one-sided at the chart edges.
inline Eigen::MatrixXcd normal_difference(const Eigen::MatrixXcd& v, double dn, double h) {
    const int nn = static_cast<int>(v.cols());
    Eigen::MatrixXcd out(v.rows(), nn);
    const cplx f(0.0, -h);
    for (int m = 0; m < nn; ++m) {
        if (m == 0)
            out.col(m) = f * (v.col(1) - v.col(0)) / dn;
        else if (m == nn - 1)
            out.col(m) = f * (v.col(nn - 1) - v.col(nn - 2)) / dn;
        else
            out.col(m) = f * (v.col(m + 1) - v.col(m - 1)) / (2.0 * dn);
    }
    return out;
}

}  // namespace detail

// A u: per-slice Op(a) applied to h D_{x_n} u, then multiplied by chi(x_n/eps).
// Uses the sampled normal derivative when present, centered differences
// otherwise.
inline CollarField apply_test_operator(const TestOperatorSpec& spec, const CollarField& u) {
    const FermiChart& c = *u.chart;
    if (spec.eps > c.eps() * (1.0 + 1e-12))
        throw DomainError("rellich", "test operator support eps=" + std::to_string(spec.eps) +
                                         " leaks outside the chart (eps=" + std::to_string(c.eps()) + ")");
    detail::check_collar_resolution(u);
    const auto op = detail::slice_operator(spec.a, u);
    const Eigen::MatrixXcd dn = u.dn.size() ? u.dn : detail::normal_difference(u.u, c.dn(), u.h);
    CollarField out;
    out.chart = u.chart;
    out.h = u.h;
    out.u = op.matrix * dn;
    for (int m = 0; m < c.nn(); ++m) out.u.col(m) *= spec.chi.value(c.xn()[m] / spec.eps);
    return out;
}

// -h^2 Lap u = -h^2 [ (1/J) d_n (J d_n u) + (1/J) d_s (J^{-1} d_s u) ] by
// conservative differences. Edge rows in x_n are left zero; open arcs pad
// with zeros beyond the ends.
inline CollarField collar_laplacian(const CollarField& u) {
    const FermiChart& c = *u.chart;
    const int ns = c.ns(), nn = c.nn();
    const bool closed = c.curve().closed();
    const double ds = c.ds(), dn = c.dn(), h2 = u.h * u.h;
    auto jac = [&](int i, double xn) {
        const double j = 1.0 - c.kappa(i) * xn;
        if (!(j > 0.5)) throw DomainError("rellich", "Fermi Jacobian <= 1/2 on the collar");
        return j;
    };
    auto at = [&](int i, int m) -> cplx {
        if (closed) return u.u((i % ns + ns) % ns, m);
        return (i < 0 || i >= ns) ? cplx(0.0) : u.u(i, m);
    };
    CollarField out;
    out.chart = u.chart;
    out.h = u.h;
    out.u = Eigen::MatrixXcd::Zero(ns, nn);
    for (int m = 1; m + 1 < nn; ++m) {
        const double xn = c.xn()[m];
        for (int i = 0; i < ns; ++i) {
            const double j0 = jac(i, xn);
            const double jp = jac(i, xn + 0.5 * dn), jm = jac(i, xn - 0.5 * dn);
            const cplx normal = (jp * (at(i, m + 1) - at(i, m)) - jm * (at(i, m) - at(i, m - 1))) / (dn * dn);
            // J at s half-nodes: average of neighbouring nodes
            const int ip = closed ? (i + 1) % ns : std::min(i + 1, ns - 1);
            const int im = closed ? (i - 1 + ns) % ns : std::max(i - 1, 0);
            const double jsp = 0.5 * (j0 + jac(ip, xn)), jsm = 0.5 * (j0 + jac(im, xn));
            const cplx tang = ((at(i + 1, m) - at(i, m)) / jsp - (at(i, m) - at(i - 1, m)) / jsm) / (ds * ds);
            out.u(i, m) = -h2 * (normal + tang) / j0;
        }
    }
    return out;
}

struct RellichResult {
    cplx lhs;   // (i/h) int_{M+} ([-h^2 Lap, A] phi) conj(phi) dx
    cplx t1;    // int_H (h D_nu A phi) conj(phi)
    cplx t2;    // int_H (A phi) conj(h D_nu phi)
    cplx rhs;   // orientation * (t1 + t2)
    double defect = 0.0;
};

// With nu pointing into M+ = {x_n >= 0}, Green's formula gives
// lhs = -(t1 + t2).
constexpr double kRellichOrientation = -1.0;

namespace detail {

inline double relative_defect(cplx x, cplx y, double floor) {
    const double den = std::abs(x) + std::abs(y) + floor;
    return std::abs(x - y) / den;
}

// Trapezoidal weights over x_n in [0, eps_chart] (center index to the edge).
inline double half_collar_weight(const FermiChart& c, int m) {
    const int m0 = c.center_index();
    if (m < m0) return 0.0;
    return (m == m0 || m == c.nn() - 1) ? 0.5 * c.dn() : c.dn();
}

}  // namespace detail

inline RellichResult rellich_defect(const CollarField& phi, const TestOperatorSpec& spec, double floor = 1e-12) {
    const FermiChart& c = *phi.chart;
    if (!phi.dn.size()) throw DomainError("rellich", "Rellich defect needs sampled normal derivatives");
    const CollarField a_phi = apply_test_operator(spec, phi);
    const CollarField lap = collar_laplacian(a_phi);
    const int ns = c.ns(), m0 = c.center_index();
    const double ds = c.ds(), h = phi.h;

    RellichResult r;
    cplx acc = 0.0;
    for (int m = m0; m < c.nn(); ++m) {
        const double w = detail::half_collar_weight(c, m);
        for (int i = 0; i < ns; ++i) {
            const cplx comm = lap.u(i, m) - a_phi.u(i, m);
            acc += comm * std::conj(phi.u(i, m)) * c.jacobian(i, m) * w * ds;
        }
    }
    r.lhs = cplx(0.0, 1.0 / h) * acc;

    const cplx f(0.0, -h);
    for (int i = 0; i < ns; ++i) {
        const cplx d_aphi = f * (a_phi.u(i, m0 + 1) - a_phi.u(i, m0 - 1)) / (2.0 * c.dn());
        r.t1 += d_aphi * std::conj(phi.u(i, m0)) * ds;
        r.t2 += a_phi.u(i, m0) * std::conj(phi.dn(i, m0)) * ds;
    }
    r.rhs = kRellichOrientation * (r.t1 + r.t2);
    r.defect = detail::relative_defect(r.lhs, r.rhs, floor);
    return r;
}

inline RellichResult rellich_defect(const EigenMode& mode, const TestOperatorSpec& spec, const FermiChart& chart,
                                    double floor = 1e-12) {
    return rellich_defect(sample_collar(mode, chart), spec, floor);
}

// Comparison of t1 with its reduced form <a^w (1 + h^2 Lap_H) phi|_H, phi|_H>,
// which drops the chi'(0) term.
struct Rellich4Form {
    cplx t1;
    cplx reduced;
    double defect = 0.0;
};

inline Rellich4Form rellich4_form_defect(const CollarField& phi, const TestOperatorSpec& spec,
                                         double floor = 1e-12) {
    const FermiChart& c = *phi.chart;
    const RellichResult r = rellich_defect(phi, spec, floor);
    const int ns = c.ns(), m0 = c.center_index();
    const bool closed = c.curve().closed();
    const double ds = c.ds(), h2 = phi.h * phi.h;
    auto at = [&](int i) -> cplx {
        if (closed) return phi.u((i % ns + ns) % ns, m0);
        return (i < 0 || i >= ns) ? cplx(0.0) : phi.u(i, m0);
    };
    Eigen::VectorXcd w(ns), trace(ns);
    for (int i = 0; i < ns; ++i) {
        trace[i] = at(i);
        w[i] = at(i) + h2 * (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (ds * ds);
    }
    const auto op = detail::slice_operator(spec.a, phi);
    Rellich4Form out;
    out.t1 = r.t1;
    out.reduced = spec.chi.value(0.0) * trace.dot(op.apply(w)) * ds;
    out.defect = detail::relative_defect(out.t1, out.reduced, floor);
    return out;
}

// ---------------------------------------------------------------------------
// Poisson bracket {xi_n^2 + R, chi(x_n/eps) xi_n a}, R = xi'^2 / J^2
// ---------------------------------------------------------------------------

namespace detail {

// Derivative at 0 by Richardson extrapolation of central differences
// (Ridders' tableau), stopping when the error estimate grows.
template <typename F>
std::pair<cplx, double> ridders_once(F&& f, double step) {
    constexpr int kMax = 12;
    constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink;
    cplx tab[kMax][kMax];
    double h = step, best_err = std::numeric_limits<double>::infinity();
    cplx best = 0.0;
    tab[0][0] = (f(h) - f(-h)) / (2.0 * h);
    for (int i = 1; i < kMax; ++i) {
        h /= kShrink;
        tab[0][i] = (f(h) - f(-h)) / (2.0 * h);
        double fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            tab[j][i] = (tab[j - 1][i] * fac - tab[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double err = std::max(std::abs(tab[j][i] - tab[j - 1][i]), std::abs(tab[j][i] - tab[j - 1][i - 1]));
            if (err <= best_err) {
                best_err = err;
                best = tab[j][i];
            }
        }
        if (std::abs(tab[i][i] - tab[i - 1][i - 1]) >= 2.0 * best_err) break;
    }
    return {best, best_err};
}

// Best of several starting steps.
template <typename F>
cplx ridders(F&& f, double step) {
    auto best = ridders_once(f, step);
    for (double k : {0.3, 0.09}) {
        const auto r = ridders_once(f, k * step);
        if (r.second < best.second) best = r;
    }
    return best.first;
}

}  // namespace detail

struct PhasePoint {
    double s, xn, xi, xin;  // xi = xi' (tangential), xin = xi_n
};

class BracketSymbol {
public:
    BracketSymbol(SymbolFn a, CutoffProfile chi, double eps, const Curve& curve)
        : a_(std::move(a)), chi_(std::move(chi)), eps_(eps), curve_(&curve) {
        if (!(eps > 0.0)) throw DomainError("rellich", "collar width must be positive");
    }

    double jacobian(double s, double xn) const { return 1.0 - curve_->curvature(s) * xn; }

    double p(const PhasePoint& z) const {
        const double j = jacobian(z.s, z.xn);
        return z.xin * z.xin + z.xi * z.xi / (j * j);
    }
    cplx q(const PhasePoint& z) const { return chi_.value(z.xn / eps_) * z.xin * a_.value(z.s, z.xi); }

    // (2/eps) chi'(x_n/eps) xi_n^2 a
    cplx leading(const PhasePoint& z) const {
        return 2.0 / eps_ * chi_.derivative(z.xn / eps_) * z.xin * z.xin * a_.value(z.s, z.xi);
    }

    // R_2 = xi_n [ (2 xi'/J^2) d_s a - d_s R d_xi' a ] - d_{x_n} R a
    cplx r2(const PhasePoint& z) const {
        const double j = jacobian(z.s, z.xn);
        const double k = curve_->curvature(z.s), dk = curve_->curvature_derivative(z.s);
        const double j3 = j * j * j;
        const double ds_r = 2.0 * z.xi * z.xi * dk * z.xn / j3;
        const double dn_r = 2.0 * z.xi * z.xi * k / j3;
        return z.xin * (2.0 * z.xi / (j * j) * a_.d_s(z.s, z.xi) - ds_r * a_.d_xi(z.s, z.xi)) -
               dn_r * a_.value(z.s, z.xi);
    }

    cplx full(const PhasePoint& z) const { return leading(z) + chi_.value(z.xn / eps_) * r2(z); }

    // Ridders-extrapolated central differences of p and q; x_n is
    // differentiated in the scaled variable x_n / eps.
    cplx finite_difference(const PhasePoint& z) const {
        auto d = [&](auto&& f, int var) {
            const double scale = var == 1 ? eps_ : 1.0;
            auto g = [&](double t) {
                PhasePoint w = z;
                (var == 0 ? w.s : var == 1 ? w.xn : var == 2 ? w.xi : w.xin) += scale * t;
                return f(w);
            };
            return detail::ridders(g, 0.04) / scale;
        };
        auto pf = [&](const PhasePoint& w) { return cplx(p(w)); };
        auto qf = [&](const PhasePoint& w) { return q(w); };
        // positions (s, x_n), momenta (xi', xi_n)
        return d(pf, 2) * d(qf, 0) + d(pf, 3) * d(qf, 1) - d(pf, 0) * d(qf, 2) - d(pf, 1) * d(qf, 3);
    }

    const SymbolFn& symbol() const { return a_; }
    const CutoffProfile& chi() const { return chi_; }
    double eps() const { return eps_; }

private:
    SymbolFn a_;
    CutoffProfile chi_;
    double eps_;
    const Curve* curve_;
};

inline BracketSymbol bracket_symbol(const SymbolFn& a, const CutoffProfile& chi, double eps, const Curve& curve) {
    return BracketSymbol(a, chi, eps, curve);
}

struct Rellich5Average {
    double eps = 0.0;
    double raw = 0.0;       // (2/mu) int_{S*M+} (1/eps) chi'(x_n/eps) (1 - R) a dmu
    double oriented = 0.0;  // orientation * raw
    double error = 0.0;
};

// On S*M in Fermi coordinates xi_n = cos(theta), xi' = J sin(theta), so
// 1 - R = cos^2(theta) and dmu = J ds dx_n dtheta.
inline Rellich5Average rellich5_average(const SymbolFn& a, const CutoffProfile& chi, double eps, const Curve& curve,
                                        const Domain& domain) {
    if (!a.real) throw DomainError("rellich", "collar average needs a real symbol");
    using boost::math::quadrature::gauss_kronrod;
    const double L = curve.length();
    double kmax = 0.0;
    for (int k = 0; k < 512; ++k) kmax = std::max(kmax, std::abs(curve.curvature(L * k / 512.0)));
    if (kmax * eps >= 0.5) throw DomainError("rellich", "collar width exceeds the Jacobian bound");
    const double half = 0.5 * std::numbers::pi;
    double err_max = 0.0;
    auto over_theta = [&](double s, double xn) {
        const double j = 1.0 - curve.curvature(s) * xn;
        auto f = [&](double th) {
            const double c = std::cos(th);
            return c * c * a.value(s, j * std::sin(th)).real();
        };
        double err = 0.0;
        // theta in [0, 2 pi) folds onto twice [-pi/2, pi/2]
        const double v = 2.0 * gauss_kronrod<double, 31>::integrate(f, -half, half, 10, 1e-12, &err);
        err_max = std::max(err_max, err);
        return j * v;
    };
    auto over_xn = [&](double s) {
        auto g = [&](double xn) { return chi.derivative(xn / eps) / eps * over_theta(s, xn); };
        return gauss_kronrod<double, 31>::integrate(g, 0.0, eps * chi.support, 10, 1e-12);
    };
    double lo = 0.0, hi = L;
    if (a.s_window) {
        lo = std::max(lo, a.s_window->first);
        hi = std::min(hi, a.s_window->second);
    }
    double err = 0.0;
    const double v = gauss_kronrod<double, 15>::integrate(over_xn, lo, hi, 10, 1e-11, &err);
    Rellich5Average out;
    out.eps = eps;
    out.raw = 2.0 / domain.liouville_volume() * v;
    out.oriented = kRellichOrientation * out.raw;
    out.error = 2.0 / domain.liouville_volume() * (err + err_max * (hi - lo) * eps);
    return out;
}

// Limit of the collar average as eps -> 0.
inline double rellich_upshot(const SymbolFn& a, const Curve& curve, const Domain& domain) {
    return limit_state(a, 0.5, curve, domain).value;
}

// ---------------------------------------------------------------------------
// Cauchy-data lift versus the collar matrix element of the bracket
// ---------------------------------------------------------------------------

struct Rellich4Assembly {
    cplx cauchy_lift;  // mu^N + mu^RD on the chart nodes
    cplx bracket;      // <Op(bracket) phi, phi>_{L2(M+)}
    cplx remainder;    // cauchy_lift - orientation * bracket
};

// Weyl rule in x_n, paired on x_n >= 0:
//   Op(f xi_n^2) = hD_n f hD_n - (h^2/4) f''
//   Op(chi xi_n b) = (1/2)(chi hD_n + hD_n chi) B, whose half-space pairing
//   carries the boundary term (i h / 2) chi(0) <B phi, phi>_H.
inline Rellich4Assembly rellich4_assembly(const CollarField& phi, const TestOperatorSpec& spec) {
    const FermiChart& c = *phi.chart;
    if (!phi.dn.size()) throw DomainError("rellich", "bracket assembly needs sampled normal derivatives");
    if (spec.eps > c.eps() * (1.0 + 1e-12)) throw DomainError("rellich", "test operator leaks outside the chart");
    detail::check_collar_resolution(phi);
    const Curve& curve = c.curve();
    const BracketSymbol br(spec.a, spec.chi, spec.eps, curve);
    const int ns = c.ns(), m0 = c.center_index();
    const double ds = c.ds(), L = curve.length();
    const bool closed = curve.closed();
    const auto a_op = detail::slice_operator(spec.a, phi);

    bool straight = true;
    for (int i = 0; i < ns; ++i) straight = straight && c.kappa(i) == 0.0 && curve.curvature_derivative(c.s()[i]) == 0.0;
    // Slice operators for xi_n b - c at x_n; reused on straight collars.
    std::optional<std::pair<QuantizedOperator, QuantizedOperator>> cached;
    auto r2_operators = [&](double xn) {
        if (straight && cached) return *cached;
        SymbolFn b = spec.a, cf = spec.a;
        b.value = [&br, xn](double s, double xi) { return br.r2({s, xn, xi, 1.0}) - br.r2({s, xn, xi, 0.0}); };
        cf.value = [&br, xn](double s, double xi) { return -br.r2({s, xn, xi, 0.0}); };
        b.real = cf.real = spec.a.real;
        cached.emplace(quantize(b, phi.h, ns, L, closed), quantize(cf, phi.h, ns, L, closed));
        return *cached;
    };

    // f'' for f(x_n) = (2/eps) chi'(x_n/eps)
    auto lead_curvature = [&](double xn) {
        const double e = 1e-5 * spec.eps;
        auto f = [&](double x) { return 2.0 / spec.eps * spec.chi.derivative(x / spec.eps); };
        return (f(xn + e) - 2.0 * f(xn) + f(xn - e)) / (e * e);
    };

    Rellich4Assembly out;
    if (spec.chi.value(0.0) != 0.0) {
        const auto& bop = r2_operators(0.0).first;
        const Eigen::VectorXcd u0 = phi.u.col(m0);
        out.bracket += cplx(0.0, 0.5 * phi.h) * spec.chi.value(0.0) * u0.dot(bop.apply(u0)) * ds;
    }
    for (int m = m0; m < c.nn(); ++m) {
        const double xn = c.xn()[m];
        const double t = xn / spec.eps;
        const double chi = spec.chi.value(t), dchi = spec.chi.derivative(t);
        if (chi == 0.0 && dchi == 0.0 && lead_curvature(xn) == 0.0) continue;
        const double w = detail::half_collar_weight(c, m) * ds;
        Eigen::VectorXd jac(ns);
        for (int i = 0; i < ns; ++i) jac[i] = c.jacobian(i, m);
        const Eigen::VectorXcd u = phi.u.col(m), du = phi.dn.col(m);
        const Eigen::VectorXcd ju = jac.cast<cplx>().cwiseProduct(u), jdu = jac.cast<cplx>().cwiseProduct(du);
        cplx slice = 0.0;
        const double f2 = lead_curvature(xn);
        if (dchi != 0.0) slice += 2.0 / spec.eps * dchi * jdu.dot(a_op.apply(du));
        if (f2 != 0.0) slice -= 0.25 * phi.h * phi.h * f2 * ju.dot(a_op.apply(u));
        if (chi != 0.0) {
            const auto ops = r2_operators(xn);
            const auto& bop = ops.first;
            const auto& cop = ops.second;
            slice += chi * 0.5 * (jdu.dot(bop.apply(u)) + ju.dot(bop.apply(du)));
            slice -= chi * ju.dot(cop.apply(u));
        }
        out.bracket += slice * w;
    }

    CauchyTrace tr;
    tr.h = phi.h;
    tr.length = L;
    tr.closed = closed;
    tr.s = c.s();
    tr.dirichlet = phi.u.col(m0);
    tr.neumann = phi.dn.col(m0);
    out.cauchy_lift = lift_cauchy(spec.a, tr);
    out.remainder = out.cauchy_lift - kRellichOrientation * out.bracket;
    return out;
}

}  // namespace qer
