#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qer/geometry.hpp"
#include "qer/psido.hpp"
#include "qer/trace.hpp"

namespace qer {

struct LiftRecord {
    int mode_id = 0;
    double lambda2 = 0.0;
    double h = 0.0;
    std::string symbol_id;
    double eps1 = 0.0;
    cplx mu_n;    // <Op(a) hD_nu phi, hD_nu phi>
    cplx mu_rd;   // <Op(a)(1 + h^2 Lap_H) phi, phi>
    cplx phi_cd;  // mu_n + mu_rd
    cplx phi_d;   // <Op(a) phi, phi>
    cplx phi_rn;  // <(1 + h^2 Lap_H + i eps1)^{-1} Op(a) hD_nu phi, hD_nu phi>
};

// (L/N) sum_i u_i conj(v_i)
inline cplx curve_inner(const Eigen::VectorXcd& u, const Eigen::VectorXcd& v, double length) {
    if (u.size() != v.size()) throw DomainError("lifts", "dimension mismatch in curve inner product");
    return v.dot(u) * (length / static_cast<double>(u.size()));
}

namespace detail {

inline void check_operator(const QuantizedOperator& op, const CauchyTrace& t) {
    if (op.n != t.size() || std::abs(op.h - t.h) > 1e-14 * t.h || std::abs(op.length - t.length) > 1e-12 * t.length)
        throw DomainError("lifts", "quantized operator (N=" + std::to_string(op.n) +
                                       ") does not match the trace (N=" + std::to_string(t.size()) + ")");
}

inline cplx glancing_multiplier(double xi) { return 1.0 - xi * xi; }

inline SymbolFn renormalized_symbol(const SymbolFn& a) {
    return symbols::times_multiplier(
        a, "(1-xi^2)", [](double xi) { return cplx(1.0 - xi * xi); },
        [](double xi) { return cplx(-2.0 * xi); }, true);
}

inline SymbolFn resolvent_symbol(const SymbolFn& a, double eps1) {
    return symbols::times_multiplier(
        a, "res(" + std::to_string(eps1) + ")",
        [eps1](double xi) { return 1.0 / cplx(1.0 - xi * xi, eps1); },
        [eps1](double xi) {
            const cplx d(1.0 - xi * xi, eps1);
            return 2.0 * xi / (d * d);
        },
        false);
}

inline void check_eps1(double eps1) {
    if (!(eps1 > 0.0)) throw DomainError("lifts", "eps1 must be positive, got " + std::to_string(eps1));
}

}  // namespace detail

inline cplx lift_neumann(const QuantizedOperator& op, const CauchyTrace& t) {
    detail::check_operator(op, t);
    return curve_inner(op.apply(t.neumann), t.neumann, t.length);
}

inline cplx lift_neumann(const SymbolFn& a, const CauchyTrace& t) { return lift_neumann(quantize(a, t), t); }

inline cplx lift_dirichlet(const QuantizedOperator& op, const CauchyTrace& t) {
    detail::check_operator(op, t);
    return curve_inner(op.apply(t.dirichlet), t.dirichlet, t.length);
}

inline cplx lift_dirichlet(const SymbolFn& a, const CauchyTrace& t) { return lift_dirichlet(quantize(a, t), t); }

// Closed curves apply 1 - xi^2 as a Fourier multiplier; open arcs quantize the
// windowed symbol a (1 - xi^2).
inline cplx lift_renormalized_dirichlet(const SymbolFn& a, const CauchyTrace& t) {
    if (!t.closed) return lift_dirichlet(detail::renormalized_symbol(a), t);
    const auto op = quantize(a, t);
    const Eigen::VectorXcd w = curve_fourier_multiplier(t.dirichlet, detail::glancing_multiplier, t);
    return curve_inner(op.apply(w), t.dirichlet, t.length);
}

// Same functional evaluated as a single matrix Op(a) * diag-in-Fourier(1 - xi^2).
inline cplx lift_renormalized_dirichlet_matrix(const SymbolFn& a, const CauchyTrace& t) {
    if (!t.closed) throw DomainError("lifts", "matrix path needs a closed curve");
    const auto op = quantize(a, t);
    const int n = t.size();
    Eigen::MatrixXcd mult(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
        e[j] = 1.0;
        mult.col(j) = curve_fourier_multiplier(e, detail::glancing_multiplier, t);
    }
    const Eigen::MatrixXcd m = op.matrix * mult;
    return curve_inner(m * t.dirichlet, t.dirichlet, t.length);
}

inline cplx lift_cauchy(const SymbolFn& a, const CauchyTrace& t) {
    return lift_neumann(a, t) + lift_renormalized_dirichlet(a, t);
}

inline cplx lift_renormalized_neumann(const SymbolFn& a, const CauchyTrace& t, double eps1) {
    detail::check_eps1(eps1);
    if (!t.closed) return lift_neumann(detail::resolvent_symbol(a, eps1), t);
    const auto op = quantize(a, t);
    const Eigen::VectorXcd w = curve_fourier_multiplier(
        op.apply(t.neumann), [eps1](double xi) { return 1.0 / cplx(1.0 - xi * xi, eps1); }, t);
    return curve_inner(w, t.neumann, t.length);
}

// All five functionals with one quantization of a.
inline LiftRecord compute_lifts(const SymbolFn& a, const CauchyTrace& t, double lambda2, double eps1) {
    detail::check_eps1(eps1);
    LiftRecord r;
    r.mode_id = t.mode_id;
    r.lambda2 = lambda2;
    r.h = t.h;
    r.symbol_id = a.id;
    r.eps1 = eps1;
    if (t.closed) {
        const auto op = quantize(a, t);
        const Eigen::VectorXcd an = op.apply(t.neumann);
        r.mu_n = curve_inner(an, t.neumann, t.length);
        r.phi_d = curve_inner(op.apply(t.dirichlet), t.dirichlet, t.length);
        const Eigen::VectorXcd w = curve_fourier_multiplier(t.dirichlet, detail::glancing_multiplier, t);
        r.mu_rd = curve_inner(op.apply(w), t.dirichlet, t.length);
        const Eigen::VectorXcd rn = curve_fourier_multiplier(
            an, [eps1](double xi) { return 1.0 / cplx(1.0 - xi * xi, eps1); }, t);
        r.phi_rn = curve_inner(rn, t.neumann, t.length);
    } else {
        r.mu_n = lift_neumann(a, t);
        r.phi_d = lift_dirichlet(a, t);
        r.mu_rd = lift_renormalized_dirichlet(a, t);
        r.phi_rn = lift_renormalized_neumann(a, t, eps1);
    }
    r.phi_cd = r.mu_n + r.mu_rd;
    return r;
}

// ---------------------------------------------------------------------------
// Limit states
// ---------------------------------------------------------------------------

struct LimitState {
    std::string symbol_id;
    double weight = 0.5;
    double value = 0.0;
    double error = 0.0;
};

// (4 / mu(S*M)) int_0^L int_{-1}^{1} a(s, xi) (1 - xi^2)^w dxi ds with
// mu(S*M) = 2 pi Area, w = +-1/2, evaluated with xi = sin(theta).
inline LimitState limit_state(const SymbolFn& a, double w, double length, double area) {
    if (!a.real) throw DomainError("lifts", "limit state needs a real symbol, got '" + a.id + "'");
    if (w != 0.5 && w != -0.5) throw DomainError("lifts", "weight exponent must be +1/2 or -1/2");
    using boost::math::quadrature::gauss_kronrod;
    const double half = 0.5 * std::numbers::pi;
    double err_total = 0.0;
    auto inner = [&](double s) {
        auto f = [&](double th) {
            const double c = std::cos(th);
            const double base = a.value(s, std::sin(th)).real();
            return w > 0.0 ? base * c * c : base;
        };
        double err = 0.0;
        const double v = gauss_kronrod<double, 31>::integrate(f, -half, half, 12, 1e-12, &err);
        err_total = std::max(err_total, err);
        return v;
    };
    double lo = 0.0, hi = length;
    if (a.s_window) {
        lo = std::max(lo, a.s_window->first);
        hi = std::min(hi, a.s_window->second);
    }
    double err = 0.0;
    const double v = hi > lo ? gauss_kronrod<double, 31>::integrate(inner, lo, hi, 12, 1e-12, &err) : 0.0;
    const double scale = 4.0 / (2.0 * std::numbers::pi * area);
    LimitState out;
    out.symbol_id = a.id;
    out.weight = w;
    out.value = scale * v;
    out.error = scale * (err + err_total * (hi - lo));
    return out;
}

inline LimitState limit_state(const SymbolFn& a, double w, const Curve& curve, const Domain& domain) {
    return limit_state(a, w, curve.length(), domain.area());
}

// ---------------------------------------------------------------------------
// Convergence statistics
// ---------------------------------------------------------------------------

enum class LiftCombination { cauchy, dirichlet_resolvent };

inline double combination_value(const LiftRecord& r, LiftCombination c) {
    return c == LiftCombination::cauchy ? r.phi_cd.real() : (r.phi_d + r.phi_rn).real();
}

struct WindowStats {
    double lo = 0.0, hi = 0.0;
    int count = 0;
    double mean_lift = 0.0;  // Cesaro mean of the lift within the window
    double mean_gap = 0.0;
    double variance = 0.0;   // (1/N) sum |g_j|^2
};

struct GapReport {
    std::vector<double> gaps;          // per record, input order
    std::vector<double> running_mean;  // Cesaro means of the lift over records sorted by lambda^2
    std::vector<WindowStats> windows;
};

// Gaps g_j = lift_j - omega, grouped by lambda^2 window. Records outside every
// window only enter `gaps` and `running_mean`.
inline GapReport convergence_gap(const std::vector<LiftRecord>& records, double omega, LiftCombination c,
                                 const std::vector<std::pair<double, double>>& windows = {}) {
    GapReport rep;
    rep.gaps.reserve(records.size());
    for (const auto& r : records) rep.gaps.push_back(combination_value(r, c) - omega);
    std::vector<std::size_t> order(records.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return records[x].lambda2 < records[y].lambda2; });
    double acc = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        acc += combination_value(records[order[k]], c);
        rep.running_mean.push_back(acc / static_cast<double>(k + 1));
    }
    for (const auto& [lo, hi] : windows) {
        WindowStats w;
        w.lo = lo;
        w.hi = hi;
        for (std::size_t k = 0; k < records.size(); ++k) {
            if (records[k].lambda2 < lo || records[k].lambda2 >= hi) continue;
            ++w.count;
            w.mean_lift += combination_value(records[k], c);
            w.mean_gap += rep.gaps[k];
            w.variance += rep.gaps[k] * rep.gaps[k];
        }
        if (w.count > 0) {
            w.mean_lift /= w.count;
            w.mean_gap /= w.count;
            w.variance /= w.count;
        }
        rep.windows.push_back(w);
    }
    return rep;
}

}  // namespace qer
