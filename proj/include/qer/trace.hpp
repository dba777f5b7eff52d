#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "qer/eigensolver.hpp"
#include "qer/geometry.hpp"

namespace qer {

// Semiclassical Cauchy data (phi|_H, h D_nu phi|_H) sampled on uniform curve
// nodes.
struct CauchyTrace {
    int mode_id = 0;
    double h = 0.0;
    double length = 0.0;
    bool closed = true;
    std::vector<double> s;
    Eigen::VectorXcd dirichlet;
    Eigen::VectorXcd neumann;

    int size() const { return static_cast<int>(s.size()); }
    double weight() const { return length / size(); }
};

// Smallest even node count with at least 8 nodes per wavelength 2*pi*h.
inline int default_trace_nodes(double length, double h) {
    return 2 * static_cast<int>(std::ceil(4.0 * length / (2.0 * std::numbers::pi * h)));
}

namespace detail {

inline void check_trace_request(const EigenMode& mode, int n) {
    if (n <= 0 || n % 2 != 0)
        throw DomainError("trace", "node count must be positive and even, got " + std::to_string(n));
    if (!mode.analytic) {
        if (!mode.field) throw DomainError("trace", "mode carries neither a field nor a closed form");
        const double delta = mode.field->grid().delta();
        const double ppw = 2.0 * std::numbers::pi * mode.h / delta;
        if (ppw < 6.0)
            throw DomainError("trace", "grid under-resolves the wavelength (" + std::to_string(ppw) +
                                           " points); need delta <= " +
                                           std::to_string(2.0 * std::numbers::pi * mode.h / 6.0));
    }
}

}  // namespace detail

inline Eigen::VectorXcd dirichlet_trace(const EigenMode& mode, const Curve& curve, int n) {
    detail::check_trace_request(mode, n);
    const auto s = curve.nodes(n);
    Eigen::VectorXcd out(n);
    for (int i = 0; i < n; ++i) out[i] = mode.value(curve.point(s[i]));
    return out;
}

// (h/i) d_nu phi with nu the left normal of the curve (into M_+).
inline Eigen::VectorXcd neumann_trace(const EigenMode& mode, const Curve& curve, int n) {
    detail::check_trace_request(mode, n);
    const auto s = curve.nodes(n);
    Eigen::VectorXcd out(n);
    const cplx factor(0.0, -mode.h);
    for (int i = 0; i < n; ++i) {
        const Vec2c g = mode.gradient(curve.point(s[i]));
        const Vec2 nu = curve.normal(s[i]);
        out[i] = factor * (g[0] * nu.x() + g[1] * nu.y());
    }
    return out;
}

// n = 0 selects default_trace_nodes.
inline CauchyTrace cauchy_trace(const EigenMode& mode, const Curve& curve, int n = 0) {
    if (n == 0) n = default_trace_nodes(curve.length(), mode.h);
    CauchyTrace t;
    t.mode_id = mode.id;
    t.h = mode.h;
    t.length = curve.length();
    t.closed = curve.closed();
    t.s = curve.nodes(n);
    t.dirichlet = dirichlet_trace(mode, curve, n);
    t.neumann = neumann_trace(mode, curve, n);
    return t;
}

// Semiclassical DFT frequency of index k (k in [0, N)): xi = 2*pi*k'*h/L with
// k' in {-N/2, ..., N/2 - 1}.
inline double dft_frequency(int k, int n, double h, double length) {
    const int kk = k < n / 2 ? k : k - n;
    return 2.0 * std::numbers::pi * kk * h / length;
}

using Multiplier = std::function<cplx(double)>;

// DFT^{-1}[ m(xi_k) DFT[values] ] on a closed curve.
inline Eigen::VectorXcd curve_fourier_multiplier(const Eigen::VectorXcd& values, const Multiplier& m,
                                                 double h, double length, bool closed = true) {
    if (!closed)
        throw DomainError("trace", "Fourier multipliers act only on closed curves; use a windowed symbol");
    const int n = static_cast<int>(values.size());
    Eigen::FFT<double> fft;
    std::vector<cplx> in(values.data(), values.data() + n), spec, out;
    fft.fwd(spec, in);
    for (int k = 0; k < n; ++k) spec[k] *= m(dft_frequency(k, n, h, length));
    fft.inv(out, spec);
    return Eigen::Map<Eigen::VectorXcd>(out.data(), n);
}

inline Eigen::VectorXcd curve_fourier_multiplier(const Eigen::VectorXcd& values, const Multiplier& m,
                                                 const CauchyTrace& t) {
    return curve_fourier_multiplier(values, m, t.h, t.length, t.closed);
}

// Fraction of the l2 mass of `values` carried by frequencies |xi| <= bound.
inline double frequency_mass_fraction(const Eigen::VectorXcd& values, double h, double length,
                                      double bound) {
    const int n = static_cast<int>(values.size());
    Eigen::FFT<double> fft;
    std::vector<cplx> in(values.data(), values.data() + n), spec;
    fft.fwd(spec, in);
    double inside = 0.0, total = 0.0;
    for (int k = 0; k < n; ++k) {
        const double w = std::norm(spec[k]);
        total += w;
        if (std::abs(dft_frequency(k, n, h, length)) <= bound) inside += w;
    }
    return total > 0.0 ? inside / total : 1.0;
}

}  // namespace qer
