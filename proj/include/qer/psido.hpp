#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "qer/error.hpp"
#include "qer/grid.hpp"
#include "qer/trace.hpp"

namespace qer {

// ---------------------------------------------------------------------------
// Symbols on T*H
// ---------------------------------------------------------------------------

// h-independent order-zero symbol a(s, xi) together with its first
// derivatives. `support` is the declared xi-radius outside which a vanishes.
struct SymbolFn {
    using Eval = std::function<cplx(double, double)>;

    std::string id;
    Eval value;
    Eval d_s;   // da/ds
    Eval d_xi;  // da/dxi
    double support = std::numeric_limits<double>::infinity();
    bool real = true;
    std::optional<std::pair<double, double>> s_window;

    cplx operator()(double s, double xi) const { return value(s, xi); }
};

namespace symbols {

namespace detail {

inline double bump_f(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double bump_df(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

}  // namespace detail

// C-infinity transition: 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = detail::bump_f(t), b = detail::bump_f(1.0 - t);
    return a / (a + b);
}

inline double smooth_step_derivative(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double a = detail::bump_f(t), b = detail::bump_f(1.0 - t);
    const double da = detail::bump_df(t), db = -detail::bump_df(1.0 - t);
    return (da * b - a * db) / ((a + b) * (a + b));
}

// Radial cutoff: 1 for |xi| <= plateau, 0 for |xi| >= support.
inline double radial_cutoff(double xi, double plateau, double support) {
    return smooth_step((support - std::abs(xi)) / (support - plateau));
}

inline double radial_cutoff_derivative(double xi, double plateau, double support) {
    const double sgn = xi < 0.0 ? -1.0 : 1.0;
    return -sgn * smooth_step_derivative((support - std::abs(xi)) / (support - plateau)) /
           (support - plateau);
}

constexpr double kPlateau = 1.5;
constexpr double kSupport = 2.0;

// f(xi) * radial_cutoff(xi), s-independent.
inline SymbolFn xi_symbol(std::string id, std::function<double(double)> f,
                          std::function<double(double)> df, double plateau = kPlateau,
                          double support = kSupport) {
    SymbolFn a;
    a.id = std::move(id);
    a.support = support;
    a.value = [f, plateau, support](double, double xi) {
        return cplx(f(xi) * radial_cutoff(xi, plateau, support));
    };
    a.d_s = [](double, double) { return cplx(0.0); };
    a.d_xi = [f, df, plateau, support](double, double xi) {
        return cplx(df(xi) * radial_cutoff(xi, plateau, support) +
                    f(xi) * radial_cutoff_derivative(xi, plateau, support));
    };
    return a;
}

inline SymbolFn const1() {
    return xi_symbol("const1", [](double) { return 1.0; }, [](double) { return 0.0; });
}

inline SymbolFn zero() {
    SymbolFn a;
    a.id = "zero";
    a.support = 0.0;
    a.value = a.d_s = a.d_xi = [](double, double) { return cplx(0.0); };
    return a;
}

// cos(2 pi j s / L), cut off in xi.
inline SymbolFn cos_s(int j, double length) {
    const double w = 2.0 * std::numbers::pi * j / length;
    SymbolFn a;
    a.id = "cos_s(" + std::to_string(j) + ")";
    a.support = kSupport;
    a.value = [w](double s, double xi) {
        return cplx(std::cos(w * s) * radial_cutoff(xi, kPlateau, kSupport));
    };
    a.d_s = [w](double s, double xi) {
        return cplx(-w * std::sin(w * s) * radial_cutoff(xi, kPlateau, kSupport));
    };
    a.d_xi = [w](double s, double xi) {
        return cplx(std::cos(w * s) * radial_cutoff_derivative(xi, kPlateau, kSupport));
    };
    return a;
}

inline SymbolFn gauss_xi(double center, double width) {
    if (!(width > 0.0)) throw DomainError("psido", "gauss_xi width must be positive");
    auto f = [center, width](double xi) {
        const double z = (xi - center) / width;
        return std::exp(-0.5 * z * z);
    };
    auto df = [center, width, f](double xi) { return -(xi - center) / (width * width) * f(xi); };
    return xi_symbol("gauss_xi(" + std::to_string(center) + "," + std::to_string(width) + ")", f, df);
}

inline SymbolFn poly_xi(std::vector<double> coeffs) {
    std::string id = "poly_xi(";
    for (std::size_t k = 0; k < coeffs.size(); ++k) id += (k ? "," : "") + std::to_string(coeffs[k]);
    id += ")";
    auto f = [coeffs](double xi) {
        double acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * xi + *it;
        return acc;
    };
    auto df = [coeffs](double xi) {
        double acc = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * xi + k * coeffs[k];
        return acc;
    };
    return xi_symbol(id, f, df);
}

// Odd test symbol xi * exp(-xi^2).
inline SymbolFn odd_xi() {
    return xi_symbol("odd_xi", [](double xi) { return xi * std::exp(-xi * xi); },
                     [](double xi) { return (1.0 - 2.0 * xi * xi) * std::exp(-xi * xi); });
}

// Glancing cutoff chi_{eps1}: 0 for |xi| <= 1 - 2 eps1^2, 1 on
// [1 - eps1^2, 1 + eps1^2], 0 beyond 1 + 2 eps1^2.
inline SymbolFn glancing_cutoff(double eps1) {
    if (!(eps1 > 0.0 && eps1 < 0.5))
        throw DomainError("psido", "glancing cutoff needs 0 < eps1 < 1/2, got " + std::to_string(eps1));
    const double e2 = eps1 * eps1;
    auto f = [e2](double xi) {
        const double r = std::abs(xi);
        if (r <= 1.0) return smooth_step((r - (1.0 - 2.0 * e2)) / e2);
        return smooth_step((1.0 + 2.0 * e2 - r) / e2);
    };
    auto df = [e2](double xi) {
        const double r = std::abs(xi), sgn = xi < 0.0 ? -1.0 : 1.0;
        if (r <= 1.0) return sgn * smooth_step_derivative((r - (1.0 - 2.0 * e2)) / e2) / e2;
        return -sgn * smooth_step_derivative((1.0 + 2.0 * e2 - r) / e2) / e2;
    };
    SymbolFn a;
    a.id = "glancing_cutoff(" + std::to_string(eps1) + ")";
    a.support = 1.0 + 2.0 * e2;
    a.value = [f](double, double xi) { return cplx(f(xi)); };
    a.d_s = [](double, double) { return cplx(0.0); };
    a.d_xi = [df](double, double xi) { return cplx(df(xi)); };
    return a;
}

// Smooth window in s: 1 on [s0 + ramp, s1 - ramp], 0 outside (s0, s1).
inline SymbolFn s_window(double s0, double s1, double ramp) {
    if (!(s1 - s0 > 2.0 * ramp) || !(ramp > 0.0))
        throw DomainError("psido", "s window needs s1 - s0 > 2 ramp > 0");
    auto w = [=](double s) {
        return smooth_step((s - s0) / ramp) * smooth_step((s1 - s) / ramp);
    };
    auto dw = [=](double s) {
        return smooth_step_derivative((s - s0) / ramp) / ramp * smooth_step((s1 - s) / ramp) -
               smooth_step((s - s0) / ramp) * smooth_step_derivative((s1 - s) / ramp) / ramp;
    };
    SymbolFn a;
    a.id = "window(" + std::to_string(s0) + "," + std::to_string(s1) + ")";
    a.value = [w](double s, double) { return cplx(w(s)); };
    a.d_s = [dw](double s, double) { return cplx(dw(s)); };
    a.d_xi = [](double, double) { return cplx(0.0); };
    a.s_window = std::make_pair(s0, s1);
    return a;
}

inline SymbolFn product(const SymbolFn& a, const SymbolFn& b) {
    SymbolFn c;
    c.id = "prod(" + a.id + "," + b.id + ")";
    c.support = std::min(a.support, b.support);
    c.real = a.real && b.real;
    c.value = [a, b](double s, double xi) { return a.value(s, xi) * b.value(s, xi); };
    c.d_s = [a, b](double s, double xi) {
        return a.d_s(s, xi) * b.value(s, xi) + a.value(s, xi) * b.d_s(s, xi);
    };
    c.d_xi = [a, b](double s, double xi) {
        return a.d_xi(s, xi) * b.value(s, xi) + a.value(s, xi) * b.d_xi(s, xi);
    };
    if (a.s_window && b.s_window)
        c.s_window = std::make_pair(std::max(a.s_window->first, b.s_window->first),
                                    std::min(a.s_window->second, b.s_window->second));
    else
        c.s_window = a.s_window ? a.s_window : b.s_window;
    return c;
}

// c0 + c1 * a; support is unbounded unless c0 == 0.
inline SymbolFn affine(double c0, double c1, const SymbolFn& a) {
    SymbolFn c;
    c.id = "affine(" + std::to_string(c0) + "," + std::to_string(c1) + "," + a.id + ")";
    c.support = c0 == 0.0 ? a.support : std::numeric_limits<double>::infinity();
    c.real = a.real;
    c.value = [=](double s, double xi) { return c0 + c1 * a.value(s, xi); };
    c.d_s = [=](double s, double xi) { return c1 * a.d_s(s, xi); };
    c.d_xi = [=](double s, double xi) { return c1 * a.d_xi(s, xi); };
    c.s_window = a.s_window;
    return c;
}

// a * (1 - chi_{eps1}); vanishes on the glancing set.
inline SymbolFn nonglancing(const SymbolFn& a, double eps1) {
    SymbolFn c = product(a, affine(1.0, -1.0, glancing_cutoff(eps1)));
    c.id = "noglance(" + a.id + "," + std::to_string(eps1) + ")";
    return c;
}

// a(s, xi) * m(xi) for an xi-multiplier m with known derivative (used to fold
// Fourier multipliers into the symbol on open arcs).
inline SymbolFn times_multiplier(const SymbolFn& a, std::string tag, std::function<cplx(double)> m,
                                 std::function<cplx(double)> dm, bool real) {
    SymbolFn c;
    c.id = a.id + "*" + tag;
    c.support = a.support;
    c.real = a.real && real;
    c.s_window = a.s_window;
    c.value = [a, m](double s, double xi) { return a.value(s, xi) * m(xi); };
    c.d_s = [a, m](double s, double xi) { return a.d_s(s, xi) * m(xi); };
    c.d_xi = [a, m, dm](double s, double xi) {
        return a.d_xi(s, xi) * m(xi) + a.value(s, xi) * dm(xi);
    };
    return c;
}

// Parses the built-in symbol grammar:
//   const1 | zero | odd_xi | cos_s(j) | gauss_xi(c,w) | poly_xi(c0,c1,...)
//   | glancing_cutoff(e) | window(s0,s1,ramp) | prod(A,B) | affine(c0,c1,A)
//   | noglance(A,e)
class Parser {
public:
    Parser(std::string text, double length) : text_(std::move(text)), length_(length) {}

    SymbolFn parse() {
        SymbolFn a = expr();
        skip();
        if (pos_ != text_.size()) fail("trailing characters");
        return a;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw DomainError("psido", "symbol '" + text_ + "': " + why + " at offset " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }
    std::string name() {
        skip();
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        if (start == pos_) fail("expected a symbol name");
        return text_.substr(start, pos_ - start);
    }
    double number() {
        skip();
        const char* begin = text_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("expected a number");
        pos_ += static_cast<std::size_t>(end - begin);
        return v;
    }
    std::vector<double> numbers() {
        std::vector<double> v;
        expect('(');
        if (accept(')')) return v;
        do v.push_back(number());
        while (accept(','));
        expect(')');
        return v;
    }
    void arity(const std::vector<double>& v, std::size_t n, const std::string& f) {
        if (v.size() != n) fail(f + " takes " + std::to_string(n) + " arguments");
    }

    SymbolFn expr() {
        const std::string f = name();
        if (f == "const1") return const1();
        if (f == "zero") return zero();
        if (f == "odd_xi") return odd_xi();
        if (f == "cos_s") {
            auto v = numbers();
            arity(v, 1, f);
            return cos_s(static_cast<int>(v[0]), length_);
        }
        if (f == "gauss_xi") {
            auto v = numbers();
            arity(v, 2, f);
            return gauss_xi(v[0], v[1]);
        }
        if (f == "poly_xi") {
            auto v = numbers();
            if (v.empty()) fail("poly_xi needs coefficients");
            return poly_xi(v);
        }
        if (f == "glancing_cutoff") {
            auto v = numbers();
            arity(v, 1, f);
            return glancing_cutoff(v[0]);
        }
        if (f == "window") {
            auto v = numbers();
            arity(v, 3, f);
            return s_window(v[0], v[1], v[2]);
        }
        if (f == "prod") {
            expect('(');
            SymbolFn a = expr();
            expect(',');
            SymbolFn b = expr();
            expect(')');
            return product(a, b);
        }
        if (f == "affine") {
            expect('(');
            const double c0 = number();
            expect(',');
            const double c1 = number();
            expect(',');
            SymbolFn a = expr();
            expect(')');
            return affine(c0, c1, a);
        }
        if (f == "noglance") {
            expect('(');
            SymbolFn a = expr();
            expect(',');
            const double e = number();
            expect(')');
            return nonglancing(a, e);
        }
        fail("unknown symbol '" + f + "'");
    }

    std::string text_;
    double length_;
    std::size_t pos_ = 0;
};

inline SymbolFn parse(const std::string& text, double length) {
    SymbolFn a = Parser(text, length).parse();
    a.id = text;
    return a;
}

}  // namespace symbols

// ---------------------------------------------------------------------------
// Weyl quantization on the curve
// ---------------------------------------------------------------------------

struct QuantizedOperator {
    double h = 0.0;
    int n = 0;
    double length = 0.0;
    Eigen::MatrixXcd matrix;
    std::string symbol_id;
    std::string scheme = "weyl-midpoint";

    Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const { return matrix * u; }
};

namespace detail {

inline void check_quantization(const SymbolFn& a, double h, int n, double length, bool closed) {
    if (n < 2 || n % 2 != 0) throw DomainError("psido", "node count must be even");
    if (!closed && !a.s_window)
        throw DomainError("psido", "symbol '" + a.id + "' needs an s-window on an open arc");
    const double top = h * (2.0 * std::numbers::pi / length) * (n / 2);
    if (!(top >= 1.5 * a.support))
        throw DomainError("psido", "frequency grid too coarse for symbol '" + a.id + "': max |xi| " +
                                       std::to_string(top) + " < 1.5 * support " +
                                       std::to_string(a.support));
}

inline double node_offset(double length, int n, bool closed) { return closed ? 0.0 : 0.5 * length / n; }

}  // namespace detail

// M[i][j] = (1/N) sum_k exp(2 pi i k (i-j)/N) a(mid(s_i, s_j), 2 pi k h / L),
// mid = midpoint along the shorter arc; antipodal pairs average both
// midpoints. Evaluated with one FFT per midpoint.
inline QuantizedOperator quantize(const SymbolFn& a, double h, int n, double length, bool closed = true) {
    detail::check_quantization(a, h, n, length, closed);
    const double off = detail::node_offset(length, n, closed);
    const int q_count = 2 * n;
    Eigen::FFT<double> fft;
    std::vector<std::vector<cplx>> kernel(q_count);
    std::vector<double> xi(n);
    for (int k = 0; k < n; ++k) xi[k] = dft_frequency(k, n, h, length);
    std::vector<cplx> row(n);
    for (int q = 0; q < q_count; ++q) {
        const double mid = std::fmod(off + q * length / q_count, length);
        for (int k = 0; k < n; ++k) row[k] = a.value(mid, xi[k]);
        fft.inv(kernel[q], row);  // (1/N) sum_k row_k e^{+2 pi i k d / N}
    }
    QuantizedOperator op;
    op.h = h;
    op.n = n;
    op.length = length;
    op.symbol_id = a.id;
    op.matrix.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int d = ((i - j) % n + n) % n;
            const int gap = std::abs(i - j);
            const int q_near = i + j;
            const int q_far = (i + j + n) % q_count;
            if (2 * gap < n)
                op.matrix(i, j) = kernel[q_near][d];
            else if (2 * gap > n)
                op.matrix(i, j) = kernel[q_far][d];
            else
                op.matrix(i, j) = 0.5 * (kernel[q_near][d] + kernel[q_far][d]);
        }
    return op;
}

// Direct triple-loop evaluation of the same quadrature, for tests.
inline Eigen::MatrixXcd kernel_oracle(const SymbolFn& a, double h, int n, double length, bool closed = true) {
    if (n > 512) throw DomainError("psido", "kernel oracle limited to N <= 512");
    detail::check_quantization(a, h, n, length, closed);
    const double ds = length / n;
    const double off = detail::node_offset(length, n, closed);
    Eigen::MatrixXcd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double si = off + i * ds, sj = off + j * ds;
            std::vector<double> mids;
            const double plain = 0.5 * (si + sj);
            const double shifted = std::fmod(plain + 0.5 * length, length);
            if (2 * std::abs(i - j) < n) mids = {plain};
            else if (2 * std::abs(i - j) > n) mids = {shifted};
            else mids = {plain, shifted};
            cplx acc = 0.0;
            for (double mid : mids)
                for (int kk = -n / 2; kk < n / 2; ++kk) {
                    const double xi = 2.0 * std::numbers::pi * kk * h / length;
                    acc += std::polar(1.0, 2.0 * std::numbers::pi * kk * (i - j) / n) * a.value(mid, xi);
                }
            m(i, j) = acc / (static_cast<double>(n) * mids.size());
        }
    return m;
}

// Left (Kohn-Nirenberg) variant: symbol frozen at s_i instead of the midpoint.
inline QuantizedOperator quantize_left(const SymbolFn& a, double h, int n, double length, bool closed = true) {
    detail::check_quantization(a, h, n, length, closed);
    const double off = detail::node_offset(length, n, closed);
    Eigen::FFT<double> fft;
    QuantizedOperator op;
    op.h = h;
    op.n = n;
    op.length = length;
    op.symbol_id = a.id;
    op.scheme = "left";
    op.matrix.resize(n, n);
    std::vector<cplx> row(n), ker;
    for (int i = 0; i < n; ++i) {
        const double si = off + i * length / n;
        for (int k = 0; k < n; ++k) row[k] = a.value(si, dft_frequency(k, n, h, length));
        fft.inv(ker, row);
        for (int j = 0; j < n; ++j) op.matrix(i, j) = ker[((i - j) % n + n) % n];
    }
    return op;
}

inline QuantizedOperator quantize(const SymbolFn& a, const CauchyTrace& t) {
    return quantize(a, t.h, t.size(), t.length, t.closed);
}

// Spot-check that a vanishes beyond its declared xi support.
inline bool check_support(const SymbolFn& a, double length, int samples = 100) {
    if (!std::isfinite(a.support)) return true;
    for (int k = 0; k < samples; ++k) {
        const double xi = a.support * (1.0 + 1e-9) + 3.0 * k / samples;
        const double s = length * k / samples;
        if (std::abs(a.value(s, xi)) != 0.0 || std::abs(a.value(s, -xi)) != 0.0) return false;
    }
    return true;
}

}  // namespace qer
