#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "qer/eigensolver.hpp"
#include "qer/lifts.hpp"

using Catch::Approx;
using namespace qer;

namespace {

constexpr double pi = std::numbers::pi;
const cplx I(0.0, 1.0);

CurveSpec circle(Vec2 c, double rho) {
    CurveSpec s;
    s.kind = CurveKind::circle;
    s.center = c;
    s.radius = rho;
    return s;
}

CurveSpec segment(Vec2 a, Vec2 b) {
    CurveSpec s;
    s.kind = CurveKind::segment;
    s.start = a;
    s.end = b;
    return s;
}

// Trace on the circle of length 2 pi with prescribed Fourier content.
CauchyTrace synthetic_trace(double h, int n, const std::vector<std::pair<int, cplx>>& dir,
                            const std::vector<std::pair<int, cplx>>& neu) {
    CauchyTrace t;
    t.h = h;
    t.length = 2.0 * pi;
    t.closed = true;
    t.dirichlet = Eigen::VectorXcd::Zero(n);
    t.neumann = Eigen::VectorXcd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const double s = 2.0 * pi * i / n;
        t.s.push_back(s);
        for (auto [k, c] : dir) t.dirichlet[i] += c * std::exp(I * (k * s));
        for (auto [k, c] : neu) t.neumann[i] += c * std::exp(I * (k * s));
    }
    return t;
}

std::vector<std::pair<int, cplx>> random_band(double h, double xi_max, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<std::pair<int, cplx>> out;
    for (int k = -static_cast<int>(xi_max / h); k <= static_cast<int>(xi_max / h); ++k)
        out.emplace_back(k, cplx(g(rng), g(rng)));
    return out;
}

// f(xi) = 0 on |xi| <= lo, 1 beyond lo + ramp, cut off at `support`.
SymbolFn outer_band(double lo, double ramp, double plateau, double support) {
    return symbols::xi_symbol(
        "outer", [=](double xi) { return symbols::smooth_step((std::abs(xi) - lo) / ramp); },
        [=](double xi) {
            return (xi < 0 ? -1.0 : 1.0) * symbols::smooth_step_derivative((std::abs(xi) - lo) / ramp) / ramp;
        },
        plateau, support);
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST_CASE("constant symbol lifts are trace masses", "[lifts]") {
    const auto d = Domain::disk(1.0);
    const Curve c(circle({0.1, -0.1}, 0.55), d);
    const auto t = cauchy_trace(analytic_modes(d, std::vector<DiskIndex>{{5, 2}})[0], c);
    CHECK(lift_neumann(symbols::const1(), t).real() == Approx(t.neumann.squaredNorm() * t.weight()).epsilon(1e-9));
    CHECK(lift_dirichlet(symbols::const1(), t).real() == Approx(t.dirichlet.squaredNorm() * t.weight()).epsilon(1e-9));
}

TEST_CASE("windowed Neumann lift on a segment matches quadrature", "[lifts]") {
    const auto d = Domain::rectangle(1.0, 1.0);
    const double c0 = 0.41, x0 = 0.1;
    const Curve seg(segment({x0, c0}, {0.9, c0}), d);
    const int m = 14, n = 9;
    const auto mode = analytic_modes(d, std::vector<RectangleIndex>{{m, n}})[0];
    const auto t = cauchy_trace(mode, seg, 1024);
    const auto w = symbols::s_window(0.15, 0.65, 0.15);
    // xi cutoff far above the trace band
    const auto wide = symbols::xi_symbol(
        "wide", [](double xi) { return symbols::radial_cutoff(xi, 12.0, 16.0); },
        [](double xi) { return symbols::radial_cutoff_derivative(xi, 12.0, 16.0); }, 12.0, 16.0);
    const auto a = symbols::product(w, wide);
    auto density = [&](double s) {
        const double x = x0 + s;
        const double v = mode.h * 2.0 * std::sin(m * pi * x) * n * pi * std::cos(n * pi * c0);
        return w(s, 0.0).real() * v * v;
    };
    const double exact = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, 0.0, 0.8, 15, 1e-14);
    CHECK(lift_neumann(a, t).real() == Approx(exact).epsilon(1e-6));

    // closed form of the renormalized Dirichlet lift for a real sine trace
    auto mass = [&](double s) {
        const double x = x0 + s;
        const double v = 2.0 * std::sin(m * pi * x) * std::sin(n * pi * c0);
        return w(s, 0.0).real() * v * v;
    };
    const double amp = 2.0 * std::sin(n * pi * c0), k = m * pi;
    const double wint = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double s) { return w(s, 0.0).real(); }, 0.0, 0.8, 15, 1e-14);
    const double mass_int = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(mass, 0.0, 0.8, 15, 1e-14);
    const double rd = mass_int - 0.5 * mode.h * mode.h * k * k * amp * amp * wint;
    CHECK(lift_renormalized_dirichlet(a, t).real() == Approx(rd).epsilon(1e-5));
    CHECK(lift_cauchy(a, t).real() == Approx(exact + rd).epsilon(1e-5));
}

TEST_CASE("symbols living above the trace band see nothing", "[lifts]") {
    const double h = 0.02;
    const auto t = synthetic_trace(h, 1024, random_band(h, 1.5, 1), random_band(h, 1.5, 2));
    const auto a = outer_band(2.25, 0.2, 3.5, 4.0);
    CHECK(std::abs(lift_neumann(a, t)) <= 1e-8 * t.neumann.squaredNorm() * t.weight());
}

TEST_CASE("glancing plane waves have zero renormalized Dirichlet lift", "[lifts]") {
    const int k0 = 25;
    const auto t = synthetic_trace(1.0 / k0, 256, {{k0, 1.0}}, {{3, 1.0}});
    CHECK(std::abs(lift_renormalized_dirichlet(symbols::const1(), t)) <= 1e-10);
    const auto tm = synthetic_trace(1.0 / k0, 256, {{-k0, cplx(0.3, 0.4)}}, {{3, 1.0}});
    CHECK(std::abs(lift_renormalized_dirichlet(symbols::gauss_xi(0.2, 0.5), tm)) <= 1e-10);
}

TEST_CASE("renormalized Dirichlet lift of 1 is a Parseval sum", "[lifts]") {
    const double h = 0.03;
    const int n = 256;
    const auto t = synthetic_trace(h, n, random_band(h, 1.3, 5), {{0, 1.0}});
    Eigen::FFT<double> fft;
    std::vector<cplx> in(t.dirichlet.data(), t.dirichlet.data() + n), spec;
    fft.fwd(spec, in);
    double expected = 0.0;
    for (int k = 0; k < n; ++k) {
        const double xi = dft_frequency(k, n, h, t.length);
        expected += (1.0 - xi * xi) * std::norm(spec[k]);
    }
    expected *= t.length / (static_cast<double>(n) * n);
    CHECK(lift_renormalized_dirichlet(symbols::const1(), t).real() == Approx(expected).epsilon(1e-12));
}

TEST_CASE("disk oracle lifts match single-mode closed forms", "[lifts]") {
    const auto d = Domain::disk(1.0);
    const double rho = 0.6;
    const Curve c(circle({0, 0}, rho), d);
    const double eps1 = 0.1;
    const std::vector<SymbolFn> syms{symbols::const1(), symbols::gauss_xi(0.3, 0.4), symbols::glancing_cutoff(0.2),
                                     symbols::poly_xi({0.5, 0.2, 1.0})};
    for (const auto& mode : analytic_modes(d, std::vector<DiskIndex>{{4, 2}, {-7, 1}, {0, 3}, {11, 2}})) {
        const auto& am = *mode.analytic;
        const int al = std::abs(am.l);
        const double k = am.wavenumber, h = mode.h;
        const double xi = h * am.l / rho;
        const double jv = std::cyl_bessel_j(al, k * rho);
        const double jp = al == 0 ? -std::cyl_bessel_j(1, k * rho)
                                  : 0.5 * (std::cyl_bessel_j(al - 1, k * rho) - std::cyl_bessel_j(al + 1, k * rho));
        const double len = 2.0 * pi * rho;
        const double dmass = len * am.coef * am.coef * jv * jv;
        // inward normal: hD_nu = (h/i)(-d/dr)
        const double nmass = len * std::pow(h * am.coef * k * jp, 2);
        const auto t = cauchy_trace(mode, c);
        for (const auto& a : syms) {
            const double av = a(0.0, xi).real();
            CHECK(std::abs(lift_neumann(a, t) - av * nmass) <= 1e-6 * nmass);
            CHECK(std::abs(lift_dirichlet(a, t) - av * dmass) <= 1e-6 * dmass);
            CHECK(std::abs(lift_renormalized_dirichlet(a, t) - av * (1.0 - xi * xi) * dmass) <= 1e-6 * dmass);
            CHECK(std::abs(lift_renormalized_neumann(a, t, eps1) - av * nmass / cplx(1.0 - xi * xi, eps1)) <= 1e-6 * nmass / eps1);
        }
    }
}

TEST_CASE("lift record identities", "[lifts]") {
    const auto d = Domain::stadium(1.0, 1.0);
    const Curve c(circle({0, 0}, 0.8), d);
    const auto op = assemble_laplacian(d, 1.0 / 32.0);
    const auto modes = solve_window(op, 150.0, 220.0, 6);
    REQUIRE(!modes.empty());
    const std::vector<SymbolFn> syms{symbols::const1(), symbols::parse("prod(const1,affine(1,0.5,cos_s(2)))", c.length()),
                                     symbols::gauss_xi(0.5, 0.3)};
    for (const auto& m : modes) {
        const auto t = cauchy_trace(m, c);
        for (const auto& a : syms) {
            const auto r = compute_lifts(a, t, m.lambda2, 0.2);
            CHECK(r.phi_cd == r.mu_n + r.mu_rd);
            CHECK(lift_cauchy(a, t) == lift_neumann(a, t) + lift_renormalized_dirichlet(a, t));
            CHECK(rel(r.mu_n, lift_neumann(a, t)) <= 1e-12);
            CHECK(rel(r.phi_d, lift_dirichlet(a, t)) <= 1e-12);
            CHECK(rel(r.mu_rd, lift_renormalized_dirichlet(a, t)) <= 1e-12);
            CHECK(rel(r.phi_rn, lift_renormalized_neumann(a, t, 0.2)) <= 1e-12);
            CHECK(std::abs(r.mu_n.imag()) <= 1e-10 * std::abs(r.mu_n));
            CHECK(std::abs(r.phi_d.imag()) <= 1e-10 * std::abs(r.phi_d));
            CHECK(std::abs(r.phi_cd.imag()) <= 1e-10 * std::abs(r.phi_cd));
            const cplx direct = lift_renormalized_dirichlet_matrix(a, t);
            CHECK(std::abs(direct - r.mu_rd) <= 1e-10 * std::max(1.0, std::abs(r.mu_rd)));
        }
    }
}

TEST_CASE("renormalized Neumann lift of one plane wave", "[lifts]") {
    const double h = 0.04, eps1 = 0.2;
    const int k0 = 15;  // xi0 = 0.6
    const auto t = synthetic_trace(h, 256, {{1, 1.0}}, {{k0, cplx(0.7, -0.2)}});
    const double xi0 = k0 * h;
    const cplx expected = t.neumann.squaredNorm() * t.weight() / cplx(1.0 - xi0 * xi0, eps1);
    CHECK(rel(lift_renormalized_neumann(symbols::const1(), t, eps1), expected) <= 1e-12);
    CHECK_THROWS_AS(lift_renormalized_neumann(symbols::const1(), t, 0.0), DomainError);
    CHECK_THROWS_AS(compute_lifts(symbols::const1(), t, 1.0, -0.1), DomainError);
}

TEST_CASE("resolvent bound on glancing-supported symbols", "[lifts]") {
    const double h = 0.02, eps1 = 0.1;
    const auto t = synthetic_trace(h, 512, {{0, 1.0}}, random_band(h, 1.4, 9));
    const auto chi = symbols::glancing_cutoff(0.3);
    const double cut_mass = lift_neumann(chi, t).real();
    REQUIRE(cut_mass > 0.0);
    CHECK(std::abs(lift_renormalized_neumann(chi, t, eps1)) <= cut_mass / eps1);
}

TEST_CASE("mismatched operators are rejected", "[lifts]") {
    const auto t = synthetic_trace(0.05, 128, {{1, 1.0}}, {{1, 1.0}});
    const auto op = quantize(symbols::const1(), 0.05, 256, 2.0 * pi);
    CHECK_THROWS_AS(lift_neumann(op, t), DomainError);
    CHECK_THROWS_AS(curve_inner(Eigen::VectorXcd::Zero(3), Eigen::VectorXcd::Zero(4), 1.0), DomainError);
}

TEST_CASE("limit state normalization lock", "[lifts]") {
    struct Pair {
        Domain d;
        CurveSpec c;
    };
    const std::vector<Pair> pairs{{Domain::stadium(1.0, 1.0), circle({0, 0}, 0.8)},
                                  {Domain::disk(1.0), circle({0.1, 0.2}, 0.5)},
                                  {Domain::rectangle(1.3, 1.0), circle({0.65, 0.5}, 0.3)}};
    for (const auto& p : pairs) {
        const Curve c(p.c, p.d);
        const double ratio = c.length() / p.d.area();
        CHECK(limit_state(symbols::const1(), 0.5, c, p.d).value == Approx(ratio).epsilon(1e-8));
        CHECK(limit_state(symbols::const1(), -0.5, c, p.d).value == Approx(2.0 * ratio).epsilon(1e-8));
    }
    const auto st = Domain::stadium(1.0, 1.0);
    const Curve c(circle({0, 0}, 0.8), st);
    CHECK(limit_state(symbols::const1(), 0.5, c, st).value == Approx(1.6 * pi / (4.0 + pi)).epsilon(1e-8));
    // open arc: constant symbol integrated over the full parameter range
    const auto rect = Domain::rectangle(1.3, 1.0);
    const Curve seg(segment({0.2, 0.5}, {1.1, 0.5}), rect);
    CHECK(limit_state(symbols::const1(), 0.5, seg, rect).value == Approx(seg.length() / rect.area()).epsilon(1e-8));
    CHECK(limit_state(symbols::const1(), -0.5, seg, rect).value ==
          Approx(2.0 * seg.length() / rect.area()).epsilon(1e-8));
}

TEST_CASE("limit state properties", "[lifts]") {
    const double L = 5.0, A = 7.0;
    CHECK(std::abs(limit_state(symbols::odd_xi(), 0.5, L, A).value) <= 1e-12);
    CHECK(std::abs(limit_state(symbols::odd_xi(), -0.5, L, A).value) <= 1e-12);
    const auto a = symbols::gauss_xi(0.2, 0.3);
    const auto b = symbols::const1();
    for (double w : {0.5, -0.5}) {
        const double va = limit_state(a, w, L, A).value, vb = limit_state(b, w, L, A).value;
        CHECK(va >= 0.0);
        CHECK(va <= vb);
        const auto sum = symbols::affine(0.0, 3.0, a);
        CHECK(limit_state(sum, w, L, A).value == Approx(3.0 * va).epsilon(1e-10));
        const auto outside = outer_band(1.0, 0.1, 1.5, 2.0);
        CHECK(std::abs(limit_state(outside, w, L, A).value) <= 1e-12);
    }
    auto complex_symbol = symbols::const1();
    complex_symbol.real = false;
    CHECK_THROWS_AS(limit_state(complex_symbol, 0.5, L, A), DomainError);
    CHECK_THROWS_AS(limit_state(b, 0.25, L, A), DomainError);
}

TEST_CASE("convergence gap statistics", "[lifts]") {
    CHECK(convergence_gap({}, 1.0, LiftCombination::cauchy).gaps.empty());
    std::vector<LiftRecord> recs;
    for (int k = 0; k < 6; ++k) {
        LiftRecord r;
        r.lambda2 = 100.0 + 50.0 * k;
        r.phi_cd = 0.7;
        r.phi_d = 0.3;
        r.phi_rn = 0.4;
        recs.push_back(r);
    }
    const auto rep = convergence_gap(recs, 0.7, LiftCombination::cauchy, {{100, 200}, {200, 400}});
    for (double g : rep.gaps) CHECK(std::abs(g) < 1e-15);
    CHECK(rep.windows[0].count == 2);
    CHECK(rep.windows[1].count == 4);
    CHECK(rep.windows[1].variance < 1e-30);
    const auto alt = convergence_gap(recs, 0.5, LiftCombination::dirichlet_resolvent, {{100, 400}});
    CHECK(alt.windows[0].mean_lift == Approx(0.7));
    CHECK(alt.windows[0].variance == Approx(0.04));
    CHECK(alt.running_mean.back() == Approx(0.7));
}
