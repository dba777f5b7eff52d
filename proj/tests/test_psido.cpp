#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "qer/harness.hpp"
#include "qer/psido.hpp"
#include "qer/trace.hpp"

using Catch::Approx;
using namespace qer;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double L = 2.0 * pi;
const cplx I(0.0, 1.0);

// Operator-norm and positivity constants, frozen on the family below.
constexpr double kNormC = 1.0;
constexpr double kGardingC = 1.0;
constexpr double kMultiplyC = 2.5;

const std::vector<std::string> family{
    "const1",
    "gauss_xi(0,0.5)",
    "prod(const1,affine(1,0.5,cos_s(2)))",
    "prod(affine(1,0.5,cos_s(1)),gauss_xi(0.5,0.3))",
    "glancing_cutoff(0.2)",
    "prod(window(1,5,0.5),poly_xi(1,0,-0.2))",
};

// Smallest even N whose frequency lattice reaches 1.6 times the support.
int nodes_for(const SymbolFn& a, double h) {
    const int n = 2 * static_cast<int>(std::ceil(1.6 * a.support * L / (2.0 * pi * h)));
    return std::max(n, 16);
}

Eigen::VectorXcd band_limited(int n, double h, double xi_max, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXcd u = Eigen::VectorXcd::Zero(n);
    for (int k = -n / 2; k < n / 2; ++k) {
        if (std::abs(2.0 * pi * k * h / L) > xi_max) continue;
        const cplx c(g(rng), g(rng));
        for (int i = 0; i < n; ++i) u[i] += c * std::exp(I * (2.0 * pi * k * i / n));
    }
    return u / u.norm();
}

double sup_abs(const SymbolFn& a) {
    double sup = 0.0;
    const double xmax = std::isfinite(a.support) ? a.support : 3.0;
    for (int i = 0; i < 200; ++i)
        for (int k = 0; k <= 400; ++k) sup = std::max(sup, std::abs(a(L * i / 200, -xmax + 2.0 * xmax * k / 400)));
    return sup;
}

// Random real symbol: trigonometric in s times a Gaussian in xi.
SymbolFn random_symbol(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> c(5), ph(5);
    for (auto& x : c) x = g(rng);
    for (auto& x : ph) x = 2.0 * pi * std::uniform_real_distribution<double>()(rng);
    SymbolFn a = symbols::gauss_xi(0.3, 0.4);
    const auto base = a;
    a.id = "random";
    a.value = [=](double s, double xi) {
        double f = 0.0;
        for (int j = 0; j < 5; ++j) f += c[j] * std::cos(j * s + ph[j]);
        return f * base(s, xi);
    };
    return a;
}

double op_norm(const Eigen::MatrixXcd& m) {
    const Eigen::MatrixXcd g = m.adjoint() * m;
    return std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(g, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
}

}  // namespace

TEST_CASE("constant symbol acts as the identity on band-limited vectors", "[psido]") {
    const double h = 0.05;
    const int n = 128;
    const auto op = quantize(symbols::const1(), h, n, L);
    const auto u = band_limited(n, h, 1.5, 7);
    CHECK((op.apply(u) - u).norm() <= 1e-10);
}

TEST_CASE("real symbols quantize to Hermitian matrices", "[psido]") {
    for (const auto& id : family) {
        const auto a = symbols::parse(id, L);
        for (double h : {0.05, 0.02}) {
            const auto op = quantize(a, h, nodes_for(a, h), L);
            CHECK((op.matrix - op.matrix.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("FFT assembly matches the direct kernel sum", "[psido]") {
    for (const auto& id : family) {
        const auto a = symbols::parse(id, L);
        const double h = 0.05;
        const int n = nodes_for(a, h);
        CHECK((quantize(a, h, n, L).matrix - kernel_oracle(a, h, n, L)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const auto a = symbols::parse(family[3], L);
    CHECK((quantize(a, 0.025, 256, L).matrix - kernel_oracle(a, 0.025, 256, L)).cwiseAbs().maxCoeff() <= 1e-12);
    const auto w = symbols::parse("prod(window(0.2,1.6,0.3),gauss_xi(0,0.6))", 1.8);
    CHECK((quantize(w, 0.03, 96, 1.8, false).matrix - kernel_oracle(w, 0.03, 96, 1.8, false)).cwiseAbs().maxCoeff() <=
          1e-12);
}

TEST_CASE("kernel oracle edge cases", "[psido]") {
    CHECK(kernel_oracle(symbols::zero(), 0.05, 64, L).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(kernel_oracle(symbols::const1(), 0.001, 514, L), DomainError);
    const auto r = random_symbol(42);
    const auto m = kernel_oracle(r, 0.05, 128, L);
    CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("s-only symbols are multiplication up to O(h)", "[psido]") {
    const auto f = symbols::cos_s(1, L);
    const auto chi = symbols::const1();
    std::vector<double> hs{0.05, 0.025, 0.0125}, defect;
    for (double h : hs) {
        const int n = nodes_for(f, h);
        const auto a = quantize(f, h, n, L).matrix;
        const auto c = quantize(chi, h, n, L).matrix;
        Eigen::MatrixXcd mf = Eigen::MatrixXcd::Zero(n, n);
        for (int i = 0; i < n; ++i) mf(i, i) = std::cos(L * i / n);
        defect.push_back(op_norm(a - mf * c));
    }
    for (std::size_t k = 0; k < hs.size(); ++k) CHECK(defect[k] <= kMultiplyC * hs[k]);
    CHECK(loglog_slope(hs, defect) == Approx(1.0).margin(0.15));
}

TEST_CASE("xi-only symbols diagonalize plane waves", "[psido]") {
    const double h = 0.05;
    const int n = 128;
    const auto g = symbols::gauss_xi(0.2, 0.3);
    const auto op = quantize(g, h, n, L);
    for (int k0 : {-9, 0, 4, 17}) {
        Eigen::VectorXcd wave(n);
        for (int i = 0; i < n; ++i) wave[i] = std::exp(I * (2.0 * pi * k0 * i / n));
        CHECK((op.apply(wave) - g(0.0, 2.0 * pi * k0 * h / L) * wave).norm() <= 1e-12);
    }
    const auto u = band_limited(n, h, 3.0, 3);
    const auto viafft = curve_fourier_multiplier(u, [&](double xi) { return g(0.0, xi); }, h, L);
    CHECK((op.apply(u) - viafft).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("glancing cutoff plateau, support and range", "[psido]") {
    const auto chi = symbols::glancing_cutoff(0.2);
    CHECK(chi(0.0, 1.0).real() == 1.0);
    CHECK(chi(0.0, -1.0).real() == 1.0);
    CHECK(chi(0.0, 0.96).real() == Approx(1.0));
    CHECK(chi(0.0, 1.04).real() == Approx(1.0));
    CHECK(chi(0.0, 0.9).real() == 0.0);
    CHECK(chi(0.0, 0.92).real() == 0.0);
    CHECK(chi(0.0, 1.08).real() == 0.0);
    for (double e : {0.05, 0.2, 0.45}) {
        const auto c = symbols::glancing_cutoff(e);
        for (int k = 0; k <= 2000; ++k) {
            const double v = c(0.0, -2.0 + 4.0 * k / 2000).real();
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(symbols::glancing_cutoff(0.0), DomainError);
    CHECK_THROWS_AS(symbols::glancing_cutoff(0.5), DomainError);
}

TEST_CASE("library symbols honour their declared support and reality", "[psido]") {
    for (const auto& id : family) {
        const auto a = symbols::parse(id, L);
        CHECK(check_support(a, L));
        if (a.real)
            for (int k = 0; k < 50; ++k) CHECK(a(0.1 * k, -2.0 + 0.08 * k).imag() == 0.0);
    }
    CHECK(symbols::parse("affine(1,0.5,cos_s(2))", L).support == std::numeric_limits<double>::infinity());
}

TEST_CASE("symbol grammar", "[psido]") {
    CHECK(symbols::parse("const1", L)(0.3, 0.5) == cplx(1.0));
    CHECK(symbols::parse("poly_xi(0,0,1)", L)(0.0, 0.5).real() == Approx(0.25));
    CHECK(symbols::parse("noglance(const1,0.2)", L)(0.0, 1.0).real() == Approx(0.0));
    CHECK(symbols::parse("noglance(const1,0.2)", L)(0.0, 0.5).real() == Approx(1.0));
    CHECK(symbols::parse("cos_s(2)", L)(L / 4, 0.0).real() == Approx(-1.0));
    CHECK_THROWS_AS(symbols::parse("bogus(1)", L), DomainError);
    CHECK_THROWS_AS(symbols::parse("prod(const1", L), DomainError);
    CHECK_THROWS_AS(symbols::parse("gauss_xi(0,-1)", L), DomainError);
}

TEST_CASE("quantization preconditions", "[psido]") {
    CHECK_THROWS_AS(quantize(symbols::const1(), 0.05, 32, L), DomainError);
    CHECK_THROWS_AS(quantize(symbols::const1(), 0.05, 127, L), DomainError);
    CHECK_THROWS_AS(quantize(symbols::const1(), 0.05, 128, L, false), DomainError);
    CHECK_THROWS_AS(quantize(symbols::parse("affine(1,0.5,cos_s(2))", L), 0.05, 128, L), DomainError);
}

TEST_CASE("operator norm is bounded by sup |a| + C h", "[psido]") {
    for (const auto& id : family) {
        const auto a = symbols::parse(id, L);
        const double sup = sup_abs(a);
        for (double h : {0.05, 0.025}) CHECK(op_norm(quantize(a, h, nodes_for(a, h), L).matrix) <= sup + kNormC * h);
    }
}

TEST_CASE("non-negative symbols are bounded below by -C h", "[psido]") {
    for (const auto& id : family) {
        const auto a = symbols::parse(id, L);
        for (double h : {0.05, 0.025}) {
            const auto m = quantize(a, h, nodes_for(a, h), L).matrix;
            const Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
            CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(herm).eigenvalues().minCoeff() >= -kGardingC * h);
        }
    }
}

TEST_CASE("Weyl and left quantization differ by O(h) on a wave packet", "[psido]") {
    const auto a = symbols::parse("prod(affine(1,0.5,cos_s(1)),gauss_xi(0.5,0.3))", L);
    std::vector<double> hs{0.05, 0.025, 0.0125}, gap;
    for (double h : hs) {
        const int n = nodes_for(a, h);
        const int k0 = static_cast<int>(std::lround(0.6 / h));
        Eigen::VectorXcd u(n);
        for (int i = 0; i < n; ++i) {
            const double s = L * i / n;
            u[i] = std::exp(std::cos(s) + std::sin(s)) * std::exp(I * (k0 * s));
        }
        u /= u.norm();
        const cplx w = u.dot(quantize(a, h, n, L).apply(u));
        const cplx l = u.dot(quantize_left(a, h, n, L).apply(u));
        gap.push_back(std::abs(w - l));
    }
    for (std::size_t k = 0; k < hs.size(); ++k) CHECK(gap[k] <= 5.0 * hs[k]);
    CHECK(loglog_slope(hs, gap) == Approx(1.0).margin(0.2));
}
