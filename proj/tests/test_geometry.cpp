#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <queue>

#include "qer/geometry.hpp"
#include "qer/grid.hpp"

using Catch::Approx;
using namespace qer;

namespace {

constexpr double pi = std::numbers::pi;

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

CurveSpec blob() {
    CurveSpec s;
    s.kind = CurveKind::spline;
    for (int k = 0; k < 9; ++k) {
        const double t = 2.0 * pi * k / 9.0;
        const double r = 0.5 + 0.08 * std::cos(3.0 * t);
        s.control_points.emplace_back(r * std::cos(t), r * std::sin(t));
    }
    return s;
}

}  // namespace

TEST_CASE("domain areas match closed forms", "[geometry]") {
    CHECK(Domain::stadium(1.0, 1.0).area() == Approx(4.0 + pi).epsilon(1e-12));
    CHECK(Domain::disk(1.0).area() == Approx(pi).epsilon(1e-12));
    CHECK(Domain::rectangle(1.0, 1.0).area() == Approx(1.0).epsilon(1e-12));
    CHECK(Domain::rectangle(1.3, 0.7).area() == Approx(0.91).epsilon(1e-12));
    CHECK(Domain::stadium(0.5, 2.0).area() == Approx(4.0 + 4.0 * pi).epsilon(1e-12));
    CHECK(Domain::polygon({{0, 0}, {2, 0}, {2, 1}, {0, 1}}).area() == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("domain rejects non-positive parameters by name", "[geometry]") {
    auto message = [](auto&& f) {
        try {
            f();
        } catch (const DomainError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message([] { Domain::rectangle(0.0, 1.0); }).find("'a'") != std::string::npos);
    CHECK(message([] { Domain::rectangle(1.0, -1.0); }).find("'b'") != std::string::npos);
    CHECK(message([] { Domain::disk(0.0); }).find("'radius'") != std::string::npos);
    CHECK(message([] { Domain::stadium(-1.0, 1.0); }).find("'alpha'") != std::string::npos);
    CHECK(message([] { Domain::stadium(1.0, 0.0); }).find("'r'") != std::string::npos);
}

TEST_CASE("inside agrees with the sign of the boundary distance", "[geometry]") {
    const std::vector<Domain> domains{Domain::rectangle(1.3, 1.0), Domain::disk(1.0), Domain::stadium(1.0, 1.0),
                                      Domain::polygon({{0, 0}, {2, 0}, {1, 1.5}})};
    for (const auto& d : domains) {
        const auto bb = d.bounding_box();
        for (int i = 0; i <= 40; ++i)
            for (int j = 0; j <= 40; ++j) {
                const Vec2 p{bb.x0 - 0.1 + (bb.x1 - bb.x0 + 0.2) * i / 40.0,
                             bb.y0 - 0.1 + (bb.y1 - bb.y0 + 0.2) * j / 40.0};
                CHECK(d.inside(p) == (d.distance(p) > 0.0));
            }
    }
    const auto st = Domain::stadium(1.0, 1.0);
    CHECK(st.distance({0.0, 0.0}) == Approx(1.0));
    CHECK(st.distance({1.5, 0.0}) == Approx(0.5));
    CHECK(st.distance({3.0, 0.0}) == Approx(-1.0));
}

TEST_CASE("circle in the unit disk", "[geometry]") {
    const auto d = Domain::disk(1.0);
    const Curve c(circle({0, 0}, 0.5), d);
    CHECK(c.length() == Approx(pi).epsilon(1e-12));
    CHECK(c.closed());
    for (double s : c.nodes(37)) CHECK(c.curvature(s) == Approx(2.0).epsilon(1e-12));
    // the normal points into the enclosed region
    CHECK(c.normal(0.0).dot(c.point(0.0)) < 0.0);
}

TEST_CASE("horizontal segment is an open arc with zero curvature", "[geometry]") {
    const auto d = Domain::rectangle(1.0, 1.0);
    const Curve c(segment({0.2, 0.4}, {0.9, 0.4}), d);
    CHECK(c.length() == Approx(0.7).epsilon(1e-12));
    CHECK_FALSE(c.closed());
    for (double s : c.nodes(11)) CHECK(std::abs(c.curvature(s)) < 1e-14);
}

TEST_CASE("circle of radius 0.8 in stadium(1,1) has a usable collar", "[geometry]") {
    const auto d = Domain::stadium(1.0, 1.0);
    const Curve c(circle({0, 0}, 0.8), d);
    REQUIRE(c.collar_max() >= 0.1);
    CHECK(1.0 - 1.25 * c.collar_max() > 0.5 - 1e-12);
    for (double s : c.nodes(200))
        for (double xn : {-c.collar_max(), c.collar_max()})
            CHECK(d.inside(c.point(s) + xn * c.normal(s)));
}

TEST_CASE("curves touching the boundary or self-intersecting are rejected", "[geometry]") {
    const auto d = Domain::disk(1.0);
    CHECK_THROWS_AS(Curve(circle({0, 0}, 1.0), d), DomainError);
    CHECK_THROWS_AS(Curve(circle({0.5, 0}, 0.6), d), DomainError);
    CHECK_THROWS_AS(Curve(segment({-0.5, 0}, {1.5, 0}), d), DomainError);
    CurveSpec bow;
    bow.kind = CurveKind::spline;
    bow.control_points = {{-0.5, -0.3}, {0.5, 0.3}, {0.5, -0.3}, {-0.5, 0.3}};
    CHECK_THROWS_AS(Curve(bow, d), DomainError);
}

TEST_CASE("arclength frame invariants on every curve kind", "[geometry]") {
    const auto d = Domain::stadium(1.0, 1.0);
    const std::vector<Curve> curves{Curve(circle({0.1, 0}, 0.7), d), Curve(segment({-1, 0.2}, {1, -0.3}), d),
                                    Curve(blob(), d)};
    for (const auto& c : curves) {
        const double step = 1e-5;
        for (double s : c.nodes(64)) {
            if (!c.closed() && (s < 2 * step || s > c.length() - 2 * step)) continue;
            const Vec2 dg = (c.point(s + step) - c.point(s - step)) / (2 * step);
            CHECK(dg.norm() == Approx(1.0).margin(1e-8));
            CHECK(std::abs(c.normal(s).dot(c.tangent(s))) < 1e-12);
            CHECK(c.normal(s).norm() == Approx(1.0).margin(1e-12));
        }
        if (c.closed()) {
            CHECK((c.point(0.0) - c.point(c.length())).norm() < 1e-10);
            CHECK((c.tangent(0.0) - c.tangent(c.length())).norm() < 1e-8);
        }
    }
}

TEST_CASE("total curvature of a closed curve is 2 pi", "[geometry]") {
    const auto d = Domain::stadium(1.0, 1.0);
    for (const auto& spec : {circle({0, 0}, 0.8), blob()}) {
        const Curve c(spec, d);
        const int n = 4000;
        double total = 0.0;
        for (double s : c.nodes(n)) total += c.curvature(s) * c.length() / n;
        CHECK(total == Approx(2.0 * pi).margin(1e-8));
    }
}

TEST_CASE("Fermi chart Jacobian tables", "[geometry]") {
    const auto disk = Domain::disk(1.0);
    const Curve c(circle({0, 0}, 0.5), disk);
    const auto chart = fermi_chart(c, 0.1, 32, 11);
    for (int i = 0; i < chart.ns(); ++i)
        for (int m = 0; m < chart.nn(); ++m) {
            CHECK(chart.jacobian(i, m) == Approx(1.0 - 2.0 * chart.xn()[m]).epsilon(1e-12));
            CHECK(chart.jacobian(i, m) >= 0.8 - 1e-12);
            CHECK(chart.jacobian(i, m) <= 1.2 + 1e-12);
        }
    const auto sq = Domain::rectangle(1.0, 1.0);
    const Curve seg(segment({0.1, 0.5}, {0.9, 0.5}), sq);
    const auto flat = fermi_chart(seg, 0.05, 16, 5);
    for (int i = 0; i < flat.ns(); ++i)
        for (int m = 0; m < flat.nn(); ++m) CHECK(flat.jacobian(i, m) == 1.0);
    CHECK_THROWS_AS(fermi_chart(c, 0.3, 32, 11), DomainError);
}

TEST_CASE("Fermi map reproduces the curve and round-trips", "[geometry]") {
    const auto d = Domain::stadium(1.0, 1.0);
    const Curve c(blob(), d);
    const double eps = std::min(0.1, c.collar_max());
    const auto chart = fermi_chart(c, eps, 40, 9);
    for (double s : chart.s()) CHECK((chart.to_cartesian(s, 0.0) - c.point(s)).norm() == 0.0);
    for (double s : chart.s())
        for (double xn : chart.xn()) {
            const Vec2 p = chart.to_cartesian(s, xn);
            const Vec2 f = chart.to_fermi(p);
            CHECK((chart.to_cartesian(f.x(), f.y()) - p).norm() < 1e-9);
        }
}

TEST_CASE("a closed curve separates the solver grid", "[geometry]") {
    const auto d = Domain::stadium(1.0, 1.0);
    const Curve c(circle({0.2, 0.1}, 0.6), d);
    const Grid g(d, 1.0 / 64.0);
    auto side = [&](int i, int j) { return (g.node(i, j) - Vec2(0.2, 0.1)).norm() < 0.6; };
    // flood fill from the center without stepping across the curve
    std::vector<char> seen(g.size(), 0);
    std::queue<std::pair<int, int>> q;
    int i0 = static_cast<int>(std::lround((0.2 - g.x0()) / g.delta()));
    int j0 = static_cast<int>(std::lround((0.1 - g.y0()) / g.delta()));
    q.emplace(i0, j0);
    seen[g.flat(i0, j0)] = 1;
    bool leaked = false;
    while (!q.empty()) {
        auto [i, j] = q.front();
        q.pop();
        if (!side(i, j)) leaked = true;
        for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const int a = i + di, b = j + dj;
            if (!g.interior(a, b) || seen[g.flat(a, b)] || side(a, b) != side(i, j)) continue;
            seen[g.flat(a, b)] = 1;
            q.emplace(a, b);
        }
    }
    CHECK_FALSE(leaked);
}
