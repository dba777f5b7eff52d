#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>

#include "qer/archive.hpp"
#include "qer/config.hpp"
#include "qer/svg.hpp"

using namespace qer;
using Catch::Approx;

namespace {

const char* kMinimal =
    "# unit square\n"
    "domain.kind = rectangle\n"
    "domain.a = 1\n"
    "domain.b = 1\n"
    "curve.kind = circle\n"
    "curve.center = 0.5, 0.5\n"
    "curve.radius = 0.3\n"
    "solver.delta = 1/64   # aligned\n"
    "windows = 40:120, 120:300\n"
    "symbols = const1; gauss_xi(0,0.5)\n"
    "eps1 = 0.4, 0.2\n";

std::string message_of(const std::string& text) {
    try {
        parse_config(text, "test.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

SvgPlot golden_plot() {
    SvgPlot p;
    p.title = "Golden <plot> & check";
    p.xlabel = "eps1";
    p.ylabel = "sum";
    p.log_x = p.log_y = true;
    p.series = {{"Dirichlet", {0.4, 0.2, 0.1}, {0.16, 0.04, 0.01}},
                {"Neumann", {0.4, 0.2, 0.1}, {0.4, 0.2, 0.1}},
                {"gaps", {0.4, 0.2, 0.1}, {-1.0, 0.05, std::nan("")}}};
    p.hlines = {{"ref", 0.1}};
    return p;
}

}  // namespace

TEST_CASE("config parses the flat key = value format", "[config]") {
    const auto c = parse_config(kMinimal, "test.cfg");
    CHECK(c.plan.domain.kind == DomainKind::rectangle);
    CHECK(c.plan.curve.kind == CurveKind::circle);
    CHECK(c.plan.curve.center.x() == 0.5);
    CHECK(c.plan.curve.radius == 0.3);
    CHECK(c.delta == 1.0 / 64.0);
    REQUIRE(c.plan.windows.size() == 2);
    CHECK(c.plan.windows[1].first == 120.0);
    CHECK(c.plan.windows[1].second == 300.0);
    REQUIRE(c.plan.symbols.size() == 2);
    CHECK(c.plan.symbols[1] == "gauss_xi(0,0.5)");
    CHECK(c.plan.eps1_ladder == std::vector<double>{0.4, 0.2});
    CHECK(c.stages == stage_names());
    CHECK(c.echo.at("solver.delta") == "1/64");
}

TEST_CASE("config canonical form is order independent and prefix filtered", "[config]") {
    const auto a = parse_config(kMinimal);
    const auto b = parse_config("eps1 = 0.4, 0.2\nsymbols = const1; gauss_xi(0,0.5)\nwindows = 40:120, 120:300\n"
                                "solver.delta = 1/64\ncurve.radius = 0.3\ncurve.center = 0.5, 0.5\n"
                                "curve.kind = circle\ndomain.b = 1\ndomain.a = 1\ndomain.kind = rectangle\n");
    CHECK(a.canonical() == b.canonical());
    CHECK(a.canonical({"curve"}) == "curve.center=0.5, 0.5\ncurve.kind=circle\ncurve.radius=0.3\n");
    CHECK(a.canonical({"domain"}).find("curve") == std::string::npos);
}

TEST_CASE("config errors name the offending key and line", "[config]") {
    const auto unknown = message_of(std::string(kMinimal) + "qunatize.n = 64\n");
    CHECK(unknown.find("qunatize.n") != std::string::npos);
    CHECK(unknown.find("unknown key") != std::string::npos);
    CHECK(unknown.find("test.cfg:12") != std::string::npos);

    CHECK(message_of("solver.delta = abc\n").find("solver.delta") != std::string::npos);
    CHECK(message_of("solver.delta = -1\n").find("positive") != std::string::npos);
    CHECK(message_of("solver.max_modes = 2.5\n").find("integer") != std::string::npos);
    CHECK(message_of("domain.kind = torus\n").find("domain.kind") != std::string::npos);
    CHECK(message_of("curve.center = 1\n").find("x,y") != std::string::npos);
    CHECK(message_of("windows = 10-20\n").find("lo:hi") != std::string::npos);
    CHECK(message_of("stages = solve, dance\n").find("dance") != std::string::npos);
    CHECK(message_of("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
    CHECK(message_of("just words\n").find("key = value") != std::string::npos);
    CHECK(message_of("output.dir = ../escape\n").find("output.dir") != std::string::npos);
    CHECK(message_of("report.qe = maybe\n").find("on|off") != std::string::npos);
    CHECK(message_of("verbosity = 3\n").find("verbosity") != std::string::npos);
}

TEST_CASE("config rejects invalid plans", "[config]") {
    CHECK(message_of("windows = 100:50\n").find("window 0") != std::string::npos);
    CHECK(message_of("windows = 10:50, 40:60\n").find("disjoint") != std::string::npos);
    CHECK(message_of("eps1 = 0.6\n").find("eps1") != std::string::npos);
    CHECK(message_of("budget.beta = 1\n").find("beta") != std::string::npos);
    CHECK(message_of("collar.eps = 0\n").find("collar") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("sha256 matches published vectors", "[archive]") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("mode archives round-trip bit for bit", "[archive]") {
    const auto d = Domain::rectangle(1.0, 1.0);
    const auto op = assemble_laplacian(d, 1.0 / 16.0);
    auto modes = solve_window(op, 10.0, 120.0, 50);
    REQUIRE(modes.size() >= 3);
    for (auto& m : modes) m.residual = quasimode_residual(m);
    const auto bytes = encode_modes(d.describe(), modes, *op.grid);
    const auto back = decode_modes(bytes, d.describe(), op.grid);
    REQUIRE(back.size() == modes.size());
    for (std::size_t k = 0; k < modes.size(); ++k) {
        CHECK(back[k].id == modes[k].id);
        CHECK(back[k].lambda2 == modes[k].lambda2);
        CHECK(back[k].h == modes[k].h);
        CHECK(back[k].residual == modes[k].residual);
        CHECK((back[k].field->real() - modes[k].field->real()).norm() == 0.0);
    }
    CHECK(encode_modes(d.describe(), back, *op.grid) == bytes);

    CHECK_THROWS_AS(decode_modes(bytes, Domain::rectangle(2.0, 1.0).describe(), op.grid), DomainError);
    CHECK_THROWS_AS(decode_modes(bytes, d.describe(), std::make_shared<const Grid>(d, 1.0 / 32.0)), DomainError);
    CHECK_THROWS_AS(decode_modes(bytes.substr(0, bytes.size() - 3), d.describe(), op.grid), DomainError);
    CHECK_THROWS_AS(decode_modes(bytes + "x", d.describe(), op.grid), DomainError);
    CHECK_THROWS_AS(decode_modes("QERTRACE" + bytes.substr(8), d.describe(), op.grid), DomainError);
}

TEST_CASE("trace archives round-trip and are keyed by the curve", "[archive]") {
    const auto d = Domain::rectangle(1.0, 1.0);
    const Curve curve(CurveSpec{CurveKind::circle, {0.5, 0.5}, 0.3, {}, {}, {}}, d);
    const auto modes = analytic_modes(d, std::vector<RectangleIndex>{{3, 2}, {4, 4}});
    std::vector<CauchyTrace> traces;
    for (const auto& m : modes) traces.push_back(cauchy_trace(m, curve, 64));
    const auto bytes = encode_traces(d.describe(), curve.describe(), traces);
    const auto back = decode_traces(bytes, d.describe(), curve.describe());
    REQUIRE(back.size() == traces.size());
    for (std::size_t k = 0; k < traces.size(); ++k) {
        CHECK(back[k].mode_id == traces[k].mode_id);
        CHECK(back[k].h == traces[k].h);
        CHECK(back[k].length == traces[k].length);
        CHECK(back[k].closed == traces[k].closed);
        CHECK(back[k].s == traces[k].s);
        CHECK((back[k].dirichlet - traces[k].dirichlet).norm() == 0.0);
        CHECK((back[k].neumann - traces[k].neumann).norm() == 0.0);
    }
    const Curve other(CurveSpec{CurveKind::circle, {0.5, 0.5}, 0.25, {}, {}, {}}, d);
    CHECK_THROWS_AS(decode_traces(bytes, d.describe(), other.describe()), DomainError);
    CHECK_THROWS_AS(decode_traces(bytes, Domain::disk(1.0).describe(), curve.describe()), DomainError);
}

TEST_CASE("CSV quoting round-trips", "[archive]") {
    CsvTable t({"symbol", "value", "note"}, "qerlab stage=test");
    t.row({"prod(const1,affine(1,0.5,cos_s(2)))", csv_num(0.1), "say \"hi\""});
    t.row({"plain", csv_num(-2.5e-300), ""});
    CHECK_THROWS_AS(t.row({"short"}), std::logic_error);
    const auto text = t.str();
    CHECK(text.rfind("# qerlab stage=test\n", 0) == 0);
    CHECK(text.find("\"prod(const1,affine(1,0.5,cos_s(2)))\"") != std::string::npos);
    CHECK(text.find("\"say \"\"hi\"\"\"") != std::string::npos);
    const auto d = parse_csv(text, "t.csv");
    CHECK(d.tag == "qerlab stage=test");
    REQUIRE(d.rows.size() == 2);
    CHECK(d.rows[0][0] == "prod(const1,affine(1,0.5,cos_s(2)))");
    CHECK(d.rows[0][2] == "say \"hi\"");
    CHECK(csv_double(d.rows[0][1], "t.csv") == 0.1);
    CHECK(csv_double(d.rows[1][1], "t.csv") == -2.5e-300);
    CHECK(d.column("note") == 2);
    CHECK_THROWS_AS(d.column("missing"), DomainError);
    CHECK_THROWS_AS(parse_csv("", "empty.csv"), DomainError);
    CHECK_THROWS_AS(parse_csv("a,b\n1\n", "bad.csv"), DomainError);
    CHECK_THROWS_AS(csv_double("1.5x", "bad.csv"), DomainError);
}

TEST_CASE("SVG output is deterministic and matches the golden file", "[svg]") {
    const auto svg = render_svg(golden_plot());
    CHECK(svg == render_svg(golden_plot()));
    CHECK(svg.find("Golden &lt;plot&gt; &amp; check") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    const std::filesystem::path golden = std::filesystem::path(QER_SOURCE_DIR) / "tests/golden/plot.svg";
    if (std::getenv("QER_UPDATE_GOLDEN")) write_file(golden, svg);
    REQUIRE(std::filesystem::exists(golden));
    CHECK(read_file(golden) == svg);
}

TEST_CASE("SVG tolerates empty and degenerate data", "[svg]") {
    SvgPlot p;
    p.title = "empty";
    const auto svg = render_svg(p);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    p.series = {{"flat", {1.0, 1.0}, {2.0, 2.0}}};
    CHECK(render_svg(p).find("polyline") != std::string::npos);
}
