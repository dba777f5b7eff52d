#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qer/error.hpp"
#include "qer/geometry.hpp"
#include "qer/harness.hpp"

namespace qer {

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"solve", "trace", "lift", "rellich", "weyl", "report"};
    return names;
}

struct RunConfig {
    ExperimentPlan plan;
    double delta = 1.0 / 64.0;
    int max_modes = 400;  // per window
    int chunk = 40;
    double tolerance = 1e-11;
    int rellich_modes = 2;
    int qe_observables = 1;  // 0 disables the interior QE table in the report
    std::vector<std::string> stages = stage_names();
    int verbosity = 1;
    std::map<std::string, std::string> echo;  // key -> value as written

    // Canonical "key=value" lines, sorted by key.
    std::string canonical(const std::vector<std::string>& prefixes = {}) const {
        std::string out;
        for (const auto& [k, v] : echo) {
            bool take = prefixes.empty();
            for (const auto& p : prefixes)
                if (k == p || k.rfind(p + ".", 0) == 0) take = true;
            if (take) out += k + "=" + v + "\n";
        }
        return out;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

class ConfigContext {
public:
    ConfigContext(std::string source, int line, std::string key)
        : source_(std::move(source)), line_(line), key_(std::move(key)) {}

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("config: " + source_ + ":" + std::to_string(line_) + ": key '" + key_ + "': " + what);
    }

    double number(const std::string& v) const {
        const auto slash = v.find('/');
        if (slash != std::string::npos)
            return number(trim(v.substr(0, slash))) / number(trim(v.substr(slash + 1)));
        try {
            std::size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size() || !std::isfinite(x)) fail("not a number: '" + v + "'");
            return x;
        } catch (const std::invalid_argument&) {
            fail("not a number: '" + v + "'");
        } catch (const std::out_of_range&) {
            fail("number out of range: '" + v + "'");
        }
    }

    int integer(const std::string& v) const {
        const double x = number(v);
        if (x != std::floor(x) || std::abs(x) > 2e9) fail("not an integer: '" + v + "'");
        return static_cast<int>(x);
    }

    Vec2 point(const std::string& v) const {
        const auto p = split(v, ',');
        if (p.size() != 2) fail("expected 'x,y', got '" + v + "'");
        return {number(p[0]), number(p[1])};
    }

    std::vector<Vec2> points(const std::string& v) const {
        std::vector<Vec2> out;
        for (const auto& p : split(v, ';'))
            if (!p.empty()) out.push_back(point(p));
        return out;
    }

    std::vector<double> numbers(const std::string& v) const {
        std::vector<double> out;
        for (const auto& p : split(v, ','))
            if (!p.empty()) out.push_back(number(p));
        return out;
    }

    std::vector<Window> windows(const std::string& v) const {
        std::vector<Window> out;
        for (const auto& p : split(v, ',')) {
            if (p.empty()) continue;
            const auto c = p.find(':');
            if (c == std::string::npos) fail("expected 'lo:hi', got '" + p + "'");
            out.emplace_back(number(trim(p.substr(0, c))), number(trim(p.substr(c + 1))));
        }
        return out;
    }

private:
    std::string source_;
    int line_;
    std::string key_;
};

}  // namespace detail

// Parses the flat "key = value" format ('#' starts a comment). Unknown keys,
// duplicates and malformed values raise ConfigError naming the key and line.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
    using Setter = std::function<void(RunConfig&, const detail::ConfigContext&, const std::string&)>;
    static const std::map<std::string, Setter> schema = {
        {"domain.kind",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             if (v == "rectangle") c.plan.domain.kind = DomainKind::rectangle;
             else if (v == "disk") c.plan.domain.kind = DomainKind::disk;
             else if (v == "stadium") c.plan.domain.kind = DomainKind::stadium;
             else if (v == "polygon") c.plan.domain.kind = DomainKind::polygon;
             else ctx.fail("expected rectangle|disk|stadium|polygon");
         }},
        {"domain.a", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.a = ctx.number(v); }},
        {"domain.b", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.b = ctx.number(v); }},
        {"domain.radius",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.radius = ctx.number(v); }},
        {"domain.alpha",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.alpha = ctx.number(v); }},
        {"domain.r", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.r = ctx.number(v); }},
        {"domain.vertices",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.domain.vertices = ctx.points(v); }},
        {"curve.kind",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             if (v == "circle") c.plan.curve.kind = CurveKind::circle;
             else if (v == "segment") c.plan.curve.kind = CurveKind::segment;
             else if (v == "spline") c.plan.curve.kind = CurveKind::spline;
             else ctx.fail("expected circle|segment|spline");
         }},
        {"curve.center",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.curve.center = ctx.point(v); }},
        {"curve.radius",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.curve.radius = ctx.number(v); }},
        {"curve.start", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.curve.start = ctx.point(v); }},
        {"curve.end", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.curve.end = ctx.point(v); }},
        {"curve.points",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.curve.control_points = ctx.points(v); }},
        {"solver.delta",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.delta = ctx.number(v);
             if (!(c.delta > 0.0)) ctx.fail("must be positive");
         }},
        {"solver.max_modes",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.max_modes = ctx.integer(v);
             if (c.max_modes < 1) ctx.fail("must be at least 1");
         }},
        {"solver.chunk",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.chunk = ctx.integer(v);
             if (c.chunk < 1) ctx.fail("must be at least 1");
         }},
        {"solver.tolerance",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.tolerance = ctx.number(v);
             if (!(c.tolerance > 0.0)) ctx.fail("must be positive");
         }},
        {"seed",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             const double x = ctx.number(v);
             if (x < 0 || x != std::floor(x)) ctx.fail("must be a non-negative integer");
             c.plan.seed = static_cast<std::uint64_t>(x);
         }},
        {"windows", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.windows = ctx.windows(v); }},
        {"symbols",
         [](RunConfig& c, const auto&, const std::string& v) {
             c.plan.symbols.clear();
             for (const auto& s : detail::split(v, ';'))
                 if (!s.empty()) c.plan.symbols.push_back(s);
         }},
        {"eps1", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.eps1_ladder = ctx.numbers(v); }},
        {"collar.eps", [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.collar_eps = ctx.numbers(v); }},
        {"budget.beta",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.budget_beta = ctx.number(v); }},
        {"quasimode.c",
         [](RunConfig& c, const auto& ctx, const std::string& v) { c.plan.residual_c = ctx.number(v); }},
        {"rellich.modes",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.rellich_modes = ctx.integer(v);
             if (c.rellich_modes < 0) ctx.fail("must be non-negative");
         }},
        {"report.qe",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             if (v == "on") c.qe_observables = 1;
             else if (v == "off") c.qe_observables = 0;
             else ctx.fail("expected on|off");
         }},
        {"output.dir",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             if (v.empty() || v.find("..") != std::string::npos) ctx.fail("must be a non-empty relative name");
             c.plan.output_dir = v;
         }},
        {"stages",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.stages.clear();
             for (const auto& s : detail::split(v, ',')) {
                 if (s.empty()) continue;
                 const auto& names = stage_names();
                 if (std::find(names.begin(), names.end(), s) == names.end()) ctx.fail("unknown stage '" + s + "'");
                 c.stages.push_back(s);
             }
         }},
        {"verbosity",
         [](RunConfig& c, const auto& ctx, const std::string& v) {
             c.verbosity = ctx.integer(v);
             if (c.verbosity < 0 || c.verbosity > 2) ctx.fail("expected 0, 1 or 2");
         }},
    };

    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                              line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const detail::ConfigContext ctx(source, lineno, key);
        const auto it = schema.find(key);
        if (it == schema.end()) ctx.fail("unknown key");
        if (cfg.echo.count(key)) ctx.fail("duplicate key");
        it->second(cfg, ctx, value);
        cfg.echo[key] = value;
    }
    try {
        validate_plan(cfg.plan);
    } catch (const DomainError& e) {
        throw ConfigError("config: " + source + ": " + e.what());
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

}  // namespace qer
