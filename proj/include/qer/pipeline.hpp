#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <openssl/opensslv.h>

#include <json.hpp>

#include "qer/archive.hpp"
#include "qer/config.hpp"
#include "qer/eigensolver.hpp"
#include "qer/geometry.hpp"
#include "qer/harness.hpp"
#include "qer/lifts.hpp"
#include "qer/psido.hpp"
#include "qer/rellich.hpp"
#include "qer/svg.hpp"
#include "qer/trace.hpp"

namespace qer {

inline constexpr const char* kToolVersion = "1.1.0";

// Runs f(0..n-1) on up to `jobs` threads; the first exception is rethrown.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) f(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    f(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// One (symbol, eps1) pair evaluated on every trace by the lift stage.
struct LiftTask {
    SymbolFn symbol;
    double eps1 = 0.0;
    double omega_plus = 0.0;
    double omega_minus = 0.0;
};

inline std::vector<LiftTask> lift_tasks(const ExperimentPlan& plan, const Curve& curve, const Domain& domain) {
    if (plan.eps1_ladder.empty()) throw DomainError("harness", "plan needs at least one eps1 rung");
    std::vector<LiftTask> out;
    auto add = [&](SymbolFn a, double e) {
        LiftTask t;
        t.omega_plus = limit_state(a, 0.5, curve, domain).value;
        t.omega_minus = limit_state(a, -0.5, curve, domain).value;
        t.symbol = std::move(a);
        t.eps1 = e;
        out.push_back(std::move(t));
    };
    for (const auto& text : plan.symbols) {
        const SymbolFn a = symbols::parse(text, curve.length());
        add(a, plan.eps1_ladder.back());
        for (double e : plan.eps1_ladder) add(symbols::nonglancing(a, e), e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run directory and manifest
// ---------------------------------------------------------------------------

class RunContext {
public:
    RunContext(const RunConfig& cfg, std::filesystem::path root, int jobs, std::ostream& log)
        : cfg_(cfg),
          dir_(std::move(root) / cfg.plan.output_dir),
          jobs_(jobs),
          log_(log),
          domain_(cfg.plan.domain),
          domain_echo_(domain_.describe()) {
        std::filesystem::create_directories(dir_);
        const auto mpath = dir_ / "manifest.json";
        if (std::filesystem::exists(mpath)) {
            try {
                manifest_ = nlohmann::json::parse(read_file(mpath));
            } catch (const nlohmann::json::exception&) {
                manifest_ = nlohmann::json::object();
            }
        }
        if (!manifest_.is_object()) manifest_ = nlohmann::json::object();
    }

    const RunConfig& cfg() const { return cfg_; }
    const std::filesystem::path& dir() const { return dir_; }
    int jobs() const { return jobs_; }
    const Domain& domain() const { return domain_; }
    const std::string& domain_echo() const { return domain_echo_; }
    std::string domain_hash() const { return sha256_hex(domain_echo_); }

    const Curve& curve() {
        if (!curve_) curve_ = std::make_unique<Curve>(cfg_.plan.curve, domain_);
        return *curve_;
    }
    std::string curve_echo() { return curve().describe(); }
    std::string curve_hash() { return sha256_hex(curve_echo()); }

    void say(int level, const std::string& msg) const {
        if (cfg_.verbosity >= level) log_ << msg << "\n";
    }

    std::string tag(const std::string& stage, const std::string& input_hash) {
        std::string t = "qerlab stage=" + stage + " input=" + input_hash.substr(0, 16) + " domain=" +
                        domain_hash().substr(0, 16);
        if (stage != "solve") t += " curve=" + curve_hash().substr(0, 16);
        return t;
    }

    void write(const std::string& name, const std::string& bytes) {
        write_file(dir_ / name, bytes);
        outputs_[name] = sha256_hex(bytes);
    }

    std::string read(const std::string& name) const { return read_file(dir_ / name); }

    // Output hashes of a finished stage, or an empty map when unavailable.
    std::map<std::string, std::string> stage_outputs(const std::string& stage) const {
        std::map<std::string, std::string> out;
        if (!manifest_.contains("stages") || !manifest_["stages"].contains(stage) ||
            !manifest_["stages"][stage].contains("outputs"))
            return out;
        for (const auto& [k, v] : manifest_["stages"][stage]["outputs"].items()) out[k] = v.get<std::string>();
        for (const auto& [name, sha] : out)
            if (!std::filesystem::exists(dir_ / name) || file_sha256(dir_ / name) != sha) return {};
        return out;
    }

    bool cache_hit(const std::string& stage, const std::string& input_hash) const {
        if (!manifest_.contains("stages") || !manifest_["stages"].contains(stage)) return false;
        const auto& s = manifest_["stages"][stage];
        if (!s.contains("input_hash") || s["input_hash"] != input_hash) return false;
        return !stage_outputs(stage).empty();
    }

    void begin_stage() { outputs_.clear(); }

    void finish_stage(const std::string& stage, const std::string& input_hash, bool cached) {
        auto& s = manifest_["stages"][stage];
        s["input_hash"] = input_hash;
        s["status"] = cached ? "cached" : "ran";
        if (!cached) s["outputs"] = outputs_;
        save_manifest();
    }

    void save_manifest() {
        manifest_["tool"] = "qerlab";
        manifest_["version"] = kToolVersion;
        manifest_["config"] = cfg_.echo;
        manifest_["config_hash"] = sha256_hex(cfg_.canonical());
        manifest_["domain"] = domain_echo_;
        manifest_["domain_hash"] = domain_hash();
        try {
            manifest_["curve"] = curve_echo();
            manifest_["curve_hash"] = curve_hash();
        } catch (const DomainError&) {
        }
        manifest_["libraries"] = {
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"openssl", OPENSSL_VERSION_TEXT}};
        write_file(dir_ / "manifest.json", manifest_.dump(2) + "\n");
    }

    const nlohmann::json& manifest() const { return manifest_; }

    // Checks the provenance line of a CSV against this run's domain/curve.
    void check_tag(const CsvData& d, const std::string& name, bool with_curve) {
        auto field = [&](const std::string& key) -> std::string {
            const auto p = d.tag.find(key + "=");
            if (p == std::string::npos) return {};
            const auto e = d.tag.find(' ', p);
            return d.tag.substr(p + key.size() + 1, e == std::string::npos ? std::string::npos : e - p - key.size() - 1);
        };
        if (field("domain") != domain_hash().substr(0, 16))
            throw DomainError("report", name + " was produced for a different domain (mixed archives)");
        if (with_curve && field("curve") != curve_hash().substr(0, 16))
            throw DomainError("report", name + " was produced for a different curve (mixed archives)");
    }

    std::shared_ptr<const Grid> grid() {
        if (!grid_) grid_ = std::make_shared<const Grid>(domain_, cfg_.delta);
        return grid_;
    }

private:
    const RunConfig& cfg_;
    std::filesystem::path dir_;
    int jobs_;
    std::ostream& log_;
    Domain domain_;
    std::string domain_echo_;
    std::unique_ptr<Curve> curve_;
    std::shared_ptr<const Grid> grid_;
    nlohmann::json manifest_;
    std::map<std::string, std::string> outputs_;
};

inline std::string window_file(const std::string& prefix, std::size_t k) {
    return prefix + "_w" + std::to_string(k) + ".bin";
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void stage_solve(RunContext& ctx, const std::string& input) {
    const auto& cfg = ctx.cfg();
    if (cfg.plan.windows.empty()) throw ConfigError("config: stage 'solve' needs at least one window");
    const auto op = assemble_laplacian(ctx.domain(), cfg.delta);
    ctx.say(1, "solve: " + ctx.domain_echo() + ", " + std::to_string(op.grid->unknowns()) + " unknowns");
    CsvTable spec({"window", "mode_id", "lambda2", "h", "rho", "accepted"}, ctx.tag("solve", input));
    for (std::size_t k = 0; k < cfg.plan.windows.size(); ++k) {
        const auto [lo, hi] = cfg.plan.windows[k];
        SolveOptions opt;
        opt.seed = cfg.plan.seed + 7919 * k;
        opt.chunk = cfg.chunk;
        opt.tolerance = cfg.tolerance;
        auto modes = solve_window(op, lo, hi, cfg.max_modes, opt);
        for (auto& m : modes) {
            m.residual = quasimode_residual(m);
            const bool ok = m.residual <= cfg.plan.residual_c * m.h;
            spec.row({std::to_string(k), std::to_string(m.id), csv_num(m.lambda2), csv_num(m.h), csv_num(m.residual),
                      ok ? "1" : "0"});
        }
        ctx.say(1, "solve: window [" + csv_num(lo) + ", " + csv_num(hi) + ") -> " + std::to_string(modes.size()) +
                       " modes");
        ctx.write(window_file("modes", k), encode_modes(ctx.domain_echo(), modes, *op.grid));
    }
    ctx.write("spectrum.csv", spec.str());
}

inline std::vector<EigenMode> load_window_modes(RunContext& ctx, std::size_t k) {
    const auto name = window_file("modes", k);
    return decode_modes(ctx.read(name), ctx.domain_echo(), ctx.grid(), name);
}

inline std::vector<CauchyTrace> load_window_traces(RunContext& ctx, std::size_t k) {
    const auto name = window_file("traces", k);
    return decode_traces(ctx.read(name), ctx.domain_echo(), ctx.curve_echo(), name);
}

inline void stage_trace(RunContext& ctx, const std::string&) {
    const Curve& curve = ctx.curve();
    for (std::size_t k = 0; k < ctx.cfg().plan.windows.size(); ++k) {
        const auto modes = load_window_modes(ctx, k);
        std::vector<CauchyTrace> traces(modes.size());
        parallel_for(modes.size(), ctx.jobs(), [&](std::size_t i) { traces[i] = cauchy_trace(modes[i], curve); });
        ctx.say(1, "trace: window " + std::to_string(k) + ", " + std::to_string(traces.size()) + " traces");
        ctx.write(window_file("traces", k), encode_traces(ctx.domain_echo(), ctx.curve_echo(), traces));
    }
}

inline void stage_lift(RunContext& ctx, const std::string& input) {
    const auto& plan = ctx.cfg().plan;
    const auto tasks = lift_tasks(plan, ctx.curve(), ctx.domain());
    CsvTable t({"mode_id", "window", "lambda2", "h", "symbol", "eps1", "mu_n_re", "mu_n_im", "mu_rd_re", "mu_rd_im",
                "phi_cd_re", "phi_cd_im", "phi_d_re", "phi_d_im", "phi_rn_re", "phi_rn_im", "omega_plus",
                "omega_minus", "gap_cd", "gap_d_rn"},
               ctx.tag("lift", input));
    for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        const auto traces = load_window_traces(ctx, k);
        std::vector<double> lambda2(traces.size());
        for (std::size_t i = 0; i < traces.size(); ++i) lambda2[i] = 1.0 / (traces[i].h * traces[i].h);
        std::vector<std::vector<LiftRecord>> recs(traces.size());
        parallel_for(traces.size(), ctx.jobs(), [&](std::size_t i) {
            for (const auto& task : tasks)
                recs[i].push_back(compute_lifts(task.symbol, traces[i], lambda2[i], task.eps1));
        });
        for (std::size_t i = 0; i < traces.size(); ++i)
            for (std::size_t j = 0; j < tasks.size(); ++j) {
                const auto& r = recs[i][j];
                const auto& task = tasks[j];
                const cplx drn = r.phi_d + r.phi_rn;
                t.row({std::to_string(r.mode_id), std::to_string(k), csv_num(r.lambda2), csv_num(r.h), r.symbol_id,
                       csv_num(r.eps1), csv_num(r.mu_n.real()), csv_num(r.mu_n.imag()), csv_num(r.mu_rd.real()),
                       csv_num(r.mu_rd.imag()), csv_num(r.phi_cd.real()), csv_num(r.phi_cd.imag()),
                       csv_num(r.phi_d.real()), csv_num(r.phi_d.imag()), csv_num(r.phi_rn.real()),
                       csv_num(r.phi_rn.imag()), csv_num(task.omega_plus), csv_num(task.omega_minus),
                       csv_num(r.phi_cd.real() - task.omega_plus), csv_num(drn.real() - task.omega_minus)});
            }
        ctx.say(1, "lift: window " + std::to_string(k) + ", " + std::to_string(traces.size() * tasks.size()) +
                       " records");
    }
    ctx.write("lifts.csv", t.str());
}

inline void stage_weyl(RunContext& ctx, const std::string& input) {
    const auto& plan = ctx.cfg().plan;
    std::vector<CauchyTrace> traces;
    std::vector<double> lambda2;
    std::vector<int> win;
    for (std::size_t k = 0; k < plan.windows.size(); ++k)
        for (auto& t : load_window_traces(ctx, k)) {
            lambda2.push_back(1.0 / (t.h * t.h));
            win.push_back(static_cast<int>(k));
            traces.push_back(std::move(t));
        }
    const auto w = glancing_weyl_sums(traces, lambda2, plan.eps1_ladder, plan.windows);
    CsvTable masses({"mode_id", "window", "lambda2", "eps1", "dirichlet", "neumann", "criterion"},
                    ctx.tag("weyl", input));
    for (std::size_t k = 0; k < w.masses.size(); ++k) {
        const auto& g = w.masses[k];
        masses.row({std::to_string(g.mode_id), std::to_string(win[k % traces.size()]), csv_num(g.lambda2),
                    csv_num(g.eps1), csv_num(g.dirichlet), csv_num(g.neumann), csv_num(g.criterion())});
    }
    std::vector<std::string> head{"eps1", "count", "dirichlet_sum", "neumann_sum"};
    for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        head.push_back("w" + std::to_string(k) + "_dirichlet");
        head.push_back("w" + std::to_string(k) + "_neumann");
    }
    CsvTable sums(head, ctx.tag("weyl", input));
    for (const auto& r : w.rungs) {
        std::vector<std::string> row{csv_num(r.eps1), std::to_string(r.count), csv_num(r.dirichlet_sum),
                                     csv_num(r.neumann_sum)};
        for (std::size_t k = 0; k < plan.windows.size(); ++k) {
            row.push_back(csv_num(r.window_dirichlet[k]));
            row.push_back(csv_num(r.window_neumann[k]));
        }
        sums.row(row);
    }
    CsvTable slopes({"dirichlet_slope", "neumann_slope"}, ctx.tag("weyl", input));
    slopes.row({csv_num(w.dirichlet_slope), csv_num(w.neumann_slope)});
    CsvTable prof({"eps1", "s", "value"}, ctx.tag("weyl", input));
    for (const auto& p : w.profiles)
        for (std::size_t k = 0; k < p.s.size(); ++k) prof.row({csv_num(p.eps1), csv_num(p.s[k]), csv_num(p.value[k])});
    CsvTable sup({"eps1", "sup"}, ctx.tag("weyl", input));
    for (const auto& p : w.profiles) sup.row({csv_num(p.eps1), csv_num(p.sup)});

    SvgPlot plot;
    plot.title = "Glancing Weyl sums";
    plot.xlabel = "eps1";
    plot.ylabel = "Cesaro sum";
    plot.log_x = plot.log_y = true;
    SvgSeries d{"Dirichlet", {}, {}}, n{"Neumann / eps1", {}, {}};
    for (const auto& r : w.rungs) {
        d.x.push_back(r.eps1);
        d.y.push_back(r.dirichlet_sum);
        n.x.push_back(r.eps1);
        n.y.push_back(r.neumann_sum);
    }
    plot.series = {d, n};
    ctx.write("weyl_masses.csv", masses.str());
    ctx.write("weyl_sums.csv", sums.str());
    ctx.write("weyl_slopes.csv", slopes.str());
    ctx.write("weyl_profile.csv", prof.str());
    ctx.write("weyl_profile_sup.csv", sup.str());
    ctx.write("weyl_slopes.svg", render_svg(plot));
    ctx.say(1, "weyl: slopes dirichlet=" + csv_num(w.dirichlet_slope) + " neumann=" + csv_num(w.neumann_slope));
}

inline void stage_rellich(RunContext& ctx, const std::string& input) {
    const auto& cfg = ctx.cfg();
    const Curve& curve = ctx.curve();
    CsvTable rows({"mode_id", "lambda2", "symbol", "eps", "ds", "dn", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "defect",
                   "fitted_order"},
                  ctx.tag("rellich", input));
    CsvTable bracket({"symbol", "eps", "average", "upshot", "error", "slope"}, ctx.tag("rellich", input));
    std::vector<EigenMode> modes;
    for (std::size_t k = 0; k < cfg.plan.windows.size() && static_cast<int>(modes.size()) < cfg.rellich_modes; ++k)
        for (auto& m : load_window_modes(ctx, k)) {
            if (static_cast<int>(modes.size()) >= cfg.rellich_modes) break;
            if (m.residual <= cfg.plan.residual_c * m.h) modes.push_back(std::move(m));
        }
    for (const auto& text : cfg.plan.symbols) {
        const SymbolFn a = symbols::parse(text, curve.length());
        for (const auto& mode : modes)
            for (double eps : cfg.plan.collar_eps) {
                std::vector<double> spacing, defect;
                std::vector<std::vector<std::string>> group;
                for (double ppw : {32.0, 48.0, 64.0}) {
                    const double target = 2.0 * std::numbers::pi * mode.h / ppw;
                    int ns = static_cast<int>(std::ceil(curve.length() / target));
                    ns += ns % 2;
                    const int nn = 2 * static_cast<int>(std::ceil(eps / std::min(target, eps / ppw))) + 1;
                    const FermiChart chart(curve, eps, ns, nn);
                    const TestOperatorSpec spec{a, eps, profiles::standard()};
                    const auto r = rellich_defect(mode, spec, chart);
                    spacing.push_back(chart.ds());
                    defect.push_back(r.defect);
                    group.push_back({std::to_string(mode.id), csv_num(mode.lambda2), a.id, csv_num(eps),
                                     csv_num(chart.ds()), csv_num(chart.dn()), csv_num(r.lhs.real()),
                                     csv_num(r.lhs.imag()), csv_num(r.rhs.real()), csv_num(r.rhs.imag()),
                                     csv_num(r.defect)});
                }
                const double order = loglog_slope(spacing, defect);
                for (auto& g : group) {
                    g.push_back(csv_num(order));
                    rows.row(g);
                }
            }
        std::vector<double> eps_list, errs;
        std::vector<std::vector<std::string>> group;
        const double up = rellich_upshot(a, curve, ctx.domain());
        for (double eps : cfg.plan.collar_eps) {
            if (eps > curve.collar_max() * (1.0 + 1e-12)) continue;
            const auto avg = rellich5_average(a, profiles::standard(), eps, curve, ctx.domain());
            eps_list.push_back(eps);
            errs.push_back(std::abs(avg.oriented - up));
            group.push_back({a.id, csv_num(eps), csv_num(avg.oriented), csv_num(up), csv_num(errs.back())});
        }
        const double slope = loglog_slope(eps_list, errs);
        for (auto& g : group) {
            g.push_back(csv_num(slope));
            bracket.row(g);
        }
    }
    ctx.write("rellich.csv", rows.str());
    ctx.write("rellich_bracket.csv", bracket.str());
    ctx.say(1, "rellich: " + std::to_string(modes.size()) + " modes, " + std::to_string(cfg.plan.symbols.size()) +
                   " symbols");
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline LiftArchive load_lift_archive(RunContext& ctx) {
    LiftArchive ar;
    const auto spec = parse_csv(ctx.read("spectrum.csv"), "spectrum.csv");
    ctx.check_tag(spec, "spectrum.csv", false);
    for (const auto& r : spec.rows) {
        ModeInfo m;
        m.id = std::stoi(r[static_cast<std::size_t>(spec.column("mode_id"))]);
        m.lambda2 = csv_double(r[static_cast<std::size_t>(spec.column("lambda2"))], "spectrum.csv");
        m.h = csv_double(r[static_cast<std::size_t>(spec.column("h"))], "spectrum.csv");
        m.residual = csv_double(r[static_cast<std::size_t>(spec.column("rho"))], "spectrum.csv");
        m.accepted = r[static_cast<std::size_t>(spec.column("accepted"))] == "1";
        ar.modes.push_back(m);
    }
    const auto lifts = parse_csv(ctx.read("lifts.csv"), "lifts.csv");
    ctx.check_tag(lifts, "lifts.csv", true);
    auto col = [&](const CsvData& d, const std::vector<std::string>& row, const char* name) {
        return csv_double(row[static_cast<std::size_t>(d.column(name))], "lifts.csv");
    };
    for (const auto& r : lifts.rows) {
        LiftRecord l;
        l.mode_id = std::stoi(r[static_cast<std::size_t>(lifts.column("mode_id"))]);
        l.lambda2 = col(lifts, r, "lambda2");
        l.h = col(lifts, r, "h");
        l.symbol_id = r[static_cast<std::size_t>(lifts.column("symbol"))];
        l.eps1 = col(lifts, r, "eps1");
        l.mu_n = {col(lifts, r, "mu_n_re"), col(lifts, r, "mu_n_im")};
        l.mu_rd = {col(lifts, r, "mu_rd_re"), col(lifts, r, "mu_rd_im")};
        l.phi_cd = {col(lifts, r, "phi_cd_re"), col(lifts, r, "phi_cd_im")};
        l.phi_d = {col(lifts, r, "phi_d_re"), col(lifts, r, "phi_d_im")};
        l.phi_rn = {col(lifts, r, "phi_rn_re"), col(lifts, r, "phi_rn_im")};
        ar.lifts.push_back(l);
    }
    const auto gl = parse_csv(ctx.read("weyl_masses.csv"), "weyl_masses.csv");
    ctx.check_tag(gl, "weyl_masses.csv", true);
    for (const auto& r : gl.rows) {
        GlancingMass g;
        g.mode_id = std::stoi(r[static_cast<std::size_t>(gl.column("mode_id"))]);
        g.lambda2 = csv_double(r[static_cast<std::size_t>(gl.column("lambda2"))], "weyl_masses.csv");
        g.eps1 = csv_double(r[static_cast<std::size_t>(gl.column("eps1"))], "weyl_masses.csv");
        g.dirichlet = csv_double(r[static_cast<std::size_t>(gl.column("dirichlet"))], "weyl_masses.csv");
        g.neumann = csv_double(r[static_cast<std::size_t>(gl.column("neumann"))], "weyl_masses.csv");
        ar.glancing.push_back(g);
    }
    return ar;
}

inline std::vector<Observable> default_observables(const Domain& domain) {
    const auto bb = domain.bounding_box();
    const double w = bb.x1 - bb.x0;
    return {observables::constant_one(), observables::left_fraction(0.5 * (bb.x0 + bb.x1), 0.1 * w),
            observables::cos_family(0, bb.x0, w), observables::cos_family(1, bb.x0, w)};
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline void render_report(RunContext& ctx, const ConvergenceReport& rep, const std::string& input,
                          const QeDiagnostic* qe) {
    const auto tag = ctx.tag("report", input);
    CsvTable counts({"window", "lo", "hi", "count", "cumulative"}, tag);
    for (std::size_t k = 0; k < rep.windows.size(); ++k)
        counts.row({std::to_string(k), csv_num(rep.windows[k].first), csv_num(rep.windows[k].second),
                    std::to_string(rep.counts[k]), std::to_string(rep.cumulative_counts[k])});
    CsvTable win({"theorem", "symbol", "eps1", "window", "lo", "hi", "count", "mean_lift", "omega", "mean_gap",
                  "variance"},
                 tag);
    CsvTable trends({"theorem", "symbol", "eps1", "omega", "top_mean", "top_relative_gap", "variance_inversions",
                     "variance_slope"},
                    tag);
    for (const auto& t : rep.trends) {
        for (std::size_t k = 0; k < t.windows.size(); ++k) {
            const auto& w = t.windows[k];
            win.row({to_string(t.theorem), t.symbol_id, csv_num(t.eps1), std::to_string(k), csv_num(w.lo),
                     csv_num(w.hi), std::to_string(w.count), csv_num(w.mean_lift), csv_num(t.omega),
                     csv_num(w.mean_gap), csv_num(w.variance)});
        }
        trends.row({to_string(t.theorem), t.symbol_id, csv_num(t.eps1), csv_num(t.omega), csv_num(t.top_mean),
                    csv_num(t.top_relative_gap), std::to_string(t.variance_inversions), csv_num(t.variance_slope)});
    }
    CsvTable masks({"eps1", "mode_id", "window", "mass", "kept"}, tag);
    for (const auto& m : rep.masks)
        for (std::size_t k = 0; k < m.mode_id.size(); ++k)
            masks.row({csv_num(m.eps1), std::to_string(m.mode_id[k]), std::to_string(m.window[k]), csv_num(m.mass[k]),
                       m.keep[k] ? "1" : "0"});
    CsvTable dens({"eps1", "window", "retained_density"}, tag);
    for (const auto& m : rep.masks)
        for (std::size_t k = 0; k < m.retained_density.size(); ++k)
            dens.row({csv_num(m.eps1), std::to_string(k), csv_num(m.retained_density[k])});

    std::vector<double> mids;
    for (const auto& [lo, hi] : rep.windows) mids.push_back(0.5 * (lo + hi));
    auto trend_plot = [&](Theorem th, double eps1, bool variance) {
        SvgPlot p;
        p.title = std::string(to_string(th)) + (variance ? " quantum variance" : " Cesaro mean / omega") +
                  (eps1 > 0.0 ? " (eps1=" + csv_num(eps1) + ")" : "");
        p.xlabel = "window midpoint lambda^2";
        p.ylabel = variance ? "variance" : "mean / omega";
        p.log_x = variance;
        p.log_y = variance;
        if (!variance) p.hlines.emplace_back("1", 1.0);
        for (const auto& t : rep.trends) {
            if (t.theorem != th || (eps1 > 0.0 && t.eps1 != eps1)) continue;
            SvgSeries s{t.symbol_id, {}, {}};
            for (std::size_t k = 0; k < t.windows.size(); ++k) {
                if (!t.windows[k].count) continue;
                s.x.push_back(mids[k]);
                s.y.push_back(variance ? t.windows[k].variance : t.windows[k].mean_lift / t.omega);
            }
            p.series.push_back(s);
        }
        return render_svg(p);
    };
    ctx.write("report_counts.csv", counts.str());
    ctx.write("report_windows.csv", win.str());
    ctx.write("report_trends.csv", trends.str());
    ctx.write("report_masks.csv", masks.str());
    ctx.write("report_density.csv", dens.str());
    ctx.write("report_thm1_mean.svg", trend_plot(Theorem::thm1, 0.0, false));
    ctx.write("report_thm1_variance.svg", trend_plot(Theorem::thm1, 0.0, true));
    const auto& ladder = ctx.cfg().plan.eps1_ladder;
    if (!ladder.empty()) {
        ctx.write("report_thm2_mean.svg", trend_plot(Theorem::thm2, ladder.back(), false));
        ctx.write("report_cor2_mean.svg", trend_plot(Theorem::cor2, ladder.back(), false));
    }

    nlohmann::json summary;
    summary["domain"] = rep.domain;
    summary["curve"] = rep.curve;
    summary["ergodic_hypothesis"] = rep.ergodic_hypothesis;
    summary["non_ergodic_control"] = !rep.ergodic_hypothesis;
    summary["counts"] = rep.counts;
    summary["cumulative_counts"] = rep.cumulative_counts;
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : rep.trends)
        tr.push_back({{"theorem", to_string(t.theorem)},
                      {"symbol", t.symbol_id},
                      {"eps1", t.eps1},
                      {"omega", t.omega},
                      {"top_mean", finite_or_null(t.top_mean)},
                      {"top_relative_gap", finite_or_null(t.top_relative_gap)},
                      {"variance_inversions", t.variance_inversions}});
    summary["trends"] = tr;
    if (qe) {
        CsvTable q({"observable", "liouville", "window", "count", "mean", "mean_gap", "variance"}, tag);
        nlohmann::json qj = nlohmann::json::array();
        for (const auto& t : qe->tables) {
            for (const auto& r : t.windows)
                q.row({t.observable_id, csv_num(t.liouville), std::to_string(r.window), std::to_string(r.count),
                       csv_num(r.mean), csv_num(r.mean_gap), csv_num(r.variance)});
            qj.push_back({{"observable", t.observable_id}, {"variance_ratio", finite_or_null(t.variance_ratio)}});
        }
        ctx.write("report_qe.csv", q.str());
        summary["qe"] = qj;
    }
    if (std::filesystem::exists(ctx.dir() / "weyl_slopes.csv")) {
        const auto s = parse_csv(ctx.read("weyl_slopes.csv"), "weyl_slopes.csv");
        ctx.check_tag(s, "weyl_slopes.csv", true);
        if (!s.rows.empty())
            summary["weyl"] = {{"dirichlet_slope", finite_or_null(csv_double(s.rows[0][0], "weyl_slopes.csv"))},
                               {"neumann_slope", finite_or_null(csv_double(s.rows[0][1], "weyl_slopes.csv"))}};
    }
    if (std::filesystem::exists(ctx.dir() / "rellich.csv")) {
        const auto r = parse_csv(ctx.read("rellich.csv"), "rellich.csv");
        ctx.check_tag(r, "rellich.csv", true);
        double worst = 0.0;
        for (const auto& row : r.rows)
            worst = std::max(worst, csv_double(row[static_cast<std::size_t>(r.column("defect"))], "rellich.csv"));
        summary["rellich"] = {{"rows", r.rows.size()}, {"max_defect", worst}};
    }
    summary["tag"] = tag;
    ctx.write("report_summary.json", summary.dump(2) + "\n");
}

inline void stage_report(RunContext& ctx, const std::string& input) {
    const auto ar = load_lift_archive(ctx);
    const auto rep = qer_convergence(ctx.cfg().plan, ar, ctx.domain(), ctx.curve());
    std::optional<QeDiagnostic> qe;
    if (ctx.cfg().qe_observables) {
        std::vector<EigenMode> modes;
        for (std::size_t k = 0; k < ctx.cfg().plan.windows.size(); ++k)
            for (auto& m : load_window_modes(ctx, k))
                if (m.residual <= ctx.cfg().plan.residual_c * m.h) modes.push_back(std::move(m));
        qe = qe_diagnostic(modes, default_observables(ctx.domain()), ctx.cfg().plan.windows, ctx.domain());
    }
    render_report(ctx, rep, input, qe ? &*qe : nullptr);
    ctx.say(1, "report: " + std::to_string(rep.trends.size()) + " trends" +
                   (rep.ergodic_hypothesis ? "" : " (non-ergodic domain: control run)"));
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct PipelineOptions {
    std::filesystem::path root = "archive";
    std::vector<std::string> stages;  // empty: the config's stage list
    bool force = false;
    int jobs = 1;
};

struct StageOutcome {
    std::string stage;
    bool cached = false;
};

inline std::vector<std::string> stage_dependencies(const std::string& stage) {
    if (stage == "trace" || stage == "rellich") return {"solve"};
    if (stage == "lift" || stage == "weyl") return {"trace"};
    if (stage == "report") return {"solve", "lift", "weyl"};
    return {};
}

inline std::vector<std::string> stage_config_keys(const std::string& stage) {
    if (stage == "solve") return {"domain", "solver", "seed", "windows", "quasimode"};
    if (stage == "trace") return {"curve"};
    if (stage == "lift") return {"symbols", "eps1"};
    if (stage == "weyl") return {"eps1", "windows"};
    if (stage == "rellich") return {"curve", "symbols", "collar", "rellich", "quasimode"};
    return {"symbols", "eps1", "budget", "quasimode", "windows", "report"};
}

inline std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, const PipelineOptions& opt, std::ostream& log) {
    std::vector<std::string> selected = opt.stages.empty() ? cfg.stages : opt.stages;
    for (const auto& s : selected)
        if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
            throw ConfigError("config: unknown stage '" + s + "'");
    RunContext ctx(cfg, opt.root, opt.jobs, log);
    std::vector<StageOutcome> out;
    std::map<std::string, std::map<std::string, std::string>> produced;
    for (const auto& stage : stage_names()) {
        if (std::find(selected.begin(), selected.end(), stage) == selected.end()) continue;
        std::string input = "stage=" + stage + "\nversion=" + std::string(kToolVersion) + "\n" + ctx.cfg().canonical(stage_config_keys(stage));
        for (const auto& dep : stage_dependencies(stage)) {
            auto outputs = produced.count(dep) ? produced[dep] : ctx.stage_outputs(dep);
            if (outputs.empty())
                throw ConfigError("config: stage '" + stage + "' requires outputs of stage '" + dep +
                                  "' (select it or run it first)");
            for (const auto& [name, sha] : outputs) input += dep + ":" + name + "=" + sha + "\n";
        }
        const std::string hash = sha256_hex(input);
        StageOutcome o{stage, false};
        if (!opt.force && ctx.cache_hit(stage, hash)) {
            o.cached = true;
            ctx.finish_stage(stage, hash, true);
            ctx.say(1, stage + ": cached");
        } else {
            ctx.begin_stage();
            if (stage == "solve") stage_solve(ctx, hash);
            else if (stage == "trace") stage_trace(ctx, hash);
            else if (stage == "lift") stage_lift(ctx, hash);
            else if (stage == "weyl") stage_weyl(ctx, hash);
            else if (stage == "rellich") stage_rellich(ctx, hash);
            else stage_report(ctx, hash);
            ctx.finish_stage(stage, hash, false);
        }
        produced[stage] = ctx.stage_outputs(stage);
        out.push_back(o);
    }
    ctx.save_manifest();
    return out;
}

}  // namespace qer
