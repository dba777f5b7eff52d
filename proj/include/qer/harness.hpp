#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qer/eigensolver.hpp"
#include "qer/geometry.hpp"
#include "qer/lifts.hpp"
#include "qer/psido.hpp"
#include "qer/trace.hpp"

namespace qer {

// ---------------------------------------------------------------------------
// Experiment plan
// ---------------------------------------------------------------------------

using Window = std::pair<double, double>;

struct ExperimentPlan {
    DomainSpec domain;
    CurveSpec curve;
    std::vector<Window> windows;
    std::vector<std::string> symbols;  // symbol grammar text
    std::vector<double> eps1_ladder{0.4, 0.2, 0.1};
    std::vector<double> collar_eps{0.2, 0.1, 0.05};
    std::string output_dir = "run";
    std::uint64_t seed = 0x5eed;
    double budget_beta = 0.2;
    double residual_c = 0.1;
};

inline void validate_windows(const std::vector<Window>& windows) {
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& [lo, hi] = windows[k];
        if (!(lo > 0.0) || !(hi > lo))
            throw DomainError("harness", "window " + std::to_string(k) + " must satisfy 0 < lo < hi");
        if (k > 0 && !(lo >= windows[k - 1].second))
            throw DomainError("harness", "windows must be disjoint and increasing (window " + std::to_string(k) +
                                             " starts before window " + std::to_string(k - 1) + " ends)");
    }
}

inline void validate_plan(const ExperimentPlan& plan) {
    validate_windows(plan.windows);
    for (double e : plan.eps1_ladder)
        if (!(e > 0.0 && e < 0.5)) throw DomainError("harness", "eps1 rungs must lie in (0, 1/2)");
    for (double e : plan.collar_eps)
        if (!(e > 0.0)) throw DomainError("harness", "collar widths must be positive");
    if (!(plan.budget_beta >= 0.0 && plan.budget_beta < 1.0))
        throw DomainError("harness", "budget beta must lie in [0, 1)");
    if (!(plan.residual_c > 0.0)) throw DomainError("harness", "residual constant must be positive");
}

// Index of the window containing lambda2, or -1.
inline int window_of(const std::vector<Window>& windows, double lambda2) {
    for (std::size_t k = 0; k < windows.size(); ++k)
        if (lambda2 >= windows[k].first && lambda2 < windows[k].second) return static_cast<int>(k);
    return -1;
}

// Only the stadium among the built-in domains has ergodic billiard flow.
inline bool ergodic_hypothesis(DomainKind kind) { return kind == DomainKind::stadium; }

// Least-squares slope of log y against log x; NaN when fewer than two
// positive pairs exist.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < x.size() && k < y.size(); ++k)
        if (x[k] > 0.0 && y[k] > 0.0) {
            lx.push_back(std::log(x[k]));
            ly.push_back(std::log(y[k]));
        }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        mx += lx[k] / n;
        my += ly[k] / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

// Number of k with v[k+1] > v[k].
inline int count_increases(const std::vector<double>& v) {
    int n = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[k - 1]) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Interior QE diagnostic
// ---------------------------------------------------------------------------

// One term c * f(x) * xi^alpha with |alpha| <= 2. i = j = -1 is a pure
// multiplication, j = -1 a first-order term.
struct MomentumTerm {
    double c = 1.0;
    int i = -1;
    int j = -1;
};

struct Observable {
    std::string id;
    std::function<double(const Vec2&)> f;
    std::function<Eigen::Matrix2d(const Vec2&)> hessian;  // second derivatives of f
    std::vector<MomentumTerm> terms;
};

namespace observables {

inline Eigen::Matrix2d zero_hessian(const Vec2&) { return Eigen::Matrix2d::Zero(); }

inline Observable multiplication(std::string id, std::function<double(const Vec2&)> f) {
    return {std::move(id), std::move(f), zero_hessian, {{1.0, -1, -1}}};
}

inline Observable constant_one() {
    return multiplication("1", [](const Vec2&) { return 1.0; });
}

// Smooth bump of the x coordinate: 1 for x < x0 - w, 0 for x > x0 + w.
inline Observable left_fraction(double x0, double w) {
    return multiplication("left(" + std::to_string(x0) + ")", [x0, w](const Vec2& p) {
        return symbols::smooth_step((x0 + w - p.x()) / (2.0 * w));
    });
}

// cos(2 pi k (x - x0) / width) * (xi_x^2 - xi_y^2): momentum anisotropy
// weighted by a cosine in x.
inline Observable cos_family(int k, double x0, double width) {
    if (k < 0 || !(width > 0.0)) throw DomainError("harness", "cos family needs k >= 0 and width > 0");
    const double w = 2.0 * std::numbers::pi * k / width;
    Observable o;
    o.id = "cos_aniso(" + std::to_string(k) + ")";
    o.f = [w, x0](const Vec2& p) { return std::cos(w * (p.x() - x0)); };
    o.hessian = [w, x0](const Vec2& p) {
        Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
        m(0, 0) = -w * w * std::cos(w * (p.x() - x0));
        return m;
    };
    o.terms = {{1.0, 0, 0}, {-1.0, 1, 1}};
    return o;
}

inline Observable momentum(std::string id, std::function<double(const Vec2&)> f,
                           std::function<Eigen::Matrix2d(const Vec2&)> hess, int i, int j) {
    return {std::move(id), std::move(f), std::move(hess), {{1.0, i, j}}};
}

}  // namespace observables

namespace detail {

inline void check_observable(const Observable& o) {
    if (!o.f) throw DomainError("harness", "observable '" + o.id + "' has no coefficient function");
    for (const auto& t : o.terms) {
        const bool ok = (t.i == -1 && t.j == -1) || (t.i >= 0 && t.i < 2 && t.j == -1) ||
                        (t.i >= 0 && t.i < 2 && t.j >= 0 && t.j < 2);
        if (!ok)
            throw DomainError("harness", "observable '" + o.id +
                                             "' has an unsupported form (only f(x) xi^alpha with |alpha| <= 2)");
    }
    if (o.terms.empty()) throw DomainError("harness", "observable '" + o.id + "' has no terms");
}

}  // namespace detail

// <Op^w(f xi^alpha) u, u> on the grid, with central differences for hD and
// zero data off the mask. Second-order Weyl terms use
// Op^w(f xi_i xi_j) = (hD_i f hD_j + hD_j f hD_i)/2 - (h^2/4) d_i d_j f.
inline double observable_element(const Observable& o, const EigenMode& mode) {
    detail::check_observable(o);
    if (!mode.field) throw DomainError("harness", "QE diagnostic needs grid fields");
    const GridField& u = *mode.field;
    const Grid& g = u.grid();
    const double d = g.delta(), h = mode.h;
    auto at = [&](int i, int j) { return g.interior(i, j) ? u.at(i, j) : cplx(0.0); };
    double acc = 0.0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (!g.interior(i, j)) continue;
            const Vec2 p = g.node(i, j);
            const double f = o.f(p);
            const cplx v = at(i, j);
            const cplx grad[2] = {(at(i + 1, j) - at(i - 1, j)) / (2.0 * d),
                                  (at(i, j + 1) - at(i, j - 1)) / (2.0 * d)};
            Eigen::Matrix2d hess;
            bool have_hess = false;
            for (const auto& t : o.terms) {
                double term = 0.0;
                if (t.i < 0) {
                    term = f * std::norm(v);
                } else if (t.j < 0) {
                    term = f * h * (std::conj(v) * grad[t.i] * cplx(0.0, -1.0)).real();
                } else {
                    if (!have_hess) {
                        hess = o.hessian(p);
                        have_hess = true;
                    }
                    term = h * h * (f * (grad[t.i] * std::conj(grad[t.j])).real() -
                                    0.25 * hess(t.i, t.j) * std::norm(v));
                }
                acc += t.c * term;
            }
        }
    return acc * d * d;
}

// Liouville average (1/mu(S*M)) int f xi^alpha dmu with the spatial mean
// taken on the same grid mask: xi_i xi_j averages to delta_ij / 2 over the
// unit circle, odd monomials to 0.
inline double liouville_average(const Observable& o, const Grid& g) {
    detail::check_observable(o);
    double sum = 0.0;
    int count = 0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            if (g.interior(i, j)) {
                sum += o.f(g.node(i, j));
                ++count;
            }
    const double mean_f = count ? sum / count : 0.0;
    double fiber = 0.0;
    for (const auto& t : o.terms) {
        if (t.i < 0) fiber += t.c;
        else if (t.j >= 0 && t.i == t.j) fiber += 0.5 * t.c;
    }
    return mean_f * fiber;
}

struct QeWindowRow {
    int window = 0;
    double lo = 0.0, hi = 0.0;
    int count = 0;
    double mean = 0.0;      // mean of <A u, u>
    double mean_gap = 0.0;  // mean of <A u, u> - Liouville average
    double variance = 0.0;  // (1/N) sum gap^2
};

struct QeObservableTable {
    std::string observable_id;
    double liouville = 0.0;
    std::vector<QeWindowRow> windows;
    std::vector<std::pair<int, double>> elements;  // (mode id, <A u, u>)
    double variance_ratio = std::numeric_limits<double>::quiet_NaN();  // last / first non-empty window
};

struct QeDiagnostic {
    std::string domain;
    bool ergodic_hypothesis = false;
    std::vector<QeObservableTable> tables;
};

inline QeDiagnostic qe_diagnostic(const std::vector<EigenMode>& modes, const std::vector<Observable>& obs,
                                  const std::vector<Window>& windows, const Domain& domain) {
    validate_windows(windows);
    const Grid* grid = nullptr;
    for (const auto& m : modes) {
        if (!m.field) throw DomainError("harness", "QE diagnostic needs grid fields");
        if (!grid) grid = &m.field->grid();
        else if (&m.field->grid() != grid &&
                 (m.field->grid().nx() != grid->nx() || m.field->grid().ny() != grid->ny() ||
                  m.field->grid().delta() != grid->delta() || m.field->grid().x0() != grid->x0() ||
                  m.field->grid().y0() != grid->y0()))
            throw DomainError("harness", "QE diagnostic modes come from different grids");
    }
    QeDiagnostic out;
    out.domain = domain.describe();
    out.ergodic_hypothesis = ergodic_hypothesis(domain.kind());
    for (const auto& o : obs) {
        detail::check_observable(o);
        QeObservableTable t;
        t.observable_id = o.id;
        t.liouville = grid ? liouville_average(o, *grid) : 0.0;
        for (std::size_t k = 0; k < windows.size(); ++k) {
            QeWindowRow r;
            r.window = static_cast<int>(k);
            r.lo = windows[k].first;
            r.hi = windows[k].second;
            t.windows.push_back(r);
        }
        for (const auto& m : modes) {
            const double v = observable_element(o, m);
            t.elements.emplace_back(m.id, v);
            const int w = window_of(windows, m.lambda2);
            if (w < 0) continue;
            auto& r = t.windows[static_cast<std::size_t>(w)];
            ++r.count;
            r.mean += v;
            r.mean_gap += v - t.liouville;
            r.variance += (v - t.liouville) * (v - t.liouville);
        }
        double first = -1.0, last = -1.0;
        for (auto& r : t.windows) {
            if (!r.count) continue;
            r.mean /= r.count;
            r.mean_gap /= r.count;
            r.variance /= r.count;
            if (first < 0.0) first = r.variance;
            last = r.variance;
        }
        if (first > 0.0) t.variance_ratio = last / first;
        out.tables.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Glancing Weyl sums
// ---------------------------------------------------------------------------

struct GlancingMass {
    int mode_id = 0;
    double lambda2 = 0.0;
    double eps1 = 0.0;
    double dirichlet = 0.0;  // ||chi^w phi|_H||^2
    double neumann = 0.0;    // ||chi^w hD_nu phi|_H||^2

    double criterion() const { return dirichlet + neumann / eps1; }
};

inline double curve_norm2(const Eigen::VectorXcd& u, double length) {
    return u.squaredNorm() * length / static_cast<double>(u.size());
}

inline GlancingMass glancing_mass(const CauchyTrace& t, double lambda2, double eps1) {
    const auto op = quantize(symbols::glancing_cutoff(eps1), t);
    GlancingMass g;
    g.mode_id = t.mode_id;
    g.lambda2 = lambda2;
    g.eps1 = eps1;
    g.dirichlet = curve_norm2(op.apply(t.dirichlet), t.length);
    g.neumann = curve_norm2(op.apply(t.neumann), t.length);
    return g;
}

struct WeylRung {
    double eps1 = 0.0;
    int count = 0;
    double dirichlet_sum = 0.0;  // (1/N) sum ||chi^w phi||^2
    double neumann_sum = 0.0;    // (1/N) sum eps1^{-1} ||chi^w hD_nu phi||^2
    std::vector<double> window_dirichlet;
    std::vector<double> window_neumann;
};

struct WeylProfile {
    double eps1 = 0.0;
    std::vector<double> s;
    std::vector<double> value;  // (1/N) sum |chi^w phi|_H(s)|^2
    double sup = 0.0;
};

struct WeylScaling {
    std::vector<WeylRung> rungs;
    double dirichlet_slope = std::numeric_limits<double>::quiet_NaN();
    double neumann_slope = std::numeric_limits<double>::quiet_NaN();
    std::vector<WeylProfile> profiles;
    std::vector<GlancingMass> masses;
};

namespace detail {

// Linear interpolation of nodal values onto s (periodic when closed).
inline double interpolate_nodal(const std::vector<double>& nodes, const std::vector<double>& v, double s,
                                double length, bool closed) {
    const int n = static_cast<int>(nodes.size());
    const double ds = length / n;
    const double off = nodes.front();
    double x = (s - off) / ds;
    if (closed) {
        x = std::fmod(x, static_cast<double>(n));
        if (x < 0.0) x += n;
        const int i = static_cast<int>(std::floor(x));
        const double t = x - i;
        return (1.0 - t) * v[i % n] + t * v[(i + 1) % n];
    }
    x = std::clamp(x, 0.0, static_cast<double>(n - 1));
    const int i = std::min(static_cast<int>(std::floor(x)), n - 2);
    const double t = x - i;
    return (1.0 - t) * v[i] + t * v[i + 1];
}

}  // namespace detail

// Cesaro sums over all traces (one Cesaro mean per rung, plus per window),
// log-log slopes against eps1 and the pointwise Dirichlet profile sampled on
// `profile_points` uniform nodes.
inline WeylScaling glancing_weyl_sums(const std::vector<CauchyTrace>& traces, const std::vector<double>& lambda2,
                                      const std::vector<double>& ladder, const std::vector<Window>& windows = {},
                                      int profile_points = 128) {
    if (ladder.size() < 2) throw DomainError("harness", "glancing Weyl sums need at least two eps1 rungs");
    if (traces.size() != lambda2.size()) throw DomainError("harness", "one lambda^2 per trace is required");
    validate_windows(windows);
    WeylScaling out;
    std::vector<double> ds, ns;
    for (double e : ladder) {
        WeylRung r;
        r.eps1 = e;
        r.window_dirichlet.assign(windows.size(), 0.0);
        r.window_neumann.assign(windows.size(), 0.0);
        std::vector<int> wcount(windows.size(), 0);
        WeylProfile prof;
        prof.eps1 = e;
        if (!traces.empty()) {
            const double L = traces.front().length;
            const bool closed = traces.front().closed;
            for (int k = 0; k < profile_points; ++k)
                prof.s.push_back((closed ? k : k + 0.5) * L / profile_points);
            prof.value.assign(static_cast<std::size_t>(profile_points), 0.0);
        }
        for (std::size_t k = 0; k < traces.size(); ++k) {
            const auto& t = traces[k];
            const auto op = quantize(symbols::glancing_cutoff(e), t);
            const Eigen::VectorXcd cd = op.apply(t.dirichlet);
            GlancingMass g;
            g.mode_id = t.mode_id;
            g.lambda2 = lambda2[k];
            g.eps1 = e;
            g.dirichlet = curve_norm2(cd, t.length);
            g.neumann = curve_norm2(op.apply(t.neumann), t.length);
            out.masses.push_back(g);
            r.dirichlet_sum += g.dirichlet;
            r.neumann_sum += g.neumann / e;
            ++r.count;
            const int w = window_of(windows, lambda2[k]);
            if (w >= 0) {
                r.window_dirichlet[static_cast<std::size_t>(w)] += g.dirichlet;
                r.window_neumann[static_cast<std::size_t>(w)] += g.neumann / e;
                ++wcount[static_cast<std::size_t>(w)];
            }
            std::vector<double> pw(static_cast<std::size_t>(t.size()));
            for (int i = 0; i < t.size(); ++i) pw[static_cast<std::size_t>(i)] = std::norm(cd[i]);
            for (int p = 0; p < profile_points; ++p)
                prof.value[static_cast<std::size_t>(p)] +=
                    detail::interpolate_nodal(t.s, pw, prof.s[static_cast<std::size_t>(p)], t.length, t.closed);
        }
        if (r.count) {
            r.dirichlet_sum /= r.count;
            r.neumann_sum /= r.count;
            for (auto& v : prof.value) v /= r.count;
        }
        for (std::size_t w = 0; w < windows.size(); ++w)
            if (wcount[w]) {
                r.window_dirichlet[w] /= wcount[w];
                r.window_neumann[w] /= wcount[w];
            }
        prof.sup = prof.value.empty() ? 0.0 : *std::max_element(prof.value.begin(), prof.value.end());
        ds.push_back(r.dirichlet_sum);
        ns.push_back(r.neumann_sum);
        out.rungs.push_back(std::move(r));
        out.profiles.push_back(std::move(prof));
    }
    out.dirichlet_slope = loglog_slope(ladder, ds);
    out.neumann_slope = loglog_slope(ladder, ns);
    return out;
}

// ---------------------------------------------------------------------------
// Density-one extraction
// ---------------------------------------------------------------------------

struct ExtractionInput {
    int mode_id = 0;
    int window = 0;
    double mass = 0.0;  // glancing criterion
};

struct Extraction {
    std::vector<bool> keep;  // aligned with the input
    std::vector<double> budget;
    std::vector<double> retained_density;  // per window
};

// Decreasing budget beta / log(k + e) for window k = 0, 1, ...
inline std::vector<double> decreasing_budget(std::size_t windows, double beta) {
    std::vector<double> b;
    for (std::size_t k = 0; k < windows; ++k) b.push_back(beta / std::log(static_cast<double>(k) + std::numbers::e));
    return b;
}

// Per window, discards floor(budget * count) modes with the largest mass;
// equal masses are discarded in increasing mode id.
inline Extraction density_one_extract(const std::vector<ExtractionInput>& in, const std::vector<double>& budget) {
    for (double b : budget)
        if (!(b >= 0.0 && b < 1.0))
            throw DomainError("harness", "extraction budget must lie in [0, 1), got " + std::to_string(b));
    Extraction out;
    out.keep.assign(in.size(), true);
    out.budget = budget;
    out.retained_density.assign(budget.size(), 1.0);
    for (std::size_t w = 0; w < budget.size(); ++w) {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < in.size(); ++k)
            if (in[k].window == static_cast<int>(w)) idx.push_back(k);
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            if (in[x].mass != in[y].mass) return in[x].mass > in[y].mass;
            return in[x].mode_id < in[y].mode_id;
        });
        const auto drop = static_cast<std::size_t>(std::floor(budget[w] * idx.size() + 1e-9));
        for (std::size_t k = 0; k < drop; ++k) out.keep[idx[k]] = false;
        if (!idx.empty())
            out.retained_density[w] = static_cast<double>(idx.size() - drop) / static_cast<double>(idx.size());
    }
    return out;
}

inline Extraction density_one_extract(const std::vector<ExtractionInput>& in, double budget, std::size_t windows) {
    return density_one_extract(in, std::vector<double>(windows, budget));
}

// ---------------------------------------------------------------------------
// QER convergence
// ---------------------------------------------------------------------------

struct ModeInfo {
    int id = 0;
    double lambda2 = 0.0;
    double h = 0.0;
    double residual = 0.0;
    bool accepted = true;
};

struct LiftArchive {
    std::vector<ModeInfo> modes;
    std::vector<LiftRecord> lifts;
    std::vector<GlancingMass> glancing;
};

enum class Theorem { thm1, thm2, cor2 };

inline const char* to_string(Theorem t) {
    switch (t) {
        case Theorem::thm1: return "thm1";
        case Theorem::thm2: return "thm2";
        case Theorem::cor2: return "cor2";
    }
    return "?";
}

struct SymbolTrend {
    Theorem theorem = Theorem::thm1;
    std::string symbol_id;
    double eps1 = 0.0;  // 0 for the Cauchy-lift trend
    double omega = 0.0;
    std::vector<WindowStats> windows;
    double top_mean = std::numeric_limits<double>::quiet_NaN();
    double top_relative_gap = std::numeric_limits<double>::quiet_NaN();
    int variance_inversions = 0;
    double variance_slope = std::numeric_limits<double>::quiet_NaN();  // log-log vs window midpoint
};

struct SubsequenceMask {
    double eps1 = 0.0;
    std::vector<int> mode_id;
    std::vector<int> window;
    std::vector<double> mass;
    std::vector<bool> keep;
    std::vector<double> retained_density;
};

struct ConvergenceReport {
    std::string domain;
    std::string curve;
    bool ergodic_hypothesis = false;
    std::vector<Window> windows;
    std::vector<int> counts;             // accepted modes per window
    std::vector<int> cumulative_counts;  // N(h) at each window's upper end
    std::vector<SymbolTrend> trends;
    std::vector<SubsequenceMask> masks;
};

namespace detail {

inline void finish_trend(SymbolTrend& t, const std::vector<Window>& windows) {
    std::vector<double> mids, vars, seq;
    for (std::size_t k = 0; k < t.windows.size(); ++k) {
        if (!t.windows[k].count) continue;
        mids.push_back(0.5 * (windows[k].first + windows[k].second));
        vars.push_back(t.windows[k].variance);
        t.top_mean = t.windows[k].mean_lift;
    }
    t.variance_inversions = count_increases(vars);
    t.variance_slope = loglog_slope(mids, vars);
    if (std::isfinite(t.top_mean))
        t.top_relative_gap = std::abs(t.top_mean - t.omega) / std::max(std::abs(t.omega), 1e-300);
}

}  // namespace detail

// Per-symbol window statistics: Phi^CD against omega_+ (thm1), and
// Phi^D + Phi^RN of a (1 - chi_eps1) against omega_- on the extracted
// subsequence (thm2) and on the full sequence (cor2), for every eps1 rung.
inline ConvergenceReport qer_convergence(const ExperimentPlan& plan, const LiftArchive& ar, const Domain& domain,
                                         const Curve& curve) {
    validate_plan(plan);
    ConvergenceReport rep;
    rep.domain = domain.describe();
    rep.curve = curve.describe();
    rep.ergodic_hypothesis = ergodic_hypothesis(domain.kind());
    rep.windows = plan.windows;
    rep.counts.assign(plan.windows.size(), 0);

    std::vector<const ModeInfo*> accepted;
    for (const auto& m : ar.modes)
        if (m.accepted && window_of(plan.windows, m.lambda2) >= 0) accepted.push_back(&m);
    for (const auto* m : accepted) ++rep.counts[static_cast<std::size_t>(window_of(plan.windows, m->lambda2))];
    int below = 0;
    for (const auto& m : ar.modes)
        if (m.accepted && m.lambda2 < (plan.windows.empty() ? 0.0 : plan.windows.front().first)) ++below;
    for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        below += rep.counts[k];
        rep.cumulative_counts.push_back(below);
    }

    std::map<std::pair<int, std::string>, std::vector<const LiftRecord*>> index;
    for (const auto& r : ar.lifts) index[{r.mode_id, r.symbol_id}].push_back(&r);
    std::vector<std::string> missing;
    auto find = [&](int mode, const std::string& sym, double eps1) -> const LiftRecord* {
        auto it = index.find({mode, sym});
        if (it != index.end())
            for (const auto* r : it->second)
                if (eps1 == 0.0 || std::abs(r->eps1 - eps1) <= 1e-12 * eps1) return r;
        missing.push_back("(mode " + std::to_string(mode) + ", " + sym + ")");
        return nullptr;
    };
    auto collect = [&](const std::string& sym, double eps1, const std::vector<bool>* keep) {
        std::vector<LiftRecord> out;
        for (std::size_t k = 0; k < accepted.size(); ++k) {
            if (keep && !(*keep)[k]) continue;
            if (const auto* r = find(accepted[k]->id, sym, eps1)) out.push_back(*r);
        }
        return out;
    };

    // Extraction masks per rung, aligned with `accepted`.
    std::map<double, std::vector<bool>> keeps;
    std::map<std::pair<int, double>, const GlancingMass*> gindex;
    for (const auto& g : ar.glancing) gindex[{g.mode_id, g.eps1}] = &g;
    const auto budget = decreasing_budget(plan.windows.size(), plan.budget_beta);
    for (double e : plan.eps1_ladder) {
        std::vector<ExtractionInput> in;
        SubsequenceMask mask;
        mask.eps1 = e;
        for (const auto* m : accepted) {
            auto it = gindex.find({m->id, e});
            if (it == gindex.end()) {
                missing.push_back("(mode " + std::to_string(m->id) + ", glancing mass eps1=" + std::to_string(e) + ")");
                continue;
            }
            in.push_back({m->id, window_of(plan.windows, m->lambda2), it->second->criterion()});
        }
        if (in.size() != accepted.size()) continue;
        const auto ex = density_one_extract(in, budget);
        for (std::size_t k = 0; k < in.size(); ++k) {
            mask.mode_id.push_back(in[k].mode_id);
            mask.window.push_back(in[k].window);
            mask.mass.push_back(in[k].mass);
        }
        mask.keep = ex.keep;
        mask.retained_density = ex.retained_density;
        keeps[e] = ex.keep;
        rep.masks.push_back(std::move(mask));
    }

    for (const auto& text : plan.symbols) {
        const SymbolFn a = symbols::parse(text, curve.length());
        SymbolTrend t1;
        t1.theorem = Theorem::thm1;
        t1.symbol_id = a.id;
        t1.omega = limit_state(a, 0.5, curve, domain).value;
        const auto recs = collect(a.id, 0.0, nullptr);
        t1.windows = convergence_gap(recs, t1.omega, LiftCombination::cauchy, plan.windows).windows;
        detail::finish_trend(t1, plan.windows);
        rep.trends.push_back(std::move(t1));
        for (double e : plan.eps1_ladder) {
            const SymbolFn b = symbols::nonglancing(a, e);
            const double omega = limit_state(b, -0.5, curve, domain).value;
            for (Theorem th : {Theorem::thm2, Theorem::cor2}) {
                SymbolTrend t;
                t.theorem = th;
                t.symbol_id = b.id;
                t.eps1 = e;
                t.omega = omega;
                const std::vector<bool>* keep = nullptr;
                if (th == Theorem::thm2) {
                    auto it = keeps.find(e);
                    if (it == keeps.end()) continue;
                    keep = &it->second;
                }
                const auto rs = collect(b.id, e, keep);
                t.windows = convergence_gap(rs, omega, LiftCombination::dirichlet_resolvent, plan.windows).windows;
                detail::finish_trend(t, plan.windows);
                rep.trends.push_back(std::move(t));
            }
        }
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string msg = std::to_string(missing.size()) + " missing lift entries:";
        for (std::size_t k = 0; k < missing.size() && k < 10; ++k) msg += " " + missing[k];
        if (missing.size() > 10) msg += " ...";
        throw DomainError("harness", msg);
    }
    return rep;
}

// Lifts required by qer_convergence for one trace: Cauchy-lift records for
// every symbol and renormalized records of a (1 - chi_eps1) per rung.
inline std::vector<LiftRecord> plan_lifts(const ExperimentPlan& plan, const CauchyTrace& t, double lambda2) {
    std::vector<LiftRecord> out;
    if (plan.eps1_ladder.empty()) throw DomainError("harness", "plan needs at least one eps1 rung");
    for (const auto& text : plan.symbols) {
        const SymbolFn a = symbols::parse(text, t.length);
        out.push_back(compute_lifts(a, t, lambda2, plan.eps1_ladder.back()));
        for (double e : plan.eps1_ladder) out.push_back(compute_lifts(symbols::nonglancing(a, e), t, lambda2, e));
    }
    return out;
}

}  // namespace qer
