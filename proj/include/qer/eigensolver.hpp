#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/tools/roots.hpp>

#include "qer/geometry.hpp"
#include "qer/grid.hpp"

namespace qer {

// ---------------------------------------------------------------------------
// Closed-form oracle modes (rectangle, disk)
// ---------------------------------------------------------------------------

// k-th positive zero (k >= 1) of J_order, by sign-change bracketing followed
// by TOMS 748 refinement.
inline double bessel_zero(int order, int k) {
    if (order < 0 || k < 1) throw DomainError("eigensolver", "invalid Bessel zero index");
    auto f = [order](double x) { return std::cyl_bessel_j(static_cast<double>(order), x); };
    const double step = 0.05;
    double x = order + 0.5 * step;  // no zeros of J_n below n
    double fx = f(x);
    int found = 0;
    while (true) {
        const double xn = x + step;
        const double fn = f(xn);
        if (fx == 0.0 || fx * fn < 0.0) {
            if (++found == k) {
                boost::uintmax_t iters = 200;
                auto tol = boost::math::tools::eps_tolerance<double>(52);
                const auto r = boost::math::tools::toms748_solve(f, x, xn, fx, fn, tol, iters);
                return 0.5 * (r.first + r.second);
            }
        }
        x = xn;
        fx = fn;
    }
}

struct AnalyticMode {
    DomainKind kind = DomainKind::rectangle;
    // rectangle
    double a = 1.0, b = 1.0;
    int m = 1, n = 1;
    // disk: J_|l|(k r) e^{i l theta}, radial index `radial`
    double radius = 1.0;
    int l = 0, radial = 1;
    double wavenumber = 0.0;
    double coef = 0.0;

    double lambda2() const { return wavenumber * wavenumber; }
    bool is_real() const { return kind == DomainKind::rectangle || l == 0; }

    cplx value(const Vec2& p) const {
        if (kind == DomainKind::rectangle)
            return coef * std::sin(m * std::numbers::pi * p.x() / a) *
                   std::sin(n * std::numbers::pi * p.y() / b);
        const double r = p.norm();
        const double th = std::atan2(p.y(), p.x());
        return coef * std::cyl_bessel_j(std::abs(l), wavenumber * r) *
               std::polar(1.0, l * th);
    }

    Vec2c gradient(const Vec2& p) const {
        if (kind == DomainKind::rectangle) {
            const double kx = m * std::numbers::pi / a, ky = n * std::numbers::pi / b;
            return {coef * kx * std::cos(kx * p.x()) * std::sin(ky * p.y()),
                    coef * ky * std::sin(kx * p.x()) * std::cos(ky * p.y())};
        }
        const int al = std::abs(l);
        const double r = p.norm();
        const double th = std::atan2(p.y(), p.x());
        const double kr = wavenumber * r;
        const double jp = al == 0 ? -std::cyl_bessel_j(1.0, kr)
                                  : 0.5 * (std::cyl_bessel_j(al - 1.0, kr) -
                                           std::cyl_bessel_j(al + 1.0, kr));
        // J_l(kr)/r, finite at r = 0
        const double jr = r > 1e-12 ? std::cyl_bessel_j(al, kr) / r
                                    : (al == 1 ? 0.5 * wavenumber : 0.0);
        const cplx ph = std::polar(1.0, l * th);
        const cplx dr = coef * wavenumber * jp * ph;
        const cplx dth = coef * cplx(0.0, l) * jr * ph;  // (1/r) d/dtheta
        const double c = std::cos(th), s = std::sin(th);
        return {dr * c - dth * s, dr * s + dth * c};
    }
};

// ---------------------------------------------------------------------------
// Eigenmodes
// ---------------------------------------------------------------------------

struct EigenMode {
    int id = 0;
    double lambda2 = 0.0;
    double h = 0.0;
    double residual = 0.0;
    std::optional<GridField> field;
    std::optional<AnalyticMode> analytic;

    cplx value(const Vec2& p) const { return analytic ? analytic->value(p) : field->value(p); }
    Vec2c gradient(const Vec2& p) const {
        return analytic ? analytic->gradient(p) : field->gradient(p);
    }
};

struct RectangleIndex {
    int m, n;
};
struct DiskIndex {
    int l, radial;
};

inline std::vector<EigenMode> analytic_modes(const Domain& domain,
                                             const std::vector<RectangleIndex>& idx) {
    if (domain.kind() != DomainKind::rectangle)
        throw DomainError("eigensolver", "rectangle index set on a non-rectangle domain");
    std::vector<EigenMode> out;
    const double a = domain.spec().a, b = domain.spec().b;
    for (const auto& [m, n] : idx) {
        if (m < 1 || n < 1) throw DomainError("eigensolver", "rectangle indices must be >= 1");
        AnalyticMode am;
        am.kind = DomainKind::rectangle;
        am.a = a;
        am.b = b;
        am.m = m;
        am.n = n;
        am.wavenumber = std::numbers::pi * std::sqrt(m * m / (a * a) + n * n / (b * b));
        am.coef = 2.0 / std::sqrt(a * b);
        EigenMode em;
        em.id = static_cast<int>(out.size());
        em.lambda2 = am.lambda2();
        em.h = 1.0 / am.wavenumber;
        em.analytic = am;
        out.push_back(std::move(em));
    }
    return out;
}

inline std::vector<EigenMode> analytic_modes(const Domain& domain, const std::vector<DiskIndex>& idx) {
    if (domain.kind() != DomainKind::disk)
        throw DomainError("eigensolver", "disk index set on a non-disk domain");
    std::vector<EigenMode> out;
    const double R = domain.spec().radius;
    for (const auto& [l, radial] : idx) {
        const double j = bessel_zero(std::abs(l), radial);
        AnalyticMode am;
        am.kind = DomainKind::disk;
        am.radius = R;
        am.l = l;
        am.radial = radial;
        am.wavenumber = j / R;
        am.coef = 1.0 / (std::sqrt(std::numbers::pi) * R *
                         std::abs(std::cyl_bessel_j(std::abs(l) + 1.0, j)));
        EigenMode em;
        em.id = static_cast<int>(out.size());
        em.lambda2 = am.lambda2();
        em.h = 1.0 / am.wavenumber;
        em.analytic = am;
        out.push_back(std::move(em));
    }
    return out;
}

// All rectangle modes with lambda^2 in [lo, hi), ascending.
inline std::vector<EigenMode> rectangle_modes_in_window(const Domain& domain, double lo, double hi) {
    const double a = domain.spec().a, b = domain.spec().b;
    std::vector<RectangleIndex> idx;
    const int mmax = static_cast<int>(std::sqrt(hi) * a / std::numbers::pi) + 1;
    const int nmax = static_cast<int>(std::sqrt(hi) * b / std::numbers::pi) + 1;
    for (int m = 1; m <= mmax; ++m)
        for (int n = 1; n <= nmax; ++n) {
            const double l2 = std::numbers::pi * std::numbers::pi * (m * m / (a * a) + n * n / (b * b));
            if (l2 >= lo && l2 < hi) idx.push_back({m, n});
        }
    auto modes = analytic_modes(domain, idx);
    std::stable_sort(modes.begin(), modes.end(),
                     [](const EigenMode& x, const EigenMode& y) { return x.lambda2 < y.lambda2; });
    for (std::size_t k = 0; k < modes.size(); ++k) modes[k].id = static_cast<int>(k);
    return modes;
}

// ---------------------------------------------------------------------------
// Discrete Dirichlet Laplacian
// ---------------------------------------------------------------------------

using SparseMatrix = Eigen::SparseMatrix<double>;

struct DirichletLaplacian {
    std::shared_ptr<const Grid> grid;
    SparseMatrix matrix;  // -Delta_delta on interior unknowns, SPD
};

// 5-point stencil; exterior neighbours are eliminated (Dirichlet data zero).
inline DirichletLaplacian assemble_laplacian(const Domain& domain, double delta) {
    if (!(delta > 0.0) || domain.narrowest_feature() / delta < 10.0)
        throw DomainError("eigensolver", "grid spacing " + std::to_string(delta) +
                                             " resolves the narrowest feature with fewer than 10 points");
    auto grid = std::make_shared<const Grid>(domain, delta);
    const int n = static_cast<int>(grid->unknowns());
    if (n < 4) throw DomainError("eigensolver", "degenerate grid: no interior nodes");
    const double c = 1.0 / (delta * delta);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * static_cast<std::size_t>(n));
    for (int j = 0; j < grid->ny(); ++j)
        for (int i = 0; i < grid->nx(); ++i) {
            const int row = grid->index(i, j);
            if (row < 0) continue;
            trip.emplace_back(row, row, 4.0 * c);
            const int nb[4] = {grid->index(i - 1, j), grid->index(i + 1, j), grid->index(i, j - 1),
                               grid->index(i, j + 1)};
            for (int col : nb)
                if (col >= 0) trip.emplace_back(row, col, -c);
        }
    SparseMatrix A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return {std::move(grid), std::move(A)};
}

namespace detail {

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

inline std::unique_ptr<Ldlt> factor_shifted(const SparseMatrix& A, double sigma) {
    SparseMatrix S = A;
    for (int k = 0; k < S.rows(); ++k) S.coeffRef(k, k) -= sigma;
    auto f = std::make_unique<Ldlt>();
    f->compute(S);
    if (f->info() != Eigen::Success)
        throw DomainError("eigensolver", "LDLT factorization failed at shift " + std::to_string(sigma));
    return f;
}

inline int negative_pivots(const Ldlt& f) {
    const auto& d = f.vectorD();
    return static_cast<int>((d.array() < 0.0).count());
}

}  // namespace detail

// Number of discrete eigenvalues strictly below `level` (Sylvester inertia).
inline int count_below(const DirichletLaplacian& op, double level) {
    return detail::negative_pivots(*detail::factor_shifted(op.matrix, level));
}

// Wraps a unit l2 eigenvector into a mode normalized in L2(M).
inline EigenMode make_grid_mode(const DirichletLaplacian& op, const Eigen::VectorXd& v, double lambda2) {
    const Grid& g = *op.grid;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
    for (int k = 0; k < v.size(); ++k) full[static_cast<Eigen::Index>(g.node_of(k))] = v[k];
    EigenMode mode;
    mode.lambda2 = lambda2;
    mode.h = 1.0 / std::sqrt(lambda2);
    mode.field = GridField(op.grid, std::move(full));
    mode.field->scale(1.0 / mode.field->l2_norm());
    const Eigen::VectorXd r = op.matrix * v - lambda2 * v;
    mode.residual = r.norm() / (lambda2 * v.norm());
    return mode;
}

struct SolveOptions {
    std::uint64_t seed = 0x5eed;
    int chunk = 40;               // max eigenvalues per shift
    int max_rounds = 12;          // Lanczos restarts per shift
    double tolerance = 1e-11;     // relative residual ||Ax - lx|| / (l ||x||)
};

namespace detail {

// Shift-invert Lanczos with full reorthogonalization and explicit deflation
// against locked vectors. Returns `target` eigenpairs in [lo, hi).
inline void lanczos_window(const SparseMatrix& A, double lo, double hi, int target,
                           const SolveOptions& opt, std::uint64_t seed,
                           std::vector<std::pair<double, Eigen::VectorXd>>& out) {
    const int n = static_cast<int>(A.rows());
    const double sigma = 0.5 * (lo + hi);
    const auto fac = factor_shifted(A, sigma);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    // Rounding floor of the residual relative to ||A||_inf.
    double anorm = 0.0;
    {
        Eigen::VectorXd rows = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < A.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(A, k); it; ++it) rows[it.row()] += std::abs(it.value());
        anorm = rows.maxCoeff();
    }

    std::vector<Eigen::VectorXd> locked;
    std::vector<double> locked_vals;
    auto deflate = [&](Eigen::VectorXd& w) {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : locked) w -= q.dot(w) * q;
    };

    int m = std::min(n - 1, 2 * target + 40);
    int rounds = 0;
    while (static_cast<int>(locked.size()) < target) {
        if (++rounds > opt.max_rounds)
            throw DomainError("eigensolver", "Lanczos did not converge at shift " + std::to_string(sigma) +
                                                 " (" + std::to_string(locked.size()) + "/" +
                                                 std::to_string(target) + " eigenpairs)");
        const int mm = std::min(m, n - static_cast<int>(locked.size()) - 1);
        Eigen::MatrixXd V(n, mm + 1);
        Eigen::VectorXd alpha(mm), beta(mm + 1);
        Eigen::VectorXd v(n);
        for (int k = 0; k < n; ++k) v[k] = gauss(rng);
        deflate(v);
        V.col(0) = v / v.norm();
        int steps = mm;
        for (int j = 0; j < mm; ++j) {
            Eigen::VectorXd w = fac->solve(V.col(j));
            alpha[j] = V.col(j).dot(w);
            for (int pass = 0; pass < 2; ++pass) {
                w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
                deflate(w);
            }
            beta[j + 1] = w.norm();
            if (beta[j + 1] < 1e-14 * std::abs(alpha[j])) {
                steps = j + 1;
                break;
            }
            V.col(j + 1) = w / beta[j + 1];
        }
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
        for (int j = 0; j < steps; ++j) {
            T(j, j) = alpha[j];
            if (j + 1 < steps) T(j, j + 1) = T(j + 1, j) = beta[j + 1];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri(T);
        int accepted = 0;
        for (int k = 0; k < steps; ++k) {
            const double theta = tri.eigenvalues()[k];
            if (theta == 0.0) continue;
            const double lam = sigma + 1.0 / theta;
            if (lam < lo || lam >= hi) continue;
            Eigen::VectorXd x = V.leftCols(steps) * tri.eigenvectors().col(k);
            deflate(x);
            x.normalize();
            const double rq = x.dot(A * x);
            const double res = (A * x - rq * x).norm() / std::abs(rq);
            const double floor = 1e3 * std::numeric_limits<double>::epsilon() * anorm / std::abs(rq);
            if (res > std::max(opt.tolerance, floor) || rq < lo || rq >= hi) continue;
            bool dup = false;
            for (const auto& q : locked)
                if (std::abs(q.dot(x)) > 1e-6) dup = true;
            if (dup) continue;
            locked.push_back(std::move(x));
            locked_vals.push_back(rq);
            ++accepted;
            if (static_cast<int>(locked.size()) == target) break;
        }
        if (accepted == 0) m = std::min(n - 1, 2 * m);
    }

    // Re-orthogonalize within the converged set (degenerate clusters).
    for (std::size_t i = 0; i < locked.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) locked[i] -= locked[k].dot(locked[i]) * locked[k];
        locked[i].normalize();
        Eigen::Index imax;
        locked[i].cwiseAbs().maxCoeff(&imax);
        if (locked[i][imax] < 0.0) locked[i] = -locked[i];
    }
    for (std::size_t i = 0; i < locked.size(); ++i) out.emplace_back(locked_vals[i], std::move(locked[i]));
}

inline void solve_range(const SparseMatrix& A, double lo, double hi, int below_lo, int below_hi,
                        const SolveOptions& opt, std::uint64_t seed,
                        std::vector<std::pair<double, Eigen::VectorXd>>& out) {
    const int count = below_hi - below_lo;
    if (count <= 0) return;
    if (count <= opt.chunk) {
        lanczos_window(A, lo, hi, count, opt, seed, out);
        return;
    }
    const double mid = 0.5 * (lo + hi);
    const int below_mid = negative_pivots(*factor_shifted(A, mid));
    solve_range(A, lo, mid, below_lo, below_mid, opt, seed * 6364136223846793005ULL + 1, out);
    solve_range(A, mid, hi, below_mid, below_hi, opt, seed * 6364136223846793005ULL + 3, out);
}

}  // namespace detail

// All discrete eigenpairs with lambda^2 in [lo, hi), at most k_max of them
// (lowest first), L2(M)-normalized, ascending in lambda^2.
inline std::vector<EigenMode> solve_window(const DirichletLaplacian& op, double lo, double hi,
                                           int k_max, const SolveOptions& opt = {}) {
    if (!(lo > 0.0) || !(hi > lo)) throw DomainError("eigensolver", "spectral window must be positive and non-empty");
    if (k_max < 0) throw DomainError("eigensolver", "k_max must be non-negative");
    const int below_lo = count_below(op, lo);
    const int below_hi = count_below(op, hi);
    std::vector<std::pair<double, Eigen::VectorXd>> pairs;
    detail::solve_range(op.matrix, lo, hi, below_lo, below_hi, opt, opt.seed, pairs);
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    if (static_cast<int>(pairs.size()) > k_max) pairs.resize(static_cast<std::size_t>(k_max));
    std::vector<EigenMode> modes;
    modes.reserve(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        modes.push_back(make_grid_mode(op, pairs[k].second, pairs[k].first));
        modes.back().id = below_lo + static_cast<int>(k);
    }
    return modes;
}

// Samples a closed-form mode on the operator's grid (zero off the mask) and
// renormalizes it in the trapezoidal L2(M) norm.
inline EigenMode sample_on_grid(const EigenMode& mode, std::shared_ptr<const Grid> grid) {
    if (!mode.analytic) throw DomainError("eigensolver", "sample_on_grid needs a closed-form mode");
    const bool real = mode.analytic->is_real();
    Eigen::VectorXd re = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid->size()));
    Eigen::VectorXd im = real ? Eigen::VectorXd() : Eigen::VectorXd::Zero(re.size());
    for (int j = 0; j < grid->ny(); ++j)
        for (int i = 0; i < grid->nx(); ++i) {
            if (!grid->interior(i, j)) continue;
            const cplx v = mode.analytic->value(grid->node(i, j));
            re[static_cast<Eigen::Index>(grid->flat(i, j))] = v.real();
            if (!real) im[static_cast<Eigen::Index>(grid->flat(i, j))] = v.imag();
        }
    EigenMode out;
    out.id = mode.id;
    out.lambda2 = mode.lambda2;
    out.h = mode.h;
    out.field = GridField(grid, std::move(re), std::move(im));
    out.field->scale(1.0 / out.field->l2_norm());
    return out;
}

// rho = ||(-h^2 Delta_delta - 1) u|| / ||u|| on the grid field of `mode`,
// with the 5-point stencil and zero exterior data.
inline double quasimode_residual(const EigenMode& mode) {
    if (!mode.field) throw DomainError("eigensolver", "quasimode residual needs a grid field");
    const GridField& f = *mode.field;
    const Grid& g = f.grid();
    const double norm = f.l2_norm();
    if (!(norm > 0.0)) throw DomainError("eigensolver", "quasimode residual of a zero field");
    const double c = mode.h * mode.h / (g.delta() * g.delta());
    double acc = 0.0;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            if (!g.interior(i, j)) continue;
            auto at = [&](int a, int b) { return g.interior(a, b) ? f.at(a, b) : cplx(0.0); };
            const cplx lap = 4.0 * at(i, j) - at(i - 1, j) - at(i + 1, j) - at(i, j - 1) - at(i, j + 1);
            acc += std::norm(c * lap - at(i, j));
        }
    return std::sqrt(acc) * g.delta() / norm;
}

// Quasimode gate: accept when rho <= c * h.
inline bool accept_quasimode(const EigenMode& mode, double c = 0.1) {
    const double rho = mode.field ? quasimode_residual(mode) : mode.residual;
    return rho <= c * mode.h;
}

}  // namespace qer
