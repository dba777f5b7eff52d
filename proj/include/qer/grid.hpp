#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "qer/geometry.hpp"

namespace qer {

using cplx = std::complex<double>;
using Vec2c = Eigen::Vector2cd;

// Uniform Cartesian grid over the domain bounding box with an interior mask.
// Nodes are x_i = x0 + i*delta, i = 0..nx-1 (likewise y).
class Grid {
public:
    Grid(const Domain& domain, double delta) : delta_(delta) {
        if (!(delta > 0.0)) throw DomainError("eigensolver", "grid spacing must be positive");
        const auto bb = domain.bounding_box();
        x0_ = bb.x0;
        y0_ = bb.y0;
        nx_ = static_cast<int>(std::floor((bb.x1 - bb.x0) / delta + 1e-9)) + 1;
        ny_ = static_cast<int>(std::floor((bb.y1 - bb.y0) / delta + 1e-9)) + 1;
        index_.assign(static_cast<std::size_t>(nx_) * ny_, -1);
        const double tol = 1e-10 * delta;
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i)
                if (domain.distance(node(i, j)) > tol) {
                    index_[flat(i, j)] = static_cast<int>(unknowns_.size());
                    unknowns_.push_back(flat(i, j));
                }
    }

    double delta() const { return delta_; }
    double x0() const { return x0_; }
    double y0() const { return y0_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t size() const { return index_.size(); }
    std::size_t unknowns() const { return unknowns_.size(); }

    std::size_t flat(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
    Vec2 node(int i, int j) const { return {x0_ + i * delta_, y0_ + j * delta_}; }
    bool interior(int i, int j) const {
        return i >= 0 && j >= 0 && i < nx_ && j < ny_ && index_[flat(i, j)] >= 0;
    }
    int index(int i, int j) const { return interior(i, j) ? index_[flat(i, j)] : -1; }
    std::size_t node_of(int unknown) const { return unknowns_[unknown]; }

private:
    double delta_;
    double x0_ = 0.0, y0_ = 0.0;
    int nx_ = 0, ny_ = 0;
    std::vector<int> index_;
    std::vector<std::size_t> unknowns_;
};

namespace detail {

// Keys cubic convolution weights (a = -1/2), third-order accurate.
inline void keys_weights(double t, double w[4]) {
    auto k = [](double x) {
        x = std::abs(x);
        if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
        if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
        return 0.0;
    };
    w[0] = k(t + 1.0);
    w[1] = k(t);
    w[2] = k(1.0 - t);
    w[3] = k(2.0 - t);
}

}  // namespace detail

// Samples of a (possibly complex) field on a grid; zero on exterior nodes.
// The imaginary part is stored only when present.
class GridField {
public:
    GridField() = default;
    GridField(std::shared_ptr<const Grid> grid, Eigen::VectorXd re, Eigen::VectorXd im = {})
        : grid_(std::move(grid)), re_(std::move(re)), im_(std::move(im)) {}

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    bool is_real() const { return im_.size() == 0; }
    const Eigen::VectorXd& real() const { return re_; }
    const Eigen::VectorXd& imag() const { return im_; }

    cplx at(int i, int j) const {
        if (i < 0 || j < 0 || i >= grid_->nx() || j >= grid_->ny()) return 0.0;
        const std::size_t k = grid_->flat(i, j);
        return {re_[k], is_real() ? 0.0 : im_[k]};
    }

    // Trapezoidal L2(M) norm; boundary nodes carry zero samples.
    double l2_norm() const {
        double s = re_.squaredNorm() + (is_real() ? 0.0 : im_.squaredNorm());
        return std::sqrt(s) * grid_->delta();
    }

    void scale(double c) {
        re_ *= c;
        if (!is_real()) im_ *= c;
    }

    // Bicubic (Keys) interpolation of the samples.
    cplx value(const Vec2& p) const {
        return interpolate(p, [this](int i, int j) { return at(i, j); });
    }

    // Centered-difference gradient, then bicubic interpolation.
    Vec2c gradient(const Vec2& p) const {
        const double inv = 0.5 / grid_->delta();
        const cplx gx = interpolate(p, [&](int i, int j) { return (at(i + 1, j) - at(i - 1, j)) * inv; });
        const cplx gy = interpolate(p, [&](int i, int j) { return (at(i, j + 1) - at(i, j - 1)) * inv; });
        return {gx, gy};
    }

private:
    template <typename F>
    cplx interpolate(const Vec2& p, F&& sample) const {
        const double d = grid_->delta();
        const double fx = (p.x() - grid_->x0()) / d;
        const double fy = (p.y() - grid_->y0()) / d;
        const int i = static_cast<int>(std::floor(fx));
        const int j = static_cast<int>(std::floor(fy));
        double wx[4], wy[4];
        detail::keys_weights(fx - i, wx);
        detail::keys_weights(fy - j, wy);
        cplx acc = 0.0;
        for (int b = 0; b < 4; ++b) {
            cplx row = 0.0;
            for (int a = 0; a < 4; ++a) row += wx[a] * sample(i - 1 + a, j - 1 + b);
            acc += wy[b] * row;
        }
        return acc;
    }

    std::shared_ptr<const Grid> grid_;
    Eigen::VectorXd re_;
    Eigen::VectorXd im_;
};

}  // namespace qer
