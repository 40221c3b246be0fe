#pragma once

// Two-dimensional scalar grids and the (U, V) state of the Barkley medium. //

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace bkrc {

/// Row-major scalar grid. Index (i, j) has i along x (0..nx) and j along y (0..ny);
/// storage offset is j * nx + i.
class grid2d {
public:
    grid2d() = default;

    grid2d(std::size_t nx, std::size_t ny, double value = 0.0)
      : nx_{nx}, ny_{ny}, data_(nx * ny, value)
    {
    }

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[j * nx_ + i]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[j * nx_ + i]; }

    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const grid2d& other) const noexcept
    {
        return nx_ == other.nx_ && ny_ == other.ny_;
    }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
    }

    double sum() const noexcept
    {
        double s = 0;
        for (double x : data_) s += x;
        return s;
    }

    double mean() const noexcept { return data_.empty() ? 0.0 : sum() / data_.size(); }

    /// Population variance over all grid points.
    double variance() const noexcept
    {
        if (data_.empty()) return 0.0;
        const double m = mean();
        double s = 0;
        for (double x : data_) s += (x - m) * (x - m);
        return s / data_.size();
    }

    friend bool operator==(const grid2d&, const grid2d&) = default;

private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::vector<double> data_;
};

/// System state at one time step: activator U and inhibitor V on the same grid.
struct field_pair {
    grid2d u;
    grid2d v;

    field_pair() = default;

    field_pair(std::size_t nx, std::size_t ny, double u0 = 0.0, double v0 = 0.0)
      : u{nx, ny, u0}, v{nx, ny, v0}
    {
    }

    field_pair(grid2d u_, grid2d v_) : u{std::move(u_)}, v{std::move(v_)}
    {
        if (!u.same_shape(v)) throw dimension_error{"field_pair: U and V shapes differ"};
    }

    std::size_t nx() const noexcept { return u.nx(); }
    std::size_t ny() const noexcept { return u.ny(); }
    std::size_t points() const noexcept { return u.size(); }

    bool same_shape(const field_pair& other) const noexcept
    {
        return u.same_shape(other.u) && v.same_shape(other.v);
    }

    bool all_finite() const noexcept { return u.all_finite() && v.all_finite(); }

    friend bool operator==(const field_pair&, const field_pair&) = default;
};

/// Time-major sequence of states.
using trajectory = std::vector<field_pair>;

}  // namespace bkrc
