#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "cwfsim/constants.hpp"

namespace cwfsim {

namespace detail {
inline bool is_pow2_at_least_64(std::size_t n) { return n >= 64 && (n & (n - 1)) == 0; }
}  // namespace detail

/// Uniform periodic 1D grid. Point j sits at origin + j*dx.
class Grid1D {
 public:
  Grid1D(double length_m, std::size_t n, double origin_m = 0.0)
      : length_(length_m), n_(n), origin_(origin_m) {
    if (!detail::is_pow2_at_least_64(n)) {
      throw std::invalid_argument("Grid1D: n must be a power of two >= 64, got " + std::to_string(n));
    }
    if (!(length_m > 0.0) || !std::isfinite(length_m)) {
      throw std::invalid_argument("Grid1D: length must be positive and finite");
    }
    dx_ = length_ / static_cast<double>(n_);
  }

  double length() const { return length_; }
  std::size_t size() const { return n_; }
  double dx() const { return dx_; }
  double origin() const { return origin_; }
  double x(std::size_t j) const { return origin_ + static_cast<double>(j) * dx_; }
  double x_max() const { return origin_ + length_; }
  double dk() const { return 2.0 * kPi / length_; }

  /// FFT-ordered wavenumber of spectral index j, in [-pi/dx, pi/dx).
  double k(std::size_t j) const {
    const auto jj = static_cast<long long>(j);
    const auto nn = static_cast<long long>(n_);
    return dk() * static_cast<double>(jj < nn / 2 ? jj : jj - nn);
  }

  /// Nearest grid-representable wavenumber (integer multiple of 2*pi/L).
  double round_k(double q) const { return std::round(q / dk()) * dk(); }

  bool contains(double x) const { return x >= origin_ && x < origin_ + length_; }

  friend bool operator==(const Grid1D& a, const Grid1D& b) {
    return a.n_ == b.n_ && a.length_ == b.length_ && a.origin_ == b.origin_;
  }

 private:
  double length_;
  std::size_t n_;
  double origin_;
  double dx_;
};

/// Uniform periodic 2D grid, row-major storage with x as the slow index.
class Grid2D {
 public:
  Grid2D(std::array<double, 2> lengths, std::array<std::size_t, 2> dims,
         std::array<double, 2> origin = {0.0, 0.0})
      : x_(lengths[0], dims[0], origin[0]), y_(lengths[1], dims[1], origin[1]) {}

  const Grid1D& axis_x() const { return x_; }
  const Grid1D& axis_y() const { return y_; }
  std::size_t nx() const { return x_.size(); }
  std::size_t ny() const { return y_.size(); }
  std::size_t size() const { return nx() * ny(); }
  std::size_t index(std::size_t ix, std::size_t iy) const { return ix * ny() + iy; }
  double dx() const { return x_.dx(); }
  double dy() const { return y_.dx(); }
  double cell_area() const { return dx() * dy(); }

  friend bool operator==(const Grid2D& a, const Grid2D& b) { return a.x_ == b.x_ && a.y_ == b.y_; }

 private:
  Grid1D x_;
  Grid1D y_;
};

}  // namespace cwfsim
