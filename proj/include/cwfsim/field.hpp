#pragma once

#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "cwfsim/constants.hpp"
#include "cwfsim/fft.hpp"
#include "cwfsim/grid.hpp"

namespace cwfsim {

/// Complex scalar field sampled on a Grid1D. Not necessarily normalized.
class ComplexField1D {
 public:
  explicit ComplexField1D(Grid1D grid) : grid_(grid), values_(Eigen::ArrayXcd::Zero(grid.size())) {}
  ComplexField1D(Grid1D grid, Eigen::ArrayXcd values) : grid_(grid), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != grid_.size()) {
      throw GridMismatch("ComplexField1D: value count does not match grid");
    }
  }

  const Grid1D& grid() const { return grid_; }
  const Eigen::ArrayXcd& values() const { return values_; }
  Complex operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }
  std::size_t size() const { return grid_.size(); }

  /// Consumes the field to hand its storage to a new value.
  Eigen::ArrayXcd release() && { return std::move(values_); }

 private:
  Grid1D grid_;
  Eigen::ArrayXcd values_;
};

/// Two-component field on a Grid2D; storage row-major with x slow.
class Bispinor2D {
 public:
  explicit Bispinor2D(Grid2D grid)
      : grid_(grid), upper_(Eigen::ArrayXcd::Zero(grid.size())), lower_(Eigen::ArrayXcd::Zero(grid.size())) {}
  Bispinor2D(Grid2D grid, Eigen::ArrayXcd upper, Eigen::ArrayXcd lower)
      : grid_(grid), upper_(std::move(upper)), lower_(std::move(lower)) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    if (upper_.size() != n || lower_.size() != n) {
      throw GridMismatch("Bispinor2D: component sizes do not match grid");
    }
  }

  const Grid2D& grid() const { return grid_; }
  const Eigen::ArrayXcd& upper() const { return upper_; }
  const Eigen::ArrayXcd& lower() const { return lower_; }

 private:
  Grid2D grid_;
  Eigen::ArrayXcd upper_;
  Eigen::ArrayXcd lower_;
};

/// Continuous-normalized spectral amplitudes f(k_j) in FFT order, with
/// sum |f|^2 dk == integral |psi|^2 dx.
struct MomentumSpectrum {
  Grid1D grid;
  Eigen::ArrayXcd amplitudes;
};

inline double l2_norm(const ComplexField1D& field) {
  return std::sqrt(field.values().abs2().sum() * field.grid().dx());
}

inline double l2_norm(const Bispinor2D& s) {
  return std::sqrt((s.upper().abs2().sum() + s.lower().abs2().sum()) * s.grid().cell_area());
}

inline MomentumSpectrum to_momentum_space(const ComplexField1D& field) {
  const Grid1D& g = field.grid();
  Eigen::ArrayXcd a = field.values();
  fft::forward(a);
  const double scale = g.dx() / std::sqrt(2.0 * kPi);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    a[j] *= scale * std::exp(-kI * g.k(static_cast<std::size_t>(j)) * g.origin());
  }
  return {g, std::move(a)};
}

inline ComplexField1D from_momentum_space(const MomentumSpectrum& spectrum) {
  const Grid1D& g = spectrum.grid;
  Eigen::ArrayXcd a = spectrum.amplitudes;
  if (static_cast<std::size_t>(a.size()) != g.size()) {
    throw GridMismatch("from_momentum_space: amplitude count does not match grid");
  }
  const double scale = std::sqrt(2.0 * kPi) / g.dx();
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    a[j] *= scale * std::exp(kI * g.k(static_cast<std::size_t>(j)) * g.origin());
  }
  fft::inverse(a);
  return {g, std::move(a)};
}

/// <p> = sum hbar k |f(k)|^2 / sum |f(k)|^2.
inline double expectation_momentum(const ComplexField1D& field) {
  Eigen::ArrayXcd a = field.values();
  fft::forward(a);
  const Eigen::ArrayXd w = a.abs2();
  const double total = w.sum();
  if (!(total > 0.0)) throw DomainError("expectation_momentum: zero-norm field");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) acc += field.grid().k(static_cast<std::size_t>(j)) * w[j];
  return phys::hbar * acc / total;
}

/// <k^2> over the spectral weight; used for kinetic-energy bookkeeping.
inline double expectation_k_squared(const ComplexField1D& field) {
  Eigen::ArrayXcd a = field.values();
  fft::forward(a);
  const Eigen::ArrayXd w = a.abs2();
  const double total = w.sum();
  if (!(total > 0.0)) throw DomainError("expectation_k_squared: zero-norm field");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double k = field.grid().k(static_cast<std::size_t>(j));
    acc += k * k * w[j];
  }
  return acc / total;
}

/// Spectral first derivative; the unpaired Nyquist mode is dropped.
inline Eigen::ArrayXcd spectral_derivative(const ComplexField1D& field) {
  const Grid1D& g = field.grid();
  Eigen::ArrayXcd a = field.values();
  fft::forward(a);
  const auto nyquist = static_cast<Eigen::Index>(g.size() / 2);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    a[j] = j == nyquist ? Complex{} : a[j] * kI * g.k(static_cast<std::size_t>(j));
  }
  fft::inverse(a);
  return a;
}

/// J(x) = (hbar/m) Im(psi* dpsi/dx).
inline Eigen::ArrayXd current_density(const ComplexField1D& field, double mass) {
  if (!(mass > 0.0)) throw DomainError("current_density: mass must be positive");
  const Eigen::ArrayXcd d = spectral_derivative(field);
  return (phys::hbar / mass) * (field.values().conjugate() * d).imag();
}

/// Normalized Gaussian exp(-(x-x0)^2/(4 sigma^2) + i k0 x); sigma is the
/// standard deviation of |psi|^2.
inline ComplexField1D gaussian_packet(const Grid1D& grid, double x0, double sigma, double k0) {
  Eigen::ArrayXcd v(grid.size());
  const double amp = std::pow(2.0 * kPi * sigma * sigma, -0.25);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.x(j);
    const double u = x - x0;
    v[static_cast<Eigen::Index>(j)] = amp * std::exp(-u * u / (4.0 * sigma * sigma)) * std::exp(kI * k0 * x);
  }
  return {grid, std::move(v)};
}

inline ComplexField1D plane_wave(const Grid1D& grid, double k, Complex amplitude = {1.0, 0.0}) {
  Eigen::ArrayXcd v(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    v[static_cast<Eigen::Index>(j)] = amplitude * std::exp(kI * k * grid.x(j));
  }
  return {grid, std::move(v)};
}

}  // namespace cwfsim
