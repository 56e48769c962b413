#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "cwfsim/constants.hpp"
#include "cwfsim/fft.hpp"
#include "cwfsim/field.hpp"
#include "cwfsim/grid.hpp"

namespace cwfsim {

inline constexpr double kGrapheneFermiVelocity = 1e6;  // m/s

/// Conduction (+1) or valence (-1) branch of the linear dispersion.
class BandIndex {
 public:
  constexpr explicit BandIndex(int s) : s_(s) {
    if (s != 1 && s != -1) throw std::invalid_argument("BandIndex must be +1 or -1");
  }
  static constexpr BandIndex conduction() { return BandIndex(1); }
  static constexpr BandIndex valence() { return BandIndex(-1); }
  constexpr int value() const { return s_; }
  constexpr BandIndex flipped() const { return BandIndex(-s_); }
  friend constexpr bool operator==(BandIndex a, BandIndex b) { return a.s_ == b.s_; }

 private:
  int s_;
};

struct DiracCollision {
  Eigen::Vector2d q = Eigen::Vector2d::Zero();   // 1/m
  Eigen::Vector2d k0 = Eigen::Vector2d::Zero();  // central wave vector before
  Eigen::Vector2d kf = Eigen::Vector2d::Zero();  // central wave vector after
  int band_flip_m = 0;
};

/// Pseudospin angle beta_k, with e^{i beta} = (kx + i ky)/|k|.
inline double pseudospin_angle(const Eigen::Vector2d& k) {
  if (k.norm() == 0.0) throw DomainError("pseudospin angle undefined at k = 0");
  return std::atan2(k.y(), k.x());
}

/// Real potential plus complex absorber on a Grid2D, joules.
class Potential2D {
 public:
  explicit Potential2D(Grid2D grid)
      : grid_(grid), values_(Eigen::ArrayXd::Zero(grid.size())), absorber_(Eigen::ArrayXcd::Zero(grid.size())) {}
  Potential2D(Grid2D grid, Eigen::ArrayXd values, Eigen::ArrayXcd absorber)
      : grid_(grid), values_(std::move(values)), absorber_(std::move(absorber)) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    if (values_.size() != n || absorber_.size() != n) throw GridMismatch("Potential2D: array size mismatch");
    if ((absorber_.imag() > 0.0).any()) throw std::invalid_argument("Potential2D: absorber must not amplify");
  }
  Potential2D(Grid2D grid, Eigen::ArrayXd values)
      : Potential2D(grid, std::move(values), Eigen::ArrayXcd::Zero(grid.size())) {}

  const Grid2D& grid() const { return grid_; }
  const Eigen::ArrayXd& values() const { return values_; }
  const Eigen::ArrayXcd& absorber() const { return absorber_; }

 private:
  Grid2D grid_;
  Eigen::ArrayXd values_;
  Eigen::ArrayXcd absorber_;
};

/// Quartic absorbing ramp along x only (the transport direction).
inline Eigen::ArrayXcd quartic_absorber_x(const Grid2D& grid, double margin_fraction, double strength) {
  Eigen::ArrayXcd w = Eigen::ArrayXcd::Zero(grid.size());
  if (margin_fraction <= 0.0) return w;
  const Grid1D& ax = grid.axis_x();
  const double margin = margin_fraction * ax.length();
  for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
    const double x = ax.x(ix);
    double d = 0.0;
    if (x < ax.origin() + margin) d = (ax.origin() + margin - x) / margin;
    if (x > ax.x_max() - margin) d = (x - (ax.x_max() - margin)) / margin;
    if (d <= 0.0) continue;
    for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
      w[static_cast<Eigen::Index>(grid.index(ix, iy))] = Complex{0.0, -strength * d * d * d * d};
    }
  }
  return w;
}

inline Eigen::Vector2d round_to_grid(const Grid2D& g, const Eigen::Vector2d& k) {
  return {g.axis_x().round_k(k.x()), g.axis_y().round_k(k.y())};
}

/// Box-normalized plane-wave eigenspinor e^{ik.r}/sqrt(2A) (1, s e^{i beta_k}).
/// k is rounded to the grid first.
inline Bispinor2D eigenspinor(const Eigen::Vector2d& k_in, BandIndex band, const Grid2D& grid) {
  if (k_in.norm() == 0.0) throw DomainError("eigenspinor: k = 0 has no pseudospin direction");
  const Eigen::Vector2d k = round_to_grid(grid, k_in);
  if (k.norm() == 0.0) throw DomainError("eigenspinor: k rounds to zero on this grid");
  const double area = grid.axis_x().length() * grid.axis_y().length();
  const Complex amp = 1.0 / std::sqrt(2.0 * area);
  const Complex lower_factor = static_cast<double>(band.value()) * std::exp(kI * pseudospin_angle(k));
  Eigen::ArrayXcd up(grid.size()), lo(grid.size());
  for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
    for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
      const auto i = static_cast<Eigen::Index>(grid.index(ix, iy));
      const Complex w = amp * std::exp(kI * (k.x() * grid.axis_x().x(ix) + k.y() * grid.axis_y().x(iy)));
      up[i] = w;
      lo[i] = lower_factor * w;
    }
  }
  return {grid, std::move(up), std::move(lo)};
}

/// Pure-band Gaussian packet built mode by mode in the spectral domain:
/// every k carries the eigenspinor of `band`; |psi|^2 has std `sigma` per axis.
inline Bispinor2D dirac_gaussian_packet(const Grid2D& grid, const Eigen::Vector2d& r0, double sigma,
                                        const Eigen::Vector2d& k0, BandIndex band) {
  const int nx = static_cast<int>(grid.nx());
  const int ny = static_cast<int>(grid.ny());
  Eigen::ArrayXcd up(grid.size()), lo(grid.size());
  const double sk = 1.0 / (2.0 * sigma);
  const double ox = grid.axis_x().origin();
  const double oy = grid.axis_y().origin();
  for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
    const double kx = grid.axis_x().k(ix);
    for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
      const double ky = grid.axis_y().k(iy);
      const auto i = static_cast<Eigen::Index>(grid.index(ix, iy));
      const double ux = (kx - k0.x()) / sk;
      const double uy = (ky - k0.y()) / sk;
      // FFT coefficients of a field whose origin is offset from 0.
      const Complex env = std::exp(-0.25 * (ux * ux + uy * uy)) *
                          std::exp(-kI * (kx * (r0.x() - ox) + ky * (r0.y() - oy)));
      const double kn = std::hypot(kx, ky);
      const Complex phase = kn > 0.0 ? Complex{kx / kn, ky / kn} : Complex{1.0, 0.0};
      up[i] = env;
      lo[i] = static_cast<double>(band.value()) * phase * env;
    }
  }
  fft::inverse_2d(up, nx, ny);
  fft::inverse_2d(lo, nx, ny);
  Bispinor2D raw(grid, std::move(up), std::move(lo));
  const double n = l2_norm(raw);
  return {grid, raw.upper() / n, raw.lower() / n};
}

/// Precomputed exact per-mode kinetic rotation exp(-i v_f sigma.(hbar k + lambda) dt / hbar).
class DiracStepper {
 public:
  DiracStepper(const Grid2D& grid, double dt, double fermi_velocity = kGrapheneFermiVelocity,
               const Eigen::Vector2d& momentum_shift = Eigen::Vector2d::Zero())
      : grid_(grid), dt_(dt), diag_(grid.size()), up_lo_(grid.size()), lo_up_(grid.size()) {
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
      const double kx = grid.axis_x().k(ix) + momentum_shift.x() / phys::hbar;
      for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
        const double ky = grid.axis_y().k(iy) + momentum_shift.y() / phys::hbar;
        const auto i = static_cast<Eigen::Index>(grid.index(ix, iy));
        const double kn = std::hypot(kx, ky);
        const double theta = fermi_velocity * kn * dt;
        const Complex e_beta = kn > 0.0 ? Complex{kx / kn, ky / kn} : Complex{1.0, 0.0};
        diag_[i] = std::cos(theta);
        up_lo_[i] = -kI * std::sin(theta) * std::conj(e_beta);
        lo_up_[i] = -kI * std::sin(theta) * e_beta;
      }
    }
  }

  Eigen::ArrayXcd half_potential_phase(const Potential2D& pot) const {
    if (!(pot.grid() == grid_)) throw GridMismatch("DiracStepper: potential grid mismatch");
    const double c = dt_ / (2.0 * phys::hbar);
    Eigen::ArrayXcd h(grid_.size());
    for (Eigen::Index j = 0; j < h.size(); ++j) h[j] = std::exp(-kI * (pot.values()[j] + pot.absorber()[j]) * c);
    return h;
  }

  Bispinor2D advance(const Bispinor2D& s, const Eigen::ArrayXcd& half_phase) const {
    if (!(s.grid() == grid_)) throw GridMismatch("DiracStepper: spinor grid mismatch");
    const int nx = static_cast<int>(grid_.nx());
    const int ny = static_cast<int>(grid_.ny());
    Eigen::ArrayXcd a = s.upper() * half_phase;
    Eigen::ArrayXcd b = s.lower() * half_phase;
    fft::forward_2d(a, nx, ny);
    fft::forward_2d(b, nx, ny);
    Eigen::ArrayXcd a2 = diag_ * a + up_lo_ * b;
    Eigen::ArrayXcd b2 = lo_up_ * a + diag_ * b;
    fft::inverse_2d(a2, nx, ny);
    fft::inverse_2d(b2, nx, ny);
    a2 *= half_phase;
    b2 *= half_phase;
    return {grid_, std::move(a2), std::move(b2)};
  }

 private:
  Grid2D grid_;
  double dt_;
  Eigen::ArrayXcd diag_;
  Eigen::ArrayXcd up_lo_;
  Eigen::ArrayXcd lo_up_;
};

/// One split step of i hbar dpsi/dt = [v_f sigma.(p + lambda) + V + W] psi.
inline Bispinor2D step_dirac(const Bispinor2D& s, const Potential2D& pot, double dt,
                             double fermi_velocity = kGrapheneFermiVelocity,
                             const Eigen::Vector2d& momentum_shift = Eigen::Vector2d::Zero()) {
  if (!(s.grid() == pot.grid())) throw GridMismatch("step_dirac: spinor and potential grids differ");
  if (!(dt > 0.0)) throw DomainError("step_dirac: dt must be positive");
  DiracStepper stepper(s.grid(), dt, fermi_velocity, momentum_shift);
  return stepper.advance(s, stepper.half_potential_phase(pot));
}

/// Multiplies both components by e^{iq.r} and a scalar phase into each.
inline Bispinor2D kick_bispinor(const Bispinor2D& s, const Eigen::Vector2d& q, Complex upper_phase,
                                Complex lower_phase) {
  const Grid2D& g = s.grid();
  Eigen::ArrayXcd up = s.upper();
  Eigen::ArrayXcd lo = s.lower();
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      const auto i = static_cast<Eigen::Index>(g.index(ix, iy));
      const Complex w = std::exp(kI * (q.x() * g.axis_x().x(ix) + q.y() * g.axis_y().x(iy)));
      up[i] *= w * upper_phase;
      lo[i] *= w * lower_phase;
    }
  }
  return {g, std::move(up), std::move(lo)};
}

/// Collision rule for the bispinor: e^{iq.r} on both components, then
/// e^{i alpha} on the lower one with alpha = m pi + beta_kf - beta_k0.
inline Bispinor2D apply_dirac_collision(const Bispinor2D& s, const DiracCollision& c) {
  if (c.k0.norm() == 0.0 || c.kf.norm() == 0.0) {
    throw DomainError("apply_dirac_collision: central wave vectors must be nonzero");
  }
  if (c.band_flip_m != 0 && c.band_flip_m != 1) throw std::invalid_argument("band_flip_m must be 0 or 1");
  const double alpha = c.band_flip_m * kPi + pseudospin_angle(c.kf) - pseudospin_angle(c.k0);
  return kick_bispinor(s, round_to_grid(s.grid(), c.q), Complex{1.0, 0.0}, std::exp(kI * alpha));
}

struct BandWeights {
  double conduction = 0.0;
  double valence = 0.0;
};

/// Spectral projection onto the conduction/valence eigenspinors of each mode.
/// The k = 0 mode has no pseudospin axis and is split evenly.
inline BandWeights band_weights(const Bispinor2D& s) {
  const Grid2D& g = s.grid();
  const int nx = static_cast<int>(g.nx());
  const int ny = static_cast<int>(g.ny());
  Eigen::ArrayXcd a = s.upper();
  Eigen::ArrayXcd b = s.lower();
  fft::forward_2d(a, nx, ny);
  fft::forward_2d(b, nx, ny);
  double pc = 0.0, pv = 0.0;
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    const double kx = g.axis_x().k(ix);
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      const double ky = g.axis_y().k(iy);
      const auto i = static_cast<Eigen::Index>(g.index(ix, iy));
      const double kn = std::hypot(kx, ky);
      if (kn == 0.0) {
        const double w = 0.5 * (std::norm(a[i]) + std::norm(b[i]));
        pc += w;
        pv += w;
        continue;
      }
      const Complex e_beta{kx / kn, ky / kn};
      // <u_s|f> = (a + s e^{-i beta} b)/sqrt(2)
      pc += 0.5 * std::norm(a[i] + std::conj(e_beta) * b[i]);
      pv += 0.5 * std::norm(a[i] - std::conj(e_beta) * b[i]);
    }
  }
  const double total = pc + pv;
  if (!(total > 0.0)) throw DomainError("band_weights: zero-norm spinor");
  return {pc / total, pv / total};
}

/// Spectral mean wave vector over both components.
inline Eigen::Vector2d expectation_wavevector(const Bispinor2D& s) {
  const Grid2D& g = s.grid();
  const int nx = static_cast<int>(g.nx());
  const int ny = static_cast<int>(g.ny());
  Eigen::ArrayXcd a = s.upper();
  Eigen::ArrayXcd b = s.lower();
  fft::forward_2d(a, nx, ny);
  fft::forward_2d(b, nx, ny);
  const Eigen::ArrayXd w = a.abs2() + b.abs2();
  const double total = w.sum();
  if (!(total > 0.0)) throw DomainError("expectation_wavevector: zero-norm spinor");
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      const double wi = w[static_cast<Eigen::Index>(g.index(ix, iy))];
      acc += wi * Eigen::Vector2d(g.axis_x().k(ix), g.axis_y().k(iy));
    }
  }
  return acc / total;
}

/// Center of |psi|^2 (no periodic unwrapping; keep packets away from edges).
inline Eigen::Vector2d centroid(const Bispinor2D& s) {
  const Grid2D& g = s.grid();
  const Eigen::ArrayXd rho = s.upper().abs2() + s.lower().abs2();
  const double total = rho.sum();
  if (!(total > 0.0)) throw DomainError("centroid: zero-norm spinor");
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    for (std::size_t iy = 0; iy < g.ny(); ++iy) {
      acc += rho[static_cast<Eigen::Index>(g.index(ix, iy))] * Eigen::Vector2d(g.axis_x().x(ix), g.axis_y().x(iy));
    }
  }
  return acc / total;
}

/// Fraction of |psi|^2 at x > x_boundary, relative to the current norm.
inline double transmission_fraction_x(const Bispinor2D& s, double x_boundary) {
  const Grid2D& g = s.grid();
  const Eigen::ArrayXd rho = s.upper().abs2() + s.lower().abs2();
  const double total = rho.sum();
  if (!(total > 0.0)) throw DomainError("transmission_fraction_x: zero-norm spinor");
  double right = 0.0;
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    if (g.axis_x().x(ix) <= x_boundary) continue;
    for (std::size_t iy = 0; iy < g.ny(); ++iy) right += rho[static_cast<Eigen::Index>(g.index(ix, iy))];
  }
  return right / total;
}

}  // namespace cwfsim
