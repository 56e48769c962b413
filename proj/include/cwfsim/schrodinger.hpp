#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "cwfsim/collision.hpp"
#include "cwfsim/constants.hpp"
#include "cwfsim/fft.hpp"
#include "cwfsim/field.hpp"
#include "cwfsim/grid.hpp"

namespace cwfsim {

/// Real potential energy plus a complex absorbing layer, both in joules.
class Potential1D {
 public:
  explicit Potential1D(Grid1D grid)
      : grid_(grid), values_(Eigen::ArrayXd::Zero(grid.size())), absorber_(Eigen::ArrayXcd::Zero(grid.size())) {}
  Potential1D(Grid1D grid, Eigen::ArrayXd values, Eigen::ArrayXcd absorber)
      : grid_(grid), values_(std::move(values)), absorber_(std::move(absorber)) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    if (values_.size() != n || absorber_.size() != n) throw GridMismatch("Potential1D: array size mismatch");
    if ((absorber_.imag() > 0.0).any()) throw std::invalid_argument("Potential1D: absorber must not amplify");
  }
  Potential1D(Grid1D grid, Eigen::ArrayXd values)
      : Potential1D(grid, std::move(values), Eigen::ArrayXcd::Zero(grid.size())) {}

  const Grid1D& grid() const { return grid_; }
  const Eigen::ArrayXd& values() const { return values_; }
  const Eigen::ArrayXcd& absorber() const { return absorber_; }

  Potential1D with_values(Eigen::ArrayXd v) const { return {grid_, std::move(v), absorber_}; }

 private:
  Grid1D grid_;
  Eigen::ArrayXd values_;
  Eigen::ArrayXcd absorber_;
};

/// Quartic negative-imaginary ramp over `margin_fraction` of the box at each
/// edge, reaching -i*strength at the box boundary.
inline Eigen::ArrayXcd quartic_absorber(const Grid1D& grid, double margin_fraction, double strength) {
  Eigen::ArrayXcd w = Eigen::ArrayXcd::Zero(grid.size());
  if (margin_fraction <= 0.0) return w;
  const double margin = margin_fraction * grid.length();
  const double lo = grid.origin() + margin;
  const double hi = grid.x_max() - margin;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.x(j);
    double d = 0.0;
    if (x < lo) d = (lo - x) / margin;
    if (x > hi) d = (x - hi) / margin;
    if (d > 0.0) w[static_cast<Eigen::Index>(j)] = Complex{0.0, -strength * d * d * d * d};
  }
  return w;
}

/// Momentum-kick bookkeeping for one conditional wave function. Kicks are
/// applied as phase factors; `pending` holds a collision still being spread
/// over `sub_kicks_total` steps.
struct KickState {
  double lambda_accum = 0.0;  // kg m/s, sum of applied hbar*q
  std::optional<CollisionEvent> pending;
  int sub_kicks_total = 1;
  int sub_kicks_done = 0;

  void schedule(const CollisionEvent& ev, int sub_kicks = 1) {
    pending = ev;
    sub_kicks_total = std::max(1, sub_kicks);
    sub_kicks_done = 0;
  }
};

/// psi -> exp(i q x) psi with q rounded to the grid.
inline ComplexField1D apply_kick(const ComplexField1D& field, double q) {
  const Grid1D& g = field.grid();
  const double qr = g.round_k(q);
  if (qr == 0.0) return field;
  Eigen::ArrayXcd v = field.values();
  for (std::size_t j = 0; j < g.size(); ++j) v[static_cast<Eigen::Index>(j)] *= std::exp(kI * qr * g.x(j));
  return {g, std::move(v)};
}

/// Applies the next slice of a pending kick (if any) and updates the
/// accumulated momentum. Slices are grid-rounded cumulatively so they sum to
/// the rounded total exactly.
inline ComplexField1D apply_pending_kick(const ComplexField1D& field, KickState& kick) {
  if (!kick.pending) return field;
  const Grid1D& g = field.grid();
  const double q = kick.pending->q.x();
  const int n = kick.sub_kicks_total;
  const int i = kick.sub_kicks_done;
  const double slice = g.round_k(q * (i + 1) / n) - g.round_k(q * i / n);
  ComplexField1D out = apply_kick(field, slice);
  kick.lambda_accum += phys::hbar * slice;
  if (++kick.sub_kicks_done >= n) kick.pending.reset();
  return out;
}

/// Precomputed Strang splitting for a fixed (grid, mass, dt, momentum shift).
/// Kinetic factor exp(-i (hbar k + lambda)^2 dt / (2 m hbar)) with k + lambda/hbar
/// folded back into the first Brillouin zone of the grid, so that a
/// grid-representable shift is exactly a cyclic relabelling of modes.
class SplitStepper {
 public:
  SplitStepper(const Grid1D& grid, double mass, double dt, double momentum_shift = 0.0)
      : grid_(grid), dt_(dt), kinetic_(grid.size()) {
    if (!(mass > 0.0)) throw DomainError("SplitStepper: mass must be positive");
    if (!(dt != 0.0) || !std::isfinite(dt)) throw DomainError("SplitStepper: dt must be finite and nonzero");
    const double band = 2.0 * kPi / grid.dx();
    const double kmin = -kPi / grid.dx();
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double k = grid.k(j) + momentum_shift / phys::hbar;
      k = kmin + std::fmod(std::fmod(k - kmin, band) + band, band);
      const double p = phys::hbar * k;
      kinetic_[static_cast<Eigen::Index>(j)] =
          std::exp(-kI * (p * p / (2.0 * mass)) * dt / phys::hbar) / static_cast<double>(grid.size());
    }
  }

  const Grid1D& grid() const { return grid_; }
  double dt() const { return dt_; }

  /// exp(-i (V + W) dt / (2 hbar)) for the given potential.
  Eigen::ArrayXcd half_potential_phase(const Potential1D& pot) const {
    if (!(pot.grid() == grid_)) throw GridMismatch("SplitStepper: potential grid mismatch");
    const double c = dt_ / (2.0 * phys::hbar);
    Eigen::ArrayXcd h(grid_.size());
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      const Complex v = pot.values()[j] + pot.absorber()[j];
      h[j] = std::exp(-kI * v * c);
    }
    return h;
  }

  /// One step using a precomputed half-potential phase array.
  Eigen::ArrayXcd advance(Eigen::ArrayXcd psi, const Eigen::ArrayXcd& half_phase) const {
    advance_in_place(psi, half_phase);
    return psi;
  }

  /// In-place step; `local`, if given, multiplies the half phase on the
  /// segment starting at `local_first` (a per-particle correction).
  void advance_in_place(Eigen::ArrayXcd& psi, const Eigen::ArrayXcd& half_phase, Eigen::Index local_first = 0,
                        const Eigen::ArrayXcd* local = nullptr) const {
    psi *= half_phase;
    if (local) psi.segment(local_first, local->size()) *= *local;
    fft::forward(psi);
    psi *= kinetic_;  // carries the 1/n of the inverse transform
    fft::backward_unnormalized(psi);
    psi *= half_phase;
    if (local) psi.segment(local_first, local->size()) *= *local;
  }

 private:
  Grid1D grid_;
  double dt_;
  Eigen::ArrayXcd kinetic_;
};

/// One Strang step of i hbar dpsi/dt = [(p + lambda)^2/2m + V + W] psi:
/// half potential, full kinetic in the spectral domain, half potential.
inline ComplexField1D step(const ComplexField1D& field, const Potential1D& pot, double mass, double dt,
                           double momentum_shift = 0.0) {
  if (!(field.grid() == pot.grid())) throw GridMismatch("step: field and potential grids differ");
  if (!(dt > 0.0)) throw DomainError("step: dt must be positive");
  SplitStepper stepper(field.grid(), mass, dt, momentum_shift);
  return {field.grid(), stepper.advance(field.values(), stepper.half_potential_phase(pot))};
}

/// Checks U_H[e^{iqx} psi] == e^{iqx} U_{H(p + hbar q)}[psi] on the grid.
/// Returns max pointwise deviation relative to max |psi|.
inline double verify_kick_identity(const ComplexField1D& field, const Potential1D& pot, double mass, double dt,
                                   double q) {
  const double qr = field.grid().round_k(q);
  const ComplexField1D lhs = step(apply_kick(field, qr), pot, mass, dt);
  const ComplexField1D rhs = apply_kick(step(field, pot, mass, dt, phys::hbar * qr), qr);
  const double scale = field.values().abs().maxCoeff();
  if (!(scale > 0.0)) return 0.0;
  return (lhs.values() - rhs.values()).abs().maxCoeff() / scale;
}

/// Fraction of |psi|^2 beyond x_boundary; each sample owns the cell
/// [x_j - dx/2, x_j + dx/2).
inline double transmission_fraction(const ComplexField1D& field, double x_boundary) {
  const Grid1D& g = field.grid();
  if (x_boundary < g.origin() || x_boundary > g.x_max()) {
    throw DomainError("transmission_fraction: boundary outside grid");
  }
  const Eigen::ArrayXd rho = field.values().abs2();
  const double total = rho.sum();
  if (!(total > 0.0)) throw DomainError("transmission_fraction: zero-norm field");
  double right = 0.0;
  const double dx = g.dx();
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double lo = g.x(j) - 0.5 * dx;
    const double frac = std::clamp((lo + dx - x_boundary) / dx, 0.0, 1.0);
    right += frac * rho[static_cast<Eigen::Index>(j)];
  }
  return right / total;
}

/// Kinetic-energy expectation hbar^2 <k^2> / 2m.
inline double kinetic_energy(const ComplexField1D& field, double mass) {
  return phys::hbar * phys::hbar * expectation_k_squared(field) / (2.0 * mass);
}

}  // namespace cwfsim
