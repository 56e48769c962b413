#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cwfsim/constants.hpp"
#include "cwfsim/dirac.hpp"
#include "cwfsim/field.hpp"
#include "cwfsim/grid.hpp"

namespace cwfsim {

/// Nodes: local density below this fraction of the peak density.
inline constexpr double kNodeDensityFraction = 1e-12;

struct TrajectorySample {
  double time;
  Eigen::Vector2d position;
};

/// A Bohmian particle. 1D runs use position.x() only.
struct Trajectory {
  long id = 0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  bool alive = true;
  bool record_history = false;
  std::vector<TrajectorySample> history;
  int frozen_steps = 0;  // substeps skipped at nodes
};

namespace detail {

// 8th-order central first-derivative stencil, offsets 1..4.
inline constexpr double kD1[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};

inline std::size_t wrap(long long j, std::size_t n) {
  const auto nn = static_cast<long long>(n);
  return static_cast<std::size_t>(((j % nn) + nn) % nn);
}

}  // namespace detail

/// Current and density of a 1D field at arbitrary x: psi' by an 8th-order
/// central stencil at the two bracketing grid points, J and rho interpolated
/// linearly between them.
class VelocityField1D {
 public:
  VelocityField1D(const ComplexField1D& field, double mass)
      : VelocityField1D(field, mass, field.values().abs2().maxCoeff()) {}

  /// With a known peak density (e.g. carried over from the previous step).
  VelocityField1D(const ComplexField1D& field, double mass, double peak_density)
      : field_(&field), mass_(mass), peak_(peak_density) {
    if (!(mass > 0.0)) throw DomainError("VelocityField1D: mass must be positive");
  }

  struct Local {
    double current;
    double density;
  };

  Local local(double x) const {
    const Grid1D& g = field_->grid();
    const double s = (x - g.origin()) / g.dx();
    const double fl = std::floor(s);
    const double w = s - fl;
    const auto j0 = static_cast<long long>(fl);
    const Local a = at_node(detail::wrap(j0, g.size()));
    const Local b = at_node(detail::wrap(j0 + 1, g.size()));
    return {(1.0 - w) * a.current + w * b.current, (1.0 - w) * a.density + w * b.density};
  }

  /// Velocity J/rho, or nullopt at a node.
  std::optional<double> velocity(double x) const {
    const Local l = local(x);
    if (!(l.density > kNodeDensityFraction * peak_)) return std::nullopt;
    return l.current / l.density;
  }

  double peak_density() const { return peak_; }
  double mass() const { return mass_; }
  const ComplexField1D& field() const { return *field_; }

  Local at_node(std::size_t j) const {
    const Grid1D& g = field_->grid();
    const auto& v = field_->values();
    Complex d{};
    for (int o = 1; o <= 4; ++o) {
      const auto p = static_cast<Eigen::Index>(detail::wrap(static_cast<long long>(j) + o, g.size()));
      const auto m = static_cast<Eigen::Index>(detail::wrap(static_cast<long long>(j) - o, g.size()));
      d += detail::kD1[o - 1] * (v[p] - v[m]);
    }
    d /= g.dx();
    const Complex psi = v[static_cast<Eigen::Index>(j)];
    return {(phys::hbar / mass_) * (std::conj(psi) * d).imag(), std::norm(psi)};
  }

 private:
  const ComplexField1D* field_;
  double mass_;
  double peak_;
};

/// Bohmian velocity J/|psi|^2 at x; nullopt at a node.
inline std::optional<double> bohm_velocity(const ComplexField1D& field, double x, double mass) {
  return VelocityField1D(field, mass).velocity(x);
}

/// Dirac current v_f psi^dagger sigma psi and density at arbitrary r,
/// bilinearly interpolated.
class VelocityField2D {
 public:
  VelocityField2D(const Bispinor2D& s, double fermi_velocity = kGrapheneFermiVelocity)
      : s_(&s), vf_(fermi_velocity), peak_((s.upper().abs2() + s.lower().abs2()).maxCoeff()) {}

  std::optional<Eigen::Vector2d> velocity(const Eigen::Vector2d& r) const {
    const Grid2D& g = s_->grid();
    const double sx = (r.x() - g.axis_x().origin()) / g.dx();
    const double sy = (r.y() - g.axis_y().origin()) / g.dy();
    const double fx = std::floor(sx), fy = std::floor(sy);
    const double wx = sx - fx, wy = sy - fy;
    const auto ix = static_cast<long long>(fx);
    const auto iy = static_cast<long long>(fy);
    double rho = 0.0;
    Eigen::Vector2d j = Eigen::Vector2d::Zero();
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double w = (a ? wx : 1.0 - wx) * (b ? wy : 1.0 - wy);
        const auto i = static_cast<Eigen::Index>(g.index(detail::wrap(ix + a, g.nx()), detail::wrap(iy + b, g.ny())));
        const Complex u = s_->upper()[i];
        const Complex l = s_->lower()[i];
        const Complex ul = std::conj(u) * l;
        rho += w * (std::norm(u) + std::norm(l));
        j += w * Eigen::Vector2d(2.0 * ul.real(), 2.0 * ul.imag());
      }
    }
    if (!(rho > kNodeDensityFraction * peak_)) return std::nullopt;
    return Eigen::Vector2d(vf_ * j / rho);
  }

 private:
  const Bispinor2D* s_;
  double vf_;
  double peak_;
};

inline std::optional<Eigen::Vector2d> bohm_velocity_dirac(const Bispinor2D& s, const Eigen::Vector2d& r,
                                                          double fermi_velocity = kGrapheneFermiVelocity) {
  return VelocityField2D(s, fermi_velocity).velocity(r);
}

/// Draws `count` positions from |psi|^2: a cell by inverse CDF, then uniform
/// within the cell.
template <class Rng>
std::vector<double> sample_positions(const ComplexField1D& field, std::size_t count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("sample_positions: count must be >= 1");
  const Grid1D& g = field.grid();
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    acc += std::norm(field[j]);
    cdf[j] = acc;
  }
  if (!(acc > 0.0)) throw DomainError("sample_positions: zero-norm field");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = u01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto j = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(g.size()) - 1));
    out.push_back(g.x(j) + (u01(rng) - 0.5) * g.dx());
  }
  return out;
}

template <class Rng>
std::vector<Eigen::Vector2d> sample_positions(const Bispinor2D& s, std::size_t count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("sample_positions: count must be >= 1");
  const Grid2D& g = s.grid();
  const Eigen::ArrayXd rho = s.upper().abs2() + s.lower().abs2();
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) cdf[i] = (acc += rho[static_cast<Eigen::Index>(i)]);
  if (!(acc > 0.0)) throw DomainError("sample_positions: zero-norm spinor");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Eigen::Vector2d> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double u = u01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(g.size()) - 1));
    const std::size_t ix = i / g.ny(), iy = i % g.ny();
    out.emplace_back(g.axis_x().x(ix) + (u01(rng) - 0.5) * g.dx(), g.axis_y().x(iy) + (u01(rng) - 0.5) * g.dy());
  }
  return out;
}

/// Interior region where a trajectory is considered alive.
struct Interval {
  double lo;
  double hi;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// First half of an RK2 midpoint step, evaluated on the field at t: the
/// midpoint position and the local current/density there. Lets callers
/// overwrite the field before the step is finished.
struct MidpointProbe {
  bool frozen = false;
  double xm = 0.0;
  VelocityField1D::Local at_now{0.0, 0.0};
  double peak_now = 0.0;
};

inline MidpointProbe begin_midpoint(const Trajectory& traj, const VelocityField1D& now, double dt) {
  MidpointProbe p;
  p.peak_now = now.peak_density();
  const auto v1 = now.velocity(traj.position.x());
  if (!v1) {
    p.frozen = true;
    return p;
  }
  p.xm = traj.position.x() + 0.5 * dt * *v1;
  p.at_now = now.local(p.xm);
  return p;
}

/// Completes the step with the field at t + dt. The midpoint field is the
/// average of the current and density at t and t + dt.
inline Trajectory finish_midpoint(Trajectory traj, const MidpointProbe& p, const VelocityField1D& next, double dt,
                                  const Interval& interior, double time_after = 0.0) {
  if (!traj.alive) return traj;
  if (p.frozen) {
    ++traj.frozen_steps;
    return traj;
  }
  const auto b = next.local(p.xm);
  const double rho = 0.5 * (p.at_now.density + b.density);
  const double peak = std::max(p.peak_now, next.peak_density());
  if (!(rho > kNodeDensityFraction * peak)) {
    ++traj.frozen_steps;
    return traj;
  }
  const double vm = 0.5 * (p.at_now.current + b.current) / rho;
  traj.position.x() += dt * vm;
  if (!interior.contains(traj.position.x())) traj.alive = false;
  if (traj.record_history) traj.history.push_back({time_after, traj.position});
  return traj;
}

/// RK2 midpoint step of dx/dt = J/rho (pass the same field twice for a
/// frozen field).
inline Trajectory advance_trajectory(Trajectory traj, const VelocityField1D& now, const VelocityField1D& next,
                                     double dt, const Interval& interior, double time_after = 0.0) {
  if (!traj.alive) return traj;
  const MidpointProbe p = begin_midpoint(traj, now, dt);
  return finish_midpoint(std::move(traj), p, next, dt, interior, time_after);
}

inline Trajectory advance_trajectory(Trajectory traj, const ComplexField1D& field, double mass, double dt,
                                     const Interval& interior) {
  const VelocityField1D vf(field, mass);
  return advance_trajectory(std::move(traj), vf, vf, dt, interior);
}

/// RK2 midpoint step for the Dirac current, x-interval bounds the interior.
inline Trajectory advance_trajectory(Trajectory traj, const VelocityField2D& now, const VelocityField2D& next,
                                     double dt, const Interval& interior_x, double time_after = 0.0) {
  if (!traj.alive) return traj;
  const auto v1 = now.velocity(traj.position);
  if (!v1) {
    ++traj.frozen_steps;
    return traj;
  }
  const Eigen::Vector2d rm = traj.position + 0.5 * dt * *v1;
  const auto va = now.velocity(rm);
  const auto vb = next.velocity(rm);
  if (!va || !vb) {
    ++traj.frozen_steps;
    return traj;
  }
  traj.position += dt * 0.5 * (*va + *vb);
  if (!interior_x.contains(traj.position.x())) traj.alive = false;
  if (traj.record_history) traj.history.push_back({time_after, traj.position});
  return traj;
}

/// Reduced density matrix from an ensemble of normalized, block-averaged CWFs.
struct EnsembleDensityMatrix {
  std::size_t dim = 0;
  std::size_t block = 1;
  Eigen::MatrixXcd matrix;
  double weights_sum = 0.0;
  std::vector<double> positions;  // block centers, m
};

/// rho = sum_j p_j |c_j><c_j| / trace, where c_j is the j-th CWF normalized to
/// unity and compressed onto at most `max_dim` blocks by c_m = sum_{j in m} psi_j sqrt(dx/b).
inline EnsembleDensityMatrix ensemble_density_matrix(std::span<const ComplexField1D> cwfs,
                                                     std::span<const double> weights, std::size_t max_dim = 512) {
  if (cwfs.empty()) throw DomainError("ensemble_density_matrix: empty ensemble");
  if (cwfs.size() != weights.size()) throw std::invalid_argument("ensemble_density_matrix: weight count mismatch");
  const Grid1D& g = cwfs.front().grid();
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("ensemble_density_matrix: negative weight");
    wsum += w;
  }
  if (!(wsum > 0.0)) throw DomainError("ensemble_density_matrix: weights sum to zero");
  std::size_t block = 1;
  while (g.size() / block > max_dim) block *= 2;
  const std::size_t dim = g.size() / block;
  const double cell = std::sqrt(g.dx() / static_cast<double>(block));

  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cwfs.size()));
  for (std::size_t n = 0; n < cwfs.size(); ++n) {
    if (!(cwfs[n].grid() == g)) throw GridMismatch("ensemble_density_matrix: CWFs on different grids");
    const double norm = l2_norm(cwfs[n]);
    if (weights[n] == 0.0) continue;
    if (!(norm > 0.0)) throw DomainError("ensemble_density_matrix: zero-norm CWF with nonzero weight");
    const double scale = std::sqrt(weights[n] / wsum) * cell / norm;
    for (std::size_t j = 0; j < g.size(); ++j) {
      c(static_cast<Eigen::Index>(j / block), static_cast<Eigen::Index>(n)) += scale * cwfs[n][j];
    }
  }
  EnsembleDensityMatrix out;
  out.dim = dim;
  out.block = block;
  out.weights_sum = wsum;
  out.matrix = c * c.adjoint();
  const double tr = out.matrix.trace().real();
  if (!(tr > 0.0)) throw DomainError("ensemble_density_matrix: compressed ensemble has zero trace");
  out.matrix /= tr;
  out.positions.resize(dim);
  for (std::size_t m = 0; m < dim; ++m) {
    out.positions[m] = g.x(m * block) + 0.5 * static_cast<double>(block - 1) * g.dx();
  }
  return out;
}

struct PositivityReport {
  double min_eigenvalue = 0.0;
  double trace = 0.0;
  double hermiticity_deviation = 0.0;
  bool positive = false;  // min eigenvalue >= -1e-8 * trace

  bool hermitian(double tol = 1e-10) const { return hermiticity_deviation < tol; }
  bool unit_trace(double tol = 1e-10) const { return std::abs(trace - 1.0) < tol; }
  bool passes() const { return positive && hermitian() && unit_trace(); }
};

inline PositivityReport positivity_report(const Eigen::MatrixXcd& rho) {
  PositivityReport r;
  r.trace = rho.trace().real();
  r.hermiticity_deviation = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  const Eigen::MatrixXcd h = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  r.positive = r.min_eigenvalue >= -1e-8 * r.trace;
  return r;
}

inline PositivityReport positivity_report(const EnsembleDensityMatrix& rho) { return positivity_report(rho.matrix); }

/// Tr(rho O) for a position-diagonal observable evaluated at block centers.
inline double expectation_from_density_matrix(const EnsembleDensityMatrix& rho,
                                              const std::function<double(double)>& observable) {
  double acc = 0.0;
  for (std::size_t m = 0; m < rho.dim; ++m) {
    acc += rho.matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)).real() * observable(rho.positions[m]);
  }
  return acc;
}

/// <O> = sum_j p_j O(x_j) / sum_j p_j over one trajectory per CWF.
inline double expectation_from_trajectories(const std::function<double(double)>& observable,
                                            std::span<const double> positions, std::span<const double> weights) {
  if (positions.size() != weights.size()) throw std::invalid_argument("expectation_from_trajectories: size mismatch");
  double acc = 0.0, wsum = 0.0;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    acc += weights[j] * observable(positions[j]);
    wsum += weights[j];
  }
  if (!(wsum > 0.0)) throw DomainError("expectation_from_trajectories: weights sum to zero");
  return acc / wsum;
}

}  // namespace cwfsim
