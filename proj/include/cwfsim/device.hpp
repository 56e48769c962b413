#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cwfsim/bohm.hpp"
#include "cwfsim/collision.hpp"
#include "cwfsim/constants.hpp"
#include "cwfsim/field.hpp"
#include "cwfsim/grid.hpp"
#include "cwfsim/rng.hpp"
#include "cwfsim/scattering.hpp"
#include "cwfsim/schrodinger.hpp"

namespace cwfsim {

/// Piece of the band profile, in nanometers along the active region.
struct Region {
  double start_nm;
  double end_nm;
  double band_offset_ev;

  bool operator==(const Region&) const = default;
};

/// Geometry and electrical state of a 1D two-terminal device. The active
/// region is [0, total_length]; contacts are the flat leads on either side.
struct DeviceSpec {
  double total_length_nm = 120.0;
  std::vector<Region> regions;
  double fermi_level_ev = 0.15;
  double temperature_k = 300.0;
  double effective_mass_ratio = kGaAsEffectiveMassRatio;
  double applied_bias_v = 0.0;
  double relative_permittivity = 12.9;

  bool operator==(const DeviceSpec&) const = default;

  double mass() const { return effective_mass_ratio * phys::electron_mass; }
  double length() const { return nm(total_length_nm); }

  void validate() const {
    if (!(total_length_nm > 0.0)) throw std::invalid_argument("device.total_length_nm must be positive");
    if (!(effective_mass_ratio > 0.0)) throw std::invalid_argument("device.effective_mass_ratio must be positive");
    if (!(temperature_k >= 0.0)) throw std::invalid_argument("device.temperature_k must be non-negative");
    if (!(relative_permittivity > 0.0)) throw std::invalid_argument("device.relative_permittivity must be positive");
    if (regions.empty()) throw std::invalid_argument("device.regions must not be empty");
    double cursor = 0.0;
    for (const auto& r : regions) {
      if (std::abs(r.start_nm - cursor) > 1e-9 || !(r.end_nm > r.start_nm)) {
        throw std::invalid_argument("device.regions must tile [0, total_length_nm] in order");
      }
      cursor = r.end_nm;
    }
    if (std::abs(cursor - total_length_nm) > 1e-9) {
      throw std::invalid_argument("device.regions must end at total_length_nm");
    }
  }

  /// Band offset (eV) at x in meters; zero outside the active region.
  double band_offset_ev(double x) const {
    const double xn = to_nm(x);
    for (const auto& r : regions) {
      if (xn >= r.start_nm && xn < r.end_nm) return r.band_offset_ev;
    }
    return 0.0;
  }
};

/// Double-barrier GaAs/AlGaAs RTD: 0.5 eV, 1.6 nm barriers around a 2.4 nm
/// well, centered in a 120 nm active region.
inline DeviceSpec rtd_device(double bias_v = 0.0) {
  DeviceSpec d;
  d.total_length_nm = 120.0;
  const double c = 60.0;
  d.regions = {{0.0, c - 2.8, 0.0},
               {c - 2.8, c - 1.2, 0.5},
               {c - 1.2, c + 1.2, 0.0},
               {c + 1.2, c + 2.8, 0.5},
               {c + 2.8, 120.0, 0.0}};
  d.fermi_level_ev = 0.15;
  d.temperature_k = 300.0;
  d.effective_mass_ratio = kGaAsEffectiveMassRatio;
  d.applied_bias_v = bias_v;
  return d;
}

/// Numerical knobs of a device run. Lengths in nm, times in fs unless noted.
struct SimulationSettings {
  std::size_t grid_points = 2048;
  double box_length_nm = 819.2;
  double dt_fs = 0.25;
  double total_time_ps = 5.0;   // injection window
  double max_drain_ps = 10.0;   // extra time for carriers to leave after injection stops
  double absorber_margin_fraction = 0.1;
  double absorber_strength_ev = 0.5;
  double packet_sigma_nm = 40.0;
  double injection_offset_nm = 120.0;  // packet center distance outside the active region
  double retire_distance_nm = 10.0;
  double injection_rate_per_contact = 6.0e13;  // 1/s
  std::size_t electron_cap = 64;
  double cross_section_nm2 = 1.0e5;
  bool coulomb = true;
  int sub_kicks = 1;
  double max_lifetime_ps = 12.0;
  double density_matrix_interval_ps = 1.0;  // <= 0 disables sampling
  std::size_t density_matrix_max_dim = 512;
  int trajectory_sample_stride = 200;  // steps between trajectory samples, <= 0 disables
  bool drain = true;

  bool operator==(const SimulationSettings&) const = default;

  double dt() const { return fs(dt_fs); }

  void validate() const {
    if (!(dt_fs > 0.0)) throw std::invalid_argument("simulation.dt_fs must be positive");
    if (!(total_time_ps > 0.0)) throw std::invalid_argument("simulation.total_time_ps must be positive");
    if (!(box_length_nm > 0.0)) throw std::invalid_argument("simulation.box_length_nm must be positive");
    if (!(packet_sigma_nm > 0.0)) throw std::invalid_argument("simulation.packet_sigma_nm must be positive");
    if (!(injection_rate_per_contact >= 0.0)) throw std::invalid_argument("simulation.injection_rate_per_contact must be >= 0");
    if (!(cross_section_nm2 > 0.0)) throw std::invalid_argument("simulation.cross_section_nm2 must be positive");
    if (!(absorber_margin_fraction >= 0.0 && absorber_margin_fraction < 0.5)) {
      throw std::invalid_argument("simulation.absorber_margin_fraction must be in [0, 0.5)");
    }
    if (!(retire_distance_nm >= 0.0)) throw std::invalid_argument("simulation.retire_distance_nm must be >= 0");
    if (sub_kicks < 1) throw std::invalid_argument("simulation.sub_kicks must be >= 1");
    if (electron_cap < 1) throw std::invalid_argument("simulation.electron_cap must be >= 1");
  }
};

/// Field grid centered on the active region.
inline Grid1D device_grid(const DeviceSpec& device, const SimulationSettings& s) {
  const double box = nm(s.box_length_nm);
  return Grid1D(box, s.grid_points, 0.5 * device.length() - 0.5 * box);
}

/// Band profile plus bias ramp (contacts flat, linear drop across the active region).
inline Eigen::ArrayXd bare_potential(const DeviceSpec& device, const Grid1D& grid) {
  Eigen::ArrayXd v(grid.size());
  const double len = device.length();
  const double nudge = 1e-9 * grid.dx();  // grid points exactly on a region edge belong to the right-hand region
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.x(j) + nudge;
    const double ramp = std::clamp(x / len, 0.0, 1.0);
    v[static_cast<Eigen::Index>(j)] = ev(device.band_offset_ev(x)) - phys::elementary_charge * device.applied_bias_v * ramp;
  }
  return v;
}

/// Mean-field electrostatics over the active region: Dirichlet (zero) at both
/// contacts, charges deposited cloud-in-cell on grid nodes, solved by the
/// Thomas algorithm. Returns potential energy (J) of a test electron.
class PoissonSolver {
 public:
  PoissonSolver(const DeviceSpec& device, const Grid1D& grid, double cross_section_m2)
      : grid_(grid),
        first_(static_cast<std::size_t>(std::lround((0.0 - grid.origin()) / grid.dx()))),
        last_(static_cast<std::size_t>(std::lround((device.length() - grid.origin()) / grid.dx()))),
        source_(phys::elementary_charge * phys::elementary_charge * grid.dx() /
                (device.relative_permittivity * phys::vacuum_permittivity * cross_section_m2)) {
    if (last_ <= first_ + 1 || last_ >= grid.size()) {
      throw std::invalid_argument("PoissonSolver: active region must lie inside the grid");
    }
  }

  std::size_t first_node() const { return first_; }
  std::size_t last_node() const { return last_; }

  /// Node weights for one electron at x (empty if outside the open interval).
  struct Deposit {
    std::size_t node;
    double w_left;  // weight on node, 1 - w_left on node + 1
  };
  std::optional<Deposit> deposit(double x) const {
    const double s = (x - grid_.origin()) / grid_.dx();
    const double fl = std::floor(s);
    if (fl < static_cast<double>(first_) || fl >= static_cast<double>(last_)) return std::nullopt;
    return Deposit{static_cast<std::size_t>(fl), 1.0 - (s - fl)};
  }

  /// Potential energy on the full grid from electrons at `positions`
  /// (zero outside the active region).
  Eigen::ArrayXd solve(std::span<const double> positions) const {
    const std::size_t m = last_ - first_ - 1;  // interior unknowns
    std::vector<double> rhs(m, 0.0);
    auto add = [&](std::size_t node, double w) {
      if (node > first_ && node < last_) rhs[node - first_ - 1] += source_ * w;
    };
    for (double x : positions) {
      if (auto d = deposit(x)) {
        add(d->node, d->w_left);
        add(d->node + 1, 1.0 - d->w_left);
      }
    }
    // -U_{i-1} + 2 U_i - U_{i+1} = rhs_i
    std::vector<double> c(m, 0.0), u(m, 0.0);
    double prev_c = 0.0, prev_u = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double denom = 2.0 + prev_c;  // b - a*c' with a = c = -1
      c[i] = -1.0 / denom;
      u[i] = (rhs[i] + prev_u) / denom;
      prev_c = c[i];
      prev_u = u[i];
    }
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(grid_.size());
    double next = 0.0;
    for (std::size_t i = m; i-- > 0;) {
      next = u[i] - c[i] * next;
      out[static_cast<Eigen::Index>(first_ + 1 + i)] = next;
    }
    return out;
  }

  /// Closed-form discrete Green's function of a single electron at x, added
  /// into `acc` with factor `sign`. Nonzero only on [first, last].
  void add_single(double x, double sign, Eigen::ArrayXd& acc) const {
    auto d = deposit(x);
    if (!d) return;
    const double n = static_cast<double>(last_ - first_);
    auto add_node = [&](std::size_t node, double w) {
      if (node <= first_ || node >= last_ || w == 0.0) return;
      const double a = static_cast<double>(node - first_);
      const double b = static_cast<double>(last_ - node);
      const double s = sign * source_ * w / n;
      for (std::size_t j = first_; j <= last_; ++j) {
        const double jj = static_cast<double>(j - first_);
        const double g = j <= node ? jj * b : a * (n - jj);
        acc[static_cast<Eigen::Index>(j)] += s * g;
      }
    };
    add_node(d->node, d->w_left);
    add_node(d->node + 1, 1.0 - d->w_left);
  }

 private:
  Grid1D grid_;
  std::size_t first_;
  std::size_t last_;
  double source_;
};

/// Potential seen by electron `exclude` (index into positions, or none):
/// band profile + bias ramp + Coulomb from every other electron.
inline Potential1D assemble_potential(const DeviceSpec& device, std::span<const double> positions,
                                      const Grid1D& grid, double cross_section_m2,
                                      std::optional<std::size_t> exclude = std::nullopt,
                                      Eigen::ArrayXcd absorber = {}) {
  if (absorber.size() == 0) absorber = Eigen::ArrayXcd::Zero(grid.size());
  Eigen::ArrayXd v = bare_potential(device, grid);
  if (!positions.empty()) {
    PoissonSolver poisson(device, grid, cross_section_m2);
    v += poisson.solve(positions);
    if (exclude) poisson.add_single(positions[*exclude], -1.0, v);
  }
  return {grid, std::move(v), std::move(absorber)};
}

enum class Contact { left, right };

inline constexpr std::string_view to_string(Contact c) { return c == Contact::left ? "left" : "right"; }

enum class Outcome { inside, transmitted, reflected, absorbed };

inline constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::inside: return "inside";
    case Outcome::transmitted: return "transmitted";
    case Outcome::reflected: return "reflected";
    case Outcome::absorbed: return "absorbed";
  }
  return "unknown";
}

/// One simulated electron: its conditional wave function, trajectory and
/// private random stream.
struct ElectronBundle {
  ComplexField1D field;
  Trajectory trajectory;
  KickState kick;
  double injection_time = 0.0;
  Contact origin = Contact::left;
  Contact last_side = Contact::left;  // for net-crossing bookkeeping
  bool visited = false;               // came within retire distance of the active region
  double injection_energy_ev = 0.0;
  int collisions = 0;
  Rng rng;
  double last_step_dx = 0.0;
  double peak_density = 0.0;  // max |psi|^2 of the current field, 0 if unknown
};

/// Energy distribution of the injected longitudinal flux from a contact at
/// equilibrium: S(E) = kT ln(1 + exp((E_f - E)/kT)), the Fermi-Dirac occupation
/// integrated over transverse states; (E_f - E)^+ at T = 0.
class SupplyFunction {
 public:
  SupplyFunction(double fermi_ev, double temperature_k) {
    const double kt = temperature_k > 0.0 ? to_ev(phys::boltzmann * temperature_k) : 0.0;
    const double emax = std::max(fermi_ev, 0.0) + 12.0 * kt;
    if (!(emax > 0.0)) return;
    const int n = 4096;
    energies_.resize(n + 1);
    cdf_.resize(n + 1);
    auto s = [&](double e) {
      if (kt == 0.0) return std::max(fermi_ev - e, 0.0);
      const double x = (fermi_ev - e) / kt;
      return kt * (x > 40.0 ? x : std::log1p(std::exp(x)));
    };
    double acc = 0.0;
    energies_[0] = 0.0;
    cdf_[0] = 0.0;
    for (int i = 1; i <= n; ++i) {
      const double e0 = emax * (i - 1) / n, e1 = emax * i / n;
      acc += 0.5 * (s(e0) + s(e1)) * (e1 - e0);
      energies_[i] = e1;
      cdf_[i] = acc;
    }
    total_ = acc;
  }

  /// Integrated supply (eV^2); zero means the contact injects nothing.
  double total() const { return total_; }

  template <class R>
  double sample_ev(R& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double u = u01(rng) * total_;
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - cdf_.begin()));
    const double c0 = cdf_[i - 1], c1 = cdf_[i];
    const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    return energies_[i - 1] + w * (energies_[i] - energies_[i - 1]);
  }

 private:
  std::vector<double> energies_;
  std::vector<double> cdf_;
  double total_ = 0.0;
};

/// Creates one electron entering from `contact` with kinetic energy `e_ev`
/// (relative to that contact's band edge).
template <class R>
ElectronBundle make_injected_electron(Contact contact, double e_ev, const DeviceSpec& device,
                                      const SimulationSettings& s, const Grid1D& grid, double time, long id,
                                      std::uint64_t run_seed, R&) {
  const double k = std::sqrt(2.0 * device.mass() * ev(e_ev)) / phys::hbar;
  const double off = nm(s.injection_offset_nm);
  const double x0 = contact == Contact::left ? -off : device.length() + off;
  ElectronBundle b{.field = gaussian_packet(grid, x0, nm(s.packet_sigma_nm), contact == Contact::left ? k : -k),
                   .trajectory = Trajectory{},
                   .kick = KickState{},
                   .injection_time = time,
                   .origin = contact,
                   .last_side = contact,
                   .injection_energy_ev = e_ev,
                   .rng = make_rng(run_seed, 1000003ULL + static_cast<std::uint64_t>(id))};
  b.trajectory.id = id;
  // |psi|^2 conditioned on the absorber-free interior: a start inside the
  // absorber is not a carrier.
  const double margin = s.absorber_margin_fraction * grid.length();
  const Interval interior{grid.origin() + margin, grid.x_max() - margin};
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw DomainError("make_injected_electron: packet lies inside the absorber");
    b.trajectory.position.x() = sample_positions(b.field, 1, b.rng).front();
    if (interior.contains(b.trajectory.position.x())) break;
  }
  return b;
}

/// Draws this step's injections from one contact: Poisson arrivals at the
/// configured rate (zero if the contact supply vanishes), energies from the
/// supply function.
template <class R>
std::vector<ElectronBundle> inject(Contact contact, const DeviceSpec& device, const SimulationSettings& s,
                                   const Grid1D& grid, const SupplyFunction& supply, double dt, double time,
                                   long& next_id, std::uint64_t run_seed, R& rng) {
  if (!(dt > 0.0)) throw DomainError("inject: dt must be positive");
  std::vector<ElectronBundle> out;
  if (!(supply.total() > 0.0) || s.injection_rate_per_contact <= 0.0) return out;
  std::poisson_distribution<int> arrivals(s.injection_rate_per_contact * dt);
  const int n = arrivals(rng);
  for (int i = 0; i < n; ++i) {
    const double e = supply.sample_ev(rng);
    out.push_back(make_injected_electron(contact, e, device, s, grid, time, next_id++, run_seed, rng));
  }
  return out;
}

struct StepRecord {
  double time;
  int alive;
  int inside;
  double ramo_current;  // A
};

struct CrossingRecord {
  double time;
  long id;
  int direction;  // +1 left->right, -1 right->left
};

struct CollisionRecord {
  double time;
  long id;
  MechanismKind mechanism;
  double q;
  double delta_e_ev;
  double x;
};

struct ElectronRecord {
  long id;
  Contact origin;
  double injection_time;
  double exit_time;
  double injection_energy_ev;
  Outcome outcome;
  int collisions;
  bool visited;
};

struct TrajectoryRecord {
  double time;
  long id;
  double x;
};

struct PositivityRecord {
  double time;
  std::size_t members;
  std::size_t dim;
  PositivityReport report;
};

/// Append-only log of one device run, reproducible from (config, seed).
struct RunRecord {
  double bias_v = 0.0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double injection_window = 0.0;
  double end_time = 0.0;
  double active_length = 0.0;
  std::vector<StepRecord> steps;
  std::vector<CrossingRecord> crossings;
  std::vector<CollisionRecord> collisions;
  std::vector<ElectronRecord> electrons;
  std::vector<TrajectoryRecord> trajectories;
  std::vector<PositivityRecord> positivity;
  long injected = 0;
  long transmitted = 0;
  long reflected = 0;
  long absorbed = 0;
  long inside_at_end = 0;
  long rejected_by_cap = 0;

  bool bookkeeping_ok() const { return injected == transmitted + reflected + absorbed + inside_at_end; }
  bool positivity_ok() const {
    return std::all_of(positivity.begin(), positivity.end(), [](const auto& p) { return p.report.passes(); });
  }
};

struct TimeWindow {
  double start;
  double end;
  double length() const { return end - start; }
};

/// I = e (N_lr - N_rl) / T over crossings inside the window.
inline double current_counting(const RunRecord& r, const TimeWindow& w) {
  if (!(w.length() > 0.0)) throw DomainError("current_counting: empty window");
  long net = 0;
  for (const auto& c : r.crossings) {
    if (c.time > w.start && c.time <= w.end) net += c.direction;
  }
  return phys::elementary_charge * static_cast<double>(net) / w.length();
}

/// Time average of the Ramo-Shockley current (e/L) sum v over carriers in the
/// active region.
inline double current_ramo(const RunRecord& r, const TimeWindow& w) {
  if (!(w.length() > 0.0)) throw DomainError("current_ramo: empty window");
  double q = 0.0;
  for (const auto& s : r.steps) {
    if (s.time > w.start && s.time <= w.end) q += s.ramo_current * r.dt;
  }
  return q / w.length();
}

/// Counting-noise scale e sqrt(N_crossings)/T.
inline double current_noise(const RunRecord& r, const TimeWindow& w) {
  long n = 0;
  for (const auto& c : r.crossings) {
    if (c.time > w.start && c.time <= w.end) ++n;
  }
  return phys::elementary_charge * std::sqrt(static_cast<double>(std::max<long>(n, 1))) / w.length();
}

/// Full mutable state of a device run.
class DeviceSimulation {
 public:
  DeviceSimulation(DeviceSpec device, SimulationSettings settings, std::vector<Mechanism> mechanisms,
                   std::uint64_t seed)
      : device_(std::move(device)),
        settings_(std::move(settings)),
        mechanisms_(std::move(mechanisms)),
        seed_(seed),
        grid_(device_grid(device_, settings_)),
        absorber_(quartic_absorber(grid_, settings_.absorber_margin_fraction, ev(settings_.absorber_strength_ev))),
        bare_(bare_potential(device_, grid_)),
        poisson_(device_, grid_, settings_.cross_section_nm2 * 1e-18),
        stepper_(grid_, device_.mass(), settings_.dt()),
        bare_phase_(stepper_.half_potential_phase(Potential1D(grid_, bare_, absorber_))),
        supply_(device_.fermi_level_ev, device_.temperature_k),
        rng_(make_rng(seed, 0)) {
    device_.validate();
    settings_.validate();
    for (const auto& m : mechanisms_) m.validate();
    const double margin = settings_.absorber_margin_fraction * grid_.length();
    interior_ = {grid_.origin() + margin, grid_.x_max() - margin};
    record_.bias_v = device_.applied_bias_v;
    record_.seed = seed;
    record_.dt = settings_.dt();
    record_.injection_window = ps(settings_.total_time_ps);
    record_.active_length = device_.length();
  }

  const Grid1D& grid() const { return grid_; }
  const DeviceSpec& device() const { return device_; }
  const SimulationSettings& settings() const { return settings_; }
  const RunRecord& record() const { return record_; }
  RunRecord take_record() && { return std::move(record_); }
  double time() const { return time_; }
  const std::vector<ElectronBundle>& bundles() const { return bundles_; }
  bool injecting() const { return injecting_; }
  void set_injecting(bool on) { injecting_ = on; }

  /// Adds an electron directly (tests and presets).
  void add_bundle(ElectronBundle b) {
    ++record_.injected;
    bundles_.push_back(std::move(b));
  }
  long next_id() { return next_id_++; }
  std::uint64_t seed() const { return seed_; }

  /// Positions of alive electrons currently contributing charge.
  std::vector<double> charge_positions() const {
    std::vector<double> xs;
    xs.reserve(bundles_.size());
    for (const auto& b : bundles_) xs.push_back(b.trajectory.position.x());
    return xs;
  }

  /// Potential seen by bundle i (Coulomb of all other carriers).
  Potential1D potential_for(std::size_t i) const {
    const auto xs = charge_positions();
    if (!settings_.coulomb) return {grid_, bare_, absorber_};
    return assemble_potential(device_, xs, grid_, settings_.cross_section_nm2 * 1e-18, i, absorber_);
  }

  /// One global step: potential, fields, trajectories, collisions,
  /// injection, retirement, records.
  void run_step() {
    const double dt = settings_.dt();
    const double len = device_.length();
    const double t_next = time_ + dt;

    // Potential assembly: shared part once, self-term removed per electron.
    // Coulomb terms live on the active-region nodes only.
    const std::vector<double> xs = charge_positions();
    const auto first = static_cast<Eigen::Index>(poisson_.first_node());
    const auto count = static_cast<Eigen::Index>(poisson_.last_node() - poisson_.first_node() + 1);
    const double half = dt / (2.0 * phys::hbar);
    Eigen::ArrayXd shared = bare_;
    Eigen::ArrayXcd shared_phase = bare_phase_;
    if (settings_.coulomb && !xs.empty()) {
      const Eigen::ArrayXd u = poisson_.solve(xs).segment(first, count);
      shared.segment(first, count) += u;
      shared_phase.segment(first, count) *= (u * (-half)).unaryExpr([](double a) { return std::polar(1.0, a); });
    }

    double ramo = 0.0;
    int inside = 0;
    Eigen::ArrayXd self = Eigen::ArrayXd::Zero(grid_.size());
    Eigen::ArrayXcd local(count);
    for (std::size_t i = 0; i < bundles_.size(); ++i) {
      ElectronBundle& b = bundles_[i];
      if (b.kick.pending) b.field = apply_pending_kick(b.field, b.kick);
      const bool has_self = settings_.coulomb && poisson_.deposit(xs[i]).has_value();
      if (has_self) {
        self.segment(first, count).setZero();
        poisson_.add_single(xs[i], 1.0, self);
        local = (self.segment(first, count) * half).unaryExpr([](double a) { return std::polar(1.0, a); });
      }
      const double x_old = b.trajectory.position.x();
      if (!(b.peak_density > 0.0)) b.peak_density = b.field.values().abs2().maxCoeff();
      const MidpointProbe probe =
          begin_midpoint(b.trajectory, VelocityField1D(b.field, device_.mass(), b.peak_density), dt);
      Eigen::ArrayXcd psi = std::move(b.field).release();
      stepper_.advance_in_place(psi, shared_phase, first, has_self ? &local : nullptr);
      b.field = ComplexField1D(grid_, std::move(psi));
      b.peak_density = b.field.values().abs2().maxCoeff();
      b.trajectory = finish_midpoint(std::move(b.trajectory), probe,
                                     VelocityField1D(b.field, device_.mass(), b.peak_density), dt, interior_, t_next);
      const double x_new = b.trajectory.position.x();
      b.last_step_dx = x_new - x_old;
      ramo += std::clamp(x_new, 0.0, len) - std::clamp(x_old, 0.0, len);
      if (x_new > 0.0 && x_new < len) ++inside;
      track_crossing(b, t_next);

      if (!mechanisms_.empty() && b.trajectory.alive && x_new > 0.0 && x_new < len && !b.kick.pending) {
        maybe_collide(b, shared, has_self ? &self : nullptr, t_next);
      }
    }
    time_ = t_next;
    ++step_index_;

    if (injecting_) {
      for (Contact c : {Contact::left, Contact::right}) {
        auto fresh = inject(c, device_, settings_, grid_, supply_, dt, time_, next_id_, seed_, rng_);
        for (auto& b : fresh) {
          if (bundles_.size() >= settings_.electron_cap) {
            ++record_.rejected_by_cap;
            continue;
          }
          ++record_.injected;
          bundles_.push_back(std::move(b));
        }
      }
    }

    retire();

    record_.steps.push_back({time_, static_cast<int>(bundles_.size()), inside,
                             phys::elementary_charge * ramo / (len * dt)});
    if (settings_.trajectory_sample_stride > 0 && step_index_ % settings_.trajectory_sample_stride == 0) {
      for (const auto& b : bundles_) record_.trajectories.push_back({time_, b.trajectory.id, b.trajectory.position.x()});
    }
    if (settings_.density_matrix_interval_ps > 0.0 && !bundles_.empty()) {
      const double interval = ps(settings_.density_matrix_interval_ps);
      if (std::floor(time_ / interval) > std::floor((time_ - dt) / interval)) sample_density_matrix();
    }
  }

  /// Injects for the configured window, then optionally drains.
  void run() {
    const double dt = settings_.dt();
    const auto n_inject = static_cast<long>(std::llround(ps(settings_.total_time_ps) / dt));
    for (long n = 0; n < n_inject; ++n) run_step();
    injecting_ = false;
    if (settings_.drain) {
      const auto n_drain = static_cast<long>(std::llround(ps(settings_.max_drain_ps) / dt));
      for (long n = 0; n < n_drain && !bundles_.empty(); ++n) run_step();
    }
    finish();
  }

  void finish() {
    record_.end_time = time_;
    record_.inside_at_end = static_cast<long>(bundles_.size());
    for (const auto& b : bundles_) record_.electrons.push_back(summary(b, Outcome::inside, time_));
  }

  void sample_density_matrix() {
    std::vector<ComplexField1D> fields;
    fields.reserve(bundles_.size());
    for (const auto& b : bundles_) fields.push_back(b.field);
    const std::vector<double> weights(fields.size(), 1.0);
    const auto rho = ensemble_density_matrix(fields, weights, settings_.density_matrix_max_dim);
    record_.positivity.push_back({time_, fields.size(), rho.dim, positivity_report(rho)});
  }

 private:
  void track_crossing(ElectronBundle& b, double t) {
    const double x = b.trajectory.position.x();
    if (x > device_.length() && b.last_side == Contact::left) {
      b.last_side = Contact::right;
      record_.crossings.push_back({t, b.trajectory.id, +1});
    } else if (x < 0.0 && b.last_side == Contact::right) {
      b.last_side = Contact::left;
      record_.crossings.push_back({t, b.trajectory.id, -1});
    }
  }

  void maybe_collide(ElectronBundle& b, const Eigen::ArrayXd& shared, const Eigen::ArrayXd* self, double t) {
    const double p = collision_probability(total_rate(mechanisms_), settings_.dt());
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (u01(b.rng) >= p) return;
    const double x = b.trajectory.position.x();
    // Local kinetic energy of the packet at the trajectory: <H> - V(x).
    Eigen::ArrayXd v = shared;
    if (self) v -= *self;
    const Eigen::ArrayXd rho = b.field.values().abs2();
    const double norm = rho.sum();
    if (!(norm > 0.0)) return;
    const double e_total = kinetic_energy(b.field, device_.mass()) + (rho * v).sum() / norm;
    const double s = (x - grid_.origin()) / grid_.dx();
    const auto j = static_cast<Eigen::Index>(std::clamp(std::lround(s), 0L, static_cast<long>(grid_.size()) - 1));
    const double e_local = e_total - v[j];
    if (!(e_local > 0.0)) return;
    const auto vel = bohm_velocity(b.field, x, device_.mass());
    double dir = vel ? (*vel >= 0.0 ? 1.0 : -1.0) : (expectation_momentum(b.field) >= 0.0 ? 1.0 : -1.0);
    const double k = dir * std::sqrt(2.0 * device_.mass() * e_local) / phys::hbar;
    auto event = select_event_parabolic(k, device_.mass(), mechanisms_, b.rng);
    if (!event) return;
    event->time = t;
    b.kick.schedule(*event, settings_.sub_kicks);
    ++b.collisions;
    record_.collisions.push_back({t, b.trajectory.id, event->mechanism, event->q.x(), event->delta_e_ev, x});
  }

  ElectronRecord summary(const ElectronBundle& b, Outcome o, double t) const {
    return {b.trajectory.id, b.origin, b.injection_time, t, b.injection_energy_ev, o, b.collisions, b.visited};
  }

  void retire() {
    const double d = nm(settings_.retire_distance_nm);
    const double len = device_.length();
    const double max_life = ps(settings_.max_lifetime_ps);
    std::vector<ElectronBundle> keep;
    keep.reserve(bundles_.size());
    for (auto& b : bundles_) {
      const double x = b.trajectory.position.x();
      if (x > -d && x < len + d) b.visited = true;
      std::optional<Outcome> out;
      if (!b.trajectory.alive || time_ - b.injection_time > max_life) {
        out = Outcome::absorbed;
      } else if ((x < -d && (b.visited || b.last_step_dx < 0.0)) || (x > len + d && (b.visited || b.last_step_dx > 0.0))) {
        // Outside and moving away. Bohmian trajectories at the rear of a
        // reflected packet turn around before reaching the device.
        const bool exit_right = x > len + d;
        const bool from_left = b.origin == Contact::left;
        out = exit_right == from_left ? Outcome::transmitted : Outcome::reflected;
      }
      if (!out) {
        keep.push_back(std::move(b));
        continue;
      }
      switch (*out) {
        case Outcome::transmitted: ++record_.transmitted; break;
        case Outcome::reflected: ++record_.reflected; break;
        default: ++record_.absorbed; break;
      }
      record_.electrons.push_back(summary(b, *out, time_));
    }
    bundles_ = std::move(keep);
  }

  DeviceSpec device_;
  SimulationSettings settings_;
  std::vector<Mechanism> mechanisms_;
  std::uint64_t seed_;
  Grid1D grid_;
  Eigen::ArrayXcd absorber_;
  Eigen::ArrayXd bare_;
  PoissonSolver poisson_;
  SplitStepper stepper_;
  Eigen::ArrayXcd bare_phase_;
  SupplyFunction supply_;
  Rng rng_;
  Interval interior_{0.0, 0.0};
  std::vector<ElectronBundle> bundles_;
  RunRecord record_;
  double time_ = 0.0;
  long step_index_ = 0;
  long next_id_ = 0;
  bool injecting_ = true;
};

/// Aggregated collision statistics for one bias point.
struct CollisionStats {
  long total = 0;
  long by_kind[4] = {0, 0, 0, 0};
  long electrons_visiting = 0;
  double per_electron = 0.0;  // collisions per electron that reached the active region
  double per_ps = 0.0;
  double mean_transit_ps = 0.0;  // mean dwell of visiting electrons
};

inline CollisionStats collision_stats(const RunRecord& r) {
  CollisionStats s;
  s.total = static_cast<long>(r.collisions.size());
  for (const auto& c : r.collisions) ++s.by_kind[static_cast<int>(c.mechanism)];
  double dwell = 0.0;
  for (const auto& e : r.electrons) {
    if (!e.visited) continue;
    ++s.electrons_visiting;
    dwell += e.exit_time - e.injection_time;
  }
  if (s.electrons_visiting > 0) {
    s.per_electron = static_cast<double>(s.total) / static_cast<double>(s.electrons_visiting);
    s.mean_transit_ps = dwell / static_cast<double>(s.electrons_visiting) / 1e-12;
  }
  if (r.end_time > 0.0) s.per_ps = static_cast<double>(s.total) / (r.end_time / 1e-12);
  return s;
}

struct IVPoint {
  double bias_v = 0.0;
  double current_counting = 0.0;  // A
  double current_ramo = 0.0;      // A
  double current_noise = 0.0;     // A
  CollisionStats collisions;
  bool bookkeeping_ok = false;
  bool positivity_ok = false;
  long injected = 0;
  long transmitted = 0;
  long reflected = 0;
  long absorbed = 0;
  long inside_at_end = 0;
  long rejected_by_cap = 0;
  std::size_t positivity_samples = 0;

  /// Every injected electron left through a contact before the run ended.
  /// Only then do both estimators count the same transits.
  bool converged() const { return inside_at_end == 0 && absorbed == 0; }

  /// |I_count - I_ramo| / max(|I|, noise).
  double estimator_mismatch() const {
    const double scale = std::max({std::abs(current_counting), std::abs(current_ramo), current_noise});
    return scale > 0.0 ? std::abs(current_counting - current_ramo) / scale : 0.0;
  }
};

inline IVPoint summarize(const RunRecord& r) {
  IVPoint p;
  const TimeWindow w{0.0, r.end_time};
  p.bias_v = r.bias_v;
  p.current_counting = current_counting(r, w);
  p.current_ramo = current_ramo(r, w);
  p.current_noise = current_noise(r, w);
  p.collisions = collision_stats(r);
  p.bookkeeping_ok = r.bookkeeping_ok();
  p.positivity_ok = r.positivity_ok();
  p.injected = r.injected;
  p.transmitted = r.transmitted;
  p.reflected = r.reflected;
  p.absorbed = r.absorbed;
  p.inside_at_end = r.inside_at_end;
  p.rejected_by_cap = r.rejected_by_cap;
  p.positivity_samples = r.positivity.size();
  return p;
}

inline RunRecord run_device(const DeviceSpec& device, const SimulationSettings& settings,
                            const std::vector<Mechanism>& mechanisms, std::uint64_t seed) {
  DeviceSimulation sim(device, settings, mechanisms, seed);
  sim.run();
  return std::move(sim).take_record();
}

struct SweepResult {
  std::vector<IVPoint> points;
  std::vector<RunRecord> records;
};

/// Independent run per bias (seed derived from the sweep seed and bias index),
/// spread over `threads` workers. Results are in bias order regardless of
/// scheduling.
using SweepProgress = std::function<void(std::size_t index, const IVPoint& point, double seconds)>;

inline SweepResult iv_sweep(const DeviceSpec& device, const SimulationSettings& settings,
                            std::span<const double> biases, const std::vector<Mechanism>& mechanisms,
                            std::uint64_t seed, unsigned threads = 1, bool keep_records = false,
                            const SweepProgress& progress = {}) {
  SweepResult out;
  out.points.resize(biases.size());
  if (keep_records) out.records.resize(biases.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < biases.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      DeviceSpec d = device;
      d.applied_bias_v = biases[i];
      RunRecord r = run_device(d, settings, mechanisms, derive_seed(seed, 7919ULL + i));
      out.points[i] = summarize(r);
      if (keep_records) out.records[i] = std::move(r);
      if (progress) {
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(report);
        progress(i, out.points[i], sec);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(biases.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace cwfsim
