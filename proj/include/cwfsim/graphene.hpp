#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cwfsim/bohm.hpp"
#include "cwfsim/constants.hpp"
#include "cwfsim/dirac.hpp"
#include "cwfsim/field.hpp"
#include "cwfsim/grid.hpp"
#include "cwfsim/rng.hpp"
#include "cwfsim/scattering.hpp"

namespace cwfsim {

/// Grid and packet parameters for 2D graphene runs. Lengths in nm, times in fs.
struct GrapheneSettings {
  std::size_t nx = 256;
  std::size_t ny = 256;
  double lx_nm = 1024.0;
  double ly_nm = 1024.0;
  double dt_fs = 0.5;
  double sigma_nm = 40.0;
  double k0 = 2.27e8;  // 1/m
  double fermi_velocity = kGrapheneFermiVelocity;
  double absorber_margin_fraction = 0.0;
  double absorber_strength_ev = 0.3;
  std::size_t trajectories = 32;
  int sample_stride = 10;

  bool operator==(const GrapheneSettings&) const = default;

  Grid2D grid() const { return Grid2D({nm(lx_nm), nm(ly_nm)}, {nx, ny}); }

  void validate() const {
    if (!(dt_fs > 0.0)) throw std::invalid_argument("graphene.dt_fs must be positive");
    if (!(sigma_nm > 0.0)) throw std::invalid_argument("graphene.sigma_nm must be positive");
    if (!(k0 > 0.0)) throw std::invalid_argument("graphene.k0 must be positive");
    if (!(fermi_velocity > 0.0)) throw std::invalid_argument("graphene.fermi_velocity must be positive");
    if (trajectories < 1) throw std::invalid_argument("graphene.trajectories must be >= 1");
    if (sample_stride < 1) throw std::invalid_argument("graphene.sample_stride must be >= 1");
  }
};

/// A scripted single-collision run of one Dirac electron.
struct DiracScenario {
  std::string name;
  Eigen::Vector2d r0 = Eigen::Vector2d::Zero();  // m
  Eigen::Vector2d k0 = Eigen::Vector2d::Zero();  // 1/m
  BandIndex band = BandIndex::conduction();
  double total_time_fs = 300.0;
  std::optional<double> collision_time_fs;
  Eigen::Vector2d kf = Eigen::Vector2d::Zero();
  int band_flip_m = 0;
  // Barrier V0 on x in [barrier_start, barrier_end) (meters), if any.
  double barrier_ev = 0.0;
  double barrier_start = 0.0;
  double barrier_end = 0.0;
};

struct DiracSample {
  double time;
  Eigen::Vector2d centroid;
  Eigen::Vector2d wavevector;
  BandWeights bands;
  double norm;
};

struct DiracRunRecord {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<DiracSample> samples;
  std::vector<Trajectory> trajectories;
  std::optional<CollisionEvent> collision;
  BandWeights final_bands;
  Eigen::Vector2d final_wavevector = Eigen::Vector2d::Zero();
  Eigen::Vector2d post_collision_velocity = Eigen::Vector2d::Zero();  // centroid drift after the collision
  Eigen::Vector2d bohm_mean_velocity = Eigen::Vector2d::Zero();       // mean trajectory drift after the collision
  double transmission = 0.0;  // probability at x > barrier_end
  double final_norm = 1.0;
};

inline Potential2D scenario_potential(const DiracScenario& sc, const GrapheneSettings& s) {
  const Grid2D g = s.grid();
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(g.size());
  if (sc.barrier_ev != 0.0) {
    for (std::size_t ix = 0; ix < g.nx(); ++ix) {
      const double x = g.axis_x().x(ix);
      if (x < sc.barrier_start || x >= sc.barrier_end) continue;
      for (std::size_t iy = 0; iy < g.ny(); ++iy) v[static_cast<Eigen::Index>(g.index(ix, iy))] = ev(sc.barrier_ev);
    }
  }
  return {g, std::move(v),
          s.absorber_margin_fraction > 0.0
              ? quartic_absorber_x(g, s.absorber_margin_fraction, ev(s.absorber_strength_ev))
              : Eigen::ArrayXcd(Eigen::ArrayXcd::Zero(g.size()))};
}

inline DiracRunRecord run_dirac_scenario(const DiracScenario& sc, const GrapheneSettings& s, std::uint64_t seed) {
  s.validate();
  const Grid2D g = s.grid();
  const double dt = fs(s.dt_fs);
  const auto n_steps = static_cast<long>(std::llround(sc.total_time_fs / s.dt_fs));
  const long collision_step =
      sc.collision_time_fs ? static_cast<long>(std::llround(*sc.collision_time_fs / s.dt_fs)) : -1;

  DiracRunRecord rec;
  rec.name = sc.name;
  rec.seed = seed;
  Bispinor2D psi = dirac_gaussian_packet(g, sc.r0, nm(s.sigma_nm), sc.k0, sc.band);
  const Potential2D pot = scenario_potential(sc, s);
  const DiracStepper stepper(g, dt, s.fermi_velocity);
  const Eigen::ArrayXcd half = stepper.half_potential_phase(pot);

  Rng rng = make_rng(seed, 0);
  for (const auto& r : sample_positions(psi, s.trajectories, rng)) {
    Trajectory t;
    t.id = static_cast<long>(rec.trajectories.size());
    t.position = r;
    t.record_history = true;
    t.history.push_back({0.0, r});
    rec.trajectories.push_back(std::move(t));
  }
  const Interval interior{g.axis_x().origin(), g.axis_x().x_max()};

  auto observe = [&](double t) {
    rec.samples.push_back({t, centroid(psi), expectation_wavevector(psi), band_weights(psi), l2_norm(psi)});
  };
  observe(0.0);
  double t_coll = 0.0;
  Eigen::Vector2d c_coll = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> traj_coll;
  for (long n = 0; n < n_steps; ++n) {
    if (n == collision_step) {
      const Eigen::Vector2d k_now = sc.k0;
      const CollisionEvent event = forced_dirac_event(k_now, sc.band, sc.kf, sc.band_flip_m, s.fermi_velocity);
      psi = apply_dirac_collision(psi, to_dirac_collision(event, k_now));
      rec.collision = event;
      rec.collision->time = n * dt;
      t_coll = n * dt;
      c_coll = centroid(psi);
      for (const auto& t : rec.trajectories) traj_coll.push_back(t.position);
    }
    Bispinor2D next = stepper.advance(psi, half);
    {
      const VelocityField2D vnow(psi, s.fermi_velocity);
      const VelocityField2D vnext(next, s.fermi_velocity);
      for (auto& t : rec.trajectories) t = advance_trajectory(std::move(t), vnow, vnext, dt, interior, (n + 1) * dt);
    }
    psi = std::move(next);
    if ((n + 1) % s.sample_stride == 0 || n + 1 == n_steps) observe((n + 1) * dt);
  }
  const double t_end = n_steps * dt;
  rec.final_bands = band_weights(psi);
  rec.final_wavevector = expectation_wavevector(psi);
  rec.final_norm = l2_norm(psi);
  if (sc.barrier_end > sc.barrier_start) rec.transmission = transmission_fraction_x(psi, sc.barrier_end) * rec.final_norm * rec.final_norm;
  if (rec.collision && t_end > t_coll) {
    rec.post_collision_velocity = (centroid(psi) - c_coll) / (t_end - t_coll);
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < rec.trajectories.size(); ++i) acc += rec.trajectories[i].position - traj_coll[i];
    rec.bohm_mean_velocity = acc / static_cast<double>(rec.trajectories.size()) / (t_end - t_coll);
  }
  return rec;
}

/// Collision that rotates k by 45 degrees at 100 fs, keeping the band
/// (m = 0) or flipping it (m = 1).
inline DiracScenario graphene_collision_scenario(int band_flip_m, const GrapheneSettings& s = {}) {
  DiracScenario sc;
  sc.name = band_flip_m ? "collision_band_flip" : "collision_same_band";
  sc.r0 = Eigen::Vector2d(nm(0.5 * s.lx_nm), nm(0.5 * s.ly_nm));
  sc.k0 = Eigen::Vector2d(0.0, s.k0);
  sc.kf = Eigen::Vector2d(s.k0 / std::sqrt(2.0), s.k0 / std::sqrt(2.0));
  sc.band_flip_m = band_flip_m;
  sc.collision_time_fs = 100.0;
  sc.total_time_fs = 250.0;
  return sc;
}

/// 0.4 eV, 200 nm barrier along x for the Klein-tunnelling scenarios.
inline GrapheneSettings klein_settings() {
  GrapheneSettings s;
  s.nx = 512;
  s.ny = 128;
  s.lx_nm = 1536.0;
  s.ly_nm = 768.0;
  s.dt_fs = 0.75;
  s.absorber_margin_fraction = 0.08;
  s.trajectories = 16;
  s.sample_stride = 20;
  return s;
}

enum class KleinCase { normal, oblique, oblique_with_collision };

inline std::string to_string(KleinCase c) {
  switch (c) {
    case KleinCase::normal: return "klein_normal";
    case KleinCase::oblique: return "klein_oblique";
    case KleinCase::oblique_with_collision: return "klein_oblique_collision";
  }
  return "klein";
}

/// Oblique incidence is 30 degrees; the collision turns the packet to normal
/// incidence (same band) before it reaches the barrier.
inline DiracScenario klein_scenario(KleinCase c, const GrapheneSettings& s = klein_settings()) {
  DiracScenario sc;
  sc.name = to_string(c);
  sc.barrier_ev = 0.4;
  sc.barrier_start = nm(700.0);
  sc.barrier_end = nm(900.0);
  sc.r0 = Eigen::Vector2d(nm(320.0), nm(0.5 * s.ly_nm));
  sc.total_time_fs = 900.0;
  const double angle = c == KleinCase::normal ? 0.0 : kPi / 6.0;
  sc.k0 = Eigen::Vector2d(s.k0 * std::cos(angle), s.k0 * std::sin(angle));
  if (c == KleinCase::oblique_with_collision) {
    sc.collision_time_fs = 150.0;
    sc.kf = Eigen::Vector2d(s.k0, 0.0);
    sc.band_flip_m = 0;
  }
  return sc;
}

struct KleinResult {
  DiracRunRecord normal;
  DiracRunRecord oblique;
  DiracRunRecord oblique_with_collision;
};

inline KleinResult klein_preset(std::uint64_t seed, const GrapheneSettings& s = klein_settings()) {
  return {run_dirac_scenario(klein_scenario(KleinCase::normal, s), s, derive_seed(seed, 1)),
          run_dirac_scenario(klein_scenario(KleinCase::oblique, s), s, derive_seed(seed, 2)),
          run_dirac_scenario(klein_scenario(KleinCase::oblique_with_collision, s), s, derive_seed(seed, 3))};
}

}  // namespace cwfsim
