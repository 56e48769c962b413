#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwfsim/collision.hpp"
#include "cwfsim/constants.hpp"
#include "cwfsim/dirac.hpp"

namespace cwfsim {

/// One scattering channel. Rates are inputs (Golden-Rule values from a
/// materials table); emission/absorption pairs should carry the Bose ratio.
struct Mechanism {
  MechanismKind kind = MechanismKind::acoustic_elastic;
  double rate = 0.0;             // 1/s
  double phonon_energy_ev = 0.0;  // 0 for elastic channels
  double temperature_k = 300.0;

  bool operator==(const Mechanism&) const = default;

  void validate() const {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw std::invalid_argument("mechanism rate must be >= 0");
    if (is_elastic(kind) != (phonon_energy_ev == 0.0)) {
      throw std::invalid_argument(std::string("mechanism ") + std::string(to_string(kind)) +
                                  ": phonon energy must be zero iff the channel is elastic");
    }
    if (phonon_energy_ev < 0.0) throw std::invalid_argument("phonon energy must be non-negative");
    if (temperature_k < 0.0) throw std::invalid_argument("temperature must be non-negative");
  }
};

/// Bose-Einstein occupation of a mode of energy e_ev at temperature t_k.
inline double bose_occupation(double e_ev, double t_k) {
  if (t_k <= 0.0) return 0.0;
  const double x = ev(e_ev) / (phys::boltzmann * t_k);
  return x > 700.0 ? 0.0 : 1.0 / std::expm1(x);
}

/// Emission/absorption pair from a spontaneous rate: emission = r0 (N + 1),
/// absorption = r0 N, so emission/absorption = exp(hbar w / kT).
inline std::vector<Mechanism> optical_pair(double spontaneous_rate, double phonon_energy_ev, double temperature_k) {
  const double n = bose_occupation(phonon_energy_ev, temperature_k);
  return {{MechanismKind::optical_emission, spontaneous_rate * (n + 1.0), phonon_energy_ev, temperature_k},
          {MechanismKind::optical_absorption, spontaneous_rate * n, phonon_energy_ev, temperature_k}};
}

inline constexpr double kGaAsOpticalPhononEv = 0.036;
inline constexpr double kGaAsEffectiveMassRatio = 0.067;

/// Desk-scale GaAs table (order 1e12-1e13 1/s). These are configuration
/// defaults, not fitted values.
inline std::vector<Mechanism> gaas_default_mechanisms(double temperature_k = 300.0) {
  std::vector<Mechanism> m{{MechanismKind::acoustic_elastic, 2.0e12, 0.0, temperature_k},
                           {MechanismKind::impurity_elastic, 1.0e12, 0.0, temperature_k}};
  for (const auto& p : optical_pair(4.0e12, kGaAsOpticalPhononEv, temperature_k)) m.push_back(p);
  return m;
}

inline constexpr double kGrapheneOpticalPhononEv = 0.196;

inline std::vector<Mechanism> graphene_default_mechanisms(double temperature_k = 300.0) {
  std::vector<Mechanism> m{{MechanismKind::acoustic_elastic, 1.0e12, 0.0, temperature_k}};
  for (const auto& p : optical_pair(2.0e12, kGrapheneOpticalPhononEv, temperature_k)) m.push_back(p);
  return m;
}

/// Probability of at least one collision in dt at total rate gamma.
inline double collision_probability(double total_rate, double dt) {
  if (!(total_rate >= 0.0)) throw DomainError("collision_probability: negative rate");
  if (!(dt > 0.0)) throw DomainError("collision_probability: dt must be positive");
  return -std::expm1(-total_rate * dt);
}

inline double total_rate(std::span<const Mechanism> mechanisms) {
  double s = 0.0;
  for (const auto& m : mechanisms) s += m.rate;
  return s;
}

namespace detail {
template <class Rng>
const Mechanism* pick_mechanism(std::span<const Mechanism> mechanisms, Rng& rng) {
  const double total = total_rate(mechanisms);
  if (!(total > 0.0)) return nullptr;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng) * total;
  double acc = 0.0;
  for (const auto& m : mechanisms) {
    acc += m.rate;
    if (u < acc) return &m;
  }
  return &mechanisms.back();
}
}  // namespace detail

/// Outcome of a collision for a 1D parabolic-band electron of wave number k,
/// given that a collision happens. Elastic channels backscatter (q = -2k);
/// optical channels move |k| to conserve E +- hbar w, with a random final
/// direction. Emission below threshold yields no event.
template <class Rng>
std::optional<CollisionEvent> select_event_parabolic(double k, double mass, std::span<const Mechanism> mechanisms,
                                                     Rng& rng) {
  const Mechanism* m = detail::pick_mechanism(mechanisms, rng);
  if (m == nullptr) return std::nullopt;
  CollisionEvent event;
  event.mechanism = m->kind;
  if (is_elastic(m->kind)) {
    if (k == 0.0) return std::nullopt;
    event.q = Eigen::Vector2d(-2.0 * k, 0.0);
    return event;
  }
  const double e0 = phys::hbar * phys::hbar * k * k / (2.0 * mass);
  const double de = (m->kind == MechanismKind::optical_emission ? -1.0 : 1.0) * ev(m->phonon_energy_ev);
  const double e1 = e0 + de;
  if (e1 < 0.0) return std::nullopt;
  std::bernoulli_distribution forward(0.5);
  const double k1 = (forward(rng) ? 1.0 : -1.0) * std::sqrt(2.0 * mass * e1) / phys::hbar;
  event.q = Eigen::Vector2d(k1 - k, 0.0);
  event.delta_e_ev = to_ev(de);
  return event;
}

/// |(1 + s s' e^{i(beta0 - betaf)})/2|^2
inline double pseudospin_overlap(int s0, int sf, double beta0, double betaf) {
  return 0.5 * (1.0 + static_cast<double>(s0 * sf) * std::cos(beta0 - betaf));
}

/// Outcome of a collision for a Dirac electron with central wave vector k0 in
/// `band`. The final branch and |kf| follow from s_f hbar v |kf| = s_0 hbar v
/// |k0| + dE; the direction is drawn with the pseudospin-overlap weight.
template <class Rng>
std::optional<CollisionEvent> select_event_dirac(const Eigen::Vector2d& k0, BandIndex band,
                                                 std::span<const Mechanism> mechanisms, Rng& rng,
                                                 double fermi_velocity = kGrapheneFermiVelocity) {
  if (k0.norm() == 0.0) throw DomainError("select_event_dirac: |k0| must be positive");
  const Mechanism* m = detail::pick_mechanism(mechanisms, rng);
  if (m == nullptr) return std::nullopt;
  double de = 0.0;
  if (m->kind == MechanismKind::optical_emission) de = -ev(m->phonon_energy_ev);
  if (m->kind == MechanismKind::optical_absorption) de = ev(m->phonon_energy_ev);
  const double hv = phys::hbar * fermi_velocity;
  const double ef = band.value() * hv * k0.norm() + de;
  if (ef == 0.0) return std::nullopt;
  const int sf = ef > 0.0 ? 1 : -1;
  const double kf_mag = std::abs(ef) / hv;
  const double beta0 = pseudospin_angle(k0);

  // Rejection sampling of the final angle; the weight is bounded by 1 and
  // vanishes only on a set of measure zero.
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double betaf = beta0;
  bool accepted = false;
  for (int attempt = 0; attempt < 10000 && !accepted; ++attempt) {
    betaf = angle(rng);
    accepted = u01(rng) < pseudospin_overlap(band.value(), sf, beta0, betaf);
  }
  if (!accepted) return std::nullopt;

  CollisionEvent event;
  event.mechanism = m->kind;
  const Eigen::Vector2d kf(kf_mag * std::cos(betaf), kf_mag * std::sin(betaf));
  event.q = kf - k0;
  event.delta_e_ev = to_ev(de);
  event.band_flip_m = sf == band.value() ? 0 : 1;
  return event;
}

/// Event with an explicitly chosen final state (used by presets).
inline CollisionEvent forced_dirac_event(const Eigen::Vector2d& k0, BandIndex band, const Eigen::Vector2d& kf,
                                         int band_flip_m, double fermi_velocity = kGrapheneFermiVelocity) {
  if (k0.norm() == 0.0 || kf.norm() == 0.0) throw DomainError("forced_dirac_event: zero wave vector");
  const int sf = band_flip_m ? -band.value() : band.value();
  const double hv = phys::hbar * fermi_velocity;
  CollisionEvent event;
  event.q = kf - k0;
  event.band_flip_m = band_flip_m;
  const double de = hv * (sf * kf.norm() - band.value() * k0.norm());
  // |kf| = |k0| up to rounding counts as elastic.
  event.delta_e_ev = std::abs(de) <= 1e-12 * hv * k0.norm() ? 0.0 : to_ev(de);
  event.mechanism = (event.delta_e_ev == 0.0) ? MechanismKind::acoustic_elastic
                 : event.delta_e_ev < 0.0   ? MechanismKind::optical_emission
                                         : MechanismKind::optical_absorption;
  return event;
}

inline DiracCollision to_dirac_collision(const CollisionEvent& event, const Eigen::Vector2d& k0) {
  return {event.q, k0, k0 + event.q, event.band_flip_m};
}

}  // namespace cwfsim
