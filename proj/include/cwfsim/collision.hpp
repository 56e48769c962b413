#pragma once

#include <Eigen/Core>
#include <optional>
#include <string_view>

namespace cwfsim {

enum class MechanismKind { acoustic_elastic, impurity_elastic, optical_emission, optical_absorption };

inline constexpr std::string_view to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::acoustic_elastic: return "acoustic_elastic";
    case MechanismKind::impurity_elastic: return "impurity_elastic";
    case MechanismKind::optical_emission: return "optical_emission";
    case MechanismKind::optical_absorption: return "optical_absorption";
  }
  return "unknown";
}

inline constexpr std::optional<MechanismKind> parse_mechanism_kind(std::string_view s) {
  for (auto k : {MechanismKind::acoustic_elastic, MechanismKind::impurity_elastic, MechanismKind::optical_emission,
                 MechanismKind::optical_absorption}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline constexpr bool is_elastic(MechanismKind k) {
  return k == MechanismKind::acoustic_elastic || k == MechanismKind::impurity_elastic;
}

/// One sampled phonon/impurity collision. For 1D events only q.x() is used.
struct CollisionEvent {
  MechanismKind mechanism = MechanismKind::acoustic_elastic;
  Eigen::Vector2d q = Eigen::Vector2d::Zero();  // momentum transfer / hbar, 1/m
  double delta_e_ev = 0.0;                      // 0 or +-hbar*omega (or band-change energy)
  int band_flip_m = 0;                          // Dirac only
  double time = 0.0;                            // s
};

}  // namespace cwfsim
