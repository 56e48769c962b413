#pragma once

#include <random>

#include "cwfsim/schrodinger.hpp"

namespace cases {

struct KickCase {
  cwfsim::ComplexField1D psi;
  cwfsim::Potential1D pot;
  double q;
  double dt;
};

/// Random packet, smooth barrier plus noise, absorber, kick and step.
inline KickCase random_kick_case(std::mt19937_64& rng) {
  using namespace cwfsim;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Centered box, packet >= 15 sigma from the edges: the state must be
  // periodic on the grid for the kick to be an exact spectral shift.
  const double len = nm(500.0 + 200.0 * u(rng));
  const Grid1D g(len, 512, -0.5 * len);
  auto psi = gaussian_packet(g, nm(-20.0 + 40.0 * u(rng)), nm(5.0 + 10.0 * u(rng)), (u(rng) - 0.5) * 4e8);
  Eigen::ArrayXd v(g.size());
  const double v0 = ev(0.5 * u(rng));
  const double width = nm(2.0 + 10.0 * u(rng));
  for (std::size_t j = 0; j < g.size(); ++j) {
    v[static_cast<Eigen::Index>(j)] = v0 * std::exp(-std::pow(g.x(j) / width, 2)) + ev(0.02) * u(rng);
  }
  Potential1D pot(g, v, quartic_absorber(g, 0.1 * u(rng), ev(0.2)));
  return {std::move(psi), std::move(pot), (u(rng) - 0.5) * 1e9, fs(0.05 + u(rng))};
}

}  // namespace cases
