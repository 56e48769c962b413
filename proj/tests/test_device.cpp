#include <gtest/gtest.h>

#include "cwfsim/device.hpp"
#include "support/oracles.hpp"

using namespace cwfsim;

namespace {

DeviceSpec flat_device(double bias = 0.0) {
  DeviceSpec d;
  d.regions = {{0.0, 120.0, 0.0}};
  d.applied_bias_v = bias;
  return d;
}

SimulationSettings quiet_settings() {
  SimulationSettings s;
  s.injection_rate_per_contact = 0.0;
  s.density_matrix_interval_ps = 0.0;
  s.trajectory_sample_stride = 0;
  return s;
}

}  // namespace

TEST(DeviceSpec, RtdGeometry) {
  const auto d = rtd_device();
  ASSERT_NO_THROW(d.validate());
  EXPECT_DOUBLE_EQ(d.fermi_level_ev, 0.15);
  EXPECT_DOUBLE_EQ(d.effective_mass_ratio, 0.067);
  ASSERT_EQ(d.regions.size(), 5u);
  EXPECT_NEAR(d.regions[1].end_nm - d.regions[1].start_nm, 1.6, 1e-12);
  EXPECT_NEAR(d.regions[2].end_nm - d.regions[2].start_nm, 2.4, 1e-12);
  EXPECT_NEAR(d.regions[3].end_nm - d.regions[3].start_nm, 1.6, 1e-12);
  EXPECT_EQ(d.regions[1].band_offset_ev, 0.5);
  EXPECT_EQ(d.regions[3].band_offset_ev, 0.5);
}

TEST(DeviceSpec, RegionsMustTile) {
  auto d = flat_device();
  d.regions = {{0.0, 50.0, 0.0}, {60.0, 120.0, 0.0}};
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.regions = {{0.0, 100.0, 0.0}};
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.regions.clear();
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(Potential, NoElectronsZeroBiasIsBandProfile) {
  const auto d = rtd_device();
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const auto pot = assemble_potential(d, {}, g, 1e-13);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double xn = to_nm(g.x(j));
    const bool barrier = (xn > 57.2 + 1e-6 && xn < 58.8 - 1e-6) || (xn > 61.2 + 1e-6 && xn < 62.8 - 1e-6);
    const bool edge = std::abs(xn - 57.2) < 1e-6 || std::abs(xn - 58.8) < 1e-6 || std::abs(xn - 61.2) < 1e-6 ||
                      std::abs(xn - 62.8) < 1e-6;
    if (edge) continue;
    EXPECT_EQ(pot.values()[static_cast<Eigen::Index>(j)], barrier ? ev(0.5) : 0.0) << xn;
  }
}

TEST(Potential, FlatBandBiasIsLinearRamp) {
  const auto d = flat_device(0.3);
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const auto pot = assemble_potential(d, {}, g, 1e-13);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double x = g.x(j);
    const double expect = -oracle::q_e * 0.3 * std::clamp(x / nm(120.0), 0.0, 1.0);
    EXPECT_NEAR(pot.values()[static_cast<Eigen::Index>(j)], expect, 1e-9 * oracle::q_e * 0.3);
  }
}

TEST(Poisson, PointChargeMatchesDenseSolve) {
  const auto d = flat_device();
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const double area = 1e-13;
  const PoissonSolver p(d, g, area);
  const std::size_t n0 = p.first_node(), n1 = p.last_node();
  EXPECT_NEAR(g.x(n0), 0.0, 1e-9 * g.dx());
  EXPECT_NEAR(g.x(n1), nm(120.0), 1e-9 * g.dx());
  const double source = oracle::q_e * oracle::q_e * g.dx() / (d.relative_permittivity * oracle::eps0 * area);
  for (double frac : {0.5, 0.31}) {
    const double x = nm(120.0) * frac + 0.37 * g.dx() * (frac != 0.5);
    const std::vector<double> xs{x};
    const Eigen::ArrayXd u = p.solve(xs);
    // Cloud-in-cell weights on the two bracketing interior nodes.
    const double sidx = (x - g.origin()) / g.dx();
    const auto jl = static_cast<std::size_t>(std::floor(sidx));
    const double wl = 1.0 - (sidx - std::floor(sidx));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n1 - n0 - 1));
    rhs[static_cast<Eigen::Index>(jl - n0 - 1)] += source * wl;
    rhs[static_cast<Eigen::Index>(jl - n0)] += source * (1.0 - wl);
    const Eigen::VectorXd ref = oracle::dense_dirichlet_laplacian_solve(rhs);
    const double scale = ref.cwiseAbs().maxCoeff();
    for (std::size_t j = n0 + 1; j < n1; ++j) {
      EXPECT_NEAR(u[static_cast<Eigen::Index>(j)], ref[static_cast<Eigen::Index>(j - n0 - 1)], 1e-10 * scale);
    }
    EXPECT_EQ(u[static_cast<Eigen::Index>(n0)], 0.0);
    EXPECT_EQ(u[static_cast<Eigen::Index>(n1)], 0.0);
    EXPECT_EQ(u[static_cast<Eigen::Index>(n0 - 5)], 0.0);
    // Repulsive and piecewise linear: second differences vanish away from the charge.
    EXPECT_GT(u.maxCoeff(), 0.0);
    for (std::size_t j = n0 + 1; j < n1; ++j) {
      if (j == jl || j == jl + 1) continue;
      const double d2 = u[static_cast<Eigen::Index>(j - 1)] - 2.0 * u[static_cast<Eigen::Index>(j)] + u[static_cast<Eigen::Index>(j + 1)];
      EXPECT_NEAR(d2, 0.0, 1e-10 * scale);
    }
  }
}

TEST(Poisson, SelfTermMatchesSingleChargeSolve) {
  const auto d = rtd_device();
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const PoissonSolver p(d, g, 1e-13);
  for (double x : {nm(3.3), nm(59.95), nm(111.1)}) {
    const std::vector<double> xs{x};
    const Eigen::ArrayXd direct = p.solve(xs);
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(g.size());
    p.add_single(x, 1.0, acc);
    EXPECT_LT((acc - direct).abs().maxCoeff(), 1e-12 * direct.abs().maxCoeff());
  }
  // Outside the active region nothing is deposited.
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(g.size());
  p.add_single(nm(-5.0), 1.0, acc);
  EXPECT_EQ(acc.abs().maxCoeff(), 0.0);
}

TEST(Poisson, ExcludedElectronSeesOnlyOthers) {
  const auto d = rtd_device(0.2);
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const std::vector<double> xs{nm(20.0), nm(70.3), nm(99.0)};
  const auto with_exclusion = assemble_potential(d, xs, g, 1e-13, 1);
  const std::vector<double> others{nm(20.0), nm(99.0)};
  const auto reference = assemble_potential(d, others, g, 1e-13);
  EXPECT_LT((with_exclusion.values() - reference.values()).abs().maxCoeff(), 1e-12 * ev(0.5));
}

TEST(Supply, ZeroTemperatureEnergiesFollowLinearSupply) {
  const SupplyFunction sf(0.15, 0.0);
  auto rng = make_rng(3, 0);
  std::vector<double> es;
  for (int i = 0; i < 20000; ++i) es.push_back(sf.sample_ev(rng));
  EXPECT_LE(*std::max_element(es.begin(), es.end()), 0.15);
  EXPECT_GE(*std::min_element(es.begin(), es.end()), 0.0);
  // Density proportional to (Ef - E) on [0, Ef].
  const double dist = oracle::ks_distance(es, [](double e) { return 1.0 - std::pow(1.0 - e / 0.15, 2); });
  EXPECT_LT(dist, oracle::ks_critical_1pct(es.size()));
}

TEST(Supply, RoomTemperatureMatchesLogisticIntegral) {
  const double kt = oracle::k_b * 300.0 / oracle::q_e;
  const SupplyFunction sf(0.15, 300.0);
  auto rng = make_rng(4, 0);
  std::vector<double> es;
  for (int i = 0; i < 20000; ++i) es.push_back(sf.sample_ev(rng));
  // Reference CDF by fine quadrature of ln(1 + exp((Ef - E)/kT)) on [0, Ef + 12 kT].
  const int n = 200000;
  const double emax = 0.15 + 12.0 * kt;
  std::vector<double> cdf(n + 1, 0.0);
  for (int i = 1; i <= n; ++i) {
    const double e = emax * (i - 0.5) / n;
    cdf[static_cast<std::size_t>(i)] = cdf[static_cast<std::size_t>(i - 1)] + std::log1p(std::exp((0.15 - e) / kt));
  }
  for (auto& c : cdf) c /= cdf.back();
  const double dist = oracle::ks_distance(es, [&](double e) {
    const double s = std::clamp(e / emax * n, 0.0, static_cast<double>(n));
    const auto i = static_cast<std::size_t>(std::min(s, n - 1.0));
    return cdf[i] + (s - static_cast<double>(i)) * (cdf[i + 1] - cdf[i]);
  });
  EXPECT_LT(dist, oracle::ks_critical_1pct(es.size()));
}

TEST(Injection, NoSupplyMeansNoElectrons) {
  auto d = rtd_device();
  d.fermi_level_ev = 0.0;
  d.temperature_k = 0.0;
  SimulationSettings s;
  s.density_matrix_interval_ps = 0.0;
  s.trajectory_sample_stride = 0;
  DeviceSimulation sim(d, s, {}, 5);
  for (int n = 0; n < 10000; ++n) sim.run_step();
  EXPECT_EQ(sim.record().injected, 0);
  EXPECT_TRUE(sim.bundles().empty());
  EXPECT_NEAR(sim.time(), 10000 * s.dt(), 1e-9 * sim.time());
}

TEST(Injection, PacketHasConfiguredSpectralWidth) {
  const auto d = rtd_device();
  const SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  auto rng = make_rng(1, 0);
  const auto b = make_injected_electron(Contact::right, 0.1, d, s, g, 0.0, 0, 1, rng);
  const auto spec = to_momentum_space(b.field);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double p = std::norm(spec.amplitudes[static_cast<Eigen::Index>(j)]), k = g.k(j);
    m0 += p;
    m1 += p * k;
    m2 += p * k * k;
  }
  const double sk = std::sqrt(m2 / m0 - (m1 / m0) * (m1 / m0));
  // Packet sits 5.7 sigma from the box edge; the periodic tail costs ~1e-5.
  EXPECT_NEAR(sk * 2.0 * nm(40.0), 1.0, 1e-4);
  EXPECT_LT(m1, 0.0);  // right contact moves left
  EXPECT_GT(b.trajectory.position.x(), nm(120.0));
}

TEST(Injection, StartPositionAvoidsAbsorber) {
  const auto d = rtd_device();
  SimulationSettings s;
  const Grid1D g = device_grid(d, s);
  const double lo = g.origin() + s.absorber_margin_fraction * g.length();
  // Packet centered on the absorber edge: half of |psi|^2 lies inside it.
  s.injection_offset_nm = -lo / nm(1.0);
  auto rng = make_rng(4, 0);
  for (long id = 0; id < 400; ++id) {
    const auto b = make_injected_electron(Contact::left, 0.1, d, s, g, 0.0, id, 1, rng);
    EXPECT_GE(b.trajectory.position.x(), lo) << "electron " << id;
  }
}

TEST(DeviceRun, DrainWaitsForElectronsStillInTheLeads) {
  auto s = quiet_settings();
  s.coulomb = false;
  s.total_time_ps = 0.01;
  const auto d = flat_device();
  DeviceSimulation sim(d, s, {}, 1);
  auto rng = make_rng(6, 0);
  sim.add_bundle(make_injected_electron(Contact::left, 0.05, d, s, sim.grid(), 0.0, sim.next_id(), 1, rng));
  sim.run();
  const auto& r = sim.record();
  EXPECT_EQ(r.inside_at_end, 0);
  EXPECT_EQ(r.transmitted, 1);
  // 250 nm of lead and device at ~5.1e5 m/s, far past the 0.01 ps window.
  EXPECT_GT(r.end_time, ps(0.4));
}

TEST(DeviceRun, EmptyDeviceOnlyAdvancesTime) {
  DeviceSimulation sim(rtd_device(), quiet_settings(), {}, 1);
  for (int n = 0; n < 50; ++n) sim.run_step();
  EXPECT_TRUE(sim.bundles().empty());
  EXPECT_EQ(sim.record().steps.size(), 50u);
  EXPECT_TRUE(sim.record().crossings.empty());
  for (const auto& st : sim.record().steps) EXPECT_EQ(st.ramo_current, 0.0);
}

TEST(DeviceRun, SingleBallisticElectronMatchesBareStepping) {
  auto s = quiet_settings();
  s.coulomb = false;
  const auto d = rtd_device(0.2);
  DeviceSimulation sim(d, s, {}, 1);
  auto rng = make_rng(9, 0);
  auto b = make_injected_electron(Contact::left, 0.12, d, s, sim.grid(), 0.0, sim.next_id(), 1, rng);
  Eigen::ArrayXcd ref = b.field.values();
  sim.add_bundle(std::move(b));
  const SplitStepper st(sim.grid(), d.mass(), s.dt());
  const auto half = st.half_potential_phase(Potential1D(
      sim.grid(), bare_potential(d, sim.grid()),
      quartic_absorber(sim.grid(), s.absorber_margin_fraction, ev(s.absorber_strength_ev))));
  for (int n = 0; n < 300; ++n) {
    sim.run_step();
    ref = st.advance(ref, half);
  }
  ASSERT_EQ(sim.bundles().size(), 1u);
  EXPECT_LT((sim.bundles()[0].field.values() - ref).abs().maxCoeff(), 1e-12 * ref.abs().maxCoeff());
}

TEST(DeviceRun, OneTransitCarriesOneElectronCharge) {
  auto s = quiet_settings();
  s.coulomb = false;
  s.total_time_ps = 0.2;
  const auto d = flat_device();
  DeviceSimulation sim(d, s, {}, 1);
  auto rng = make_rng(2, 0);
  sim.add_bundle(make_injected_electron(Contact::left, 0.2, d, s, sim.grid(), 0.0, sim.next_id(), 1, rng));
  sim.run();
  const auto& r = sim.record();
  ASSERT_EQ(r.transmitted, 1);
  ASSERT_TRUE(r.bookkeeping_ok());
  const TimeWindow w{0.0, r.end_time};
  EXPECT_NEAR(current_counting(r, w) * w.length(), oracle::q_e, 1e-12 * oracle::q_e);
  EXPECT_NEAR(current_ramo(r, w) * w.length(), oracle::q_e, 1e-9 * oracle::q_e);
}

TEST(Estimators, CountingArithmetic) {
  RunRecord r;
  for (int i = 0; i < 12; ++i) r.crossings.push_back({1e-13 * (i + 1), i, +1});
  r.crossings.push_back({2e-12, 20, -1});
  r.crossings.push_back({3e-12, 21, -1});
  EXPECT_NEAR(current_counting(r, {0.0, 5e-12}), 3.2044e-7, 1e-4 * 3.2044e-7);
  RunRecord balanced;
  balanced.crossings = {{1e-12, 0, +1}, {2e-12, 1, -1}};
  EXPECT_EQ(current_counting(balanced, {0.0, 5e-12}), 0.0);
  EXPECT_EQ(current_counting(RunRecord{}, {0.0, 5e-12}), 0.0);
  EXPECT_THROW(current_counting(r, {1.0, 1.0}), DomainError);
}

TEST(DeviceRun, CapBoundsSimultaneousElectrons) {
  auto s = quiet_settings();
  s.injection_rate_per_contact = 2e15;
  s.electron_cap = 3;
  s.total_time_ps = 0.05;
  s.drain = false;
  DeviceSimulation sim(rtd_device(), s, {}, 3);
  sim.run();
  const auto& r = sim.record();
  EXPECT_GT(r.rejected_by_cap, 0);
  for (const auto& st : r.steps) EXPECT_LE(st.alive, 3);
  EXPECT_TRUE(r.bookkeeping_ok());
}

namespace {

RunRecord small_dissipative_run(std::uint64_t seed) {
  SimulationSettings s;
  s.total_time_ps = 0.4;
  s.injection_rate_per_contact = 6e13;
  s.density_matrix_interval_ps = 0.1;
  s.density_matrix_max_dim = 256;
  s.trajectory_sample_stride = 50;
  return run_device(rtd_device(0.3), s, gaas_default_mechanisms(), seed);
}

}  // namespace

TEST(DeviceRun, DissipativeRunIsDeterministicAndConsistent) {
  const auto a = small_dissipative_run(17);
  const auto b = small_dissipative_run(17);
  ASSERT_GT(a.injected, 10);
  EXPECT_TRUE(a.bookkeeping_ok());
  ASSERT_FALSE(a.positivity.empty());
  EXPECT_TRUE(a.positivity_ok());
  EXPECT_GT(a.collisions.size(), 0u);

  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) ASSERT_EQ(a.steps[i].ramo_current, b.steps[i].ramo_current);
  ASSERT_EQ(a.collisions.size(), b.collisions.size());
  for (std::size_t i = 0; i < a.collisions.size(); ++i) {
    ASSERT_EQ(a.collisions[i].q, b.collisions[i].q);
    ASSERT_EQ(a.collisions[i].x, b.collisions[i].x);
  }
  ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) ASSERT_EQ(a.trajectories[i].x, b.trajectories[i].x);
  EXPECT_EQ(a.transmitted, b.transmitted);

  const auto c = small_dissipative_run(18);
  EXPECT_NE(c.trajectories.front().x, a.trajectories.front().x);
}

TEST(DeviceRun, CollisionsChangeEnergyByPhononOrNothing) {
  const auto r = small_dissipative_run(23);
  for (const auto& c : r.collisions) {
    if (is_elastic(c.mechanism)) {
      EXPECT_EQ(c.delta_e_ev, 0.0);
    } else {
      EXPECT_NEAR(std::abs(c.delta_e_ev), 0.036, 1e-15);
    }
    EXPECT_GT(c.x, 0.0);
    EXPECT_LT(c.x, nm(120.0));
  }
}
