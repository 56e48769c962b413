#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "cwfsim/config.hpp"
#include "cwfsim/device.hpp"
#include "cwfsim/graphene.hpp"
#include "cwfsim/output.hpp"
#include "json.hpp"

namespace cwfsim {

inline constexpr const char* kOutputDirEnv = "CWFSIM_OUT_DIR";
inline constexpr double kEstimatorTolerance = 0.05;

/// --out beats the config file, which beats the environment.
inline std::filesystem::path resolve_output_dir(const RunConfig& c, const std::string& cli_out = {}) {
  if (!cli_out.empty()) return cli_out;
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "cwfsim-out";
}

struct InvariantResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct RunSummary {
  std::vector<CsvTable> tables;
  std::vector<InvariantResult> invariants;
  std::map<std::string, double> timings_s;
  std::vector<IVPoint> ballistic;
  std::vector<IVPoint> dissipative;
  std::vector<DiracRunRecord> dirac;

  bool ok() const {
    return std::all_of(invariants.begin(), invariants.end(), [](const auto& i) { return i.passed; });
  }
};

using ProgressSink = std::function<void(const std::string&)>;

namespace detail {

inline std::string bias_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline void add_sweep_rows(const std::string& sweep, const SweepResult& res, std::vector<CsvTable>& t) {
  CsvTable& iv = t[0];
  CsvTable& coll = t[1];
  CsvTable& events = t[2];
  CsvTable& traj = t[3];
  CsvTable& dm = t[4];
  CsvTable& el = t[5];
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    const IVPoint& p = res.points[i];
    iv.row() << sweep << p.bias_v << p.current_counting << p.current_ramo << p.current_noise << p.estimator_mismatch()
             << p.injected << p.transmitted << p.reflected << p.absorbed << p.inside_at_end
             << p.rejected_by_cap << p.collisions.total << p.collisions.per_electron << p.collisions.per_ps
             << p.collisions.mean_transit_ps << p.positivity_ok << p.bookkeeping_ok << p.converged();
    for (int k = 0; k < 4; ++k) {
      coll.row() << sweep << p.bias_v << to_string(static_cast<MechanismKind>(k)) << p.collisions.by_kind[k];
    }
    const RunRecord& r = res.records[i];
    for (const auto& c : r.collisions) {
      events.row() << sweep << r.bias_v << c.time << c.id << to_string(c.mechanism) << c.q << c.delta_e_ev << c.x;
    }
    for (const auto& s : r.trajectories) traj.row() << sweep << r.bias_v << s.time << s.id << s.x;
    for (const auto& s : r.positivity) {
      dm.row() << sweep << r.bias_v << s.time << s.members << s.dim << s.report.min_eigenvalue << s.report.trace
               << s.report.hermiticity_deviation << s.report.passes();
    }
    for (const auto& e : r.electrons) {
      el.row() << sweep << r.bias_v << e.id << to_string(e.origin) << e.injection_time << e.exit_time
               << e.injection_energy_ev << to_string(e.outcome) << e.collisions << e.visited;
    }
  }
}

inline void check_sweep(const std::string& sweep, const std::vector<IVPoint>& pts, std::vector<InvariantResult>& inv) {
  InvariantResult pos{sweep + ".positivity", true, ""};
  InvariantResult book{sweep + ".charge_bookkeeping", true, ""};
  InvariantResult est{sweep + ".estimator_agreement", true, ""};
  std::size_t converged = 0;
  for (const auto& p : pts) {
    const std::string at = "bias " + bias_label(p.bias_v) + " V";
    if (!p.positivity_ok) {
      pos.passed = false;
      pos.detail += at + "; ";
    }
    if (!p.bookkeeping_ok) {
      book.passed = false;
      book.detail += at + "; ";
    }
    if (!p.converged()) continue;
    ++converged;
    if (p.estimator_mismatch() > kEstimatorTolerance) {
      est.passed = false;
      est.detail += at + " mismatch " + format_double(p.estimator_mismatch()) + "; ";
    }
  }
  est.detail += std::to_string(converged) + " of " + std::to_string(pts.size()) + " bias points converged";
  if (converged == 0) est.detail += " (agreement unchecked)";
  inv.push_back(pos);
  inv.push_back(book);
  inv.push_back(est);
}

inline RunSummary run_rtd(const RunConfig& c, const ProgressSink& progress) {
  RunSummary out;
  out.tables = {
      CsvTable("iv.csv", {"sweep", "bias_v", "current_counting_a", "current_ramo_a", "current_noise_a",
                          "estimator_mismatch", "injected", "transmitted", "reflected", "absorbed", "inside_at_end",
                          "rejected_by_cap", "collisions", "collisions_per_electron", "collisions_per_ps",
                          "mean_transit_ps", "positivity_ok", "bookkeeping_ok", "converged"}),
      CsvTable("collision_counts.csv", {"sweep", "bias_v", "mechanism", "count"}),
      CsvTable("collision_events.csv", {"sweep", "bias_v", "time_s", "electron", "mechanism", "q_per_m",
                                        "delta_e_ev", "x_m"}),
      CsvTable("trajectories.csv", {"sweep", "bias_v", "time_s", "electron", "x_m"}),
      CsvTable("density_matrix.csv", {"sweep", "bias_v", "time_s", "members", "dim", "min_eigenvalue", "trace",
                                      "hermiticity_deviation", "positive"}),
      CsvTable("electrons.csv", {"sweep", "bias_v", "electron", "origin", "injection_time_s", "exit_time_s",
                                 "injection_energy_ev", "outcome", "collisions", "visited"}),
  };
  struct Job {
    std::string name;
    std::vector<Mechanism> mechanisms;
    std::uint64_t stream;
  };
  std::vector<Job> jobs;
  const bool ballistic = c.ballistic();
  if (ballistic || c.compare_ballistic) jobs.push_back({"ballistic", {}, 1});
  if (!ballistic) jobs.push_back({"dissipative", c.mechanisms, 2});
  for (const auto& job : jobs) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = [&](std::size_t, const IVPoint& p, double sec) {
      if (progress) {
        progress(job.name + " bias " + bias_label(p.bias_v) + " V: I = " + format_double(p.current_counting) +
                 " A (" + bias_label(sec) + " s)");
      }
    };
    SweepResult res = iv_sweep(c.device, c.simulation, c.biases_v, job.mechanisms, derive_seed(c.seed, job.stream),
                               c.threads, true, report);
    out.timings_s[job.name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    add_sweep_rows(job.name, res, out.tables);
    check_sweep(job.name, res.points, out.invariants);
    (job.name == "ballistic" ? out.ballistic : out.dissipative) = res.points;
  }
  return out;
}

inline RunSummary run_dirac(const RunConfig& c, const ProgressSink& progress) {
  RunSummary out;
  std::vector<DiracScenario> scenarios;
  if (c.preset == Preset::graphene_collision) {
    scenarios = {graphene_collision_scenario(0, c.graphene), graphene_collision_scenario(1, c.graphene)};
  } else {
    for (auto k : {KleinCase::normal, KleinCase::oblique, KleinCase::oblique_with_collision}) {
      scenarios.push_back(klein_scenario(k, c.graphene));
    }
  }
  CsvTable samples("dirac_samples.csv", {"scenario", "time_s", "centroid_x_m", "centroid_y_m", "k_x_per_m",
                                         "k_y_per_m", "p_conduction", "p_valence", "norm"});
  CsvTable traj("dirac_trajectories.csv", {"scenario", "trajectory", "time_s", "x_m", "y_m"});
  CsvTable summary("dirac_summary.csv", {"scenario", "collision_time_s", "band_flip_m", "delta_e_ev",
                                         "p_conduction", "p_valence", "k_x_per_m", "k_y_per_m", "velocity_x_m_s",
                                         "velocity_y_m_s", "bohm_velocity_x_m_s", "bohm_velocity_y_m_s",
                                         "velocity_dot_k", "transmission", "final_norm"});
  InvariantResult norm{"norm_nonincreasing", true, ""};
  InvariantResult bands{"band_weights_normalized", true, ""};
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    DiracRunRecord r = run_dirac_scenario(scenarios[i], c.graphene, derive_seed(c.seed, 100 + i));
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.timings_s[r.name] = sec;
    if (progress) progress(r.name + " done (" + bias_label(sec) + " s)");
    for (const auto& s : r.samples) {
      samples.row() << r.name << s.time << s.centroid.x() << s.centroid.y() << s.wavevector.x() << s.wavevector.y()
                    << s.bands.conduction << s.bands.valence << s.norm;
      if (s.norm > 1.0 + 1e-9) {
        norm.passed = false;
        norm.detail += r.name + "; ";
      }
      if (std::abs(s.bands.conduction + s.bands.valence - 1.0) > 1e-9) {
        bands.passed = false;
        bands.detail += r.name + "; ";
      }
    }
    for (const auto& t : r.trajectories) {
      for (const auto& h : t.history) traj.row() << r.name << t.id << h.time << h.position.x() << h.position.y();
    }
    const double tc = r.collision ? r.collision->time : -1.0;
    summary.row() << r.name << tc << (r.collision ? r.collision->band_flip_m : 0)
                  << (r.collision ? r.collision->delta_e_ev : 0.0) << r.final_bands.conduction
                  << r.final_bands.valence << r.final_wavevector.x() << r.final_wavevector.y()
                  << r.post_collision_velocity.x() << r.post_collision_velocity.y() << r.bohm_mean_velocity.x()
                  << r.bohm_mean_velocity.y() << r.post_collision_velocity.dot(r.final_wavevector) << r.transmission
                  << r.final_norm;
    out.dirac.push_back(std::move(r));
  }
  out.tables.push_back(std::move(samples));
  out.tables.push_back(std::move(traj));
  out.tables.push_back(std::move(summary));
  out.invariants.push_back(norm);
  out.invariants.push_back(bands);
  return out;
}

}  // namespace detail

/// Runs the configured preset without touching the filesystem.
inline RunSummary execute(const RunConfig& c, const ProgressSink& progress = {}) {
  c.validate();
  switch (c.preset) {
    case Preset::rtd_iv:
    case Preset::custom: return detail::run_rtd(c, progress);
    case Preset::graphene_collision:
    case Preset::klein: return detail::run_dirac(c, progress);
  }
  throw ConfigError("unhandled preset");
}

/// Reproducibility header shared by every CSV file.
inline std::string output_header(const RunConfig& c) {
  std::string h = "cwfsim output\nschema_version: " + std::to_string(kSchemaVersion) +
                  "\nseed: " + std::to_string(c.seed) + "\nconfig:\n";
  std::istringstream lines(serialize(c));
  for (std::string line; std::getline(lines, line);) h += "  " + line + "\n";
  return h;
}

/// Executes, writes one CSV per table plus manifest.json, returns the exit
/// status (nonzero if any invariant failed).
inline int run(const RunConfig& c, const std::filesystem::path& out_dir, const ProgressSink& progress = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary s = execute(c, progress);
  std::filesystem::create_directories(out_dir);
  const std::string header = output_header(c);
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& t : s.tables) {
    t.write(out_dir, header);
    files.push_back({{"name", t.name()}, {"columns", t.columns()}});
  }
  nlohmann::ordered_json inv = nlohmann::ordered_json::object();
  for (const auto& i : s.invariants) inv[i.name] = {{"passed", i.passed}, {"detail", i.detail}};
  s.timings_s["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  for (const auto& [k, v] : c.provenance) prov[k] = v;
  nlohmann::ordered_json m;
  m["schema_version"] = kSchemaVersion;
  m["preset"] = to_string(c.preset);
  m["seed"] = c.seed;
  m["ballistic"] = c.ballistic();
  m["config_yaml"] = serialize(c);
  m["provenance"] = prov;
  m["files"] = files;
  m["invariants"] = inv;
  m["all_invariants_passed"] = s.ok();
  m["timings_s"] = s.timings_s;
  std::ofstream f(out_dir / "manifest.json", std::ios::binary);
  f << m.dump(2) << '\n';
  if (!f) throw std::runtime_error("write failed: " + (out_dir / "manifest.json").string());
  return s.ok() ? 0 : 3;
}

}  // namespace cwfsim
