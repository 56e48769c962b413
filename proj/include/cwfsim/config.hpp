#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwfsim/device.hpp"
#include "cwfsim/graphene.hpp"
#include "cwfsim/scattering.hpp"

namespace cwfsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Preset { rtd_iv, graphene_collision, klein, custom };

inline std::string to_string(Preset p) {
  switch (p) {
    case Preset::rtd_iv: return "rtd_iv";
    case Preset::graphene_collision: return "graphene_collision";
    case Preset::klein: return "klein";
    case Preset::custom: return "custom";
  }
  return "unknown";
}

inline Preset parse_preset(const std::string& s) {
  for (auto p : {Preset::rtd_iv, Preset::graphene_collision, Preset::klein, Preset::custom}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown preset '" + s + "' (expected rtd_iv, graphene_collision, klein or custom)");
}

inline std::vector<double> default_biases() { return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}; }

/// Fully resolved run description. `provenance` maps dotted keys to where
/// their value came from ("file" or "cli"); absent keys are defaults.
struct RunConfig {
  Preset preset = Preset::rtd_iv;
  std::uint64_t seed = 42;
  std::string output_dir;
  unsigned threads = 1;
  DeviceSpec device = rtd_device();
  SimulationSettings simulation;
  std::vector<double> biases_v = default_biases();
  std::vector<Mechanism> mechanisms = gaas_default_mechanisms(300.0);
  bool compare_ballistic = true;
  GrapheneSettings graphene;
  std::map<std::string, std::string> provenance;

  bool ballistic() const {
    return std::all_of(mechanisms.begin(), mechanisms.end(), [](const Mechanism& m) { return m.rate == 0.0; });
  }

  bool operator==(const RunConfig& o) const {
    return preset == o.preset && seed == o.seed && output_dir == o.output_dir && threads == o.threads &&
           device == o.device && simulation == o.simulation && biases_v == o.biases_v &&
           mechanisms == o.mechanisms && compare_ballistic == o.compare_ballistic && graphene == o.graphene;
  }

  void validate() const {
    device.validate();
    simulation.validate();
    graphene.validate();
    for (const auto& m : mechanisms) m.validate();
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if ((preset == Preset::rtd_iv || preset == Preset::custom) && biases_v.empty()) {
      throw ConfigError("biases_v must not be empty");
    }
  }
};

namespace detail {

// Reads keys from one YAML mapping, remembering which were used so that
// leftovers can be reported as unknown.
class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string path, std::map<std::string, std::string>& prov)
      : node_(node), path_(std::move(path)), prov_(prov) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + " must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void read(const std::string& key, T& target) {
    if (!has(key)) return;
    used_.insert(key);
    try {
      target = node_[key].template as<T>();
    } catch (const YAML::Exception& e) {
      throw ConfigError("invalid value for " + dotted(key) + ": " + e.msg);
    }
    prov_[dotted(key)] = "file";
  }

  YAML::Node child(const std::string& key) {
    used_.insert(key);
    prov_[dotted(key)] = "file";
    return node_[key];
  }

  std::string dotted(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown key '" + dotted(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "document" : "'" + path_ + "'"; }

  YAML::Node node_;
  std::string path_;
  std::map<std::string, std::string>& prov_;
  std::set<std::string> used_;
};

inline void read_device(const YAML::Node& n, DeviceSpec& d, std::map<std::string, std::string>& prov) {
  MapReader r(n, "device", prov);
  r.read("total_length_nm", d.total_length_nm);
  r.read("fermi_level_ev", d.fermi_level_ev);
  r.read("temperature_k", d.temperature_k);
  r.read("effective_mass_ratio", d.effective_mass_ratio);
  r.read("applied_bias_v", d.applied_bias_v);
  r.read("relative_permittivity", d.relative_permittivity);
  if (r.has("regions")) {
    const YAML::Node seq = r.child("regions");
    if (!seq.IsSequence()) throw ConfigError("device.regions must be a sequence");
    d.regions.clear();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      Region reg{};
      MapReader rr(seq[i], "device.regions[" + std::to_string(i) + "]", prov);
      for (const char* k : {"start_nm", "end_nm", "band_offset_ev"}) {
        if (!rr.has(k)) throw ConfigError("missing key '" + rr.dotted(k) + "'");
      }
      rr.read("start_nm", reg.start_nm);
      rr.read("end_nm", reg.end_nm);
      rr.read("band_offset_ev", reg.band_offset_ev);
      rr.finish();
      d.regions.push_back(reg);
    }
  }
  r.finish();
}

inline void read_simulation(const YAML::Node& n, SimulationSettings& s, std::map<std::string, std::string>& prov) {
  MapReader r(n, "simulation", prov);
  r.read("grid_points", s.grid_points);
  r.read("box_length_nm", s.box_length_nm);
  r.read("dt_fs", s.dt_fs);
  r.read("total_time_ps", s.total_time_ps);
  r.read("max_drain_ps", s.max_drain_ps);
  r.read("absorber_margin_fraction", s.absorber_margin_fraction);
  r.read("absorber_strength_ev", s.absorber_strength_ev);
  r.read("packet_sigma_nm", s.packet_sigma_nm);
  r.read("injection_offset_nm", s.injection_offset_nm);
  r.read("retire_distance_nm", s.retire_distance_nm);
  r.read("injection_rate_per_contact", s.injection_rate_per_contact);
  r.read("electron_cap", s.electron_cap);
  r.read("cross_section_nm2", s.cross_section_nm2);
  r.read("coulomb", s.coulomb);
  r.read("sub_kicks", s.sub_kicks);
  r.read("max_lifetime_ps", s.max_lifetime_ps);
  r.read("density_matrix_interval_ps", s.density_matrix_interval_ps);
  r.read("density_matrix_max_dim", s.density_matrix_max_dim);
  r.read("trajectory_sample_stride", s.trajectory_sample_stride);
  r.read("drain", s.drain);
  r.finish();
}

inline void read_graphene(const YAML::Node& n, GrapheneSettings& g, std::map<std::string, std::string>& prov) {
  MapReader r(n, "graphene", prov);
  r.read("nx", g.nx);
  r.read("ny", g.ny);
  r.read("lx_nm", g.lx_nm);
  r.read("ly_nm", g.ly_nm);
  r.read("dt_fs", g.dt_fs);
  r.read("sigma_nm", g.sigma_nm);
  r.read("k0", g.k0);
  r.read("fermi_velocity", g.fermi_velocity);
  r.read("absorber_margin_fraction", g.absorber_margin_fraction);
  r.read("absorber_strength_ev", g.absorber_strength_ev);
  r.read("trajectories", g.trajectories);
  r.read("sample_stride", g.sample_stride);
  r.finish();
}

inline std::vector<Mechanism> read_mechanisms(const YAML::Node& seq, std::map<std::string, std::string>& prov) {
  if (seq.IsNull()) return {};
  if (!seq.IsSequence()) throw ConfigError("mechanisms must be a sequence");
  std::vector<Mechanism> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    MapReader r(seq[i], "mechanisms[" + std::to_string(i) + "]", prov);
    std::string kind;
    if (!r.has("kind")) throw ConfigError("missing key '" + r.dotted("kind") + "'");
    r.read("kind", kind);
    const auto k = parse_mechanism_kind(kind);
    if (!k) throw ConfigError("unknown mechanism kind '" + kind + "'");
    Mechanism m;
    m.kind = *k;
    m.phonon_energy_ev = is_elastic(*k) ? 0.0 : kGaAsOpticalPhononEv;
    r.read("rate", m.rate);
    r.read("phonon_energy_ev", m.phonon_energy_ev);
    r.read("temperature_k", m.temperature_k);
    r.finish();
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(r.dotted("") + ": " + e.what());
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

/// Parses a YAML run description. Unknown keys are errors; absent keys take
/// the preset defaults.
inline RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("malformed configuration: " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError("configuration must be a mapping");

  RunConfig c;
  detail::MapReader r(root, "", c.provenance);
  std::string preset = "rtd_iv";
  r.read("preset", preset);
  c.preset = parse_preset(preset);
  if (c.preset == Preset::klein) c.graphene = klein_settings();
  if (c.preset == Preset::graphene_collision || c.preset == Preset::klein) c.mechanisms.clear();

  r.read("seed", c.seed);
  r.read("output_dir", c.output_dir);
  r.read("threads", c.threads);
  r.read("compare_ballistic", c.compare_ballistic);
  r.read("biases_v", c.biases_v);
  const bool has_regions = r.has("device") && root["device"].IsMap() && root["device"]["regions"];
  if (r.has("device")) detail::read_device(r.child("device"), c.device, c.provenance);
  if (c.preset == Preset::custom && !has_regions) throw ConfigError("preset 'custom' requires device.regions");
  if (!r.has("mechanisms") && c.preset != Preset::graphene_collision && c.preset != Preset::klein) {
    c.mechanisms = gaas_default_mechanisms(c.device.temperature_k);
  }
  if (r.has("mechanisms")) c.mechanisms = detail::read_mechanisms(r.child("mechanisms"), c.provenance);
  if (r.has("simulation")) detail::read_simulation(r.child("simulation"), c.simulation, c.provenance);
  if (r.has("graphene")) detail::read_graphene(r.child("graphene"), c.graphene, c.provenance);
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Complete YAML form of a resolved configuration (every field written, 17
/// significant digits), so that parse_config(serialize(c)) == c.
inline std::string serialize(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << to_string(c.preset);
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir;
  out << YAML::Key << "threads" << YAML::Value << c.threads;
  out << YAML::Key << "compare_ballistic" << YAML::Value << c.compare_ballistic;
  out << YAML::Key << "biases_v" << YAML::Value << YAML::Flow << c.biases_v;

  const DeviceSpec& d = c.device;
  out << YAML::Key << "device" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "total_length_nm" << YAML::Value << d.total_length_nm;
  out << YAML::Key << "fermi_level_ev" << YAML::Value << d.fermi_level_ev;
  out << YAML::Key << "temperature_k" << YAML::Value << d.temperature_k;
  out << YAML::Key << "effective_mass_ratio" << YAML::Value << d.effective_mass_ratio;
  out << YAML::Key << "applied_bias_v" << YAML::Value << d.applied_bias_v;
  out << YAML::Key << "relative_permittivity" << YAML::Value << d.relative_permittivity;
  out << YAML::Key << "regions" << YAML::Value << YAML::BeginSeq;
  for (const auto& reg : d.regions) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "start_nm" << YAML::Value << reg.start_nm;
    out << YAML::Key << "end_nm" << YAML::Value << reg.end_nm;
    out << YAML::Key << "band_offset_ev" << YAML::Value << reg.band_offset_ev;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "mechanisms" << YAML::Value << YAML::BeginSeq;
  for (const auto& m : c.mechanisms) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << std::string(to_string(m.kind));
    out << YAML::Key << "rate" << YAML::Value << m.rate;
    out << YAML::Key << "phonon_energy_ev" << YAML::Value << m.phonon_energy_ev;
    out << YAML::Key << "temperature_k" << YAML::Value << m.temperature_k;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  const SimulationSettings& s = c.simulation;
  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "grid_points" << YAML::Value << s.grid_points;
  out << YAML::Key << "box_length_nm" << YAML::Value << s.box_length_nm;
  out << YAML::Key << "dt_fs" << YAML::Value << s.dt_fs;
  out << YAML::Key << "total_time_ps" << YAML::Value << s.total_time_ps;
  out << YAML::Key << "max_drain_ps" << YAML::Value << s.max_drain_ps;
  out << YAML::Key << "absorber_margin_fraction" << YAML::Value << s.absorber_margin_fraction;
  out << YAML::Key << "absorber_strength_ev" << YAML::Value << s.absorber_strength_ev;
  out << YAML::Key << "packet_sigma_nm" << YAML::Value << s.packet_sigma_nm;
  out << YAML::Key << "injection_offset_nm" << YAML::Value << s.injection_offset_nm;
  out << YAML::Key << "retire_distance_nm" << YAML::Value << s.retire_distance_nm;
  out << YAML::Key << "injection_rate_per_contact" << YAML::Value << s.injection_rate_per_contact;
  out << YAML::Key << "electron_cap" << YAML::Value << s.electron_cap;
  out << YAML::Key << "cross_section_nm2" << YAML::Value << s.cross_section_nm2;
  out << YAML::Key << "coulomb" << YAML::Value << s.coulomb;
  out << YAML::Key << "sub_kicks" << YAML::Value << s.sub_kicks;
  out << YAML::Key << "max_lifetime_ps" << YAML::Value << s.max_lifetime_ps;
  out << YAML::Key << "density_matrix_interval_ps" << YAML::Value << s.density_matrix_interval_ps;
  out << YAML::Key << "density_matrix_max_dim" << YAML::Value << s.density_matrix_max_dim;
  out << YAML::Key << "trajectory_sample_stride" << YAML::Value << s.trajectory_sample_stride;
  out << YAML::Key << "drain" << YAML::Value << s.drain;
  out << YAML::EndMap;

  const GrapheneSettings& g = c.graphene;
  out << YAML::Key << "graphene" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "nx" << YAML::Value << g.nx;
  out << YAML::Key << "ny" << YAML::Value << g.ny;
  out << YAML::Key << "lx_nm" << YAML::Value << g.lx_nm;
  out << YAML::Key << "ly_nm" << YAML::Value << g.ly_nm;
  out << YAML::Key << "dt_fs" << YAML::Value << g.dt_fs;
  out << YAML::Key << "sigma_nm" << YAML::Value << g.sigma_nm;
  out << YAML::Key << "k0" << YAML::Value << g.k0;
  out << YAML::Key << "fermi_velocity" << YAML::Value << g.fermi_velocity;
  out << YAML::Key << "absorber_margin_fraction" << YAML::Value << g.absorber_margin_fraction;
  out << YAML::Key << "absorber_strength_ev" << YAML::Value << g.absorber_strength_ev;
  out << YAML::Key << "trajectories" << YAML::Value << g.trajectories;
  out << YAML::Key << "sample_stride" << YAML::Value << g.sample_stride;
  out << YAML::EndMap;

  out << YAML::EndMap;
  if (!out.good()) throw ConfigError("serialize: " + out.GetLastError());
  return std::string(out.c_str()) + "\n";
}

}  // namespace cwfsim
