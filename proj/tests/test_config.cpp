#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cwfsim/config.hpp"
#include "cwfsim/output.hpp"
#include "cwfsim/runner.hpp"

using namespace cwfsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cwfsim-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string read_all(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

const char* kTinyGraphene = R"(preset: graphene_collision
seed: 5
graphene:
  nx: 64
  ny: 64
  lx_nm: 768
  ly_nm: 768
  dt_fs: 2.5
  trajectories: 4
)";

}  // namespace

TEST(Config, MinimalFileGivesDocumentedDefaults) {
  const RunConfig c = parse_config("preset: rtd_iv\nseed: 42\n");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.simulation, SimulationSettings{});
  EXPECT_EQ(c.device, rtd_device());
  EXPECT_EQ(c.mechanisms, gaas_default_mechanisms(300.0));
  EXPECT_EQ(c.biases_v.size(), 8u);
  EXPECT_FALSE(c.ballistic());
  EXPECT_EQ(c.provenance.at("seed"), "file");
  EXPECT_EQ(c.provenance.count("device"), 0u);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_config("preset: rtd_iv\nsede: 1\n"), ConfigError);
  EXPECT_THROW(parse_config("simulation:\n  dt: 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("mechanisms:\n  - {kind: acoustic_elastic, rate: 1e12, colour: red}\n"), ConfigError);
  try {
    parse_config("device:\n  fermi: 0.2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("device.fermi"), std::string::npos);
  }
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(parse_config("seed: banana\n"), ConfigError);
  EXPECT_THROW(parse_config("threads: 0\n"), ConfigError);
  EXPECT_THROW(parse_config("simulation:\n  dt_fs: -1\n"), ConfigError);
  EXPECT_THROW(parse_config("preset: tokamak\n"), ConfigError);
  EXPECT_THROW(parse_config("mechanisms:\n  - {kind: umklapp, rate: 1}\n"), ConfigError);
  EXPECT_THROW(parse_config("- 1\n- 2\n"), ConfigError);
  EXPECT_THROW(parse_config("biases_v: []\n"), ConfigError);
}

TEST(Config, NegativeStepErrorNamesKeyPath) {
  try {
    parse_config("simulation:\n  dt_fs: -0.25\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("simulation.dt_fs"), std::string::npos) << e.what();
  }
}

TEST(Config, CustomPresetRequiresRegions) {
  EXPECT_THROW(parse_config("preset: custom\n"), ConfigError);
  const auto c = parse_config(
      "preset: custom\ndevice:\n  total_length_nm: 50\n  regions:\n"
      "    - {start_nm: 0, end_nm: 20, band_offset_ev: 0}\n"
      "    - {start_nm: 20, end_nm: 25, band_offset_ev: 0.3}\n"
      "    - {start_nm: 25, end_nm: 50, band_offset_ev: 0}\n");
  EXPECT_EQ(c.device.regions.size(), 3u);
  EXPECT_THROW(parse_config("preset: custom\ndevice:\n  total_length_nm: 50\n  regions:\n"
                            "    - {start_nm: 0, end_nm: 20, band_offset_ev: 0}\n"),
               ConfigError);
}

TEST(Config, EmptyMechanismListMeansBallistic) {
  EXPECT_TRUE(parse_config("mechanisms: []\n").ballistic());
  EXPECT_TRUE(parse_config("mechanisms:\n").ballistic());
  EXPECT_TRUE(parse_config("mechanisms:\n  - {kind: impurity_elastic, rate: 0}\n").ballistic());
}

TEST(Config, MechanismDefaultsFollowDeviceTemperature) {
  const auto c = parse_config("device:\n  temperature_k: 77\n");
  EXPECT_EQ(c.mechanisms, gaas_default_mechanisms(77.0));
}

TEST(Config, DiracPresetsHaveTheirOwnDefaults) {
  const auto k = parse_config("preset: klein\n");
  EXPECT_EQ(k.graphene, klein_settings());
  EXPECT_TRUE(k.mechanisms.empty());
  const auto g = parse_config("preset: graphene_collision\n");
  EXPECT_EQ(g.graphene, GrapheneSettings{});
}

TEST(Config, SerializeRoundTrips) {
  std::vector<RunConfig> cases{RunConfig{}, parse_config("preset: klein\nseed: 9\n"), parse_config(kTinyGraphene)};
  RunConfig odd;
  odd.seed = 18446744073709551615ULL;
  odd.biases_v = {0.1 + 0.2, 1.0 / 3.0};
  odd.simulation.dt_fs = 0.1 + 0.7;
  odd.device.temperature_k = 4.2;
  odd.mechanisms = {{MechanismKind::optical_emission, 1.0 / 7.0 * 1e13, 0.0361, 4.2}};
  odd.output_dir = "some dir/with space";
  odd.compare_ballistic = false;
  cases.push_back(odd);
  for (const auto& c : cases) {
    const RunConfig back = parse_config(serialize(c));
    EXPECT_EQ(back, c) << serialize(c);
    EXPECT_EQ(serialize(back), serialize(c));
  }
}

TEST(Output, DoublesRoundTripAtSeventeenDigits) {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -1.602176634e-19, 5e-324, 1.7976931348623157e308}) {
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(Output, CsvRowsMustMatchColumns) {
  CsvTable t("t.csv", {"a", "b"});
  EXPECT_THROW(t.row() << 1.0, std::logic_error);
  EXPECT_THROW(t.row() << "x,y" << 1, std::invalid_argument);
  t.row() << 1 << 0.5;
  EXPECT_EQ(t.body(), "a,b\n1,0.5\n");
}

TEST(Output, HeaderIsCommentedAndStrippable) {
  const fs::path dir = scratch_dir("csv");
  fs::create_directories(dir);
  CsvTable t("t.csv", {"x"});
  t.row() << 2.5;
  t.write(dir, "line one\nline two\n");
  EXPECT_EQ(read_all(dir / "t.csv"), "# line one\n# line two\nx\n2.5\n");
  EXPECT_EQ(csv_body(dir / "t.csv"), "x\n2.5\n");
  fs::remove_all(dir);
}

TEST(Runner, OutputDirectoryPrecedence) {
  RunConfig c;
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir(c), fs::path("cwfsim-out"));
  ::setenv(kOutputDirEnv, "from-env", 1);
  EXPECT_EQ(resolve_output_dir(c), fs::path("from-env"));
  c.output_dir = "from-config";
  EXPECT_EQ(resolve_output_dir(c), fs::path("from-config"));
  EXPECT_EQ(resolve_output_dir(c, "from-cli"), fs::path("from-cli"));
  ::unsetenv(kOutputDirEnv);
}

TEST(Runner, DiracRunWritesManifestAndReproduces) {
  const RunConfig c = parse_config(kTinyGraphene);
  const fs::path a = scratch_dir("dirac-a"), b = scratch_dir("dirac-b");
  ASSERT_EQ(run(c, a), 0);
  ASSERT_EQ(run(c, b), 0);
  for (const char* name : {"dirac_samples.csv", "dirac_trajectories.csv", "dirac_summary.csv"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(read_all(a / name).rfind("# cwfsim output\n# schema_version: 1\n# seed: 5\n", 0), 0u);
    EXPECT_EQ(csv_body(a / name), csv_body(b / name)) << name;
  }
  const auto m = nlohmann::json::parse(read_all(a / "manifest.json"));
  EXPECT_EQ(m["schema_version"], kSchemaVersion);
  EXPECT_EQ(m["preset"], "graphene_collision");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_TRUE(m["all_invariants_passed"].get<bool>());
  EXPECT_EQ(m["files"].size(), 3u);
  EXPECT_EQ(parse_config(m["config_yaml"].get<std::string>()), c);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Runner, SmallDeviceRunWritesAllTables) {
  RunConfig c = parse_config("biases_v: [0.3]\ncompare_ballistic: false\nsimulation:\n  total_time_ps: 0.2\n"
                             "  density_matrix_interval_ps: 0.1\n");
  const fs::path dir = scratch_dir("rtd");
  const int status = run(c, dir);
  const auto m = nlohmann::json::parse(read_all(dir / "manifest.json"));
  EXPECT_EQ(status, m["all_invariants_passed"].get<bool>() ? 0 : 3);
  for (const char* name : {"iv.csv", "collision_counts.csv", "collision_events.csv", "trajectories.csv",
                           "density_matrix.csv", "electrons.csv"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const std::string iv = csv_body(dir / "iv.csv");
  EXPECT_EQ(std::count(iv.begin(), iv.end(), '\n'), 2);
  EXPECT_TRUE(m["invariants"]["dissipative.positivity"]["passed"].get<bool>());
  EXPECT_TRUE(m["invariants"]["dissipative.charge_bookkeeping"]["passed"].get<bool>());
  fs::remove_all(dir);
}
