#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "levsim/app.hpp"
#include "levsim/errors.hpp"
#include "levsim/units.hpp"

using namespace levsim;
using namespace levsim::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("levsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig n52() {
  RunConfig c;
  c.magnet.preset = "N52";
  return c;
}

}  // namespace

TEST(Units, Suffixes) {
  using units::Dimension;
  EXPECT_DOUBLE_EQ(units::parse_quantity("1.8mm", Dimension::length), 1.8e-3);
  EXPECT_DOUBLE_EQ(units::parse_quantity(" 30 MHz ", Dimension::frequency), 30e6);
  EXPECT_DOUBLE_EQ(units::parse_quantity("-30MHz", Dimension::frequency), -30e6);
  EXPECT_DOUBLE_EQ(units::parse_quantity("50mK", Dimension::temperature), 0.05);
  EXPECT_DOUBLE_EQ(units::parse_quantity("2.75mg", Dimension::mass), 2.75e-6);
  EXPECT_DOUBLE_EQ(units::parse_quantity("10mT", Dimension::field), 0.01);
  EXPECT_DOUBLE_EQ(units::parse_quantity("0.004", Dimension::length), 0.004);
  EXPECT_THROW(units::parse_quantity("3MHz", Dimension::length), ParameterError);
  EXPECT_THROW(units::parse_quantity("mm", Dimension::length), ParameterError);
  EXPECT_THROW(units::parse_quantity("", Dimension::length), ParameterError);
}

TEST(Presets, ShippedTable) {
  const auto table = load_presets(default_presets_path());
  EXPECT_EQ(table.version, 1);
  ASSERT_EQ(table.presets.size(), 4u);
  EXPECT_DOUBLE_EQ(table.find("N52").magnet.remanence, 1.47);
  EXPECT_DOUBLE_EQ(table.find("N35").magnet.remanence, 1.22);
  EXPECT_THROW(table.find("N99"), ParameterError);
}

TEST(Config, RoundTripAndStrictness) {
  RunConfig c = n52();
  c.temperature = 0.05;
  c.disc.loop_count = 123;
  c.map.polarity = "gap_floor";
  const RunConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(back.magnet.preset, "N52");
  EXPECT_EQ(back.disc.loop_count, 123);
  ASSERT_TRUE(back.temperature.has_value());
  EXPECT_DOUBLE_EQ(*back.temperature, 0.05);
  EXPECT_EQ(back.map.polarity, "gap_floor");
  EXPECT_EQ(config_to_json(back), config_to_json(c));

  EXPECT_THROW(config_from_json(json{{"magnet", {{"presett", "N52"}}}}), ParameterError);
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ParameterError);
  EXPECT_THROW(config_from_json(json{{"disc", {{"loop_count", "many"}}}}), ParameterError);
  EXPECT_THROW(config_from_json(json::array()), ParameterError);
}

TEST(Config, CustomMagnetNeedsEveryField) {
  RunConfig c;
  const auto table = load_presets(default_presets_path());
  EXPECT_THROW(resolve_magnet(c, table), ParameterError);
  c.magnet.preset = "N35";
  c.magnet.remanence = 1.5;
  EXPECT_DOUBLE_EQ(resolve_magnet(c, table).remanence, 1.5);
  EXPECT_THROW(parse_model("three-loop"), ParameterError);
}

TEST(Commands, LevitateImageAndTwoLoop) {
  RunConfig c = n52();
  c.model = "image";
  auto r = cmd_levitate(c).to_json();
  EXPECT_NEAR(r["results"]["height_m"].get<double>(), 4.13848199e-3, 1e-10);
  EXPECT_TRUE(r["timing"].contains("wall_seconds"));
  EXPECT_FALSE(cmd_levitate(c).to_json(false).contains("timing"));

  c.model = "two-loop";
  r = cmd_levitate(c).to_json();
  const double z = r["results"]["height_m"].get<double>();
  EXPECT_LT(z, 4.13848199e-3);
  EXPECT_GT(z, 1e-3);
  EXPECT_NEAR(r["results"]["normal_region_radius_m"].get<double>(), 1.6616e-3, 1e-6);
}

TEST(Commands, LevitateNearTcIsNoLevitation) {
  RunConfig c = n52();
  c.temperature = 1.19;
  try {
    cmd_levitate(c);
    FAIL() << "expected NoLevitationError";
  } catch (...) {
    EXPECT_EQ(exit_code_for_current_exception(), kNoLevitation);
  }
}

TEST(Commands, SweepMatchesLevitateAndIsDeterministic) {
  RunConfig c;
  const auto one = cmd_sweep(c, {"N52"});
  c.magnet.preset = "N52";
  const double z = cmd_levitate(c).results["height_m"].get<double>();
  EXPECT_DOUBLE_EQ(one.report.results["rows"][0]["height_two_loop_m"].get<double>(), z);

  RunConfig all;
  const auto a = cmd_sweep(all, {});
  const auto b = cmd_sweep(all, {});
  EXPECT_EQ(a.csv, b.csv);
  std::istringstream lines(a.csv);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  EXPECT_EQ(count, 5);
  EXPECT_THROW(cmd_sweep(all, {"N99"}), ParameterError);
}

TEST(Commands, FreqmapDefaultsReproduceAnchors) {
  RunConfig c;
  const auto out = cmd_freqmap(c, 41, {0.0, 0.7e-3}, false);
  const auto& h0 = out.report.results["heights"][0];
  EXPECT_NEAR(h0["radial_slope_hz_per_m"].get<double>(), -50e9, 1e-3 * 50e9);
  EXPECT_NEAR(h0["edge_shift_hz"].get<double>(), -120e6, 1e-3 * 120e6);
  EXPECT_NEAR(std::abs(h0["edge_vertical_sensitivity_hz_per_m"].get<double>()), 400e9,
              1e-3 * 400e9);
  EXPECT_LT(out.report.results["heights"][1]["lateral_spread_ratio"].get<double>(), 0.1);
  EXPECT_EQ(out.csv.substr(0, out.csv.find('\n')), "r_m,df_hz@z=0m,df_hz@z=0.0007m");

  const auto longf = cmd_freqmap(c, 5, {0.0, 1e-3}, true);
  std::istringstream in(longf.csv);
  const auto map = cavity::load_shift_map_csv(in);
  EXPECT_EQ(map.kind(), cavity::FrequencyMap::Kind::gridded);
}

TEST(Commands, GapFloorFlipsTheMap) {
  RunConfig c;
  c.map.polarity = "gap_floor";
  const auto out = cmd_freqmap(c, 11, {0.0}, false);
  EXPECT_NEAR(out.report.results["heights"][0]["edge_shift_hz"].get<double>(), 120e6, 1.2e5);
}

TEST(Commands, InvertRoundTripAndRange) {
  RunConfig c;
  const auto r = cmd_invert(c, -30e6, std::nullopt, 0.0);
  EXPECT_NEAR(r.results["height_m"].get<double>(), 0.4158883083359671e-3, 1e-12);
  try {
    cmd_invert(c, 10e6, std::nullopt, 0.0);
    FAIL() << "expected InversionError";
  } catch (...) {
    EXPECT_EQ(exit_code_for_current_exception(), kInversion);
  }
}

TEST(Commands, InvertOnGriddedMapFile) {
  RunConfig c;
  const fs::path dir = scratch("grid");
  {
    std::vector<double> heights;
    for (int i = 0; i < 50; ++i) heights.push_back(1e-3 * i / 49);
    const auto out = cmd_freqmap(c, 50, heights, true);
    std::ofstream(dir / "map.csv") << out.csv;
  }
  c.map.csv = (dir / "map.csv").string();
  const auto r = cmd_invert(c, -30e6, std::nullopt, 0.0);
  EXPECT_NEAR(r.results["height_m"].get<double>(), 0.41589e-3, 0.01 * 0.41589e-3);
}

TEST(Commands, CurveHasPotentialMinimumNearEquilibrium) {
  RunConfig c = n52();
  const auto out = cmd_curve(c, 1e-3, 6e-3, 201, levitation::Spacing::linear);
  const double zmin = out.report.results["potential_minimum_z_m"].get<double>();
  const double zeq = cmd_levitate(c).results["height_m"].get<double>();
  EXPECT_NEAR(zmin, zeq, 0.03e-3);
}

TEST(Analyze, SyntheticN35AndN52) {
  for (const std::string preset : {"N35", "N52"}) {
    const fs::path dir = scratch("syn_" + preset);
    RunConfig c;
    c.seed = 7;
    const auto emitted = cmd_emit_synthetic(c, preset, dir.string());
    EXPECT_TRUE(fs::exists(dir / "manifest.csv"));

    AnalyzeOptions opts;
    opts.input_dir = dir.string();
    opts.output_dir = (dir / "out").string();
    const auto out = cmd_analyze(c, opts);
    EXPECT_TRUE(out.warnings.empty());
    EXPECT_TRUE(fs::exists(dir / "out" / "cooldown.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "segmentation.json"));
    const auto& segs = out.segmentation["segments"];
    ASSERT_EQ(segs.size(), 4u);
    for (const auto& s : segs) EXPECT_GT(s["samples"].get<int>(), 0) << preset;
    EXPECT_NEAR(out.segmentation["upshift_hz"].get<double>(), 100e6, 1e6) << preset;

    AnalyzeOptions via_manifest;
    via_manifest.manifest = (dir / "manifest.csv").string();
    const auto again = cmd_analyze(c, via_manifest);
    EXPECT_EQ(again.cooldown_csv, out.cooldown_csv);
  }
}

TEST(Analyze, BrokenFileIsSkippedWithWarning) {
  const fs::path dir = scratch("broken");
  RunConfig c;
  cmd_emit_synthetic(c, "N35", dir.string());
  std::ofstream(dir / "T_1300mK.s2p") << "# GHz S MA R 50\n1.0 not numbers\n";
  AnalyzeOptions opts;
  opts.input_dir = dir.string();
  const auto out = cmd_analyze(c, opts);
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("T_1300mK.s2p"), std::string::npos);
}

TEST(Analyze, EmptyDirectoryIsNoData) {
  const fs::path dir = scratch("empty");
  RunConfig c;
  AnalyzeOptions opts;
  opts.input_dir = dir.string();
  try {
    cmd_analyze(c, opts);
    FAIL() << "expected NoDataError";
  } catch (...) {
    EXPECT_EQ(exit_code_for_current_exception(), kNoData);
  }
}

TEST(Environment, ThreadCountOverride) {
  ::setenv("LEVSIM_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3);
  ::setenv("LEVSIM_THREADS", "zero", 1);
  EXPECT_THROW(worker_count(), ParameterError);
  ::unsetenv("LEVSIM_THREADS");
  EXPECT_GE(worker_count(), 1);
}
