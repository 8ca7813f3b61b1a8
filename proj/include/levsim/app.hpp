#pragma once

// Command layer shared by the `levsim` executable and the tests: run
// configuration, magnet presets, the subcommands and their reports.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "levsim/cavity.hpp"
#include "levsim/levitation.hpp"
#include "levsim/spectra.hpp"

namespace levsim::app {

using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kNoLevitation = 3,
  kInversion = 4,
  kNoData = 5,
};

/// Maps the active exception onto the exit-code catalog. Call from inside a
/// catch block.
int exit_code_for_current_exception();

struct MagnetPreset {
  std::string label;
  magnetostatics::Magnet magnet;
};

struct PresetTable {
  int version = 0;
  std::vector<MagnetPreset> presets;

  const MagnetPreset& find(const std::string& label) const;
};

PresetTable load_presets(const std::string& path);
/// $LEVSIM_PRESETS if set, otherwise the table shipped with the sources.
std::string default_presets_path();

struct MagnetConfig {
  std::string preset;                   // empty for a custom magnet
  std::optional<double> radius, height, mass, remanence;
};

struct MapConfig {
  std::string csv;                      // gridded map; empty for parametric
  std::string polarity = "stub_top";    // or gap_floor
  double edge_radius = 1.75e-3;         // m
  double radial_slope = -50e9;          // Hz/m
  double vertical_sensitivity = 400e9;  // Hz/m
  double edge_shift = -120e6;           // Hz
  double residual_offset = 0.0;         // Hz
  double r_max = 2e-3;                  // m
  std::optional<double> s0, s1, lambda; // explicit parameters skip the fit
};

struct RunConfig {
  std::string presets_file;
  MagnetConfig magnet;
  std::string model = "two-loop";
  std::optional<double> temperature;    // K
  levitation::SuperconductorDisc disc;
  levitation::SolverOptions solver;
  cavity::CavityGeometry geometry;
  std::optional<double> measured_f0;    // Hz
  MapConfig map;
  cavity::InversionOptions inversion;
  spectra::Thresholds thresholds;
  std::uint64_t seed = 1;
};

/// Strict reader: unknown keys and wrongly typed values raise ParameterError.
RunConfig config_from_json(const json& j);
RunConfig load_config(const std::string& path);
json config_to_json(const RunConfig& config);

/// Worker count from $LEVSIM_THREADS, else the hardware concurrency.
int worker_count();

magnetostatics::Magnet resolve_magnet(const RunConfig& config,
                                      const PresetTable& presets);
levitation::Model parse_model(const std::string& name);

/// The frequency map described by the configuration, with the parametric
/// parameters fitted to the configured anchors unless given explicitly.
cavity::FrequencyMap build_map(const RunConfig& config);

struct Report {
  std::string command;
  json config;
  json inputs;
  json results;
  double wall_seconds = 0.0;

  json to_json(bool with_timing = true) const;
};

Report cmd_levitate(const RunConfig& config);

struct SweepOutput {
  std::string csv;
  Report report;
};

/// One row per preset label (all presets when `labels` is empty).
SweepOutput cmd_sweep(const RunConfig& config, std::vector<std::string> labels);

struct FreqmapOutput {
  std::string csv;
  Report report;
};

/// Wide table: one row per radius, one column per height.
FreqmapOutput cmd_freqmap(const RunConfig& config, int r_points,
                          const std::vector<double>& heights, bool long_format);

/// `r` may be empty to use the configured edge radius.
Report cmd_invert(const RunConfig& config, double df, std::optional<double> r,
                  double df_noise);

struct CurveOutput {
  std::string csv;
  Report report;
};

CurveOutput cmd_curve(const RunConfig& config, double z_lo, double z_hi, int samples,
                      levitation::Spacing spacing);

struct AnalyzeOptions {
  std::string input_dir;
  std::string manifest;                 // optional CSV temperature_k,file
  std::string format = "auto";          // auto, touchstone, csv
  std::optional<double> reference_f0;   // Hz
  std::string output_dir;               // cooldown.csv and segmentation.json
};

struct AnalyzeOutput {
  std::string cooldown_csv;
  json segmentation;
  std::vector<std::string> warnings;
  Report report;
};

AnalyzeOutput cmd_analyze(const RunConfig& config, const AnalyzeOptions& options);

/// Writes T_<mK>mK.s2p files and manifest.csv for a preset's default
/// cooldown template.
Report cmd_emit_synthetic(const RunConfig& config, const std::string& preset,
                          const std::string& output_dir);

json segmentation_to_json(const spectra::RegionSegmentation& seg);

}  // namespace levsim::app
