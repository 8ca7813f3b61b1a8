#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levsim/app.hpp"
#include "levsim/errors.hpp"
#include "levsim/units.hpp"

using namespace levsim;
using levsim::units::Dimension;
using levsim::units::parse_quantity;

namespace {

std::optional<double> quantity(const std::string& text, Dimension d) {
  if (text.empty()) return std::nullopt;
  return parse_quantity(text, d);
}

std::vector<double> quantity_list(const std::string& text, Dimension d) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_quantity(item, d));
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path);
  out << text;
}

struct MagnetFlags {
  std::string preset, remanence, mass, radius, height;

  void add(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Magnet preset label (N35, N42, N50, N52, ...)");
    cmd->add_option("--remanence", remanence, "Remanence, e.g. 1.47T");
    cmd->add_option("--mass", mass, "Magnet mass, e.g. 2.75mg");
    cmd->add_option("--radius", radius, "Magnet radius, e.g. 0.5mm");
    cmd->add_option("--height", height, "Magnet height, e.g. 0.5mm");
  }

  void apply(app::RunConfig& c) const {
    if (!preset.empty()) c.magnet.preset = preset;
    if (auto v = quantity(remanence, Dimension::field)) c.magnet.remanence = v;
    if (auto v = quantity(mass, Dimension::mass)) c.magnet.mass = v;
    if (auto v = quantity(radius, Dimension::length)) c.magnet.radius = v;
    if (auto v = quantity(height, Dimension::length)) c.magnet.height = v;
  }
};

struct DiscFlags {
  std::string temperature, disc_radius, bc0;
  int loops = 0;
  std::string model;

  void add(CLI::App* cmd, bool with_model) {
    if (with_model) {
      cmd->add_option("--model", model, "image or two-loop");
    }
    cmd->add_option("--temperature", temperature, "Disc temperature, e.g. 50mK");
    cmd->add_option("--loops", loops, "Response loops in the disc");
    cmd->add_option("--disc-radius", disc_radius, "Superconducting disc radius");
    cmd->add_option("--bc0", bc0, "Critical field at zero temperature, e.g. 10mT");
  }

  void apply(app::RunConfig& c) const {
    if (!model.empty()) c.model = model;
    if (auto v = quantity(temperature, Dimension::temperature)) c.temperature = v;
    if (loops > 0) c.disc.loop_count = loops;
    if (auto v = quantity(disc_radius, Dimension::length)) c.disc.radius = *v;
    if (auto v = quantity(bc0, Dimension::field)) c.disc.bc0 = *v;
    c.disc.validate();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Meissner levitation and stub-cavity frequency-shift toolkit"};
  cli.require_subcommand(1);
  std::string config_path, presets_path, report_path;
  bool no_timing = false;
  cli.add_option("--config", config_path, "JSON run configuration");
  cli.add_option("--presets", presets_path, "Magnet preset table (JSON)");
  cli.add_option("--report", report_path, "Also write the JSON report to this file");
  cli.add_flag("--no-timing", no_timing, "Omit timing from the report");
  cli.set_version_flag("--version", app::kVersion);

  MagnetFlags magnet;
  DiscFlags disc;

  auto* levitate = cli.add_subcommand("levitate", "Equilibrium height of one magnet");
  magnet.add(levitate);
  disc.add(levitate, true);

  auto* sweep = cli.add_subcommand("sweep", "Heights and onset temperature for presets");
  std::vector<std::string> sweep_presets;
  std::string sweep_output;
  sweep->add_option("--presets", sweep_presets, "Preset labels (default: all)")->delimiter(',');
  sweep->add_option("--output", sweep_output, "CSV output file (default: stdout)");
  disc.add(sweep, true);

  auto* freqmap = cli.add_subcommand("freqmap", "Tabulate the frequency-shift map");
  std::string map_csv, heights = "0,0.1mm,0.2mm,0.3mm,0.5mm,0.7mm,1mm", map_output,
                       map_format = "wide";
  int r_points = 41;
  freqmap->add_option("--map", map_csv, "Gridded map CSV (r_m,z_m,df_hz)");
  freqmap->add_option("--z", heights, "Comma-separated heights");
  freqmap->add_option("--r-points", r_points, "Radial samples");
  freqmap->add_option("--format", map_format, "wide or long")
      ->check(CLI::IsMember({"wide", "long"}));
  freqmap->add_option("--output", map_output, "CSV output file (default: stdout)");

  auto* invert = cli.add_subcommand("invert", "Height from a measured frequency shift");
  std::string df_text, r_text = "edge", noise_text = "0";
  invert->add_option("--map", map_csv, "Gridded map CSV (r_m,z_m,df_hz)");
  invert->add_option("--df", df_text, "Measured shift, e.g. -30MHz")->required();
  invert->add_option("--r", r_text, "Radial position or 'edge'");
  invert->add_option("--noise", noise_text, "Frequency noise, e.g. 100kHz");

  auto* curve = cli.add_subcommand("curve", "Force and potential versus height");
  std::string z_lo = "0.3mm", z_hi = "5mm", spacing = "linear", curve_output;
  int samples = 200;
  magnet.add(curve);
  disc.add(curve, false);
  curve->add_option("--z-lo", z_lo, "Lowest height");
  curve->add_option("--z-hi", z_hi, "Highest height");
  curve->add_option("--samples", samples, "Number of heights");
  curve->add_option("--spacing", spacing, "linear or geometric")
      ->check(CLI::IsMember({"linear", "geometric"}));
  curve->add_option("--output", curve_output, "CSV output file (default: stdout)");

  auto* analyze = cli.add_subcommand("analyze", "Fit, track and segment a cooldown");
  app::AnalyzeOptions analyze_opts;
  std::string reference_text, fluct_text, step_text, stability_text, emit_preset;
  int window = 0;
  long long seed = -1;
  analyze->add_option("--input", analyze_opts.input_dir, "Directory of T_<mK>mK.s2p traces");
  analyze->add_option("--manifest", analyze_opts.manifest, "CSV temperature_k,file");
  analyze->add_option("--format", analyze_opts.format, "auto, touchstone or csv")
      ->check(CLI::IsMember({"auto", "touchstone", "csv"}));
  analyze->add_option("--reference-f0", reference_text,
                      "Reference frequency (default: first record)");
  analyze->add_option("--fluctuation", fluct_text, "Rest fluctuation threshold");
  analyze->add_option("--step", step_text, "Transition step threshold");
  analyze->add_option("--stability", stability_text, "Levitated rolling-std threshold");
  analyze->add_option("--window", window, "Rolling window in samples");
  analyze->add_option("--output", analyze_opts.output_dir, "Output directory");
  analyze->add_option("--emit-synthetic", emit_preset,
                      "Write a synthetic cooldown for a preset into --output");
  analyze->add_option("--seed", seed, "Seed for --emit-synthetic");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kConfig;
  }

  try {
    app::RunConfig config;
    if (!config_path.empty()) config = app::load_config(config_path);
    if (!presets_path.empty()) config.presets_file = presets_path;
    if (!map_csv.empty()) config.map.csv = map_csv;

    std::string csv, csv_path;
    app::Report report;
    if (levitate->parsed()) {
      magnet.apply(config);
      disc.apply(config);
      report = app::cmd_levitate(config);
    } else if (sweep->parsed()) {
      disc.apply(config);
      auto out = app::cmd_sweep(config, sweep_presets);
      report = out.report;
      csv = out.csv;
      csv_path = sweep_output;
    } else if (freqmap->parsed()) {
      auto out = app::cmd_freqmap(config, r_points, quantity_list(heights, Dimension::length),
                                  map_format == "long");
      report = out.report;
      csv = out.csv;
      csv_path = map_output;
    } else if (invert->parsed()) {
      std::optional<double> r;
      if (r_text != "edge") r = parse_quantity(r_text, Dimension::length);
      report = app::cmd_invert(config, parse_quantity(df_text, Dimension::frequency), r,
                               parse_quantity(noise_text, Dimension::frequency));
    } else if (curve->parsed()) {
      magnet.apply(config);
      disc.apply(config);
      auto out = app::cmd_curve(
          config, parse_quantity(z_lo, Dimension::length), parse_quantity(z_hi, Dimension::length),
          samples,
          spacing == "geometric" ? levitation::Spacing::geometric : levitation::Spacing::linear);
      report = out.report;
      csv = out.csv;
      csv_path = curve_output;
    } else if (analyze->parsed()) {
      if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
      if (auto v = quantity(fluct_text, Dimension::frequency)) config.thresholds.fluctuation = *v;
      if (auto v = quantity(step_text, Dimension::frequency)) config.thresholds.step = *v;
      if (auto v = quantity(stability_text, Dimension::frequency)) {
        config.thresholds.stability_std = *v;
      }
      if (window > 0) config.thresholds.window = window;
      if (!emit_preset.empty()) {
        report = app::cmd_emit_synthetic(config, emit_preset, analyze_opts.output_dir);
      } else {
        analyze_opts.reference_f0 = quantity(reference_text, Dimension::frequency);
        auto out = app::cmd_analyze(config, analyze_opts);
        for (const auto& w : out.warnings) std::cerr << "levsim: warning: " << w << '\n';
        report = out.report;
        if (analyze_opts.output_dir.empty()) csv = out.cooldown_csv;
      }
    }

    const std::string report_text = report.to_json(!no_timing).dump(2) + "\n";
    if (!report_path.empty()) write_file(report_path, report_text);
    if (!csv.empty() && csv_path.empty()) {
      std::cout << csv;
    } else {
      if (!csv_path.empty()) write_file(csv_path, csv);
      std::cout << report_text;
    }
    return app::kOk;
  } catch (...) {
    const int code = app::exit_code_for_current_exception();
    try {
      throw;
    } catch (const InversionError& e) {
      std::cerr << "levsim: error: " << e.what() << "\n"
                << "levsim: achievable range: [" << e.range_lo() << ", " << e.range_hi()
                << "] Hz\n";
    } catch (const std::exception& e) {
      std::cerr << "levsim: error: " << e.what() << '\n';
    } catch (...) {
      std::cerr << "levsim: error: unknown failure\n";
    }
    return code;
  }
}
