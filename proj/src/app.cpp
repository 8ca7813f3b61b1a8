#include "levsim/app.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "levsim/errors.hpp"
#include "levsim/magnetostatics.hpp"

#ifndef LEVSIM_PRESETS_FILE
#define LEVSIM_PRESETS_FILE "data/presets.json"
#endif

namespace levsim::app {

namespace fs = std::filesystem;
namespace lev = levitation;
namespace ms = magnetostatics;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_text(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

// Strict JSON object reader: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParameterError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ParameterError(where(key) + " must be a number");
    out = v.get<double>();
  }

  void number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
      return;
    }
    if (!v.is_number()) throw ParameterError(where(key) + " must be a number");
    out = v.get<double>();
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ParameterError(where(key) + " must be an integer");
    out = v.get<Int>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ParameterError(where(key) + " must be a string");
    out = v.get<std::string>();
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ParameterError("unknown configuration key " + where(it.key()));
      }
    }
  }

 private:
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "configuration" : "'" + path_ + "'";
    return "'" + (path_.empty() ? key : path_ + "." + key) + "'";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json magnet_json(const ms::Magnet& m) {
  return {{"label", m.label},
          {"remanence_t", m.remanence},
          {"radius_m", m.radius},
          {"height_m", m.height},
          {"mass_kg", m.mass},
          {"moment_am2", ms::moment_from_remanence(m).magnitude}};
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

cavity::Polarity parse_polarity(const std::string& s) {
  if (s == "stub_top") return cavity::Polarity::stub_top;
  if (s == "gap_floor") return cavity::Polarity::gap_floor;
  throw ParameterError("map polarity must be stub_top or gap_floor, not '" + s + "'");
}

PresetTable load_table(const RunConfig& config) {
  return load_presets(config.presets_file.empty() ? default_presets_path()
                                                  : config.presets_file);
}

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const InversionError&) {
    return kInversion;
  } catch (const NoLevitationError&) {
    return kNoLevitation;
  } catch (const ConvergenceError&) {
    return kNoLevitation;
  } catch (const NoDataError&) {
    return kNoData;
  } catch (const ParameterError&) {
    return kConfig;
  } catch (const DomainError&) {
    return kConfig;
  } catch (const FormatError&) {
    return kConfig;
  } catch (const CalibrationError&) {
    return kConfig;
  } catch (const json::exception&) {
    return kConfig;
  } catch (...) {
    return kInternal;
  }
}

const MagnetPreset& PresetTable::find(const std::string& label) const {
  for (const auto& p : presets) {
    if (p.label == label) return p;
  }
  std::string known;
  for (const auto& p : presets) known += (known.empty() ? "" : ", ") + p.label;
  throw ParameterError("unknown preset '" + label + "' (known: " + known + ")");
}

std::string default_presets_path() {
  if (const char* env = std::getenv("LEVSIM_PRESETS"); env && *env) return env;
  return LEVSIM_PRESETS_FILE;
}

PresetTable load_presets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open preset file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("preset file " + path + ": " + e.what());
  }
  PresetTable table;
  ObjectReader root(j, "");
  root.integer("version", table.version);
  if (table.version < 1) throw ParameterError("preset file needs a positive version");
  if (!root.has("presets") || !j.at("presets").is_array()) {
    throw ParameterError("preset file needs a 'presets' array");
  }
  root.finish();
  std::set<std::string> labels;
  for (std::size_t i = 0; i < j.at("presets").size(); ++i) {
    ObjectReader r(j.at("presets")[i], "presets[" + std::to_string(i) + "]");
    MagnetPreset p;
    r.string("label", p.label);
    for (const char* key : {"label", "remanence", "radius", "height", "mass"}) {
      if (!r.has(key)) {
        throw ParameterError("preset " + std::to_string(i) + " lacks '" + key + "'");
      }
    }
    r.number("remanence", p.magnet.remanence);
    r.number("radius", p.magnet.radius);
    r.number("height", p.magnet.height);
    r.number("mass", p.magnet.mass);
    r.finish();
    if (!labels.insert(p.label).second) {
      throw ParameterError("duplicate preset label '" + p.label + "'");
    }
    p.magnet.label = p.label;
    p.magnet.validate();
    table.presets.push_back(p);
  }
  return table;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  ObjectReader root(j, "");
  root.string("presets_file", c.presets_file);
  root.string("model", c.model);
  root.number("temperature", c.temperature);
  root.integer("seed", c.seed);
  root.number("measured_f0", c.measured_f0);
  if (root.has("magnet")) {
    auto r = root.child("magnet");
    r.string("preset", c.magnet.preset);
    r.number("radius", c.magnet.radius);
    r.number("height", c.magnet.height);
    r.number("mass", c.magnet.mass);
    r.number("remanence", c.magnet.remanence);
    r.finish();
  }
  if (root.has("disc")) {
    auto r = root.child("disc");
    r.number("radius", c.disc.radius);
    r.integer("loop_count", c.disc.loop_count);
    r.number("bc0", c.disc.bc0);
    r.number("tc", c.disc.tc);
    r.finish();
  }
  if (root.has("solver")) {
    auto r = root.child("solver");
    r.integer("z_samples", c.solver.z_samples);
    r.number("z_max", c.solver.z_max);
    r.number("tolerance", c.solver.tolerance);
    r.number("damping", c.solver.damping);
    r.integer("max_iterations", c.solver.max_iterations);
    r.number("loop_radius", c.solver.loop_radius);
    r.finish();
  }
  if (root.has("geometry")) {
    auto r = root.child("geometry");
    r.number("outer_radius", c.geometry.outer_radius);
    r.number("cavity_height", c.geometry.cavity_height);
    r.number("stub_radius", c.geometry.stub_radius);
    r.number("stub_height", c.geometry.stub_height);
    r.number("effective_length_correction", c.geometry.effective_length_correction);
    r.finish();
  }
  if (root.has("map")) {
    auto r = root.child("map");
    r.string("csv", c.map.csv);
    r.string("polarity", c.map.polarity);
    r.number("edge_radius", c.map.edge_radius);
    r.number("radial_slope", c.map.radial_slope);
    r.number("vertical_sensitivity", c.map.vertical_sensitivity);
    r.number("edge_shift", c.map.edge_shift);
    r.number("residual_offset", c.map.residual_offset);
    r.number("r_max", c.map.r_max);
    r.number("s0", c.map.s0);
    r.number("s1", c.map.s1);
    r.number("lambda", c.map.lambda);
    r.finish();
  }
  if (root.has("inversion")) {
    auto r = root.child("inversion");
    r.number("sensitivity_floor", c.inversion.sensitivity_floor);
    r.number("z_max", c.inversion.z_max);
    r.finish();
  }
  if (root.has("thresholds")) {
    auto r = root.child("thresholds");
    r.number("fluctuation", c.thresholds.fluctuation);
    r.number("step", c.thresholds.step);
    r.number("stability_std", c.thresholds.stability_std);
    r.integer("window", c.thresholds.window);
    r.finish();
  }
  root.finish();
  parse_model(c.model);
  parse_polarity(c.map.polarity);
  c.disc.validate();
  c.geometry.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open configuration file " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParameterError("configuration file " + path + ": " + e.what());
  }
}

json config_to_json(const RunConfig& c) {
  json magnet = {{"preset", c.magnet.preset},
                 {"radius", optional_json(c.magnet.radius)},
                 {"height", optional_json(c.magnet.height)},
                 {"mass", optional_json(c.magnet.mass)},
                 {"remanence", optional_json(c.magnet.remanence)}};
  return {
      {"presets_file", c.presets_file.empty() ? default_presets_path() : c.presets_file},
      {"model", c.model},
      {"temperature", optional_json(c.temperature)},
      {"seed", c.seed},
      {"measured_f0", optional_json(c.measured_f0)},
      {"magnet", magnet},
      {"disc",
       {{"radius", c.disc.radius},
        {"loop_count", c.disc.loop_count},
        {"bc0", c.disc.bc0},
        {"tc", c.disc.tc}}},
      {"solver",
       {{"z_samples", c.solver.z_samples},
        {"z_max", c.solver.z_max},
        {"tolerance", c.solver.tolerance},
        {"damping", c.solver.damping},
        {"max_iterations", c.solver.max_iterations},
        {"loop_radius", c.solver.loop_radius}}},
      {"geometry",
       {{"outer_radius", c.geometry.outer_radius},
        {"cavity_height", c.geometry.cavity_height},
        {"stub_radius", c.geometry.stub_radius},
        {"stub_height", c.geometry.stub_height},
        {"effective_length_correction", c.geometry.effective_length_correction}}},
      {"map",
       {{"csv", c.map.csv},
        {"polarity", c.map.polarity},
        {"edge_radius", c.map.edge_radius},
        {"radial_slope", c.map.radial_slope},
        {"vertical_sensitivity", c.map.vertical_sensitivity},
        {"edge_shift", c.map.edge_shift},
        {"residual_offset", c.map.residual_offset},
        {"r_max", c.map.r_max},
        {"s0", optional_json(c.map.s0)},
        {"s1", optional_json(c.map.s1)},
        {"lambda", optional_json(c.map.lambda)}}},
      {"inversion",
       {{"sensitivity_floor", c.inversion.sensitivity_floor},
        {"z_max", c.inversion.z_max}}},
      {"thresholds",
       {{"fluctuation", c.thresholds.fluctuation},
        {"step", c.thresholds.step},
        {"stability_std", c.thresholds.stability_std},
        {"window", c.thresholds.window}}},
  };
}

int worker_count() {
  if (const char* env = std::getenv("LEVSIM_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1 || n > 1024) {
      throw ParameterError(std::string("LEVSIM_THREADS must be a positive integer, not '") +
                           env + "'");
    }
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ms::Magnet resolve_magnet(const RunConfig& config, const PresetTable& presets) {
  const MagnetConfig& mc = config.magnet;
  ms::Magnet m;
  if (!mc.preset.empty()) {
    m = presets.find(mc.preset).magnet;
  } else if (!(mc.radius && mc.height && mc.mass && mc.remanence)) {
    throw ParameterError(
        "a custom magnet needs radius, height, mass and remanence (or use a preset)");
  } else {
    m.label = "custom";
  }
  if (mc.radius) m.radius = *mc.radius;
  if (mc.height) m.height = *mc.height;
  if (mc.mass) m.mass = *mc.mass;
  if (mc.remanence) m.remanence = *mc.remanence;
  m.validate();
  return m;
}

lev::Model parse_model(const std::string& name) {
  if (name == "image") return lev::Model::image;
  if (name == "two-loop" || name == "two_loop") return lev::Model::two_loop;
  throw ParameterError("model must be 'image' or 'two-loop', not '" + name + "'");
}

cavity::FrequencyMap build_map(const RunConfig& config) {
  const MapConfig& mc = config.map;
  if (!mc.csv.empty()) return cavity::load_shift_map_csv(mc.csv);
  const cavity::Polarity polarity = parse_polarity(mc.polarity);
  cavity::ParametricParams params;
  if (mc.s0 && mc.s1 && mc.lambda) {
    params = {*mc.s0, *mc.s1, *mc.lambda, mc.residual_offset};
  } else if (mc.s0 || mc.s1 || mc.lambda) {
    throw ParameterError("map: give all of s0, s1 and lambda, or none of them");
  } else {
    cavity::MapAnchors anchors;
    anchors.edge_radius = mc.edge_radius;
    anchors.radial_slope = mc.radial_slope;
    anchors.vertical_sensitivity = mc.vertical_sensitivity;
    anchors.edge_shift = mc.edge_shift;
    anchors.residual_offset = mc.residual_offset;
    cavity::ParametricParams start = cavity::parametric_from_anchors(anchors);
    // Anchors follow the stub-top convention; gap_floor flips the fitted map.
    params = cavity::calibrate_map_anchors(cavity::anchor_list(anchors),
                                           cavity::Polarity::stub_top, start)
                 .params;
  }
  return cavity::FrequencyMap::parametric(params, polarity, mc.r_max);
}

json Report::to_json(bool with_timing) const {
  json j = {{"command", command},
            {"version", kVersion},
            {"config", config},
            {"inputs", inputs},
            {"results", results}};
  if (with_timing) j["timing"] = {{"wall_seconds", wall_seconds}};
  return j;
}

Report cmd_levitate(const RunConfig& config) {
  const auto start = Clock::now();
  Report report;
  report.command = "levitate";
  report.config = config_to_json(config);
  const ms::Magnet magnet = resolve_magnet(config, load_table(config));
  const lev::Model model = parse_model(config.model);
  report.inputs = {{"magnet", magnet_json(magnet)}, {"model", config.model},
                   {"temperature_k", optional_json(config.temperature)}};

  const lev::Equilibrium image = lev::image_equilibrium_height(magnet);
  const auto array = lev::ResponseArray::build(config.disc);
  lev::Equilibrium eq = image;
  if (model == lev::Model::two_loop) {
    eq = lev::equilibrium_height(model, magnet, array, config.disc, config.temperature,
                                 config.solver);
  }
  json results = {{"height_m", eq.height},
                  {"stable", eq.stable},
                  {"residual_force_n", eq.residual_force},
                  {"slope_n_per_m", eq.slope},
                  {"iterations", eq.iterations},
                  {"image_height_m", image.height}};
  if (model == lev::Model::two_loop) {
    results["active_loops"] = eq.active_loops;
    results["image_overestimate"] = image.height / eq.height - 1.0;
  } else if (config.temperature) {
    results["note"] = "the image model ignores the temperature";
  }
  try {
    results["onset_temperature_k"] =
        lev::onset_temperature(magnet, array, config.disc, config.solver.loop_radius);
  } catch (const lev::NoOnsetError& e) {
    results["onset_temperature_k"] = nullptr;
    results["onset_error"] = e.what();
  }
  const double t = config.temperature.value_or(0.0);
  results["normal_region_radius_m"] =
      lev::normal_region_radius(magnet, 0.5 * magnet.height, t, config.disc);
  results["normal_region_temperature_k"] = t;
  report.results = results;
  report.wall_seconds = seconds_since(start);
  return report;
}

SweepOutput cmd_sweep(const RunConfig& config, std::vector<std::string> labels) {
  const auto start = Clock::now();
  const PresetTable table = load_table(config);
  if (labels.empty()) {
    for (const auto& p : table.presets) labels.push_back(p.label);
  }
  std::vector<ms::Magnet> magnets;
  for (const auto& label : labels) {
    RunConfig row = config;
    row.magnet = MagnetConfig{};
    row.magnet.preset = label;
    row.magnet.radius = config.magnet.radius;
    row.magnet.height = config.magnet.height;
    row.magnet.mass = config.magnet.mass;
    magnets.push_back(resolve_magnet(row, table));
  }

  struct Row {
    std::optional<double> image, two_loop, onset;
    std::string error;
  };
  std::vector<Row> rows(magnets.size());
  const auto array = lev::ResponseArray::build(config.disc);
  auto run_row = [&](std::size_t i) {
    Row& row = rows[i];
    auto attempt = [&](const char* what, auto&& fn) {
      try {
        fn();
      } catch (const std::exception& e) {
        row.error += (row.error.empty() ? "" : "; ") + std::string(what) + ": " + e.what();
      }
    };
    attempt("image", [&] { row.image = lev::image_equilibrium_height(magnets[i]).height; });
    attempt("two-loop", [&] {
      row.two_loop = lev::equilibrium_height(lev::Model::two_loop, magnets[i], array,
                                             config.disc, config.temperature, config.solver)
                         .height;
    });
    attempt("onset", [&] {
      row.onset = lev::onset_temperature(magnets[i], array, config.disc,
                                         config.solver.loop_radius);
    });
  };
  const int threads = std::min<int>(worker_count(), static_cast<int>(rows.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) run_row(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) run_row(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::ostringstream csv;
  csv << "label,remanence,moment,height_image,height_two_loop,onset_T,error\n";
  json results = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = magnets[i];
    const double moment = ms::moment_from_remanence(m).magnitude;
    auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    csv << csv_text(m.label) << ',' << fmt(m.remanence) << ',' << fmt(moment) << ','
        << cell(rows[i].image) << ',' << cell(rows[i].two_loop) << ','
        << cell(rows[i].onset) << ',' << csv_text(rows[i].error) << '\n';
    results.push_back({{"label", m.label},
                       {"remanence_t", m.remanence},
                       {"moment_am2", moment},
                       {"height_image_m", optional_json(rows[i].image)},
                       {"height_two_loop_m", optional_json(rows[i].two_loop)},
                       {"onset_temperature_k", optional_json(rows[i].onset)},
                       {"error", rows[i].error}});
  }
  SweepOutput out;
  out.csv = csv.str();
  out.report.command = "sweep";
  out.report.config = config_to_json(config);
  out.report.inputs = {{"presets", labels}};
  out.report.results = {{"rows", results}};
  out.report.wall_seconds = seconds_since(start);
  return out;
}

FreqmapOutput cmd_freqmap(const RunConfig& config, int r_points,
                          const std::vector<double>& heights, bool long_format) {
  const auto start = Clock::now();
  if (r_points < 2) throw ParameterError("freqmap needs at least two radial points");
  if (heights.empty()) throw ParameterError("freqmap needs at least one height");
  const cavity::FrequencyMap map = build_map(config);
  cavity::GridAxis axes;
  for (int i = 0; i < r_points; ++i) {
    axes.r.push_back(map.r_min() + (map.r_max() - map.r_min()) * i / (r_points - 1));
  }
  axes.z = heights;

  std::ostringstream csv;
  if (long_format) {
    cavity::write_shift_map_csv(map, axes, csv);
  } else {
    csv << "r_m";
    for (double z : heights) csv << ",df_hz@z=" << fmt(z) << "m";
    csv << '\n';
    for (double r : axes.r) {
      csv << fmt(r);
      for (double z : heights) csv << ',' << fmt(map.shift_at(r, z));
      csv << '\n';
    }
  }

  const double edge = std::min(config.map.edge_radius, map.r_max());
  json rows = json::array();
  const double spread0 =
      map.z_min() <= 0.0 ? cavity::lateral_spread(map, 0.0, edge) : std::nan("");
  for (double z : heights) {
    const double spread = cavity::lateral_spread(map, z, edge);
    rows.push_back({{"z_m", z},
                    {"radial_slope_hz_per_m", map.d_dr(0.5 * edge, z)},
                    {"edge_shift_hz", map.shift_at(edge, z)},
                    {"edge_vertical_sensitivity_hz_per_m", map.d_dz(edge, z)},
                    {"lateral_spread_hz", spread},
                    {"lateral_spread_ratio", std::isfinite(spread0) && spread0 != 0.0
                                                 ? json(spread / spread0)
                                                 : json(nullptr)}});
  }
  FreqmapOutput out;
  out.csv = csv.str();
  out.report.command = "freqmap";
  out.report.config = config_to_json(config);
  out.report.inputs = {{"r_points", r_points}, {"heights_m", heights},
                       {"format", long_format ? "long" : "wide"}};
  json params = nullptr;
  if (map.kind() == cavity::FrequencyMap::Kind::parametric) {
    params = {{"s0_hz", map.params().s0},
              {"s1_hz_per_m", map.params().s1},
              {"lambda_m", map.params().lambda},
              {"residual_offset_hz", map.params().residual_offset}};
  }
  out.report.results = {{"kind", map.kind() == cavity::FrequencyMap::Kind::parametric
                                      ? "parametric"
                                      : "gridded"},
                        {"parameters", params},
                        {"heights", rows}};
  out.report.wall_seconds = seconds_since(start);
  return out;
}

Report cmd_invert(const RunConfig& config, double df, std::optional<double> r,
                  double df_noise) {
  const auto start = Clock::now();
  const cavity::FrequencyMap map = build_map(config);
  const double radius = r.value_or(config.map.edge_radius);
  const auto est = cavity::invert_height(map, df, radius, df_noise, config.inversion);
  Report report;
  report.command = "invert";
  report.config = config_to_json(config);
  report.inputs = {{"df_hz", df}, {"r_m", radius}, {"df_noise_hz", df_noise}};
  report.results = {{"height_m", est.height},
                    {"sensitivity_hz_per_m", est.sensitivity},
                    {"uncertainty_m", est.uncertainty},
                    {"ill_conditioned", est.ill_conditioned}};
  if (config.measured_f0) {
    cavity::CavityGeometry g = config.geometry;
    g.effective_length_correction = cavity::calibrate_effective_length(g, *config.measured_f0);
    report.results["effective_length_correction_m"] = g.effective_length_correction;
    report.results["bare_frequency_hz"] = cavity::bare_frequency(g);
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

CurveOutput cmd_curve(const RunConfig& config, double z_lo, double z_hi, int samples,
                      lev::Spacing spacing) {
  const auto start = Clock::now();
  const ms::Magnet magnet = resolve_magnet(config, load_table(config));
  const auto array = lev::ResponseArray::build(config.disc);
  const auto curve = lev::potential_curve(array, magnet, z_lo, z_hi, samples, spacing,
                                          config.solver.loop_radius);
  std::ostringstream csv;
  csv << "z_m,force_n,potential_j\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.z.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", curve.z[i], curve.force[i],
                  curve.potential[i]);
    csv << buf;
  }
  const auto it = std::min_element(curve.potential.begin(), curve.potential.end());
  CurveOutput out;
  out.csv = csv.str();
  out.report.command = "curve";
  out.report.config = config_to_json(config);
  out.report.inputs = {{"magnet", magnet_json(magnet)}, {"z_lo_m", z_lo}, {"z_hi_m", z_hi},
                       {"samples", samples},
                       {"spacing", spacing == lev::Spacing::linear ? "linear" : "geometric"}};
  out.report.results = {{"potential_minimum_z_m", curve.z[it - curve.potential.begin()]},
                        {"potential_minimum_j", *it}};
  out.report.wall_seconds = seconds_since(start);
  return out;
}

json segmentation_to_json(const spectra::RegionSegmentation& seg) {
  json segments = json::array();
  for (const auto& s : seg.segments) {
    json j = {{"label", spectra::region_name(s.label)},
              {"begin", s.begin},
              {"end", s.end},
              {"samples", s.size()}};
    if (s.empty()) {
      j["t_high_k"] = nullptr;
      j["t_low_k"] = nullptr;
      j["mean_df_hz"] = nullptr;
      j["max_step_hz"] = nullptr;
    } else {
      j["t_high_k"] = s.t_high;
      j["t_low_k"] = s.t_low;
      j["mean_df_hz"] = s.mean_df;
      j["max_step_hz"] = s.max_step;
    }
    segments.push_back(j);
  }
  json out = {{"segments", segments}};
  const auto& rest = seg[spectra::Region::rest];
  const auto& lev = seg[spectra::Region::levitated];
  out["upshift_hz"] = !rest.empty() && !lev.empty() ? json(lev.mean_df - rest.mean_df)
                                                    : json(nullptr);
  return out;
}

namespace {

struct TraceFile {
  double temperature;
  fs::path path;
};

std::vector<TraceFile> read_manifest(const std::string& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ParameterError("cannot open manifest " + manifest);
  std::vector<TraceFile> files;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  const fs::path base = fs::path(manifest).parent_path();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header) {
      if (line != "temperature_k,file") {
        throw FormatError("manifest header must be temperature_k,file", line_no);
      }
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("expected 2 fields", line_no);
    char* end = nullptr;
    const std::string t = line.substr(0, comma);
    const double temperature = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0' || !std::isfinite(temperature)) {
      throw FormatError("bad temperature '" + t + "'", line_no);
    }
    files.push_back({temperature, base / line.substr(comma + 1)});
  }
  if (!header) throw FormatError("empty manifest", 0);
  return files;
}

std::vector<TraceFile> scan_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ParameterError("not a directory: " + dir);
  static const std::regex pattern(R"(T_([0-9]+(?:\.[0-9]+)?)mK\.(s2p|S2P|csv|CSV))");
  std::vector<TraceFile> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      files.push_back({std::stod(m[1].str()) / 1000.0, entry.path()});
    }
  }
  std::sort(files.begin(), files.end(),
            [](const TraceFile& a, const TraceFile& b) { return a.path < b.path; });
  return files;
}

}  // namespace

AnalyzeOutput cmd_analyze(const RunConfig& config, const AnalyzeOptions& options) {
  const auto start = Clock::now();
  if (options.format != "auto" && options.format != "touchstone" && options.format != "csv") {
    throw ParameterError("format must be auto, touchstone or csv");
  }
  std::vector<TraceFile> files;
  if (!options.manifest.empty()) {
    files = read_manifest(options.manifest);
  } else if (!options.input_dir.empty()) {
    files = scan_directory(options.input_dir);
  } else {
    throw ParameterError("analyze needs an input directory or a manifest");
  }

  AnalyzeOutput out;
  std::vector<spectra::CooldownInput> records;
  json skipped = json::array();
  for (const auto& f : files) {
    try {
      std::string ext = f.path.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      const bool csv = options.format == "csv" || (options.format == "auto" && ext == ".csv");
      spectra::ResonanceTrace trace = csv ? spectra::parse_csv_trace(f.path.string())
                                          : spectra::parse_touchstone(f.path.string());
      records.push_back({f.temperature, std::move(trace)});
    } catch (const Error& e) {
      out.warnings.push_back(f.path.filename().string() + ": " + e.what());
      skipped.push_back({{"file", f.path.filename().string()}, {"error", e.what()}});
    }
  }
  if (records.empty()) {
    throw NoDataError(files.empty() ? "no trace files found" : "every trace file was skipped");
  }
  if (records.size() < 2) throw NoDataError("a cooldown needs at least two traces");

  spectra::Reference reference;
  reference.f0 = options.reference_f0;
  const auto series = spectra::track_cooldown(std::move(records), reference, worker_count());
  for (const auto& r : series.records) {
    if (!r.ok) out.warnings.push_back("fit failed at T = " + fmt(r.temperature) + " K: " + r.error);
  }
  std::ostringstream csv;
  spectra::write_cooldown_csv(series, csv);
  out.cooldown_csv = csv.str();
  out.segmentation = segmentation_to_json(spectra::classify_regions(series, config.thresholds));
  out.segmentation["reference_f0_hz"] = series.reference_f0;
  out.segmentation["thresholds"] = config_to_json(config)["thresholds"];

  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    std::ofstream(fs::path(options.output_dir) / "cooldown.csv", std::ios::binary)
        << out.cooldown_csv;
    std::ofstream(fs::path(options.output_dir) / "segmentation.json", std::ios::binary)
        << out.segmentation.dump(2) << '\n';
  }

  std::size_t fitted = 0;
  for (const auto& r : series.records) fitted += r.ok ? 1 : 0;
  out.report.command = "analyze";
  out.report.config = config_to_json(config);
  out.report.inputs = {{"input_dir", options.input_dir},
                       {"manifest", options.manifest},
                       {"format", options.format},
                       {"reference_f0_hz", optional_json(options.reference_f0)},
                       {"output_dir", options.output_dir}};
  out.report.results = {{"files", files.size()},
                        {"fitted", fitted},
                        {"skipped", skipped},
                        {"segmentation", out.segmentation}};
  out.report.wall_seconds = seconds_since(start);
  return out;
}

Report cmd_emit_synthetic(const RunConfig& config, const std::string& preset,
                          const std::string& output_dir) {
  const auto start = Clock::now();
  if (output_dir.empty()) throw ParameterError("emit-synthetic needs an output directory");
  const spectra::CooldownProfile profile = spectra::default_profile(preset);
  const auto syn = spectra::synth_cooldown(profile, config.seed);
  fs::create_directories(output_dir);
  std::ofstream manifest(fs::path(output_dir) / "manifest.csv", std::ios::binary);
  manifest << "temperature_k,file\n";
  for (const auto& rec : syn.records) {
    const long mk = std::lround(rec.temperature * 1000.0);
    const std::string name = "T_" + std::to_string(mk) + "mK.s2p";
    std::ofstream file(fs::path(output_dir) / name, std::ios::binary);
    spectra::write_touchstone(spectra::touchstone_from_trace(rec.trace), file);
    manifest << fmt(rec.temperature) << ',' << name << '\n';
  }
  Report report;
  report.command = "emit-synthetic";
  report.config = config_to_json(config);
  report.inputs = {{"preset", preset}, {"output_dir", output_dir}};
  report.results = {{"files", syn.records.size()},
                    {"reference_f0_hz", syn.reference_f0},
                    {"template",
                     {{"rest_level_hz", profile.rest_level},
                      {"upshift_hz", profile.upshift},
                      {"fluctuation_start_k", profile.fluctuation_start_mk / 1000.0},
                      {"transition_start_k", profile.transition_start_mk / 1000.0},
                      {"levitated_start_k", profile.levitated_start_mk / 1000.0},
                      {"snr_db", profile.snr_db}}}};
  report.wall_seconds = seconds_since(start);
  return report;
}

}  // namespace levsim::app
