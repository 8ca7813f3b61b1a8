#include "levsim/cavity.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/toms748_solve.hpp>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "levsim/constants.hpp"
#include "levsim/errors.hpp"

namespace levsim::cavity {

namespace {

double polarity_sign(Polarity p) { return p == Polarity::stub_top ? 1.0 : -1.0; }

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_field(const std::string& text, std::size_t line) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw FormatError("not a finite number: '" + t + "'", line);
  }
  return v;
}

}  // namespace

void CavityGeometry::validate() const {
  if (!(outer_radius > 0.0) || !(cavity_height > 0.0) || !(stub_radius > 0.0) ||
      !(stub_height > 0.0)) {
    throw DomainError("cavity dimensions must be positive");
  }
  if (!(stub_radius < outer_radius)) {
    throw DomainError("stub radius must be smaller than the outer radius");
  }
  if (!(stub_height < cavity_height)) {
    throw DomainError("stub height must be smaller than the cavity height");
  }
  if (!(stub_height + effective_length_correction > 0.0)) {
    throw DomainError("effective stub length must be positive");
  }
}

double bare_frequency(const CavityGeometry& geometry) {
  geometry.validate();
  return kSpeedOfLight /
         (4.0 * (geometry.stub_height + geometry.effective_length_correction));
}

double calibrate_effective_length(const CavityGeometry& geometry,
                                  double measured_f0) {
  if (!(measured_f0 > 0.0) || !std::isfinite(measured_f0)) {
    throw CalibrationError("measured frequency must be positive");
  }
  const double correction =
      kSpeedOfLight / (4.0 * measured_f0) - geometry.stub_height;
  if (!(correction > -geometry.stub_height)) {
    throw CalibrationError("non-physical effective length correction");
  }
  return correction;
}

ParametricParams parametric_from_anchors(const MapAnchors& a) {
  if (!(a.vertical_sensitivity > 0.0)) {
    throw CalibrationError("vertical sensitivity magnitude must be positive");
  }
  ParametricParams p;
  p.s1 = -a.radial_slope;
  const double edge_strength = -(a.edge_shift - a.residual_offset);
  p.s0 = edge_strength - p.s1 * a.edge_radius;
  p.lambda = std::abs(edge_strength) / a.vertical_sensitivity;
  p.residual_offset = a.residual_offset;
  if (!(p.lambda > 0.0)) {
    throw CalibrationError("anchors imply a non-positive decay length");
  }
  return p;
}

FrequencyMap FrequencyMap::parametric(const ParametricParams& params,
                                      Polarity polarity, double r_max) {
  if (!(params.lambda > 0.0)) throw DomainError("lambda must be positive");
  if (!(r_max > 0.0)) throw DomainError("map radius must be positive");
  FrequencyMap map;
  map.kind_ = Kind::parametric;
  map.params_ = params;
  map.polarity_ = polarity;
  map.parametric_r_max_ = r_max;
  return map;
}

FrequencyMap FrequencyMap::gridded(GridAxis axes, std::vector<double> values) {
  if (axes.r.size() < 2 || axes.z.size() < 2) {
    throw FormatError("a gridded map needs at least two samples per axis", 0);
  }
  if (!strictly_increasing(axes.r) || !strictly_increasing(axes.z)) {
    throw FormatError("grid axes must be strictly increasing", 0);
  }
  if (values.size() != axes.r.size() * axes.z.size()) {
    throw FormatError("grid values do not match the axes", 0);
  }
  FrequencyMap map;
  map.kind_ = Kind::gridded;
  map.axes_ = std::move(axes);
  map.values_ = std::move(values);
  return map;
}

double FrequencyMap::r_min() const {
  return kind_ == Kind::parametric ? 0.0 : axes_.r.front();
}
double FrequencyMap::r_max() const {
  return kind_ == Kind::parametric ? parametric_r_max_ : axes_.r.back();
}
double FrequencyMap::z_min() const {
  return kind_ == Kind::parametric ? 0.0 : axes_.z.front();
}
double FrequencyMap::z_max() const {
  return kind_ == Kind::parametric ? HUGE_VAL : axes_.z.back();
}

void FrequencyMap::check_domain(double r, double z) const {
  if (!(r >= r_min() && r <= r_max() && z >= z_min() && z <= z_max())) {
    std::ostringstream msg;
    msg << "(r, z) = (" << r << ", " << z << ") m lies outside the map domain";
    throw DomainError(msg.str());
  }
}

FrequencyMap::Cell FrequencyMap::locate(double r, double z) const {
  auto index = [](const std::vector<double>& axis, double x) {
    auto it = std::upper_bound(axis.begin(), axis.end(), x);
    std::size_t i = static_cast<std::size_t>(it - axis.begin());
    if (i == 0) i = 1;
    if (i >= axis.size()) i = axis.size() - 1;
    return i - 1;
  };
  Cell c;
  c.i = index(axes_.r, r);
  c.j = index(axes_.z, z);
  c.t = (r - axes_.r[c.i]) / (axes_.r[c.i + 1] - axes_.r[c.i]);
  c.u = (z - axes_.z[c.j]) / (axes_.z[c.j + 1] - axes_.z[c.j]);
  return c;
}

double FrequencyMap::shift_at(double r, double z) const {
  check_domain(r, z);
  if (kind_ == Kind::parametric) {
    const double s = params_.s0 + params_.s1 * r;
    return -polarity_sign(polarity_) * s * std::exp(-z / params_.lambda) +
           params_.residual_offset;
  }
  const Cell c = locate(r, z);
  return (1 - c.t) * (1 - c.u) * node(c.i, c.j) +
         c.t * (1 - c.u) * node(c.i + 1, c.j) +
         (1 - c.t) * c.u * node(c.i, c.j + 1) + c.t * c.u * node(c.i + 1, c.j + 1);
}

double FrequencyMap::d_dz(double r, double z) const {
  check_domain(r, z);
  if (kind_ == Kind::parametric) {
    const double s = params_.s0 + params_.s1 * r;
    return polarity_sign(polarity_) * s / params_.lambda *
           std::exp(-z / params_.lambda);
  }
  const Cell c = locate(r, z);
  const double dz = axes_.z[c.j + 1] - axes_.z[c.j];
  return ((1 - c.t) * (node(c.i, c.j + 1) - node(c.i, c.j)) +
          c.t * (node(c.i + 1, c.j + 1) - node(c.i + 1, c.j))) /
         dz;
}

double FrequencyMap::d_dr(double r, double z) const {
  check_domain(r, z);
  if (kind_ == Kind::parametric) {
    return -polarity_sign(polarity_) * params_.s1 * std::exp(-z / params_.lambda);
  }
  const Cell c = locate(r, z);
  const double dr = axes_.r[c.i + 1] - axes_.r[c.i];
  return ((1 - c.u) * (node(c.i + 1, c.j) - node(c.i, c.j)) +
          c.u * (node(c.i + 1, c.j + 1) - node(c.i, c.j + 1))) /
         dr;
}

FrequencyMap build_shift_map_parametric(double s0, double s1, double lambda,
                                        double residual_offset,
                                        Polarity polarity) {
  return FrequencyMap::parametric({s0, s1, lambda, residual_offset}, polarity);
}

FrequencyMap load_shift_map_csv(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  GridAxis axes;
  std::vector<double> values;
  std::size_t position = 0;   // index within the current r block
  std::size_t last_line = 0;
  bool first_block = true;

  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty()) continue;
    if (!have_header) {
      if (line_no == 1 && raw.size() >= 3 && raw.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        raw.erase(0, 3);
      }
      std::string header;
      for (char ch : raw) {
        if (!std::isspace(static_cast<unsigned char>(ch))) header += ch;
      }
      if (header != "r_m,z_m,df_hz") {
        throw FormatError("expected header r_m,z_m,df_hz", line_no);
      }
      have_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(raw);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 3) {
      throw FormatError("expected 3 fields", line_no);
    }
    const double r = parse_field(fields[0], line_no);
    const double z = parse_field(fields[1], line_no);
    const double df = parse_field(fields[2], line_no);
    last_line = line_no;

    if (axes.r.empty()) {
      axes.r.push_back(r);
    } else if (r != axes.r.back()) {
      if (first_block) first_block = false;
      if (position != axes.z.size()) {
        throw FormatError("incomplete grid row for r = " + trim(fields[0]), line_no);
      }
      if (!(r > axes.r.back())) {
        throw FormatError("r axis is not strictly increasing", line_no);
      }
      axes.r.push_back(r);
      position = 0;
    }
    if (first_block) {
      if (!axes.z.empty() && !(z > axes.z.back())) {
        throw FormatError("z axis is not strictly increasing", line_no);
      }
      axes.z.push_back(z);
    } else if (position >= axes.z.size() || z != axes.z[position]) {
      throw FormatError("ragged grid: z does not match the first row", line_no);
    }
    ++position;
    values.push_back(df);
  }
  if (!have_header) throw FormatError("empty map file", line_no);
  if (values.empty()) throw FormatError("map has no samples", line_no);
  if (position != axes.z.size()) {
    throw FormatError("incomplete grid row at end of file", last_line);
  }
  if (axes.r.size() < 2 || axes.z.size() < 2) {
    throw FormatError("a gridded map needs at least two samples per axis",
                      last_line);
  }
  return FrequencyMap::gridded(std::move(axes), std::move(values));
}

FrequencyMap load_shift_map_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open map file " + path, 0);
  return load_shift_map_csv(in);
}

void write_shift_map_csv(const FrequencyMap& map, const GridAxis& axes,
                         std::ostream& out) {
  out << "r_m,z_m,df_hz\n";
  char buf[96];
  for (double r : axes.r) {
    for (double z : axes.z) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r, z,
                    map.shift_at(r, z));
      out << buf;
    }
  }
}

double shift_at(const FrequencyMap& map, double r, double z) {
  return map.shift_at(r, z);
}

double lateral_spread(const FrequencyMap& map, double z, double r_edge,
                      int samples) {
  if (samples < 2) throw ParameterError("lateral_spread needs two samples");
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (int i = 0; i < samples; ++i) {
    const double v = map.shift_at(r_edge * i / (samples - 1), z);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

HeightEstimate invert_height(const FrequencyMap& map, double measured_df,
                             double r, double df_noise,
                             const InversionOptions& options) {
  if (!(df_noise >= 0.0)) throw ParameterError("frequency noise must be >= 0");
  const double z_lo = map.z_min();
  const double z_hi = std::min(map.z_max(), options.z_max);
  if (!(z_hi > z_lo)) throw ParameterError("empty height search range");

  auto g = [&](double z) { return map.shift_at(r, z) - measured_df; };
  const double g_lo = g(z_lo);
  const double g_hi = g(z_hi);
  HeightEstimate est;
  if (g_lo == 0.0) {
    est.height = z_lo;
  } else if (g_hi == 0.0) {
    est.height = z_hi;
  } else if ((g_lo < 0.0) == (g_hi < 0.0)) {
    const double a = g_lo + measured_df, b = g_hi + measured_df;
    std::ostringstream msg;
    msg << "measured shift " << measured_df << " Hz is outside the achievable range ["
        << std::min(a, b) << ", " << std::max(a, b) << "] Hz at r = " << r << " m";
    throw InversionError(msg.str(), std::min(a, b), std::max(a, b));
  } else {
    std::uintmax_t max_iter = 200;
    auto tol = [](double a, double b) {
      return std::abs(b - a) <= 1e-15 + 1e-13 * std::abs(a);
    };
    const auto bracket =
        boost::math::tools::toms748_solve(g, z_lo, z_hi, g_lo, g_hi, tol, max_iter);
    est.height = 0.5 * (bracket.first + bracket.second);
  }
  est.sensitivity = map.d_dz(r, est.height);
  const double magnitude = std::abs(est.sensitivity);
  est.uncertainty = magnitude > 0.0 ? df_noise / magnitude : HUGE_VAL;
  est.ill_conditioned = magnitude < options.sensitivity_floor;
  return est;
}

std::vector<Anchor> anchor_list(const MapAnchors& a) {
  return {
      {Anchor::Kind::d_dr, a.edge_radius, 0.0, a.radial_slope},
      {Anchor::Kind::d_dz_magnitude, a.edge_radius, 0.0, a.vertical_sensitivity},
      {Anchor::Kind::shift, a.edge_radius, 0.0, a.edge_shift},
  };
}

namespace {

// Residual units: 1 MHz for shifts, 1 MHz/mm for slopes. Parameter units:
// S0 in MHz, S1 in MHz/mm, ln(lambda / 1 mm), offset in MHz.
constexpr double kShiftUnit = 1e6;
constexpr double kSlopeUnit = 1e9;

double anchor_unit(const Anchor& a) {
  return a.kind == Anchor::Kind::shift ? kShiftUnit : kSlopeUnit;
}

ParametricParams unpack(const Eigen::VectorXd& x, bool with_offset,
                        double fixed_offset) {
  ParametricParams p;
  p.s0 = x(0) * kShiftUnit;
  p.s1 = x(1) * kSlopeUnit;
  p.lambda = 1e-3 * std::exp(x(2));
  p.residual_offset = with_offset ? x(3) * kShiftUnit : fixed_offset;
  return p;
}

double anchor_model(const ParametricParams& p, Polarity polarity,
                    const Anchor& a) {
  const double sign = polarity_sign(polarity);
  const double decay = std::exp(-a.z / p.lambda);
  const double s = p.s0 + p.s1 * a.r;
  switch (a.kind) {
    case Anchor::Kind::shift:
      return -sign * s * decay + p.residual_offset;
    case Anchor::Kind::d_dr:
      return -sign * p.s1 * decay;
    case Anchor::Kind::d_dz:
      return sign * s / p.lambda * decay;
    case Anchor::Kind::d_dz_magnitude:
      return std::abs(s / p.lambda * decay);
  }
  return 0.0;
}

// Rows: scaled residuals. Columns: scaled parameters.
Eigen::MatrixXd anchor_jacobian(const ParametricParams& p, Polarity polarity,
                                const std::vector<Anchor>& anchors,
                                bool with_offset) {
  const double sign = polarity_sign(polarity);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(anchors.size(), with_offset ? 4 : 3);
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const Anchor& a = anchors[k];
    const double decay = std::exp(-a.z / p.lambda);
    const double s = p.s0 + p.s1 * a.r;
    const double unit = anchor_unit(a);
    // d/dS0, d/dS1, d/dln(lambda) of the unscaled model.
    double d0 = 0, d1 = 0, dl = 0, doff = 0;
    switch (a.kind) {
      case Anchor::Kind::shift:
        d0 = -sign * decay;
        d1 = -sign * a.r * decay;
        dl = -sign * s * decay * (a.z / p.lambda);
        doff = 1.0;
        break;
      case Anchor::Kind::d_dr:
        d1 = -sign * decay;
        dl = -sign * p.s1 * decay * (a.z / p.lambda);
        break;
      case Anchor::Kind::d_dz:
      case Anchor::Kind::d_dz_magnitude: {
        const double sg = a.kind == Anchor::Kind::d_dz ? sign : (s < 0 ? -1.0 : 1.0);
        d0 = sg * decay / p.lambda;
        d1 = sg * a.r * decay / p.lambda;
        dl = sg * s / p.lambda * decay * (a.z / p.lambda - 1.0);
        break;
      }
    }
    J(k, 0) = d0 * kShiftUnit / unit;
    J(k, 1) = d1 * kSlopeUnit / unit;
    J(k, 2) = dl / unit;
    if (with_offset) J(k, 3) = doff * kShiftUnit / unit;
  }
  return J;
}

struct AnchorFunctor : Eigen::DenseFunctor<double> {
  AnchorFunctor(const std::vector<Anchor>& anchors, Polarity polarity,
                bool with_offset, double fixed_offset)
      : Eigen::DenseFunctor<double>(with_offset ? 4 : 3,
                                    static_cast<int>(anchors.size())),
        anchors_(anchors),
        polarity_(polarity),
        with_offset_(with_offset),
        fixed_offset_(fixed_offset) {}

  int operator()(const InputType& x, ValueType& f) const {
    const ParametricParams p = unpack(x, with_offset_, fixed_offset_);
    for (std::size_t k = 0; k < anchors_.size(); ++k) {
      f(k) = (anchor_model(p, polarity_, anchors_[k]) - anchors_[k].target) /
             anchor_unit(anchors_[k]);
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& J) const {
    J = anchor_jacobian(unpack(x, with_offset_, fixed_offset_), polarity_,
                        anchors_, with_offset_);
    return 0;
  }

  const std::vector<Anchor>& anchors_;
  Polarity polarity_;
  bool with_offset_;
  double fixed_offset_;
};

}  // namespace

AnchorFit calibrate_map_anchors(const std::vector<Anchor>& anchors,
                                Polarity polarity,
                                const ParametricParams& start) {
  AnchorFit fit;
  for (const Anchor& a : anchors) {
    if (!std::isfinite(a.r) || !std::isfinite(a.z) || !std::isfinite(a.target) ||
        a.z < 0.0) {
      throw CalibrationError("anchor coordinates and targets must be finite");
    }
    if (std::find(fit.anchors.begin(), fit.anchors.end(), a) == fit.anchors.end()) {
      fit.anchors.push_back(a);
    }
  }
  if (fit.anchors.size() < 3) {
    throw CalibrationError("at least three distinct anchors are required");
  }
  if (!(start.lambda > 0.0)) {
    throw CalibrationError("starting decay length must be positive");
  }
  const bool any_shift =
      std::any_of(fit.anchors.begin(), fit.anchors.end(),
                  [](const Anchor& a) { return a.kind == Anchor::Kind::shift; });
  fit.offset_fitted = fit.anchors.size() >= 4 && any_shift;
  const int n = fit.offset_fitted ? 4 : 3;

  Eigen::VectorXd x(n);
  x(0) = start.s0 / kShiftUnit;
  x(1) = start.s1 / kSlopeUnit;
  x(2) = std::log(start.lambda / 1e-3);
  if (fit.offset_fitted) x(3) = start.residual_offset / kShiftUnit;

  auto rank_of = [&](const Eigen::VectorXd& at) {
    const Eigen::MatrixXd J = anchor_jacobian(
        unpack(at, fit.offset_fitted, start.residual_offset), polarity,
        fit.anchors, fit.offset_fitted);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    qr.setThreshold(1e-10);
    return static_cast<int>(qr.rank());
  };
  if (rank_of(x) < n) {
    throw CalibrationError("anchor set does not determine the map parameters");
  }

  AnchorFunctor functor(fit.anchors, polarity, fit.offset_fitted,
                        start.residual_offset);
  Eigen::LevenbergMarquardt<AnchorFunctor> lm(functor);
  lm.setXtol(1e-15);
  lm.setFtol(1e-15);
  lm.setGtol(0.0);
  lm.setMaxfev(2000);
  lm.minimize(x);
  fit.iterations = static_cast<int>(lm.iterations());
  if (!x.allFinite()) throw CalibrationError("anchor fit diverged");
  if (rank_of(x) < n) {
    throw CalibrationError("anchor set does not determine the map parameters");
  }

  fit.params = unpack(x, fit.offset_fitted, start.residual_offset);
  for (const Anchor& a : fit.anchors) {
    const double r = anchor_model(fit.params, polarity, a) - a.target;
    fit.residuals.push_back(r);
    fit.relative_residuals.push_back(a.target != 0.0 ? r / std::abs(a.target) : r);
  }
  return fit;
}

}  // namespace levsim::cavity
