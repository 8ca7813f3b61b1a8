#pragma once

// Quarter-wave stub cavity: bare resonance, the frequency-shift map
// df(r, z) produced by a magnet above the stub, anchor calibration of the
// parametric map and inversion from a measured shift back to a height.
//
// r is the magnet's radial position measured from the stub axis, z its
// height above the stub top.

#include <iosfwd>
#include <string>
#include <vector>

namespace levsim::cavity {

struct CavityGeometry {
  double outer_radius = 7e-3;                // m
  double cavity_height = 55e-3;              // m
  double stub_radius = 2e-3;                 // m
  double stub_height = 5e-3;                 // m
  double effective_length_correction = 0.0;  // m

  void validate() const;
};

/// f0 = c / (4 (stub_height + effective_length_correction)).
double bare_frequency(const CavityGeometry& geometry);

/// Correction that makes bare_frequency reproduce `measured_f0`.
double calibrate_effective_length(const CavityGeometry& geometry,
                                  double measured_f0);

/// stub_top: the magnet sits on the stub and lowers the frequency.
/// gap_floor: the magnet sits in the gap and raises it (sign-flipped map).
enum class Polarity { stub_top, gap_floor };

struct ParametricParams {
  double s0 = 32.5e6;           // Hz
  double s1 = 50e9;             // Hz/m
  double lambda = 0.3e-3;       // m
  double residual_offset = 0.0; // Hz
};

/// The quoted map anchors: radial slope at z = 0, magnitude of the vertical
/// sensitivity at the edge and the shift at the edge on the stub.
struct MapAnchors {
  double edge_radius = 1.75e-3;          // m
  double radial_slope = -50e9;           // Hz/m
  double vertical_sensitivity = 400e9;   // Hz/m, magnitude
  double edge_shift = -120e6;            // Hz
  double residual_offset = 0.0;          // Hz
};

/// Closed-form parameters that meet MapAnchors exactly.
ParametricParams parametric_from_anchors(const MapAnchors& anchors);

struct GridAxis {
  std::vector<double> r;   // m, strictly increasing
  std::vector<double> z;   // m, strictly increasing
};

/// Immutable df(r, z) map, either parametric
///   df = sign * (-(S0 + S1 r) exp(-z / lambda)) + residual_offset
/// or a rectilinear grid evaluated bilinearly.
class FrequencyMap {
 public:
  enum class Kind { parametric, gridded };

  static FrequencyMap parametric(const ParametricParams& params,
                                 Polarity polarity = Polarity::stub_top,
                                 double r_max = 2e-3);
  /// `values` is row-major with r as the slow index.
  static FrequencyMap gridded(GridAxis axes, std::vector<double> values);

  Kind kind() const { return kind_; }
  const ParametricParams& params() const { return params_; }
  Polarity polarity() const { return polarity_; }
  const GridAxis& axes() const { return axes_; }
  const std::vector<double>& values() const { return values_; }

  double r_min() const;
  double r_max() const;
  double z_min() const;
  /// Infinite for parametric maps.
  double z_max() const;

  /// Throws DomainError outside the map domain.
  double shift_at(double r, double z) const;
  double d_dz(double r, double z) const;
  double d_dr(double r, double z) const;

 private:
  void check_domain(double r, double z) const;
  struct Cell {
    std::size_t i, j;
    double t, u;
  };
  Cell locate(double r, double z) const;
  double node(std::size_t i, std::size_t j) const {
    return values_[i * axes_.z.size() + j];
  }

  Kind kind_ = Kind::parametric;
  ParametricParams params_;
  Polarity polarity_ = Polarity::stub_top;
  double parametric_r_max_ = 2e-3;
  GridAxis axes_;
  std::vector<double> values_;
};

FrequencyMap build_shift_map_parametric(double s0, double s1, double lambda,
                                        double residual_offset,
                                        Polarity polarity = Polarity::stub_top);

/// Reads `r_m,z_m,df_hz` rows ordered with r as the slow index.
FrequencyMap load_shift_map_csv(std::istream& in);
FrequencyMap load_shift_map_csv(const std::string& path);

/// Samples `map` on the given axes and writes it in the CSV layout above.
void write_shift_map_csv(const FrequencyMap& map, const GridAxis& axes,
                         std::ostream& out);

double shift_at(const FrequencyMap& map, double r, double z);

/// max_r df - min_r df over r in [0, r_edge] at height z, sampled on
/// `samples` points.
double lateral_spread(const FrequencyMap& map, double z, double r_edge,
                      int samples = 101);

struct InversionOptions {
  double sensitivity_floor = 1e9;  // Hz/m; below it the result is flagged
  double z_max = 10e-3;            // m, search limit for parametric maps
};

struct HeightEstimate {
  double height = 0.0;        // m
  double sensitivity = 0.0;   // Hz/m, d(df)/dz at height
  double uncertainty = 0.0;   // m
  bool ill_conditioned = false;
};

HeightEstimate invert_height(const FrequencyMap& map, double measured_df,
                             double r, double df_noise,
                             const InversionOptions& options = {});

struct Anchor {
  enum class Kind { shift, d_dr, d_dz, d_dz_magnitude };
  Kind kind = Kind::shift;
  double r = 0.0;       // m
  double z = 0.0;       // m
  double target = 0.0;  // Hz or Hz/m

  bool operator==(const Anchor&) const = default;
};

std::vector<Anchor> anchor_list(const MapAnchors& anchors);

struct AnchorFit {
  ParametricParams params;
  std::vector<Anchor> anchors;       // after removing duplicates
  std::vector<double> residuals;     // model - target, per anchor
  std::vector<double> relative_residuals;
  bool offset_fitted = false;
  int iterations = 0;
};

/// Least-squares fit of (S0, S1, lambda) and, with at least four distinct
/// anchors, residual_offset. `start` seeds the fit and supplies the offset
/// when it is not fitted.
AnchorFit calibrate_map_anchors(const std::vector<Anchor>& anchors,
                                Polarity polarity = Polarity::stub_top,
                                const ParametricParams& start = {});

}  // namespace levsim::cavity
