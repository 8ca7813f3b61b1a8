#pragma once

// S21 spectra: Touchstone and CSV readers, Lorentzian resonance fitting,
// cooldown tracking, four-region segmentation and synthetic fixtures.

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "levsim/errors.hpp"

namespace levsim::spectra {

struct ResonanceTrace {
  std::vector<double> frequencies;           // Hz, strictly increasing
  std::vector<std::complex<double>> s21;     // linear, complex
  std::string source_meta;

  std::size_t size() const { return frequencies.size(); }
  double power(std::size_t i) const { return std::norm(s21[i]); }
  /// Throws ParameterError unless there are >= 16 points, equal lengths and
  /// strictly increasing frequencies.
  void validate() const;
};

// Touchstone v1, two-port.

enum class TouchstoneFormat { db, ma, ri };

struct TouchstoneData {
  std::string unit = "GHz";
  TouchstoneFormat format = TouchstoneFormat::ma;
  double reference_ohms = 50.0;
  /// Each row is f in `unit` followed by S11, S21, S12, S22 as pairs in
  /// `format`, exactly as written in the file.
  std::vector<std::array<double, 9>> rows;
  std::vector<std::string> comments;   // without the leading '!'
};

TouchstoneData read_touchstone(std::istream& in);
TouchstoneData read_touchstone(const std::string& path);
void write_touchstone(const TouchstoneData& data, std::ostream& out);

double unit_multiplier(const std::string& unit);
std::complex<double> pair_to_complex(double a, double b, TouchstoneFormat format);
std::pair<double, double> complex_to_pair(std::complex<double> z,
                                          TouchstoneFormat format);
/// Rewrites every pair in another data format.
TouchstoneData convert_format(const TouchstoneData& data, TouchstoneFormat format);

ResonanceTrace to_trace(const TouchstoneData& data);
/// Two-port data with S12 = S21 and lossless-looking reflections
/// S11 = S22 = sqrt(1 - |S21|^2). Frequencies are written in Hz.
TouchstoneData touchstone_from_trace(const ResonanceTrace& trace,
                                     TouchstoneFormat format = TouchstoneFormat::ma);

ResonanceTrace parse_touchstone(std::istream& in);
ResonanceTrace parse_touchstone(const std::string& path);

/// Header `freq_hz,s21_db,s21_deg`.
ResonanceTrace parse_csv_trace(std::istream& in);
ResonanceTrace parse_csv_trace(const std::string& path);
void write_csv_trace(const ResonanceTrace& trace, std::ostream& out);

// Resonance fitting.

struct ResonanceFit {
  double f0 = 10e9;          // Hz
  double q_loaded = 2500.0;
  double amplitude = 1e-2;   // linear power
  double baseline = 1e-3;    // linear power
  double rms_residual = 0.0; // rms of power residuals over amplitude
  int iterations = 0;
};

/// |S21|^2(f) = amplitude / (1 + 4 q^2 (f/f0 - 1)^2) + baseline.
double lorentzian_model(double f0, double q, double amplitude, double baseline,
                        double f);

class FitError : public Error {
 public:
  FitError(const std::string& what, std::optional<ResonanceFit> best = {})
      : Error(what), best_(best) {}
  const std::optional<ResonanceFit>& best() const noexcept { return best_; }

 private:
  std::optional<ResonanceFit> best_;
};

struct FitOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
};

ResonanceFit fit_resonance(const ResonanceTrace& trace,
                           const FitOptions& options = {});

// Synthetic traces.

struct SynthOptions {
  int points = 401;
  double span_fwhm = 10.0;   // half-span in units of f0 / q
};

/// Gaussian noise with sigma = amplitude / 10^(snr_db / 10) added to the
/// power and truncated at zero. An infinite snr_db gives the exact model.
ResonanceTrace synth_trace(const ResonanceFit& fit, double snr_db,
                           std::uint64_t seed, const SynthOptions& options = {});

// Cooldown series.

struct CooldownInput {
  double temperature;   // K
  ResonanceTrace trace;
};

struct CooldownRecord {
  double temperature = 0.0;   // K
  bool ok = false;            // false marks a gap
  double f0 = 0.0;            // Hz
  double q_loaded = 0.0;
  double df = 0.0;            // Hz, f0 - reference_f0
  std::string error;
};

struct CooldownSeries {
  std::vector<CooldownRecord> records;  // strictly decreasing temperature
  double reference_f0 = 0.0;            // Hz

  /// Successful records only.
  std::vector<double> temperatures() const;
  std::vector<double> shifts() const;
};

struct Reference {
  std::optional<double> f0;   // Hz; empty selects the first fitted record
};

/// Fits every trace, possibly on `threads` workers; record order follows
/// decreasing temperature. Throws NoDataError when every fit fails.
CooldownSeries track_cooldown(std::vector<CooldownInput> records,
                              const Reference& reference = {},
                              int threads = 1,
                              const FitOptions& options = {});

void write_cooldown_csv(const CooldownSeries& series, std::ostream& out);

// Region segmentation.

struct Thresholds {
  double fluctuation = 20e6;    // Hz
  double step = 30e6;           // Hz
  double stability_std = 5e6;   // Hz
  int window = 5;               // samples
};

enum class Region { rest, fluctuation, transition, levitated };
const char* region_name(Region r);

struct Segment {
  Region label = Region::rest;
  std::size_t begin = 0;   // sample indices, half-open
  std::size_t end = 0;
  double t_high = 0.0;     // K, temperature of the first sample
  double t_low = 0.0;      // K, temperature of the last sample
  double mean_df = 0.0;    // Hz
  double max_step = 0.0;   // Hz, largest |step| landing inside the segment

  bool empty() const { return begin == end; }
  std::size_t size() const { return end - begin; }
};

struct RegionSegmentation {
  std::array<Segment, 4> segments;   // rest, fluctuation, transition, levitated
  const Segment& operator[](Region r) const {
    return segments[static_cast<int>(r)];
  }
};

/// Samples are ordered by decreasing temperature.
RegionSegmentation classify_regions(const std::vector<double>& temperatures,
                                    const std::vector<double>& df,
                                    const Thresholds& thresholds = {});
RegionSegmentation classify_regions(const CooldownSeries& series,
                                    const Thresholds& thresholds = {});

// Synthetic cooldown.

/// Four-feature template on a uniform temperature grid. Temperatures are in
/// mK on the grid, shifts in Hz relative to the bare cavity.
struct CooldownProfile {
  std::string label = "N35";
  int t_start_mk = 1250;
  int t_end_mk = 50;
  int t_step_mk = 10;
  int fluctuation_start_mk = 600;   // first sample off the rest level
  int transition_start_mk = 300;    // landing of the first step
  int second_step_mk = 220;         // landing of the second step
  int levitated_start_mk = 120;     // first sample of the final level
  double rest_level = -120e6;       // Hz
  double excursion = 24e6;          // Hz, peak fluctuation above rest
  double step = 35e6;               // Hz, size of each transition step
  double upshift = 100e6;           // Hz, levitated minus rest level
  double f_bare = 10e9;             // Hz
  double q_loaded = 2500.0;
  double amplitude = 1e-2;
  double baseline = 1e-3;
  double snr_db = 20.0;
  double thermal_contraction = 20e6;   // Hz, constant offset of the cold cavity
  double superconducting_shift = 3e3;  // Hz, applied below tc
  double tc = 1.2;                     // K

  void validate() const;
  /// Index of the sample at `mk` on the template grid.
  std::size_t index_of(int mk) const;
};

/// Default template for a magnet preset (N35, N42, N50, N52).
CooldownProfile default_profile(const std::string& preset);

struct SyntheticSample {
  double temperature;   // K
  double df;            // Hz, template shift relative to the reference
};

/// The noiseless template on its temperature grid.
std::vector<SyntheticSample> cooldown_template(const CooldownProfile& profile);

struct SyntheticCooldown {
  std::vector<CooldownInput> records;   // decreasing temperature
  double reference_f0 = 0.0;            // Hz, cold bare cavity
};

SyntheticCooldown synth_cooldown(const CooldownProfile& profile,
                                 std::uint64_t seed);

}  // namespace levsim::spectra
