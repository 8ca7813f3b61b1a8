#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "levsim/spectra.hpp"

namespace levsim::spectra {

double lorentzian_model(double f0, double q, double amplitude, double baseline,
                        double f) {
  if (!(q > 0.0)) throw DomainError("lorentzian_model: q must be positive");
  const double u = f / f0 - 1.0;
  return amplitude / (1.0 + 4.0 * q * q * u * u) + baseline;
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

// Fit variables are scaled to order one:
//   x0 = (f0 - f0_guess) / fwhm_guess, x1 = ln q, x2 = A / P, x3 = B / P
// with P the peak power.
struct Scaling {
  double f0_guess;
  double fwhm_guess;
  double power;
};

ResonanceFit unpack(const Eigen::VectorXd& x, const Scaling& s) {
  ResonanceFit fit;
  fit.f0 = s.f0_guess + x(0) * s.fwhm_guess;
  fit.q_loaded = std::exp(x(1));
  fit.amplitude = x(2) * s.power;
  fit.baseline = x(3) * s.power;
  return fit;
}

struct LorentzFunctor : Eigen::DenseFunctor<double> {
  LorentzFunctor(const std::vector<double>& f, const std::vector<double>& p,
                 const Scaling& s)
      : Eigen::DenseFunctor<double>(4, static_cast<int>(f.size())),
        freq(f),
        power(p),
        scaling(s) {}

  int operator()(const InputType& x, ValueType& r) const {
    const ResonanceFit m = unpack(x, scaling);
    for (std::size_t i = 0; i < freq.size(); ++i) {
      const double u = freq[i] / m.f0 - 1.0;
      const double d = 1.0 + 4.0 * m.q_loaded * m.q_loaded * u * u;
      r(i) = (m.amplitude / d + m.baseline - power[i]) / scaling.power;
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& J) const {
    const ResonanceFit m = unpack(x, scaling);
    const double q2 = m.q_loaded * m.q_loaded;
    for (std::size_t i = 0; i < freq.size(); ++i) {
      const double u = freq[i] / m.f0 - 1.0;
      const double d = 1.0 + 4.0 * q2 * u * u;
      const double a_d2 = m.amplitude / (d * d);
      const double du_df0 = -freq[i] / (m.f0 * m.f0);
      J(i, 0) = -a_d2 * 8.0 * q2 * u * du_df0 * scaling.fwhm_guess / scaling.power;
      J(i, 1) = -a_d2 * 8.0 * q2 * u * u / scaling.power;
      J(i, 2) = 1.0 / d;
      J(i, 3) = 1.0;
    }
    return 0;
  }

  const std::vector<double>& freq;
  const std::vector<double>& power;
  Scaling scaling;
};

double rms_residual(const LorentzFunctor& functor, const Eigen::VectorXd& x,
                    double amplitude) {
  Eigen::VectorXd r(functor.values());
  functor(x, r);
  return std::sqrt(r.squaredNorm() / r.size()) * functor.scaling.power /
         std::abs(amplitude);
}

}  // namespace

ResonanceFit fit_resonance(const ResonanceTrace& trace, const FitOptions& options) {
  trace.validate();
  const std::size_t n = trace.size();
  std::vector<double> power(n);
  for (std::size_t i = 0; i < n; ++i) power[i] = trace.power(i);

  const std::size_t k = static_cast<std::size_t>(
      std::max_element(power.begin(), power.end()) - power.begin());
  const double base = median(power);
  const double peak = power[k];
  // At least 3 dB above the median.
  if (!(peak >= 2.0 * base) || !(peak > 0.0)) {
    throw FitError("no peak: maximum is less than 3 dB above the median");
  }
  if (k == 0 || k == n - 1) {
    throw FitError("no peak: maximum lies at the edge of the trace");
  }
  const double half = base + 0.5 * (peak - base);
  auto crossing = [&](int dir) -> double {
    for (std::size_t i = k; i > 0 && i < n - 1;) {
      const std::size_t j = dir > 0 ? i + 1 : i - 1;
      if (power[j] <= half) {
        const double t = (power[i] - half) / (power[i] - power[j]);
        return trace.frequencies[i] + t * (trace.frequencies[j] - trace.frequencies[i]);
      }
      i = j;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double lo = crossing(-1), hi = crossing(+1);
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
    throw FitError("no peak: half-power points are not both inside the trace");
  }

  const Scaling scaling{trace.frequencies[k], hi - lo, peak};
  Eigen::VectorXd x(4);
  x << 0.0, std::log(trace.frequencies[k] / (hi - lo)), (peak - base) / peak,
      base / peak;

  LorentzFunctor functor(trace.frequencies, power, scaling);
  Eigen::LevenbergMarquardt<LorentzFunctor> lm(functor);
  lm.setXtol(1e-15);
  lm.setFtol(1e-15);
  lm.setGtol(options.gradient_tolerance);
  lm.setMaxfev(100 * options.max_iterations);

  using namespace Eigen::LevenbergMarquardtSpace;
  Status status = lm.minimizeInit(x);
  if (status == ImproperInputParameters) {
    throw FitError("improper fit input");
  }
  int iterations = 0;
  do {
    status = lm.minimizeOneStep(x);
    ++iterations;
  } while (status == Running && iterations < options.max_iterations);

  ResonanceFit fit = unpack(x, scaling);
  fit.iterations = iterations;
  const bool finite = x.allFinite() && std::isfinite(fit.f0);
  if (finite) fit.rms_residual = rms_residual(functor, x, fit.amplitude);
  if (!finite) throw FitError("fit diverged");
  if (status == Running || status == TooManyFunctionEvaluation) {
    throw FitError("fit did not converge in " + std::to_string(iterations) +
                       " iterations",
                   fit);
  }
  if (!(fit.q_loaded > 0.0) || !(fit.amplitude > 0.0) ||
      !(fit.f0 > trace.frequencies.front()) || !(fit.f0 < trace.frequencies.back())) {
    throw FitError("fit converged to a non-physical resonance", fit);
  }
  return fit;
}

ResonanceTrace synth_trace(const ResonanceFit& fit, double snr_db,
                           std::uint64_t seed, const SynthOptions& options) {
  if (std::isnan(snr_db) || snr_db == -HUGE_VAL) {
    throw ParameterError("snr_db must be finite or +inf");
  }
  if (options.points < 16) throw ParameterError("synthetic trace needs >= 16 points");
  if (!(fit.q_loaded > 0.0) || !(fit.f0 > 0.0)) {
    throw ParameterError("synthetic trace needs positive f0 and q");
  }
  const double fwhm = fit.f0 / fit.q_loaded;
  const double lo = fit.f0 - options.span_fwhm * fwhm;
  const double step = 2.0 * options.span_fwhm * fwhm / (options.points - 1);
  const bool noisy = std::isfinite(snr_db);
  const double sigma = fit.amplitude / std::pow(10.0, snr_db / 10.0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ResonanceTrace trace;
  trace.frequencies.resize(options.points);
  trace.s21.resize(options.points);
  for (int i = 0; i < options.points; ++i) {
    const double f = lo + step * i;
    double p = lorentzian_model(fit.f0, fit.q_loaded, fit.amplitude, fit.baseline, f);
    if (noisy) p = std::max(0.0, p + sigma * gauss(rng));
    const double phase = -std::atan(2.0 * fit.q_loaded * (f / fit.f0 - 1.0));
    trace.frequencies[i] = f;
    trace.s21[i] = std::polar(std::sqrt(p), phase);
  }
  trace.source_meta = "synthetic";
  return trace;
}

}  // namespace levsim::spectra
