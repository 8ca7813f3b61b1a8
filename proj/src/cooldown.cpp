#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "levsim/spectra.hpp"

namespace levsim::spectra {

std::vector<double> CooldownSeries::temperatures() const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.ok) out.push_back(r.temperature);
  }
  return out;
}

std::vector<double> CooldownSeries::shifts() const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.ok) out.push_back(r.df);
  }
  return out;
}

CooldownSeries track_cooldown(std::vector<CooldownInput> records,
                              const Reference& reference, int threads,
                              const FitOptions& options) {
  if (records.size() < 2) throw ParameterError("a cooldown needs at least 2 records");
  std::stable_sort(records.begin(), records.end(),
                   [](const CooldownInput& a, const CooldownInput& b) {
                     return a.temperature > b.temperature;
                   });
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!std::isfinite(records[i].temperature) || records[i].temperature < 0.0) {
      throw ParameterError("temperatures must be finite and non-negative");
    }
    if (i > 0 && records[i].temperature == records[i - 1].temperature) {
      throw ParameterError("duplicate temperature in cooldown records");
    }
  }

  CooldownSeries series;
  series.records.resize(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      CooldownRecord& out = series.records[i];
      out.temperature = records[i].temperature;
      try {
        const ResonanceFit fit = fit_resonance(records[i].trace, options);
        out.ok = true;
        out.f0 = fit.f0;
        out.q_loaded = fit.q_loaded;
      } catch (const Error& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  const int n_threads =
      std::max(1, std::min<int>(threads, static_cast<int>(records.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const auto first_ok = std::find_if(series.records.begin(), series.records.end(),
                                     [](const CooldownRecord& r) { return r.ok; });
  if (first_ok == series.records.end()) {
    throw NoDataError("every resonance fit in the cooldown failed");
  }
  series.reference_f0 = reference.f0 ? *reference.f0 : first_ok->f0;
  for (auto& r : series.records) {
    if (r.ok) r.df = r.f0 - series.reference_f0;
  }
  return series;
}

void write_cooldown_csv(const CooldownSeries& series, std::ostream& out) {
  out << "temperature_k,f0_hz,q_loaded,df_hz\n";
  char buf[128];
  for (const auto& r : series.records) {
    if (r.ok) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.temperature, r.f0,
                    r.q_loaded, r.df);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g,,,\n", r.temperature);
    }
    out << buf;
  }
}

const char* region_name(Region r) {
  switch (r) {
    case Region::rest: return "rest";
    case Region::fluctuation: return "fluctuation";
    case Region::transition: return "transition";
    case Region::levitated: return "levitated";
  }
  return "?";
}

namespace {

double population_std(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  double mean = 0.0;
  for (std::size_t i = begin; i < end; ++i) mean += x[i];
  mean /= static_cast<double>(end - begin);
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) ss += (x[i] - mean) * (x[i] - mean);
  return std::sqrt(ss / static_cast<double>(end - begin));
}

}  // namespace

RegionSegmentation classify_regions(const std::vector<double>& temperatures,
                                    const std::vector<double>& df,
                                    const Thresholds& th) {
  if (!(th.fluctuation > 0.0) || !(th.step > 0.0) || !(th.stability_std > 0.0) ||
      th.window < 2) {
    throw ParameterError("segmentation thresholds must be positive (window >= 2)");
  }
  if (temperatures.size() != df.size()) {
    throw ParameterError("temperature and shift series differ in length");
  }
  const std::size_t n = df.size();
  const std::size_t w = static_cast<std::size_t>(th.window);
  if (n < 4 * w) {
    throw ParameterError("segmentation needs at least 4 * window samples");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(temperatures[i] < temperatures[i - 1])) {
      throw ParameterError("temperatures must be strictly decreasing");
    }
  }
  auto big_step_lands_at = [&](std::size_t i) {
    return i > 0 && std::abs(df[i] - df[i - 1]) > th.step;
  };

  // Rest: grow the prefix while every member stays within the threshold of
  // the prefix mean.
  std::size_t rest_end = 0;
  double sum = 0.0;
  for (std::size_t len = 1; len <= n; ++len) {
    sum += df[len - 1];
    const double mean = sum / static_cast<double>(len);
    bool ok = true;
    for (std::size_t i = 0; i < len && ok; ++i) {
      ok = std::abs(df[i] - mean) <= th.fluctuation;
    }
    if (!ok) break;
    rest_end = len;
  }

  // Levitated: the longest stable suffix starting at or after rest_end.
  std::vector<bool> stable_window(n, false);   // window starting at i
  for (std::size_t i = 0; i + w <= n; ++i) {
    stable_window[i] = population_std(df, i, i + w) < th.stability_std;
  }
  std::size_t lev_begin = n;
  if (rest_end < n) {
    bool all_stable = true;
    for (std::size_t c = n - w + 1; c-- > rest_end;) {
      all_stable = all_stable && stable_window[c];
      if (!all_stable) break;
      if (!big_step_lands_at(c)) lev_begin = c;
    }
  }

  std::size_t trans_begin = lev_begin;
  for (std::size_t i = rest_end; i < lev_begin; ++i) {
    if (big_step_lands_at(i)) {
      trans_begin = i;
      break;
    }
  }

  RegionSegmentation seg;
  const std::size_t begins[4] = {0, rest_end, trans_begin, lev_begin};
  const std::size_t ends[4] = {rest_end, trans_begin, lev_begin, n};
  for (int s = 0; s < 4; ++s) {
    Segment& g = seg.segments[s];
    g.label = static_cast<Region>(s);
    g.begin = begins[s];
    g.end = ends[s];
    if (g.empty()) {
      g.t_high = g.t_low = g.mean_df = std::nan("");
      continue;
    }
    g.t_high = temperatures[g.begin];
    g.t_low = temperatures[g.end - 1];
    double total = 0.0;
    for (std::size_t i = g.begin; i < g.end; ++i) {
      total += df[i];
      if (i > 0) g.max_step = std::max(g.max_step, std::abs(df[i] - df[i - 1]));
    }
    g.mean_df = total / static_cast<double>(g.size());
  }
  return seg;
}

RegionSegmentation classify_regions(const CooldownSeries& series,
                                    const Thresholds& thresholds) {
  return classify_regions(series.temperatures(), series.shifts(), thresholds);
}

void CooldownProfile::validate() const {
  if (!(t_step_mk > 0)) throw ParameterError("profile: temperature step must be positive");
  const int marks[] = {t_start_mk,          fluctuation_start_mk, transition_start_mk,
                       second_step_mk,      levitated_start_mk,   t_end_mk};
  for (int i = 0; i < 6; ++i) {
    if ((t_start_mk - marks[i]) % t_step_mk != 0) {
      throw ParameterError("profile: boundaries must lie on the temperature grid");
    }
    if (i > 0 && !(marks[i] < marks[i - 1])) {
      throw ParameterError("profile: boundaries must be strictly decreasing");
    }
  }
  if (t_end_mk < 0) throw ParameterError("profile: negative temperature");
  if (transition_start_mk - second_step_mk < 2 * t_step_mk) {
    throw ParameterError("profile: the first plateau needs at least two samples");
  }
  if (second_step_mk - levitated_start_mk < 4 * t_step_mk) {
    throw ParameterError("profile: no room for the second plateau and settling");
  }
  if (!(excursion > 0.0) || !(step > excursion) || !(upshift > 2.0 * step)) {
    throw ParameterError("profile: inconsistent levels");
  }
  if (!(q_loaded > 0.0) || !(amplitude > 0.0) || !(baseline >= 0.0) ||
      !(f_bare > 0.0) || std::isnan(snr_db)) {
    throw ParameterError("profile: invalid resonance parameters");
  }
}

std::size_t CooldownProfile::index_of(int mk) const {
  return static_cast<std::size_t>((t_start_mk - mk) / t_step_mk);
}

CooldownProfile default_profile(const std::string& preset) {
  CooldownProfile p;
  p.label = preset;
  if (preset == "N35") return p;
  if (preset == "N42") {
    p.fluctuation_start_mk = 650;
    p.transition_start_mk = 330;
    p.second_step_mk = 250;
    p.levitated_start_mk = 140;
    return p;
  }
  if (preset == "N50" || preset == "N52") {
    p.rest_level = -90e6;
    p.fluctuation_start_mk = preset == "N50" ? 700 : 720;
    p.transition_start_mk = preset == "N50" ? 370 : 400;
    p.second_step_mk = preset == "N50" ? 290 : 310;
    p.levitated_start_mk = preset == "N50" ? 170 : 180;
    return p;
  }
  throw ParameterError("no default cooldown profile for preset '" + preset + "'");
}

std::vector<SyntheticSample> cooldown_template(const CooldownProfile& p) {
  p.validate();
  const double levitated = p.rest_level + p.upshift;
  const double settling[3] = {-13e6, 12e6, -16e6};
  std::vector<SyntheticSample> out;
  int k_fluct = 0;
  for (int mk = p.t_start_mk; mk >= p.t_end_mk; mk -= p.t_step_mk) {
    double df = p.rest_level;
    if (mk <= p.levitated_start_mk) {
      df = levitated;
    } else if (mk <= p.levitated_start_mk + 3 * p.t_step_mk) {
      df = levitated + settling[(p.levitated_start_mk + 3 * p.t_step_mk - mk) / p.t_step_mk];
    } else if (mk <= p.second_step_mk) {
      df = p.rest_level + 2.0 * p.step;
    } else if (mk <= p.transition_start_mk) {
      df = p.rest_level + p.step;
    } else if (mk <= p.fluctuation_start_mk) {
      // Alternating excursions; the sample before the first step sits low
      // so that the step itself stays at full size.
      const bool last = mk - p.t_step_mk <= p.transition_start_mk;
      const bool high = k_fluct % 2 == 0 && !last;
      df = p.rest_level + (high ? p.excursion : 0.1 * p.excursion);
      ++k_fluct;
    }
    out.push_back({mk / 1000.0, df});
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SyntheticCooldown synth_cooldown(const CooldownProfile& profile, std::uint64_t seed) {
  const auto samples = cooldown_template(profile);
  SyntheticCooldown out;
  out.reference_f0 = profile.f_bare + profile.thermal_contraction;
  std::uint64_t state = seed;
  for (const auto& s : samples) {
    state = splitmix64(state);
    ResonanceFit fit;
    fit.f0 = out.reference_f0 + s.df +
             (s.temperature < profile.tc ? profile.superconducting_shift : 0.0);
    fit.q_loaded = profile.q_loaded;
    fit.amplitude = profile.amplitude;
    fit.baseline = profile.baseline;
    ResonanceTrace trace = synth_trace(fit, profile.snr_db, state);
    char meta[64];
    std::snprintf(meta, sizeof meta, "%s T=%.3f K", profile.label.c_str(), s.temperature);
    trace.source_meta = meta;
    out.records.push_back({s.temperature, std::move(trace)});
  }
  return out;
}

}  // namespace levsim::spectra
