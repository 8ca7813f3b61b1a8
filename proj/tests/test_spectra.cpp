#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "levsim/constants.hpp"
#include "levsim/spectra.hpp"

using namespace levsim;
using namespace levsim::spectra;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const char* kDbFile =
    "! two-port export\n"
    "# GHz S DB R 50\n"
    "9.95 -40 30 -20 45 -20 45 -35 10\n"
    "9.96 -41 31 -19 40 -19 40 -36 11\n"
    "9.97 -42 32 -18 35 -18 35 -37 12\n";

ResonanceFit reference_fit() {
  ResonanceFit f;
  f.f0 = 10e9;
  f.q_loaded = 2500;
  f.amplitude = 1e-2;
  f.baseline = 1e-3;
  return f;
}

std::string round_trip(const TouchstoneData& data) {
  std::ostringstream out;
  write_touchstone(data, out);
  return out.str();
}

}  // namespace

TEST(Touchstone, DbRowDecodes) {
  std::istringstream in(kDbFile);
  const auto trace = parse_touchstone(in);
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_DOUBLE_EQ(trace.frequencies[0], 9.95e9);
  EXPECT_NEAR(20 * std::log10(std::abs(trace.s21[0])), -20.0, 1e-12);
  EXPECT_NEAR(std::arg(trace.s21[0]) * 180 / kPi, 45.0, 1e-12);
}

TEST(Touchstone, UnitsScale) {
  for (auto [unit, scale] : {std::pair{"Hz", 1.0}, {"kHz", 1e3}, {"MHZ", 1e6}, {"ghz", 1e9}}) {
    std::istringstream in(std::string("# ") + unit + " S RI R 50\n2.5 0 0 0.1 0.2 0.1 0.2 0 0\n");
    const auto trace = parse_touchstone(in);
    EXPECT_DOUBLE_EQ(trace.frequencies[0], 2.5 * scale) << unit;
    EXPECT_EQ(trace.s21[0], std::complex<double>(0.1, 0.2));
  }
}

TEST(Touchstone, FormatConversionPreservesValues) {
  std::istringstream in(kDbFile);
  const auto db = read_touchstone(in);
  for (auto fmt : {TouchstoneFormat::ma, TouchstoneFormat::ri}) {
    std::istringstream again(round_trip(convert_format(db, fmt)));
    const auto a = to_trace(db);
    const auto b = parse_touchstone(again);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(std::abs(a.s21[i] - b.s21[i]), 0.0, 1e-12);
      EXPECT_EQ(a.frequencies[i], b.frequencies[i]);
    }
  }
}

TEST(Touchstone, SerializeParseIsValueIdentical) {
  std::istringstream in(kDbFile);
  const auto db = read_touchstone(in);
  for (auto fmt : {TouchstoneFormat::db, TouchstoneFormat::ma, TouchstoneFormat::ri}) {
    const auto data = convert_format(db, fmt);
    std::istringstream again(round_trip(data));
    const auto back = read_touchstone(again);
    EXPECT_EQ(back.rows, data.rows);
    EXPECT_EQ(back.format, fmt);
    EXPECT_EQ(round_trip(back), round_trip(data));
  }
}

TEST(Touchstone, InterleavedCommentsAreIgnored) {
  std::istringstream plain(
      "# GHz S DB R 50\n9.95 -40 30 -20 45 -20 45 -35 10\n9.96 -41 31 -19 40 -19 40 -36 11\n");
  std::istringstream commented(
      "! header\n# GHz S DB R 50 ! options\n! between\n"
      "9.95 -40 30 -20 45 -20 45 -35 10 ! trailing\n\n!x\n9.96 -41 31 -19 40 -19 40 -36 11\r\n");
  const auto a = parse_touchstone(plain);
  const auto b = parse_touchstone(commented);
  EXPECT_EQ(a.frequencies, b.frequencies);
  EXPECT_EQ(a.s21, b.s21);
}

TEST(Touchstone, Errors) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_touchstone(in);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 9999;
  };
  EXPECT_EQ(line_of("1 0 0 0 0 0 0 0 0\n"), 1u);
  EXPECT_EQ(line_of("! only comments\n"), 0u);
  EXPECT_EQ(line_of("# GHz S MA R 50\n# GHz S MA R 50\n"), 2u);
  EXPECT_EQ(line_of("# GHz S MA R 50\n1 0 0 0 0 0 0 0 0\n2 0 0 0 0 0 0 0\n"), 3u);
  EXPECT_EQ(line_of("# GHz S MA R 50\n2 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n"), 3u);
  EXPECT_EQ(line_of("# GHz Z MA R 50\n"), 1u);
  EXPECT_EQ(line_of("# GHz S MA R 50\n1 0 0 0 x 0 0 0 0\n"), 2u);
}

TEST(CsvTrace, ParsesExactlyAndIgnoresLineEndings) {
  const std::string lf = "freq_hz,s21_db,s21_deg\n1e9,-20,45\n2e9,-10,-30\n3e9,0,0\n";
  std::string crlf;
  for (char c : lf) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  std::istringstream a(lf), b(crlf);
  const auto ta = parse_csv_trace(a);
  const auto tb = parse_csv_trace(b);
  ASSERT_EQ(ta.size(), 3u);
  EXPECT_EQ(ta.frequencies, (std::vector<double>{1e9, 2e9, 3e9}));
  EXPECT_EQ(ta.s21, tb.s21);
  EXPECT_NEAR(std::abs(ta.s21[0]), 0.1, 1e-15);
  EXPECT_NEAR(std::arg(ta.s21[1]) * 180 / kPi, -30.0, 1e-12);
  EXPECT_EQ(ta.s21[2], std::complex<double>(1.0, 0.0));
}

TEST(CsvTrace, Errors) {
  std::istringstream empty("freq_hz,s21_db,s21_deg\n");
  EXPECT_THROW(parse_csv_trace(empty), NoDataError);
  std::istringstream header("f,db,deg\n1,2,3\n");
  EXPECT_THROW(parse_csv_trace(header), FormatError);
  std::istringstream cell("freq_hz,s21_db,s21_deg\n1,2,3\n2,abc,3\n");
  try {
    parse_csv_trace(cell);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(CsvTrace, WriterRoundTrip) {
  const auto trace = synth_trace(reference_fit(), 20, 3);
  std::ostringstream out;
  write_csv_trace(trace, out);
  std::istringstream in(out.str());
  const auto back = parse_csv_trace(in);
  ASSERT_EQ(back.size(), trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(back.frequencies[i], trace.frequencies[i]);
    EXPECT_NEAR(std::abs(back.s21[i] - trace.s21[i]), 0.0, 1e-14);
  }
}

TEST(Lorentzian, PeakWidthAndSymmetry) {
  EXPECT_DOUBLE_EQ(lorentzian_model(10e9, 2500, 1e-2, 1e-3, 10e9), 1.1e-2);
  // Half-power points at f0 (1 +- 1/(2q)): FWHM = f0 / q = 4 MHz.
  EXPECT_NEAR(lorentzian_model(10e9, 2500, 1.0, 0.0, 10e9 + 2e6), 0.5, 1e-12);
  EXPECT_NEAR(lorentzian_model(10e9, 2500, 1.0, 0.0, 10e9 - 2e6), 0.5, 1e-12);
  for (double d = 0.1e6; d <= 4e6; d += 0.1e6) {
    const double up = lorentzian_model(10e9, 2500, 1.0, 0.0, 10e9 + d);
    const double dn = lorentzian_model(10e9, 2500, 1.0, 0.0, 10e9 - d);
    EXPECT_NEAR(up, dn, 1e-12);
  }
  EXPECT_THROW(lorentzian_model(10e9, 0.0, 1, 0, 10e9), DomainError);
}

TEST(Fit, NoiselessIsExact) {
  const auto truth = reference_fit();
  const auto fit = fit_resonance(synth_trace(truth, kInf, 0));
  EXPECT_NEAR(fit.f0 / truth.f0, 1.0, 1e-8);
  EXPECT_NEAR(fit.q_loaded / truth.q_loaded, 1.0, 1e-8);
  EXPECT_NEAR(fit.amplitude / truth.amplitude, 1.0, 1e-8);
  EXPECT_NEAR(fit.baseline / truth.baseline, 1.0, 1e-8);
  EXPECT_LT(fit.rms_residual, 1e-10);
}

TEST(Fit, TwentyDbMonteCarlo) {
  const auto truth = reference_fit();
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto fit = fit_resonance(synth_trace(truth, 20, seed));
    EXPECT_LT(std::abs(fit.f0 - truth.f0), 40e3) << seed;
    EXPECT_LT(std::abs(fit.q_loaded / truth.q_loaded - 1.0), 0.05) << seed;
  }
}

TEST(Fit, NoPeakIsRejected) {
  ResonanceTrace flat;
  for (int i = 0; i < 64; ++i) {
    flat.frequencies.push_back(9.9e9 + 1e6 * i);
    flat.s21.push_back(std::sqrt(1e-3 * (1.0 + 0.01 * i)));
  }
  EXPECT_THROW(fit_resonance(flat), FitError);
  ResonanceTrace tiny = flat;
  tiny.frequencies.resize(8);
  tiny.s21.resize(8);
  EXPECT_THROW(fit_resonance(tiny), ParameterError);
}

TEST(Fit, PeakAtEdgeIsRejected) {
  ResonanceFit truth = reference_fit();
  auto trace = synth_trace(truth, kInf, 0);
  trace.frequencies.resize(190);
  trace.s21.resize(190);
  EXPECT_THROW(fit_resonance(trace), FitError);
}

TEST(Synth, DeterministicAndExact) {
  const auto truth = reference_fit();
  const auto a = synth_trace(truth, 20, 42);
  const auto b = synth_trace(truth, 20, 42);
  const auto c = synth_trace(truth, 20, 43);
  EXPECT_EQ(a.frequencies, b.frequencies);
  EXPECT_EQ(a.s21, b.s21);
  EXPECT_NE(a.s21, c.s21);
  EXPECT_EQ(a.size(), 401u);
  EXPECT_DOUBLE_EQ(a.frequencies.front(), 10e9 - 40e6);
  EXPECT_NEAR(a.frequencies.back(), 10e9 + 40e6, 1e-3);
  const auto clean = synth_trace(truth, kInf, 5);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double model = lorentzian_model(10e9, 2500, 1e-2, 1e-3, clean.frequencies[i]);
    EXPECT_NEAR(clean.power(i), model, 1e-16);
  }
  EXPECT_THROW(synth_trace(truth, std::nan(""), 1), ParameterError);
}

TEST(Synth, TouchstoneFixtureRoundTrip) {
  const auto trace = synth_trace(reference_fit(), 20, 9);
  std::istringstream in(round_trip(touchstone_from_trace(trace)));
  const auto back = parse_touchstone(in);
  EXPECT_EQ(back.frequencies, trace.frequencies);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(std::abs(back.s21[i] - trace.s21[i]), 0.0, 1e-15);
  }
}

TEST(Cooldown, IdenticalTracesGiveZeroShift) {
  const auto trace = synth_trace(reference_fit(), 20, 4);
  const auto series = track_cooldown({{1.0, trace}, {0.5, trace}});
  ASSERT_EQ(series.records.size(), 2u);
  for (const auto& r : series.records) {
    EXPECT_TRUE(r.ok);
    EXPECT_EQ(r.df, 0.0);
  }
}

TEST(Cooldown, SortsAndKeepsGaps) {
  ResonanceFit a = reference_fit(), b = reference_fit();
  b.f0 = 10.05e9;
  ResonanceTrace broken;
  for (int i = 0; i < 20; ++i) {
    broken.frequencies.push_back(1e9 + i);
    broken.s21.push_back(0.01);
  }
  const auto series =
      track_cooldown({{0.2, synth_trace(b, kInf, 0)}, {0.3, broken}, {0.9, synth_trace(a, kInf, 0)}},
                     Reference{}, 2);
  ASSERT_EQ(series.records.size(), 3u);
  EXPECT_EQ(series.records[0].temperature, 0.9);
  EXPECT_EQ(series.records[1].temperature, 0.3);
  EXPECT_FALSE(series.records[1].ok);
  EXPECT_FALSE(series.records[1].error.empty());
  EXPECT_NEAR(series.records[2].df, 50e6, 1.0);
  EXPECT_EQ(series.records[2].df, series.records[2].f0 - series.reference_f0);
  EXPECT_EQ(series.temperatures().size(), 2u);
  EXPECT_THROW(track_cooldown({{0.3, broken}, {0.2, broken}}), NoDataError);
  EXPECT_THROW(track_cooldown({{0.3, broken}}), ParameterError);
}

TEST(Cooldown, SyntheticN35StartsAtMinus120MHz) {
  const auto syn = synth_cooldown(default_profile("N35"), 11);
  const auto series = track_cooldown(syn.records, Reference{syn.reference_f0}, 4);
  EXPECT_EQ(series.records.front().temperature, 1.25);
  EXPECT_NEAR(series.records.front().df, -120e6, 40e3);
  std::ostringstream csv;
  write_cooldown_csv(series, csv);
  EXPECT_EQ(csv.str().rfind("temperature_k,f0_hz,q_loaded,df_hz\n", 0), 0u);
}

TEST(Cooldown, TemplatesMatchPresetLevels) {
  for (const char* name : {"N35", "N42", "N50", "N52"}) {
    const auto p = default_profile(name);
    const auto t = cooldown_template(p);
    EXPECT_NEAR(t.back().df - t.front().df, 100e6, 1e-6) << name;
  }
  EXPECT_EQ(cooldown_template(default_profile("N35")).front().df, -120e6);
  EXPECT_EQ(cooldown_template(default_profile("N52")).front().df, -90e6);
  auto bad = default_profile("N35");
  bad.transition_start_mk = 700;
  EXPECT_THROW(synth_cooldown(bad, 1), ParameterError);
  EXPECT_THROW(default_profile("N99"), ParameterError);
}

TEST(Segmentation, ConstantSeriesIsAllRest) {
  std::vector<double> t, df;
  for (int i = 0; i < 40; ++i) {
    t.push_back(1.0 - 0.01 * i);
    df.push_back(-120e6);
  }
  const auto seg = classify_regions(t, df);
  EXPECT_EQ(seg[Region::rest].size(), 40u);
  EXPECT_TRUE(seg[Region::fluctuation].empty());
  EXPECT_TRUE(seg[Region::transition].empty());
  EXPECT_TRUE(seg[Region::levitated].empty());
}

TEST(Segmentation, SingleStepIsTheTransition) {
  std::vector<double> t, df;
  for (int i = 0; i < 40; ++i) {
    t.push_back(1.0 - 0.01 * i);
    df.push_back(i < 23 ? -120e6 : -20e6);
  }
  const auto seg = classify_regions(t, df);
  EXPECT_EQ(seg[Region::rest].end, 23u);
  EXPECT_TRUE(seg[Region::fluctuation].empty());
  EXPECT_EQ(seg[Region::transition].begin, 23u);
  EXPECT_EQ(seg[Region::transition].end, 24u);
  EXPECT_EQ(seg[Region::levitated].begin, 24u);
  EXPECT_NEAR(seg[Region::transition].max_step, 100e6, 1e-6);
}

TEST(Segmentation, ThresholdTiesGoToTheEarlierSegment) {
  std::vector<double> t, df;
  for (int i = 0; i < 40; ++i) {
    t.push_back(1.0 - 0.01 * i);
    df.push_back(i < 20 ? 0.0 : 30e6);   // step exactly at the threshold
  }
  const auto seg = classify_regions(t, df);
  EXPECT_TRUE(seg[Region::transition].empty());
  EXPECT_EQ(seg[Region::fluctuation].begin, 20u);
}

TEST(Segmentation, PartitionAndValidation) {
  const auto tmpl = cooldown_template(default_profile("N35"));
  std::vector<double> t, df;
  for (const auto& s : tmpl) {
    t.push_back(s.temperature);
    df.push_back(s.df);
  }
  const auto seg = classify_regions(t, df);
  std::size_t covered = 0;
  for (int s = 0; s < 4; ++s) {
    EXPECT_EQ(seg.segments[s].begin, covered);
    covered = seg.segments[s].end;
  }
  EXPECT_EQ(covered, t.size());
  Thresholds bad;
  bad.step = 0;
  EXPECT_THROW(classify_regions(t, df, bad), ParameterError);
  bad = Thresholds{};
  bad.window = 40;
  EXPECT_THROW(classify_regions(t, df, bad), ParameterError);
}

TEST(Segmentation, SyntheticN35Boundaries) {
  const auto profile = default_profile("N35");
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto syn = synth_cooldown(profile, seed);
    const auto series = track_cooldown(syn.records, Reference{syn.reference_f0}, 4);
    ASSERT_EQ(series.temperatures().size(), series.records.size());
    const auto seg = classify_regions(series);
    for (int s = 0; s < 4; ++s) EXPECT_FALSE(seg.segments[s].empty()) << seed;
    auto near = [](std::size_t a, std::size_t b) {
      return (a > b ? a - b : b - a) <= 1;
    };
    EXPECT_TRUE(near(seg[Region::fluctuation].begin, profile.index_of(600))) << seed;
    EXPECT_TRUE(near(seg[Region::transition].begin, profile.index_of(300))) << seed;
    EXPECT_TRUE(near(seg[Region::levitated].begin, profile.index_of(120))) << seed;
  }
}
