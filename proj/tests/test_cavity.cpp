#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "levsim/cavity.hpp"
#include "levsim/errors.hpp"

using namespace levsim;
using namespace levsim::cavity;

namespace {

constexpr double kMHz = 1e6;
constexpr double kMm = 1e-3;

FrequencyMap default_map() {
  return FrequencyMap::parametric(parametric_from_anchors(MapAnchors{}));
}

std::string grid_csv(const FrequencyMap& map, int nr, int nz, double z_hi) {
  GridAxis axes;
  for (int i = 0; i < nr; ++i) axes.r.push_back(2 * kMm * i / (nr - 1));
  for (int j = 0; j < nz; ++j) axes.z.push_back(z_hi * j / (nz - 1));
  std::ostringstream out;
  write_shift_map_csv(map, axes, out);
  return out.str();
}

}  // namespace

TEST(BareFrequency, QuarterWave) {
  CavityGeometry g;
  EXPECT_NEAR(bare_frequency(g), 14989622900.0, 1.0);
  g.effective_length_correction = 2.5 * kMm;
  EXPECT_NEAR(bare_frequency(g), 10e9, 0.01e9);
  double prev = HUGE_VAL;
  for (double l = 1 * kMm; l < 20 * kMm; l += 0.5 * kMm) {
    CavityGeometry h;
    h.stub_height = l;
    const double f = bare_frequency(h);
    EXPECT_LT(f, prev);
    prev = f;
  }
  g.stub_radius = 8 * kMm;
  EXPECT_THROW(bare_frequency(g), DomainError);
}

TEST(BareFrequency, EffectiveLengthCalibration) {
  CavityGeometry g;
  EXPECT_NEAR(calibrate_effective_length(g, 10e9), 2.49481145e-3, 1e-12);
  EXPECT_NEAR(calibrate_effective_length(g, 14989622900.0), 0.0, 1e-15);
  for (double f : {3e9, 9.7e9, 10e9, 12.3e9, 40e9}) {
    g.effective_length_correction = calibrate_effective_length(g, f);
    EXPECT_NEAR(bare_frequency(g), f, 1.0);
  }
  EXPECT_THROW(calibrate_effective_length(g, 0.0), CalibrationError);
  EXPECT_THROW(calibrate_effective_length(g, -1.0), CalibrationError);
}

TEST(ParametricMap, DefaultCalibrationMeetsAnchors) {
  const auto p = parametric_from_anchors(MapAnchors{});
  EXPECT_NEAR(p.s1, 50e9, 1e-3);
  EXPECT_NEAR(p.s0, 32.5e6, 1e-6);
  EXPECT_NEAR(p.lambda, 0.3e-3, 1e-18);
  const auto map = default_map();
  EXPECT_NEAR(map.shift_at(1.75 * kMm, 0.0), -120 * kMHz, 1e-6);
  for (double r : {0.0, 0.5 * kMm, 1.75 * kMm, 2 * kMm}) {
    EXPECT_NEAR(map.d_dr(r, 0.0) / (-50e9), 1.0, 1e-6);
    // Finite difference of shift_at against the radial anchor.
    const double h = 1e-6;
    const double rr = std::min(std::max(r, h), 2 * kMm - h);
    const double fd = (map.shift_at(rr + h, 0) - map.shift_at(rr - h, 0)) / (2 * h);
    EXPECT_NEAR(fd / (-50e9), 1.0, 1e-6);
  }
  EXPECT_NEAR(std::abs(map.d_dz(1.75 * kMm, 0.0)), 400e9, 1e-3);
}

TEST(ParametricMap, SignsTailAndMonotonicity) {
  const auto map = default_map();
  const double edge = 1.75 * kMm;
  const double s_edge = 120 * kMHz;
  EXPECT_LT(std::abs(map.shift_at(edge, 5 * 0.3 * kMm)), 0.01 * s_edge);
  for (double r = 0.0; r <= 2 * kMm; r += 0.25 * kMm) {
    double prev = -HUGE_VAL;
    for (double z = 0.0; z <= 3 * kMm; z += 0.05 * kMm) {
      const double v = map.shift_at(r, z);
      EXPECT_LT(v, 0.0);
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
  const auto flipped = FrequencyMap::parametric(map.params(), Polarity::gap_floor);
  EXPECT_DOUBLE_EQ(flipped.shift_at(edge, 0.2 * kMm), -map.shift_at(edge, 0.2 * kMm));
  EXPECT_GT(flipped.shift_at(edge, 0.0), 0.0);

  ParametricParams shifted = map.params();
  shifted.residual_offset = 100 * kMHz;
  const auto offset_map = FrequencyMap::parametric(shifted);
  EXPECT_NEAR(offset_map.shift_at(edge, 30 * kMm), 100 * kMHz, 1e-6);
  EXPECT_LT(offset_map.shift_at(edge, 0.1 * kMm), 100 * kMHz);
}

TEST(ParametricMap, LateralSpreadCollapsesWithHeight) {
  const auto map = default_map();
  const double spread0 = lateral_spread(map, 0.0, 1.75 * kMm);
  EXPECT_NEAR(spread0, 87.5 * kMHz, 1e-3);
  for (double z = 0.7 * kMm; z <= 2 * kMm; z += 0.1 * kMm) {
    EXPECT_LT(lateral_spread(map, z, 1.75 * kMm), 0.1 * spread0) << z;
  }
  EXPECT_NEAR(lateral_spread(map, 0.7 * kMm, 1.75 * kMm) / spread0,
              std::exp(-0.7 / 0.3), 1e-12);
}

TEST(ParametricMap, DomainErrors) {
  const auto map = default_map();
  EXPECT_THROW(map.shift_at(-1e-6, 0.0), DomainError);
  EXPECT_THROW(map.shift_at(2.1 * kMm, 0.0), DomainError);
  EXPECT_THROW(map.shift_at(1 * kMm, -1e-6), DomainError);
  EXPECT_THROW(build_shift_map_parametric(1, 1, 0.0, 0), DomainError);
}

TEST(GriddedMap, CornersAndMidpoint) {
  std::istringstream in("r_m,z_m,df_hz\n0,0,1\n0,1,3\n1,0,5\n1,1,11\n");
  const auto map = load_shift_map_csv(in);
  ASSERT_EQ(map.kind(), FrequencyMap::Kind::gridded);
  EXPECT_EQ(map.shift_at(0, 0), 1.0);
  EXPECT_EQ(map.shift_at(0, 1), 3.0);
  EXPECT_EQ(map.shift_at(1, 0), 5.0);
  EXPECT_EQ(map.shift_at(1, 1), 11.0);
  EXPECT_DOUBLE_EQ(map.shift_at(0.5, 0.5), (1 + 3 + 5 + 11) / 4.0);
  EXPECT_DOUBLE_EQ(map.d_dz(0.5, 0.5), ((3 - 1) + (11 - 5)) / 2.0);
  EXPECT_THROW(map.shift_at(1.01, 0.5), DomainError);
}

TEST(GriddedMap, AcceptsCrlfAndBlankTail) {
  std::istringstream in("r_m,z_m,df_hz\r\n0,0,1\r\n0,2,3\r\n1,0,5\r\n1,2,7\r\n\r\n");
  const auto map = load_shift_map_csv(in);
  EXPECT_DOUBLE_EQ(map.shift_at(0.5, 1.0), 4.0);
}

TEST(GriddedMap, FormatErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      load_shift_map_csv(in);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 9999;
  };
  EXPECT_EQ(line_of("r,z,df\n0,0,1\n"), 1u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0,1\n0,1,2\n1,0,3\n1,2,4\n"), 5u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0,1\n0,1,2\n1,0,3\n"), 4u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0,1\n0,1,2\n1,0,3\n2,0,4\n"), 5u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,1,1\n0,0,2\n"), 3u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0,1\n0,1,2\n-1,0,3\n-1,1,4\n"), 4u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0,1\n0,1,x\n"), 3u);
  EXPECT_EQ(line_of("r_m,z_m,df_hz\n0,0\n"), 2u);
}

TEST(GriddedMap, SampledParametricMapAgrees) {
  const auto map = default_map();
  std::istringstream in(grid_csv(map, 50, 50, 2 * kMm));
  const auto grid = load_shift_map_csv(in);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ur(0.0, 2 * kMm), uz(0.0, 2 * kMm);
  for (int k = 0; k < 2000; ++k) {
    const double r = ur(rng), z = uz(rng);
    const double exact = map.shift_at(r, z);
    EXPECT_LT(std::abs(grid.shift_at(r, z) - exact), 0.01 * std::abs(exact)) << r << " " << z;
  }
}

TEST(Inversion, ClosedFormExponential) {
  const auto map = default_map();
  const auto est = invert_height(map, -30 * kMHz, 1.75 * kMm, 0.0);
  EXPECT_NEAR(est.height, 0.4158883083359671e-3, 1e-12);
  EXPECT_NEAR(est.sensitivity, 30 * kMHz / (0.3 * kMm), 1e-3);
  EXPECT_EQ(est.uncertainty, 0.0);
  EXPECT_FALSE(est.ill_conditioned);
}

TEST(Inversion, RoundTripAndGrowingUncertainty) {
  const auto map = default_map();
  double prev = 0.0;
  for (double z = 0.05 * kMm; z <= 1.0 * kMm + 1e-12; z += 0.01 * kMm) {
    const double df = map.shift_at(1.75 * kMm, z);
    const auto est = invert_height(map, df, 1.75 * kMm, 1 * kMHz);
    EXPECT_LT(std::abs(est.height - z) / z, 1e-9);
    EXPECT_GT(est.uncertainty, prev);
    prev = est.uncertainty;
  }
}

TEST(Inversion, OutOfRangeAndIllConditioned) {
  const auto map = default_map();
  try {
    invert_height(map, -200 * kMHz, 1.75 * kMm, 0.0);
    FAIL();
  } catch (const InversionError& e) {
    EXPECT_NEAR(e.range_lo(), -120 * kMHz, 1.0);
  }
  EXPECT_THROW(invert_height(map, 5 * kMHz, 1.75 * kMm, 0.0), InversionError);
  const auto far = invert_height(map, map.shift_at(1.75 * kMm, 2 * kMm), 1.75 * kMm, 1e3);
  EXPECT_TRUE(far.ill_conditioned);
  EXPECT_NEAR(far.height, 2 * kMm, 1e-9);
}

TEST(Inversion, GriddedMap) {
  const auto map = default_map();
  std::istringstream in(grid_csv(map, 9, 201, 2 * kMm));
  const auto grid = load_shift_map_csv(in);
  for (double z : {0.1e-3, 0.4e-3, 0.9e-3}) {
    const auto est = invert_height(grid, grid.shift_at(1.75 * kMm, z), 1.75 * kMm, 0.0);
    EXPECT_NEAR(est.height, z, 1e-9);
  }
  EXPECT_THROW(invert_height(grid, -1e9, 1.75 * kMm, 0.0), InversionError);
}

TEST(Anchors, DefaultAnchorsFitWithSmallResiduals) {
  const auto fit = calibrate_map_anchors(anchor_list(MapAnchors{}));
  EXPECT_FALSE(fit.offset_fitted);
  ASSERT_EQ(fit.relative_residuals.size(), 3u);
  for (double r : fit.relative_residuals) EXPECT_LT(std::abs(r), 0.1);
  EXPECT_NEAR(fit.params.lambda, 0.3e-3, 1e-12);
  EXPECT_NEAR(fit.params.s1, 50e9, 1e-2);
}

TEST(Anchors, ExactRecoveryFromKnownMap) {
  const ParametricParams truth{21e6, 63e9, 0.41e-3, 7.5e6};
  const auto map = FrequencyMap::parametric(truth);
  std::vector<Anchor> anchors;
  for (double r : {0.3e-3, 1.2e-3, 1.9e-3}) {
    for (double z : {0.0, 0.2e-3, 0.6e-3}) {
      anchors.push_back({Anchor::Kind::shift, r, z, map.shift_at(r, z)});
    }
  }
  anchors.push_back({Anchor::Kind::d_dz, 1e-3, 0.1e-3, map.d_dz(1e-3, 0.1e-3)});
  const auto fit = calibrate_map_anchors(anchors);
  EXPECT_TRUE(fit.offset_fitted);
  EXPECT_NEAR(fit.params.s0 / truth.s0, 1.0, 1e-9);
  EXPECT_NEAR(fit.params.s1 / truth.s1, 1.0, 1e-9);
  EXPECT_NEAR(fit.params.lambda / truth.lambda, 1.0, 1e-9);
  EXPECT_NEAR(fit.params.residual_offset / truth.residual_offset, 1.0, 1e-9);
}

TEST(Anchors, DuplicatesDoNotChangeTheFit) {
  auto anchors = anchor_list(MapAnchors{});
  const auto base = calibrate_map_anchors(anchors);
  anchors.push_back(anchors[0]);
  anchors.push_back(anchors[2]);
  anchors.push_back(anchors[2]);
  const auto dup = calibrate_map_anchors(anchors);
  EXPECT_EQ(dup.anchors.size(), 3u);
  EXPECT_EQ(dup.params.s0, base.params.s0);
  EXPECT_EQ(dup.params.s1, base.params.s1);
  EXPECT_EQ(dup.params.lambda, base.params.lambda);
  EXPECT_EQ(dup.offset_fitted, base.offset_fitted);
}

TEST(Anchors, UnderdeterminedSetsAreRejected) {
  auto anchors = anchor_list(MapAnchors{});
  anchors.pop_back();
  EXPECT_THROW(calibrate_map_anchors(anchors), CalibrationError);
  // Three radial slopes at z = 0 say nothing about S0 or lambda.
  std::vector<Anchor> slopes{{Anchor::Kind::d_dr, 0.0, 0.0, -50e9},
                             {Anchor::Kind::d_dr, 1e-3, 0.0, -50e9},
                             {Anchor::Kind::d_dr, 2e-3, 0.0, -50e9}};
  EXPECT_THROW(calibrate_map_anchors(slopes), CalibrationError);
}
