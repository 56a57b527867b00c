#include <nanosim/optics.hpp>

#include <gtest/gtest.h>

using namespace nanosim;
using namespace nanosim::optics;

namespace {

const PsfModel& matched149() {
  static const PsfModel m = build_psf(OpticsParams::index_matched(1.49));
  return m;
}

const PsfModel& matched120() {
  static const PsfModel m = build_psf(OpticsParams::index_matched(1.2));
  return m;
}

const PsfModel& water() {
  static const PsfModel m = [] {
    OpticsParams p;
    p.na = 1.3;
    return build_psf(p);
  }();
  return m;
}

// Half-maximum radius of the quadrature profile by bisection.
double quadrature_fwhm(const OpticsParams& p) {
  const double centre = psf_quadrature(p, 0.0, 0.0);
  double lo = 0.0, hi = 1000.0;
  for (int i = 0; i < 24; ++i) {
    const double mid = 0.5 * (lo + hi);
    (psf_quadrature(p, mid, 0.0) > 0.5 * centre ? lo : hi) = mid;
  }
  return lo + hi;  // 2 * midpoint
}

}  // namespace

TEST(OpticsParams, DefaultsDescribeWaterSampleUnderGlass) {
  const OpticsParams p;
  EXPECT_EQ(p.wavelength_nm, 660.0);
  EXPECT_EQ(p.n_sample, 1.33);
  EXPECT_EQ(p.coverslip_um, 170.0);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(kPixelSizesNm, (std::array<double, 4>{65, 80, 108, 120}));
}

TEST(OpticsParams, ValidationRejectsUnphysicalValues) {
  OpticsParams p;
  p.na = 1.52;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.wavelength_nm = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.pixel_size_nm = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.n_sample = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_THROW(build_psf(OpticsParams{}, TableGrid{3000, 0, -1000, 1000, 10}), ConfigError);
}

TEST(OpticsParams, PupilTruncatedByLowSampleIndex) {
  OpticsParams p;
  p.na = 1.49;
  EXPECT_NEAR(p.pupil_limit(), 1.33 / 1.49, 1e-15);
  EXPECT_EQ(OpticsParams::index_matched(1.49).pupil_limit(), 1.0);
}

TEST(OpticalPathDifference, VanishesAtDesignConditionsInFocus) {
  const auto p = OpticsParams::index_matched(1.4);
  for (double rho : {0.0, 0.3, 0.9, 1.0}) EXPECT_NEAR(optical_path_difference(p, rho, 0.0), 0.0, 1e-12);
  EXPECT_GT(std::abs(optical_path_difference(p, 0.5, 0.3)), 0.0);
}

TEST(PsfModel, PeakNormalizedAtOriginForMatchedOptics) {
  const auto& m = matched149();
  EXPECT_NEAR(m.at(0, 0, 0), 1.0, 1e-12);
  for (double v : m.table()) EXPECT_LE(v, m.at(0, 0, 0) + 1e-12);
}

TEST(PsfModel, TableIsFiniteAndNonnegative) {
  for (const PsfModel* m : {&matched149(), &water()})
    for (double v : m->table()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GE(v, 0.0);
    }
}

TEST(PsfModel, GridShape) {
  const auto& m = matched149();
  EXPECT_EQ(m.grid().nr(), 1501u);
  EXPECT_EQ(m.grid().nz(), 201u);
  EXPECT_EQ(m.table().size(), 1501u * 201u);
}

TEST(PsfModel, RadiallySymmetric) {
  const auto& m = water();
  for (double z : {-400.0, 0.0, 250.0})
    for (double d : {13.0, 97.5, 410.0}) {
      EXPECT_EQ(m.at(d, 0, z), m.at(-d, 0, z));
      EXPECT_EQ(m.at(d, 31, z), m.at(31, d, z));
    }
}

TEST(PsfModel, FwhmWithinTenPercentOfAbbeEstimate) {
  for (const PsfModel* m : {&matched120(), &matched149()}) {
    const double target = 0.51 * 660.0 / m->params().na;
    EXPECT_NEAR(m->lateral_fwhm_nm(0.0), target, 0.1 * target) << "NA " << m->params().na;
  }
}

TEST(PsfModel, FwhmMatchesQuadratureOracle) {
  const auto& m = matched149();
  EXPECT_NEAR(m.lateral_fwhm_nm(0.0), quadrature_fwhm(m.params()), 1.0);
}

TEST(PsfModel, TableMatchesQuadratureOracle) {
  for (const PsfModel* m : {&matched149(), &water()}) {
    // Normalize the oracle at the table's own maximum node.
    const auto it = std::max_element(m->table().begin(), m->table().end());
    const auto idx = static_cast<std::size_t>(it - m->table().begin());
    const double zp = m->grid().z_min_nm + static_cast<double>(idx / m->grid().nr()) * m->grid().dz_nm;
    const double rp = static_cast<double>(idx % m->grid().nr()) * m->grid().dr_nm;
    const double peak = psf_quadrature(m->params(), rp, zp);
    Rng rng(7);
    std::uniform_int_distribution<std::size_t> ur(0, 400), uz(0, m->grid().nz() - 1);
    for (int i = 0; i < 40; ++i) {
      const std::size_t ir = ur(rng), iz = uz(rng);
      const double r = static_cast<double>(ir) * m->grid().dr_nm;
      const double z = m->grid().z_min_nm + static_cast<double>(iz) * m->grid().dz_nm;
      const double oracle = psf_quadrature(m->params(), r, z) / peak;
      EXPECT_LT(std::abs(m->node(iz, ir) - oracle), 1e-3) << "r " << r << " z " << z;
      if (oracle > 0.05) EXPECT_LT(std::abs(m->node(iz, ir) - oracle) / oracle, 1e-3) << "r " << r << " z " << z;
    }
  }
}

TEST(PsfModel, FarTailIsSmall) {
  const auto& m = matched149();
  EXPECT_LT(m.at(2000.0, 0.0, 0.0), 1e-2);
  EXPECT_LT(psf_quadrature(m.params(), 2000.0, 0.0) / psf_quadrature(m.params(), 0.0, 0.0), 1e-2);
}

TEST(PsfModel, DefocusBroadens) {
  for (const PsfModel* m : {&matched149(), &water()}) {
    const double f0 = m->lateral_fwhm_nm(0.0);
    EXPECT_GT(m->lateral_fwhm_nm(300.0), f0);
    EXPECT_GT(m->lateral_fwhm_nm(-300.0), f0);
  }
}

TEST(PsfModel, OutOfRangeLookupsAreCountedAsZero) {
  const auto m = build_psf(OpticsParams::index_matched(1.4), TableGrid{500, 5, -100, 100, 20});
  EXPECT_EQ(m.out_of_range_count(), 0u);
  EXPECT_EQ(m.at(600.0, 0.0, 0.0), 0.0);
  EXPECT_EQ(m.at(0.0, 0.0, 150.0), 0.0);
  EXPECT_EQ(m.out_of_range_count(), 2u);
  EXPECT_TRUE(m.covers(500.0, 100.0));
  EXPECT_FALSE(m.covers(500.1, 0.0));
}

TEST(PsfModel, InterpolationIsExactAtNodes) {
  const auto& m = water();
  EXPECT_EQ(m.interpolate(20.0, 30.0), m.node(103, 10));
  const double mid = m.interpolate(21.0, 30.0);
  EXPECT_NEAR(mid, 0.5 * (m.node(103, 10) + m.node(103, 11)), 1e-15);
}

TEST(PsfModel, InFocusIntegralMatchesAiryScale) {
  // For an aberration-free pupil the normalized PSF integrates to
  // lambda^2 / (pi NA^2).
  const auto& m = matched149();
  const double lambda = 660.0, na = 1.49;
  EXPECT_NEAR(m.in_focus_integral_nm2() / (lambda * lambda / (kPi * na * na)), 1.0, 0.02);
}
