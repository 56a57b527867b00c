#include <nanosim/geometry.hpp>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace nanosim;
using namespace nanosim::geometry;

namespace {

// Upper critical value of the chi-squared distribution.
double chi2_critical(int dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

double chi2_statistic(const std::vector<double>& observed, double expected_each) {
  double s = 0.0;
  for (double o : observed) s += (o - expected_each) * (o - expected_each) / expected_each;
  return s;
}

double distance_to_segment(Vec3 p, Vec3 a, Vec3 b) {
  const Vec3 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
  return norm(p - (a + t * ab));
}

std::vector<Vec3> arc_points(double radius, double from, double to, int n) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    const double a = from + (to - from) * i / (n - 1);
    pts.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
  }
  return pts;
}

}  // namespace

TEST(StructureKind, NamesRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_kind(to_string(k)), k);
  EXPECT_THROW(parse_kind("microtubule"), ConfigError);
}

TEST(StructureSpec, DefaultsFollowStructureKind) {
  EXPECT_EQ(StructureSpec::defaults(StructureKind::ActinFilament).count, (IntRange{3, 10}));
  EXPECT_EQ(StructureSpec::defaults(StructureKind::ActinFilament).density, 100.0);
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Mitochondrion).count, (IntRange{1, 4}));
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Mitochondrion).density, 500.0);
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Mitochondrion).tube_radius_nm, 150.0);
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Vesicle).count, (IntRange{10, 30}));
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Vesicle).density, 2000.0);
  EXPECT_EQ(StructureSpec::defaults(StructureKind::Vesicle).vesicle_radius_nm, (Interval{25.0, 500.0}));
}

TEST(StructureSpec, ValidationRejectsBadRanges) {
  auto s = StructureSpec::defaults(StructureKind::ActinFilament);
  s.density = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = StructureSpec::defaults(StructureKind::ActinFilament);
  s.control_points = {2, 4};
  EXPECT_THROW(s.validate(), ConfigError);
  s = StructureSpec::defaults(StructureKind::Vesicle);
  s.vesicle_radius_nm = {100.0, 50.0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = StructureSpec::defaults(StructureKind::Vesicle);
  s.count = {5, 2};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SplineCurve, CollinearPointsGiveStraightSegment) {
  const auto c = SplineCurve::through({{0, 0, 0}, {0.7, 0, 0}, {2.0, 0, 0}});
  EXPECT_NEAR(c.length(), 2.0, 1e-9);
  for (double s = 0.0; s <= 2.0; s += 0.05) {
    const Vec3 p = c.point_at_length(s);
    EXPECT_NEAR(p.y, 0.0, 1e-12);
    EXPECT_NEAR(p.z, 0.0, 1e-12);
    EXPECT_NEAR(p.x, s, 1e-6);
  }
}

TEST(SplineCurve, PassesThroughControlPoints) {
  Rng rng(11);
  const SceneBounds b;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts(5);
    for (auto& p : pts) p = b.sample(rng);
    const auto c = SplineCurve::through(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT(norm(c.at(c.knots()[i]) - pts[i]), 1e-3);
  }
}

TEST(SplineCurve, ArcLengthMatchesFineQuadrature) {
  const auto c = SplineCurve::through({{0, 0, 0}, {1, 1, 0}, {2, 0, 0.3}, {3, 1, 0}});
  double oracle = 0.0;
  const int n = 200000;
  Vec3 prev = c.at(0.0);
  for (int i = 1; i <= n; ++i) {
    const Vec3 cur = c.at(c.parameter_end() * i / n);
    oracle += norm(cur - prev);
    prev = cur;
  }
  EXPECT_NEAR(c.length(), oracle, 1e-6);
}

TEST(SplineCurve, CircleSampledCurvatureMatchesRadius) {
  const auto c = SplineCurve::through(arc_points(1.0, 0.0, 2.0 * kPi, 41));
  const double mid = 0.5 * c.length();
  EXPECT_NEAR(norm(c.curvature_vector_at_length(mid)), 1.0, 5e-3);
}

TEST(SplineCurve, CoincidentPointsAreRejected) {
  EXPECT_THROW(SplineCurve::through({{0, 0, 0}, {0, 0, 0}, {1, 0, 0}}), NumericalError);
  EXPECT_THROW(SplineCurve::through({}), NumericalError);
}

TEST(SplineCurve, SinglePointHasZeroLength) {
  const auto c = SplineCurve::through({{1, 2, 0}});
  EXPECT_EQ(c.length(), 0.0);
  EXPECT_EQ(c.point_at_length(0.5), (Vec3{1, 2, 0}));
}

TEST(SampleSplineCurve, LengthNeverExceedsMaximum) {
  Rng rng(3);
  const SceneBounds b;
  for (int trial = 0; trial < 300; ++trial) {
    const int nc = uniform_int({3, 6}, rng);
    const auto c = sample_spline_curve(nc, b, 5.0, rng);
    EXPECT_LE(c.length(), 5.0);
    for (const auto& p : c.samples()) ASSERT_TRUE(b.contains(p, 1e-9));
  }
}

TEST(SampleSplineCurve, FixedSeedIsDeterministic) {
  const SceneBounds b;
  Rng r1(99), r2(99);
  const auto a = sample_spline_curve(4, b, 5.0, r1);
  const auto c = sample_spline_curve(4, b, 5.0, r2);
  ASSERT_EQ(a.control_points().size(), c.control_points().size());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.control_points()[i], c.control_points()[i]);
  EXPECT_EQ(a.length(), c.length());
}

TEST(SampleSplineCurve, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(sample_spline_curve(2, SceneBounds{}, 5.0, rng), ConfigError);
  EXPECT_THROW(sample_spline_curve(3, SceneBounds{}, 0.0, rng), ConfigError);
  EXPECT_THROW(sample_spline_curve(3, SceneBounds{}, 5.0, rng, 10.0), ConfigError);
}

TEST(LabelCurve, MeanCountMatchesLinearDensity) {
  const auto c = SplineCurve::through({{0, 0, 0}, {0.5, 0, 0}, {1, 0, 0}});
  Rng rng(5);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) total += static_cast<double>(label_curve(c, 100.0, rng).size());
  EXPECT_NEAR(total / draws / 100.0, 1.0, 0.02);
}

TEST(LabelCurve, EmittersLieOnTheCurve) {
  Rng rng(8);
  const auto c = sample_spline_curve(5, SceneBounds{}, 5.0, rng);
  const auto set = label_curve(c, 100.0, rng);
  ASSERT_GT(set.size(), 10u);
  // Independent polyline of the spline at a fine uniform parameter grid.
  std::vector<Vec3> poly;
  const int n = 20000;
  for (int i = 0; i <= n; ++i) poly.push_back(c.at(c.parameter_end() * i / n));
  for (const auto& p : set.positions) {
    double best = 1e9;
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) best = std::min(best, distance_to_segment(p, poly[i], poly[i + 1]));
    EXPECT_LT(best, 1e-3);
  }
}

TEST(LabelCurve, UniformInArcLength) {
  const auto c = SplineCurve::through({{0, 0, 0}, {1, 0.5, 0}, {2, 0, 0}});
  Rng rng(2);
  std::vector<double> bins(10, 0.0);
  std::size_t n = 0;
  for (int i = 0; i < 50; ++i) {
    const auto set = label_curve(c, 100.0, rng);
    for (const auto& p : set.positions) {
      // Arc length of the nearest table point gives the emitter's bin.
      double best = 1e9, s_best = 0.0;
      for (double s = 0.0; s <= c.length(); s += c.length() / 2000) {
        const double d = norm(c.point_at_length(s) - p);
        if (d < best) best = d, s_best = s;
      }
      bins[std::min<std::size_t>(9, static_cast<std::size_t>(10.0 * s_best / c.length()))] += 1.0;
      ++n;
    }
  }
  EXPECT_LT(chi2_statistic(bins, static_cast<double>(n) / 10.0), chi2_critical(9, 0.01));
}

TEST(LabelCurve, FixedSeedReproducible) {
  const auto c = SplineCurve::through({{0, 0, 0}, {2, 1, 0}, {4, 0, 0.2}, {5, 0, 0}});
  Rng a(77), b(77);
  EXPECT_EQ(label_curve(c, 100.0, a), label_curve(c, 100.0, b));
}

TEST(LabelCurve, ZeroLengthWarnsAndIsEmpty) {
  ScopedWarningCapture cap;
  Rng rng(1);
  EXPECT_TRUE(label_curve(SplineCurve::through({{0, 0, 0}}), 100.0, rng).empty());
  EXPECT_EQ(cap.messages().size(), 1u);
  EXPECT_THROW(label_curve(SplineCurve::through({{0, 0, 0}}), 0.0, rng), ConfigError);
}

TEST(TubeSurface, StraightTubeAreaIsCylinderPlusCaps) {
  const double r = 0.15, L = 2.0;
  const auto tube = build_mitochondrion(SplineCurve::through({{0, 0, 0}, {1, 0, 0}, {L, 0, 0}}), 150.0);
  EXPECT_NEAR(tube.lateral_area(), 2.0 * kPi * r * L, 0.01 * 2.0 * kPi * r * L);
  EXPECT_NEAR(tube.area(), 2.0 * kPi * r * L + 4.0 * kPi * r * r, 0.01 * tube.area());
}

TEST(TubeSurface, OneMicronBendAcceptedTightBendRejected) {
  EXPECT_NO_THROW(build_mitochondrion(SplineCurve::through(arc_points(1.0, 0.0, kPi, 13)), 150.0));
  EXPECT_THROW(build_mitochondrion(SplineCurve::through(arc_points(0.1, 0.0, kPi, 13)), 150.0), NumericalError);
  EXPECT_THROW(build_mitochondrion(SplineCurve::through(arc_points(1.0, 0.0, kPi, 5)), 0.0), ConfigError);
}

TEST(LabelSurface, TubeMeanCountMatchesDensityTimesArea) {
  const auto tube = build_mitochondrion(SplineCurve::through(arc_points(1.0, 0.0, kPi / 2, 9)), 150.0);
  Rng rng(4);
  const double density = 20.0;
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) total += static_cast<double>(label_surface(tube, density, rng).size());
  EXPECT_NEAR(total / draws / (density * tube.area()), 1.0, 0.02);
}

TEST(LabelSurface, StraightTubePointsSitAtRadius) {
  const double r = 0.15, L = 2.0;
  const auto tube = build_mitochondrion(SplineCurve::through({{0, 0, 0}, {1, 0, 0}, {L, 0, 0}}), 150.0);
  Rng rng(6);
  const auto set = label_surface(tube, 500.0, rng);
  std::size_t lateral = 0;
  for (const auto& p : set.positions) {
    const double d = distance_to_segment(p, {0, 0, 0}, {L, 0, 0});
    EXPECT_NEAR(d, r, 1e-3);
    EXPECT_GE(p.x, -r - 1e-9);
    EXPECT_LE(p.x, L + r + 1e-9);
    if (p.x > 0.0 && p.x < L) ++lateral;
  }
  const double expected = tube.lateral_area() / tube.area();
  const double frac = static_cast<double>(lateral) / static_cast<double>(set.size());
  EXPECT_NEAR(frac, expected, 4.0 * std::sqrt(expected * (1 - expected) / static_cast<double>(set.size())));
}

TEST(LabelSurface, CurvedTubeOuterSideIsDenser) {
  // Torus section: the outer half of a tube bent with radius R carries a
  // fraction 1/2 + r/(pi R) of the lateral area.
  const double R = 1.0, r = 0.15;
  const auto tube = build_mitochondrion(SplineCurve::through(arc_points(R, 0.0, kPi, 25)), 150.0);
  Rng rng(10);
  std::size_t outer = 0, counted = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto set = label_surface(tube, 2000.0, rng);
    for (const auto& p : set.positions) {
      const double ang = std::atan2(p.y, p.x);
      if (ang < 0.35 * kPi || ang > 0.65 * kPi) continue;
      const double rho = std::hypot(p.x, p.y);
      ++counted;
      if (rho > R) ++outer;
    }
  }
  ASSERT_GT(counted, 20000u);
  EXPECT_NEAR(static_cast<double>(outer) / static_cast<double>(counted), 0.5 + r / (kPi * R), 0.01);
}

TEST(LabelSurface, UnitAreaSphereMeanCount) {
  const SphereSurface s{{0, 0, 0}, 1.0 / std::sqrt(4.0 * kPi)};
  EXPECT_NEAR(s.area(), 1.0, 1e-12);
  Rng rng(12);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) total += static_cast<double>(label_surface(s, 2000.0, rng).size());
  EXPECT_NEAR(total / draws / 2000.0, 1.0, 0.02);
}

TEST(LabelSurface, SphereOctantsUniformAndAtRadius) {
  const SphereSurface s{{0.3, -0.2, 0.1}, 0.4};
  Rng rng(13);
  std::vector<double> oct(8, 0.0);
  std::size_t n = 0;
  for (int rep = 0; rep < 20; ++rep) {
    for (const auto& p : label_surface(s, 2000.0, rng).positions) {
      const Vec3 d = p - s.center;
      EXPECT_NEAR(norm(d), s.radius, 1e-3);
      oct[(d.x > 0 ? 1 : 0) + (d.y > 0 ? 2 : 0) + (d.z > 0 ? 4 : 0)] += 1.0;
      ++n;
    }
  }
  EXPECT_LT(chi2_statistic(oct, static_cast<double>(n) / 8.0), chi2_critical(7, 0.01));
}

TEST(GenerateScene, VesicleCountWithinRange) {
  auto spec = StructureSpec::defaults(StructureKind::Vesicle);
  spec.vesicle_radius_nm = {25.0, 30.0};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto scene = generate_scene(spec, SceneBounds{}, seed);
    const std::set<int> ids(scene.structure_id.begin(), scene.structure_id.end());
    EXPECT_GE(ids.size(), 10u);
    EXPECT_LE(ids.size(), 30u);
  }
}

TEST(GenerateScene, SingleVesicleIsOneSphere) {
  auto spec = StructureSpec::defaults(StructureKind::Vesicle);
  spec.count = {1, 1};
  const auto scene = generate_scene(spec, SceneBounds{}, 21);
  ASSERT_FALSE(scene.empty());
  for (int id : scene.structure_id) EXPECT_EQ(id, 0);
  // The sphere is recovered from any four non-coplanar labels; all others
  // must sit on it.
  Eigen::Matrix3d A;
  Eigen::Vector3d rhs;
  const auto& P = scene.positions;
  for (int i = 0; i < 3; ++i) {
    const Vec3 d = P[static_cast<std::size_t>(i + 1)] - P[0];
    A.row(i) << 2 * d.x, 2 * d.y, 2 * d.z;
    rhs(i) = dot(P[static_cast<std::size_t>(i + 1)], P[static_cast<std::size_t>(i + 1)]) - dot(P[0], P[0]);
  }
  const Eigen::Vector3d c = A.fullPivLu().solve(rhs);
  const Vec3 centre{c(0), c(1), c(2)};
  const double radius = norm(P[0] - centre);
  EXPECT_GE(radius, 0.025 - 1e-6);
  EXPECT_LE(radius, 0.5 + 1e-6);
  for (const auto& p : P) EXPECT_NEAR(norm(p - centre), radius, 1e-6);
}

TEST(GenerateScene, InstanceCountsUniformOverRange) {
  auto spec = StructureSpec::defaults(StructureKind::Vesicle);
  spec.vesicle_radius_nm = {25.0, 30.0};
  std::vector<double> counts(21, 0.0);
  const int scenes = 10000;
  for (int seed = 0; seed < scenes; ++seed) {
    const auto scene = generate_scene(spec, SceneBounds{}, static_cast<std::uint64_t>(seed));
    const std::set<int> ids(scene.structure_id.begin(), scene.structure_id.end());
    counts[ids.size() - 10] += 1.0;
  }
  EXPECT_LT(chi2_statistic(counts, scenes / 21.0), chi2_critical(20, 0.01));
}

TEST(GenerateScene, EveryKindStaysInBounds) {
  const SceneBounds b;
  for (auto kind : kAllKinds)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto scene = generate_scene(StructureSpec::defaults(kind), b, seed);
      EXPECT_FALSE(scene.empty());
      for (const auto& p : scene.positions) ASSERT_TRUE(b.contains(p, 1e-9)) << to_string(kind) << " seed " << seed;
    }
}

TEST(GenerateScene, DeterministicForSeed) {
  for (auto kind : kAllKinds) {
    const auto spec = StructureSpec::defaults(kind);
    EXPECT_EQ(generate_scene(spec, SceneBounds{}, 5), generate_scene(spec, SceneBounds{}, 5));
    EXPECT_NE(generate_scene(spec, SceneBounds{}, 5).positions, generate_scene(spec, SceneBounds{}, 6).positions);
  }
}

TEST(GenerateScene, FailuresCarryStageContext) {
  auto spec = StructureSpec::defaults(StructureKind::Vesicle);
  spec.vesicle_radius_nm = {400.0, 500.0};
  const SceneBounds tiny{{-0.1, 0.1}, {-0.1, 0.1}, {-0.1, 0.1}};
  try {
    generate_scene(spec, tiny, 1);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.exit_code(), ConfigError("").exit_code());
    EXPECT_NE(std::string(e.what()).find("vesicles instance 0"), std::string::npos);
  }
  EXPECT_THROW(generate_scene(spec, SceneBounds{{1, 0}, {0, 1}, {0, 1}}, 1), ConfigError);
}

TEST(EmitterTable, PlainTextColumns) {
  EmitterSet set;
  set.positions = {{1.5, -2.0, 0.25}};
  set.structure_id = {3};
  std::ostringstream os;
  write_emitter_table(os, set);
  EXPECT_EQ(os.str(), "# x_um y_um z_um structure_id\n1.5 -2 0.25 3\n");
}
