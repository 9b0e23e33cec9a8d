#include "morphofuse/phantom.hpp"
#include "morphofuse/spine.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace morphofuse;

namespace {

/// Standard normal quantile by bisection on the CDF.
double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// n evenly spread quantiles of N(mu, sigma).
std::vector<double> stratified_normal(std::size_t n, double mu, double sigma) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = mu + sigma * normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return out;
}

ScalarField field(std::vector<double> v) { return {"centroid_distance", std::move(v), FieldRange::unbounded_mm}; }

std::vector<double> local_maxima(const DensityCurve& c) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < c.density.size(); ++i)
    if (c.density[i] > c.density[i - 1] && c.density[i] >= c.density[i + 1]) out.push_back(c.sample_xs[i]);
  return out;
}

double trapezoid(const DensityCurve& c) {
  double s = 0.0;
  for (std::size_t k = 1; k < c.density.size(); ++k)
    s += 0.5 * (c.density[k] + c.density[k - 1]) * (c.sample_xs[k] - c.sample_xs[k - 1]);
  return s;
}

SurfaceTexture constant_texture(std::size_t n, double v, MappingKind kind) {
  SurfaceTexture t;
  t.criterion.kind = kind;
  t.values = {std::string("tex_") + to_string(kind), std::vector<double>(n, v), FieldRange::unbounded_mm};
  return t;
}

VertebraAnalysis synthetic_vertebra(std::string subject, std::int32_t id, RegionThresholds t,
                                    std::array<double, 3> hu) {
  VertebraAnalysis v;
  v.subject = std::move(subject);
  v.vertebra_id = id;
  v.thresholds = t;
  v.labels = {"region", {0, 0, 1, 1, 2, 2}, FieldRange::label};
  for (auto kind : kAllMappingKinds) {
    auto tex = constant_texture(6, 0.0, kind);
    for (std::size_t i = 0; i < 6; ++i) tex.values.values[i] = hu[static_cast<std::size_t>(v.labels.values[i])];
    v.textures[kind] = tex;
  }
  return v;
}

}  // namespace

TEST(CentroidDistance, SphereAndInvariance) {
  const auto m = make_cube_sphere(Vec3(1, 2, 3), 10.0, 1.0);
  const auto d = centroid_distances(m, Vec3(1, 2, 3));
  EXPECT_EQ(d.name, "centroid_distance");
  for (double v : d.values) ASSERT_NEAR(v, 10.0, 1e-9);
  EXPECT_EQ(centroid_distances(m, m.vertices[5]).values[5], 0.0);
  const auto xf = RigidTransform::from_axis_angle(Vec3(1, 1, 1), 0.4, Vec3(-3, 9, 1));
  const auto moved = centroid_distances(transformed(m, xf), xf.apply(Vec3(0, 0, 0)));
  const auto ref = centroid_distances(m, Vec3(0, 0, 0));
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(moved.values[i], ref.values[i], 1e-9);
  EXPECT_THROW(centroid_distances(m, Vec3(kUnmapped, 0, 0)), Error);
}

TEST(Density, GaussianDrawsPeakAndIntegral) {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(20.0, 2.0);
  std::vector<double> x(100000);
  for (auto& v : x) v = n(rng);
  const auto c = estimate_density(field(x));
  const auto peak = static_cast<std::size_t>(std::max_element(c.density.begin(), c.density.end()) - c.density.begin());
  EXPECT_NEAR(c.sample_xs[peak], 20.0, 0.1);
  EXPECT_NEAR(trapezoid(c), 1.0, 1e-3);
  EXPECT_EQ(c.sample_xs.size(), 512u);
  for (double v : c.density) ASSERT_GE(v, 0.0);
}

TEST(Density, BimodalModes) {
  std::mt19937_64 rng(102);
  std::normal_distribution<double> a(10.0, 1.0), b(30.0, 1.0);
  std::vector<double> x(100000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? a(rng) : b(rng);
  const auto modes = local_maxima(estimate_density(field(x)));
  ASSERT_EQ(modes.size(), 2u);
  EXPECT_NEAR(modes[0], 10.0, 0.2);
  EXPECT_NEAR(modes[1], 30.0, 0.2);
}

TEST(Density, ScalingIdentity) {
  std::mt19937_64 rng(103);
  std::vector<double> x(3000), x2(3000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = oracle::uniform(rng, 2.0, 30.0);
    x2[i] = 2.0 * x[i];
  }
  const auto c1 = estimate_density(field(x), 0.8);
  const auto c2 = estimate_density(field(x2), 1.6);
  for (std::size_t k = 0; k < c1.density.size(); ++k) {
    ASSERT_NEAR(c2.sample_xs[k], 2.0 * c1.sample_xs[k], 1e-12);
    ASSERT_NEAR(c2.density[k], 0.5 * c1.density[k], 1e-12 * c1.density[k] + 1e-300);
  }
}

TEST(Density, TightBandwidthInflexionsAtOneSigma) {
  const double mu = 20.0, sigma = 2.0;
  const auto x = stratified_normal(100000, mu, sigma);
  const auto c = estimate_density(field(x), sigma / 8.0);
  ASSERT_EQ(c.inflexions.size(), 2u);
  EXPECT_NEAR(c.inflexions[0].distance, mu - sigma, 0.02 * sigma);
  EXPECT_NEAR(c.inflexions[1].distance, mu + sigma, 0.02 * sigma);
  EXPECT_EQ(c.inflexions[0].kind, InflexionKind::convex_to_concave);
  EXPECT_EQ(c.inflexions[1].kind, InflexionKind::concave_to_convex);
}

TEST(Density, KernelSmoothedInflexionsMatchAnalyticWidth) {
  const double mu = 20.0, sigma = 2.0;
  const auto x = stratified_normal(20000, mu, sigma);
  for (double h : {0.25, 0.5, 0.8}) {
    const auto c = estimate_density(field(x), h);
    const double s = std::sqrt(sigma * sigma + h * h);
    ASSERT_EQ(c.inflexions.size(), 2u) << h;
    EXPECT_NEAR(c.inflexions[0].distance, mu - s, 0.01 * sigma) << h;
    EXPECT_NEAR(c.inflexions[1].distance, mu + s, 0.01 * sigma) << h;
  }
}

TEST(Density, SingleGaussianHasTwoInflexionsBelowHalfSigma) {
  const double sigma = 1.5;
  const auto x = stratified_normal(5000, 12.0, sigma);
  for (double h : {0.49 * sigma, sigma / 3.0, sigma / 5.0, sigma / 10.0})
    EXPECT_EQ(estimate_density(field(x), h).inflexions.size(), 2u) << h;
}

TEST(Density, SymmetricMixtureHasSymmetricInflexions) {
  auto x = stratified_normal(20000, 10.0, 1.0);
  const auto n = x.size();
  for (std::size_t i = 0; i < n; ++i) x.push_back(40.0 - x[i]);
  const auto c = estimate_density(field(x), 0.3);
  const auto d = c.inflexion_distances();
  ASSERT_EQ(d.size(), 4u);
  const double step = c.sample_xs[1] - c.sample_xs[0];
  for (std::size_t k = 0; k < d.size(); ++k) EXPECT_NEAR(d[k] + d[d.size() - 1 - k], 40.0, 2.0 * step);
}

TEST(Density, LinearSegmentHasNoInflexion) {
  DensityCurve c;
  for (int i = 0; i < 100; ++i) {
    c.sample_xs.push_back(i * 0.25);
    c.density.push_back(1.0 + 0.5 * i);
  }
  EXPECT_TRUE(find_inflexions(c).empty());
}

TEST(Density, ChatterIsMerged) {
  DensityCurve c;
  // Second differences alternate sign at adjacent samples except for one genuine crossing.
  const std::vector<double> s = {1, 1, 1, -1, 1, -1, -1, -1, -1, -1, -1, 1, 1, 1, 1};
  double f = 0.0, slope = 0.0;
  for (std::size_t i = 0; i < s.size() + 2; ++i) {
    c.sample_xs.push_back(static_cast<double>(i));
    c.density.push_back(f);
    if (i < s.size()) slope += s[i];
    f += slope;
  }
  const auto inf = find_inflexions(c);
  ASSERT_EQ(inf.size(), 2u);
  EXPECT_EQ(inf[0].kind, InflexionKind::convex_to_concave);
  EXPECT_EQ(inf[1].kind, InflexionKind::concave_to_convex);
}

TEST(Density, Errors) {
  try {
    estimate_density(field(std::vector<double>(100, 3.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_range);
  }
  EXPECT_THROW(estimate_density(field({1.0})), Error);
}

TEST(Density, FewSamplesWidenBandwidth) {
  const auto x = stratified_normal(20, 10.0, 1.0);
  const double h = silverman_bandwidth(x);
  const auto c = estimate_density(field(x));
  EXPECT_NEAR(c.bandwidth, h * std::pow(50.0 / 20.0, 0.2), 1e-12);
  EXPECT_EQ(c.warnings.size(), 1u);
  EXPECT_TRUE(estimate_density(field(stratified_normal(60, 10.0, 1.0))).warnings.empty());
}

TEST(Density, SilvermanRule) {
  const std::vector<double> x = {1, 2, 3, 4, 100};
  double mean = 22.0, ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / 4.0);
  const double iqr = 4.0 - 2.0;
  EXPECT_NEAR(silverman_bandwidth(x), 0.9 * std::min(sd, iqr / 1.34) * std::pow(5.0, -0.2), 1e-12);
}

TEST(Thresholds, Selection) {
  const std::vector<double> four = {8.1, 14.6, 22.0, 30.5};
  const auto t = select_thresholds(four);
  EXPECT_EQ(t.t1, 8.1);
  EXPECT_EQ(t.t2, 14.6);
  EXPECT_EQ(t.t3, 22.0);
  EXPECT_FALSE(t.degraded);
  const std::vector<double> three = {1.0, 2.0, 3.0};
  const auto t3 = select_thresholds(three);
  EXPECT_EQ(std::vector<double>({t3.t1, t3.t2, t3.t3}), three);
}

TEST(Thresholds, TwoInflexionsDegrade) {
  const std::vector<double> two = {5.0, 9.0};
  const auto t = select_thresholds(two, 12.0);
  EXPECT_TRUE(t.degraded);
  EXPECT_EQ(t.t3, 12.0);
  try {
    select_thresholds(two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_structure);
  }
  const std::vector<double> one = {5.0};
  EXPECT_THROW(select_thresholds(one, 12.0), Error);
}

TEST(Thresholds, ShiftEquivariance) {
  std::vector<double> x;
  for (double mu : {10.0, 18.0, 26.0}) {
    const auto s = stratified_normal(4000, mu, 0.8);
    x.insert(x.end(), s.begin(), s.end());
  }
  const auto c0 = estimate_density(field(x), 0.6);
  for (auto& v : x) v += 5.0;
  const auto c1 = estimate_density(field(x), 0.6);
  const auto t0 = thresholds_from_density(c0), t1 = thresholds_from_density(c1);
  const double tol = 2.0 * (c1.sample_xs[1] - c1.sample_xs[0]);
  EXPECT_NEAR(t1.t1, t0.t1 + 5.0, tol);
  EXPECT_NEAR(t1.t2, t0.t2 + 5.0, tol);
  EXPECT_NEAR(t1.t3, t0.t3 + 5.0, tol);
}

TEST(Segmentation, HalfOpenIntervals) {
  const RegionThresholds t{5.0, 9.0, 12.0, false};
  const auto l = segment_vertebra(field({0.0, 4.999, 5.0, 8.999, 9.0, 12.0, 40.0}), t);
  EXPECT_EQ(l.values, (std::vector<double>{0, 0, 1, 1, 2, 2, 2}));
  EXPECT_EQ(l.name, "region");
  EXPECT_EQ(l.range, FieldRange::label);
}

TEST(Segmentation, PhantomShellsSeparated) {
  const auto ph = make_spine_phantom();
  for (const auto& v : ph.vertebrae) {
    const auto d = centroid_distances(v.mesh, v.center);
    const auto c = estimate_density(d);
    const auto t = thresholds_from_density(c);
    EXPECT_GT(t.t1, v.radii[0]);
    EXPECT_LT(t.t1, v.radii[1]);
    EXPECT_GT(t.t2, v.radii[1]);
    EXPECT_LT(t.t2, v.radii[2]);
    const auto labels = segment_vertebra(d, t);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ASSERT_TRUE(labels.values[i] == 0 || labels.values[i] == 1 || labels.values[i] == 2);
      ok += labels.values[i] == v.true_region.values[i];
    }
    EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(labels.size()));
    const auto xf = RigidTransform::from_axis_angle(Vec3(0, 1, 1), 1.2, Vec3(7, 7, -7));
    const auto moved = segment_vertebra(centroid_distances(transformed(v.mesh, xf), xf.apply(v.center)), t);
    std::size_t same = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) same += moved.values[i] == labels.values[i];
    EXPECT_GE(same, labels.size() - 2);
  }
}

TEST(RobustRange, MedianAndMad) {
  const auto r = robust_range({1.0, 2.0, 3.0, 4.0, 100.0});
  EXPECT_EQ(r.median, 3.0);
  EXPECT_EQ(r.mad, 1.0);
  EXPECT_EQ(r.lo, 0.0);
  EXPECT_EQ(r.hi, 6.0);
  const auto flat = robust_range({200.0, 200.0, 200.0});
  EXPECT_DOUBLE_EQ(flat.hi - flat.median, 3.0 * 0.01 * 200.0);
  EXPECT_THROW(robust_range({}), Error);
}

TEST(Report, SingleVertebraConstantTexture) {
  const auto v = synthetic_vertebra("s1", 1, {5, 9, 12, false}, {100, 100, 100});
  const auto rec = geometry_tissue_report(std::span<const VertebraAnalysis>(&v, 1));
  ASSERT_EQ(rec.size(), 9u);
  for (const auto& r : rec) {
    EXPECT_EQ(r.mean_intensity, 100.0);
    EXPECT_FALSE(r.outlier);
    EXPECT_EQ(r.vertex_count, 2u);
    EXPECT_EQ(r.threshold_mm, v.thresholds.for_region(r.region));
  }
}

TEST(Report, EmptyRegionIsAbsent) {
  auto v = synthetic_vertebra("s1", 1, {5, 9, 12, false}, {100, 200, 300});
  v.labels.values = {0, 0, 0, 1, 1, 1};
  const auto rec = geometry_tissue_report(std::span<const VertebraAnalysis>(&v, 1));
  for (const auto& r : rec) EXPECT_EQ(r.present, r.region != 2);
}

TEST(Report, MissingCriterionRejected) {
  auto v = synthetic_vertebra("s1", 1, {5, 9, 12, false}, {100, 200, 300});
  v.textures.erase(MappingKind::internal);
  try {
    geometry_tissue_report(std::span<const VertebraAnalysis>(&v, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(Report, CollapsedBodyIsTheOnlyOutlier) {
  std::vector<VertebraAnalysis> cohort;
  for (int s = 0; s < 10; ++s)
    cohort.push_back(synthetic_vertebra("s" + std::to_string(s), 1, {14.0, 22.0, 27.0, false}, {250, 700, 1000}));
  cohort.push_back(synthetic_vertebra("broken", 1, {14.0 * 0.6, 22.0, 27.0, false}, {120, 700, 1000}));
  const auto rec = geometry_tissue_report(cohort);
  for (const auto& r : rec) EXPECT_EQ(r.outlier, r.subject == "broken" && r.region == 0) << r.subject << r.region;
}

TEST(Report, SmallCohortHasNoStatistics) {
  std::vector<VertebraAnalysis> cohort = {synthetic_vertebra("a", 1, {5, 9, 12, false}, {1, 2, 3}),
                                          synthetic_vertebra("b", 1, {50, 90, 120, false}, {10, 20, 30})};
  for (const auto& r : geometry_tissue_report(cohort)) EXPECT_FALSE(r.outlier);
}
