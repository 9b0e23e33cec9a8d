#pragma once

#include "morphofuse/mesh.hpp"
#include "morphofuse/texture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace morphofuse {

/// Per-vertex Euclidean distance from the reference point c.
inline ScalarField centroid_distances(const TriangleMesh& mesh, const Vec3& c) {
  if (!c.allFinite()) throw Error(ErrorCode::invalid_argument, "centroid must be finite");
  ScalarField f{"centroid_distance", std::vector<double>(mesh.vertices.size()), FieldRange::unbounded_mm};
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) f.values[i] = (mesh.vertices[i] - c).norm();
  return f;
}

enum class InflexionKind {
  concave_to_convex,  // end of a peak's descending shoulder
  convex_to_concave,  // start of a peak's ascending shoulder
};

struct Inflexion {
  double distance = 0.0;
  InflexionKind kind = InflexionKind::concave_to_convex;
};

struct DensityCurve {
  std::vector<double> sample_xs;
  std::vector<double> density;
  double bandwidth = 0.0;
  std::vector<Inflexion> inflexions;  // increasing distance
  std::vector<std::string> warnings;

  std::vector<double> inflexion_distances() const {
    std::vector<double> out;
    for (const auto& i : inflexions) out.push_back(i.distance);
    return out;
  }
};

inline constexpr std::size_t kDefaultDensitySamples = 512;
inline constexpr std::size_t kMinDensitySamples = 50;

namespace detail {
inline double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}
}  // namespace detail

/// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5).
inline double silverman_bandwidth(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) throw Error(ErrorCode::degenerate_range, "bandwidth needs at least two samples");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error(ErrorCode::degenerate_range, "all distances are identical");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

/// Inflexions where the density is below this share of its peak are tail
/// artifacts of isolated samples and are dropped.
inline constexpr double kInflexionDensityFloor = 0.01;

/// Zero crossings of the central second difference of the density, placed
/// by linear interpolation. Crossings closer than two grid steps form a
/// cluster: an odd cluster collapses to one inflexion at its mean, an even
/// one cancels out. Crossings in the near-empty tails are dropped.
inline std::vector<Inflexion> find_inflexions(const DensityCurve& curve) {
  const auto& x = curve.sample_xs;
  const auto& f = curve.density;
  if (x.size() != f.size() || x.size() < 3) throw Error(ErrorCode::invalid_argument, "density curve too short");
  std::vector<Inflexion> raw;
  int last_sign = 0;
  double last_s = 0.0;
  std::size_t last_i = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const double s = f[i - 1] - 2.0 * f[i] + f[i + 1];
    const int sign = s > 0.0 ? 1 : s < 0.0 ? -1 : 0;
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) {
      const double t = last_s / (last_s - s);
      raw.push_back({x[last_i] + t * (x[i] - x[last_i]),
                     last_sign < 0 ? InflexionKind::concave_to_convex : InflexionKind::convex_to_concave});
    }
    last_sign = sign;
    last_s = s;
    last_i = i;
  }

  const double step = x[1] - x[0];
  const double floor = kInflexionDensityFloor * *std::max_element(f.begin(), f.end());
  auto density_at = [&](double d) {
    const auto k = std::min(static_cast<std::size_t>(std::max(0.0, (d - x[0]) / step)), x.size() - 2);
    const double t = std::clamp((d - x[k]) / step, 0.0, 1.0);
    return f[k] + t * (f[k + 1] - f[k]);
  };
  std::vector<Inflexion> merged;
  for (std::size_t a = 0; a < raw.size();) {
    std::size_t b = a + 1;
    while (b < raw.size() && raw[b].distance - raw[b - 1].distance < 2.0 * step) ++b;
    const std::size_t count = b - a;
    if (count % 2 == 1) {
      double sum = 0.0;
      for (std::size_t k = a; k < b; ++k) sum += raw[k].distance;
      const double d = sum / static_cast<double>(count);
      if (density_at(d) >= floor) merged.push_back({d, raw[a].kind});
    }
    a = b;
  }
  return merged;
}

/// Gaussian-kernel density estimate on a uniform grid over [0, max distance],
/// renormalised to unit trapezoidal integral. bandwidth <= 0 selects
/// Silverman's rule. Inflexions are filled in.
inline DensityCurve estimate_density(const ScalarField& distances, double bandwidth = 0.0,
                                     std::size_t samples = kDefaultDensitySamples) {
  std::vector<double> xs;
  for (double v : distances.values)
    if (!is_unmapped(v)) xs.push_back(v);
  if (xs.size() < 2) throw Error(ErrorCode::degenerate_range, "density estimate needs at least two distances");
  if (samples < 3) throw Error(ErrorCode::invalid_argument, "density grid needs at least three samples");
  std::sort(xs.begin(), xs.end());
  if (xs.front() == xs.back()) throw Error(ErrorCode::degenerate_range, "all distances are identical");

  DensityCurve c;
  c.bandwidth = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(xs);
  if (xs.size() < kMinDensitySamples) {
    c.bandwidth *= std::pow(static_cast<double>(kMinDensitySamples) / static_cast<double>(xs.size()), 0.2);
    c.warnings.push_back("only " + std::to_string(xs.size()) + " distances; bandwidth widened");
  }
  const double h = c.bandwidth;
  const double hi = xs.back();
  c.sample_xs.resize(samples);
  c.density.assign(samples, 0.0);
  const double step = hi / static_cast<double>(samples - 1);
  // Kernels beyond 40 bandwidths underflow to exactly zero.
  const double reach = 40.0 * h;
  const double norm = 1.0 / (static_cast<double>(xs.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t k = 0; k < samples; ++k) {
    const double x = static_cast<double>(k) * step;
    c.sample_xs[k] = x;
    auto first = std::lower_bound(xs.begin(), xs.end(), x - reach);
    auto last = std::upper_bound(xs.begin(), xs.end(), x + reach);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) {
      const double u = (x - *it) / h;
      acc += std::exp(-0.5 * u * u);
    }
    c.density[k] = acc * norm;
  }
  double integral = 0.0;
  for (std::size_t k = 1; k < samples; ++k) integral += 0.5 * (c.density[k] + c.density[k - 1]) * step;
  if (!(integral > 0.0)) throw Error(ErrorCode::degenerate_range, "density integrates to zero");
  for (auto& d : c.density) d /= integral;
  c.inflexions = find_inflexions(c);
  return c;
}

struct RegionThresholds {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  bool degraded = false;  // only two inflexions; t3 is the maximum distance

  bool valid() const { return 0.0 < t1 && t1 < t2 && t2 < t3; }
  double for_region(int region) const { return region == 0 ? t1 : region == 1 ? t2 : t3; }
};

/// (T1, T2, T3) = the first three inflexion distances. With exactly two and
/// a known maximum distance, T3 falls back to that maximum and the result is
/// marked degraded.
inline RegionThresholds select_thresholds(std::span<const double> inflexions,
                                          std::optional<double> max_distance = std::nullopt) {
  RegionThresholds t;
  if (inflexions.size() >= 3) {
    t = {inflexions[0], inflexions[1], inflexions[2], false};
  } else if (inflexions.size() == 2 && max_distance && *max_distance > inflexions[1]) {
    t = {inflexions[0], inflexions[1], *max_distance, true};
  } else {
    throw Error(ErrorCode::insufficient_structure,
                "need three inflexion points, found " + std::to_string(inflexions.size()));
  }
  if (!t.valid()) throw Error(ErrorCode::insufficient_structure, "inflexion thresholds are not increasing");
  return t;
}

/// Region cuts come from the concave-to-convex inflexions: the points where
/// each population's density stops falling steeply.
inline std::vector<double> threshold_candidates(const DensityCurve& curve) {
  std::vector<double> out;
  for (const auto& i : curve.inflexions)
    if (i.kind == InflexionKind::concave_to_convex && i.distance > 0.0) out.push_back(i.distance);
  return out;
}

inline RegionThresholds thresholds_from_density(const DensityCurve& curve) {
  const auto candidates = threshold_candidates(curve);
  return select_thresholds(candidates, curve.sample_xs.empty() ? std::nullopt
                                                                : std::optional<double>(curve.sample_xs.back()));
}

/// Region label per vertex over [0,T1) body, [T1,T2) arch, [T2,inf) process.
inline ScalarField segment_vertebra(const ScalarField& distances, const RegionThresholds& t) {
  ScalarField labels{"region", std::vector<double>(distances.size()), FieldRange::label};
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = distances.values[i];
    labels.values[i] = d < t.t1 ? 0.0 : d < t.t2 ? 1.0 : 2.0;
  }
  return labels;
}

inline const char* region_name(int region) {
  switch (region) {
    case 0: return "body";
    case 1: return "arch";
    case 2: return "process";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Geometry vs. tissue report

struct VertebraAnalysis {
  std::string subject;
  std::int32_t vertebra_id = 0;
  RegionThresholds thresholds;
  std::map<MappingKind, SurfaceTexture> textures;
  ScalarField labels;
};

struct GeometryTissueRecord {
  std::string subject;
  std::int32_t vertebra_id = 0;
  int region = 0;
  MappingKind criterion = MappingKind::euclidean;
  double threshold_mm = 0.0;
  double mean_intensity = 0.0;
  std::size_t vertex_count = 0;
  bool present = false;
  bool outlier = false;
};

struct RobustRange {
  double median = 0.0;
  double mad = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

inline constexpr double kOutlierMadFactor = 3.0;
inline constexpr std::size_t kMinCohortSize = 3;
inline constexpr double kMadFloor = 0.01;

/// median ± 3·MAD. The MAD is floored at 1% of |median| so that a cohort of
/// near-identical values does not turn sampling noise into outliers.
inline RobustRange robust_range(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "robust range of an empty set");
  auto median_of = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  RobustRange r;
  r.median = median_of(values);
  std::vector<double> dev;
  for (double v : values) dev.push_back(std::abs(v - r.median));
  r.mad = median_of(dev);
  const double mad = std::max({r.mad, kMadFloor * std::abs(r.median), 1e-12});
  r.lo = r.median - kOutlierMadFactor * mad;
  r.hi = r.median + kOutlierMadFactor * mad;
  return r;
}

/// One record per (vertebra, region, criterion). Outliers are marked per
/// (region, criterion) over the whole cohort when it holds at least three
/// present points: a point is an outlier when its threshold or its mean
/// intensity leaves the robust range.
inline std::vector<GeometryTissueRecord> geometry_tissue_report(std::span<const VertebraAnalysis> cohort) {
  std::vector<GeometryTissueRecord> records;
  for (const auto& v : cohort) {
    for (auto kind : kAllMappingKinds)
      if (!v.textures.count(kind))
        throw Error(ErrorCode::not_found, std::string("vertebra ") + std::to_string(v.vertebra_id) + " lacks " +
                                              to_string(kind) + " mapping");
    for (int region = 0; region < kRegionCount; ++region)
      for (auto kind : kAllMappingKinds) {
        const auto stats = region_mean_intensity(v.textures.at(kind), v.labels);
        GeometryTissueRecord r;
        r.subject = v.subject;
        r.vertebra_id = v.vertebra_id;
        r.region = region;
        r.criterion = kind;
        r.threshold_mm = v.thresholds.for_region(region);
        r.mean_intensity = stats[region].mean;
        r.vertex_count = stats[region].vertex_count;
        r.present = stats[region].present;
        records.push_back(r);
      }
  }
  for (int region = 0; region < kRegionCount; ++region)
    for (auto kind : kAllMappingKinds) {
      std::vector<GeometryTissueRecord*> group;
      for (auto& r : records)
        if (r.region == region && r.criterion == kind && r.present) group.push_back(&r);
      if (group.size() < kMinCohortSize) continue;
      std::vector<double> th, mi;
      for (auto* r : group) {
        th.push_back(r->threshold_mm);
        mi.push_back(r->mean_intensity);
      }
      const auto rt = robust_range(th);
      const auto rm = robust_range(mi);
      for (auto* r : group) r->outlier = !rt.contains(r->threshold_mm) || !rm.contains(r->mean_intensity);
    }
  return records;
}

}  // namespace morphofuse
