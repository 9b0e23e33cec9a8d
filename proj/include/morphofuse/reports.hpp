#pragma once

#include "morphofuse/mesh_io.hpp"
#include "morphofuse/registration.hpp"
#include "morphofuse/spine.hpp"
#include "morphofuse/texture.hpp"
#include "morphofuse/volume_io.hpp"

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace morphofuse {

using Json = nlohmann::ordered_json;

inline constexpr int kManifestVersion = 1;

namespace detail {
/// Finite numbers pass through; NaN and infinities become null.
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
}  // namespace detail

// ---------------------------------------------------------------------------
// Registration

struct RegistrationRecord {
  std::int32_t bone_id = 0;
  IcpResult icp;
  double hausdorff_mm = 0.0;
  bool degenerate_range = false;
};

inline Json to_json(const RigidTransform& xf) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(xf.rotation(r, c));
  return {{"rotation", rot}, {"translation", {xf.translation.x(), xf.translation.y(), xf.translation.z()}}};
}

inline Json to_json(const RegistrationRecord& r) {
  return {{"bone_id", r.bone_id},
          {"iterations", r.icp.iterations},
          {"final_rms_mm", r.icp.final_rms},
          {"hausdorff_mm", r.hausdorff_mm},
          {"converged", r.icp.converged},
          {"degenerate_range", r.degenerate_range},
          {"transform", to_json(r.icp.transform)}};
}

// ---------------------------------------------------------------------------
// Texture

inline Json to_json(const Histogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

/// Texture report entry. With region labels the means are split into
/// body / arch / process; otherwise a single "all" entry covers the bone.
inline Json texture_report_entry(std::int32_t bone_id, const std::string& exam, const SurfaceTexture& tex,
                                 const ScalarField* region_labels = nullptr) {
  Json means = Json::object();
  if (region_labels) {
    const auto stats = region_mean_intensity(tex, *region_labels);
    for (int k = 0; k < kRegionCount; ++k)
      means[region_name(k)] = {{"present", stats[k].present},
                               {"mean", stats[k].present ? Json(stats[k].mean) : Json(nullptr)},
                               {"vertex_count", stats[k].vertex_count}};
  } else {
    const ScalarField all{"region", std::vector<double>(tex.values.size(), 0.0), FieldRange::label};
    const auto s = region_mean_intensity(tex, all)[0];
    means["all"] = {{"present", s.present},
                    {"mean", s.present ? Json(s.mean) : Json(nullptr)},
                    {"vertex_count", s.vertex_count}};
  }
  Json j = {{"bone_id", bone_id},
            {"exam", exam},
            {"criterion", to_string(tex.criterion.kind)},
            {"max_search_radius_mm", tex.criterion.max_search_radius},
            {"unmapped_count", tex.unmapped_count},
            {"outside_grid_count", tex.outside_grid_count},
            {"region_means", means},
            {"histogram", to_json(texture_histogram(tex.values))}};
  return j;
}

// ---------------------------------------------------------------------------
// Spine

inline constexpr const char* kSpineCsvHeader =
    "subject,vertebra_id,region,criterion,threshold_mm,mean_intensity,vertex_count,outlier_flag\n";

/// Cohort CSV; absent regions leave mean_intensity empty.
inline std::string format_spine_csv(const std::vector<GeometryTissueRecord>& records) {
  std::string s = kSpineCsvHeader;
  for (const auto& r : records) {
    s += r.subject + "," + std::to_string(r.vertebra_id) + "," + region_name(r.region) + "," +
         to_string(r.criterion) + "," + detail::format_double(r.threshold_mm) + "," +
         (r.present ? detail::format_double(r.mean_intensity) : std::string()) + "," +
         std::to_string(r.vertex_count) + "," + (r.outlier ? "1" : "0") + "\n";
  }
  return s;
}

inline Json to_json(const DensityCurve& c) {
  Json infl = Json::array();
  for (const auto& i : c.inflexions)
    infl.push_back({{"distance_mm", i.distance},
                    {"kind", i.kind == InflexionKind::concave_to_convex ? "concave_to_convex" : "convex_to_concave"}});
  return {{"bandwidth_mm", c.bandwidth},
          {"sample_xs", c.sample_xs},
          {"density", c.density},
          {"inflexions", infl},
          {"warnings", c.warnings}};
}

inline Json to_json(const RegionThresholds& t) {
  return {{"t1_mm", t.t1}, {"t2_mm", t.t2}, {"t3_mm", t.t3}, {"degraded", t.degraded}};
}

inline Json to_json(const GeometryTissueRecord& r) {
  return {{"subject", r.subject},
          {"vertebra_id", r.vertebra_id},
          {"region", region_name(r.region)},
          {"criterion", to_string(r.criterion)},
          {"threshold_mm", r.threshold_mm},
          {"mean_intensity", r.present ? Json(r.mean_intensity) : Json(nullptr)},
          {"vertex_count", r.vertex_count},
          {"outlier_flag", r.outlier}};
}

// ---------------------------------------------------------------------------
// Viewer manifest

inline const char* colormap_name(Colormap c) {
  switch (c) {
    case Colormap::warm_cold: return "warm_cold";
    case Colormap::divergent: return "divergent";
    case Colormap::categorical: return "categorical";
  }
  return "warm_cold";
}

/// Channel descriptor with its declared range and the display interval the
/// colored PLYs were rendered with.
inline Json channel_descriptor(const ScalarField& f) {
  const auto [lo, hi] = display_range(f);
  return {{"name", f.name},
          {"range", to_string(f.range)},
          {"min", lo},
          {"max", hi},
          {"colormap", colormap_name(default_colormap(f))}};
}

inline Json colormap_legend() {
  return {{"warm_cold", {{"low", {0, 0, 255}}, {"high", {255, 0, 0}}}},
          {"divergent", {{"low", {0, 0, 255}}, {"zero", {255, 255, 255}}, {"high", {255, 0, 0}}}},
          {"categorical",
           {{"0", {{"name", "body"}, {"rgb", {255, 0, 0}}}},
            {"1", {{"name", "arch"}, {"rgb", {0, 0, 255}}}},
            {"2", {{"name", "process"}, {"rgb", {0, 170, 0}}}}}},
          {"unmapped", {128, 128, 128}}};
}

}  // namespace morphofuse
