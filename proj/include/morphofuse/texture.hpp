#pragma once

#include "morphofuse/kdtree.hpp"
#include "morphofuse/mesh.hpp"
#include "morphofuse/volume.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace morphofuse {

enum class MappingKind { euclidean, internal, external };

inline const char* to_string(MappingKind k) {
  switch (k) {
    case MappingKind::euclidean: return "euclidean";
    case MappingKind::internal: return "internal";
    case MappingKind::external: return "external";
  }
  return "?";
}

inline MappingKind parse_mapping_kind(const std::string& s) {
  if (s == "euclidean") return MappingKind::euclidean;
  if (s == "internal") return MappingKind::internal;
  if (s == "external") return MappingKind::external;
  throw Error(ErrorCode::invalid_argument, "unknown mapping criterion '" + s + "'");
}

inline constexpr std::array<MappingKind, 3> kAllMappingKinds = {MappingKind::euclidean, MappingKind::internal,
                                                                MappingKind::external};

struct MappingCriterion {
  MappingKind kind = MappingKind::external;
  double max_search_radius = 5.0;  // mm

  void validate() const {
    if (!(max_search_radius > 0.0)) throw Error(ErrorCode::invalid_argument, "search radius must be positive");
  }
};

/// Per-voxel side flags: 1 = inside the structure, 0 = outside.
struct VoxelSides {
  GridGeometry geometry;
  std::vector<std::uint8_t> inside;

  std::size_t inside_count() const {
    std::size_t n = 0;
    for (auto v : inside) n += v;
    return n;
  }
};

/// Mask-based side test: a voxel is inside iff its label equals `bone_label`.
inline VoxelSides classify_voxel_side(const VoxelGrid& grid, std::int32_t bone_label) {
  if (!grid.has_labels()) throw Error(ErrorCode::not_found, "inside/outside classification needs a label mask");
  VoxelSides s{grid.geometry(), std::vector<std::uint8_t>(grid.size())};
  const auto& labels = grid.labels();
  for (std::size_t k = 0; k < labels.size(); ++k) s.inside[k] = labels[k] == bone_label ? 1 : 0;
  return s;
}

/// Side flags for the voxels of `grid` taken from another exam's mask:
/// each voxel center is carried by `to_mask_frame` into `mask`'s frame and
/// looked up at the nearest mask voxel (outside the mask lattice = outside).
inline VoxelSides classify_voxel_side(const GridGeometry& grid, const VoxelGrid& mask, std::int32_t bone_label,
                                      const RigidTransform& to_mask_frame) {
  if (!mask.has_labels()) throw Error(ErrorCode::not_found, "inside/outside classification needs a label mask");
  VoxelSides s{grid, std::vector<std::uint8_t>(grid.voxel_count())};
  const bool same_lattice = to_mask_frame.is_identity() && grid == mask.geometry();
  const auto& labels = mask.labels();
  for (std::size_t k = 0; k < s.inside.size(); ++k) {
    if (same_lattice) {
      s.inside[k] = labels[k] == bone_label ? 1 : 0;
      continue;
    }
    const auto hit = nearest_voxel(mask.geometry(), to_mask_frame.apply(grid.center_unchecked(grid.unlinear(k))));
    s.inside[k] = hit.in_bounds && labels[mask.geometry().linear(hit.index)] == bone_label ? 1 : 0;
  }
  return s;
}

struct SurfaceTexture {
  MappingCriterion criterion;
  ScalarField values;                    // NaN where unmapped
  std::vector<std::int64_t> source_voxel;  // linear voxel index, -1 where unmapped
  std::size_t unmapped_count = 0;
  std::size_t outside_grid_count = 0;    // vertices lying outside the lattice extent
};

namespace detail {

struct VoxelCandidate {
  double sq_dist = std::numeric_limits<double>::infinity();
  Index3 index{};
  bool found = false;
};

/// Nearest accepted voxel center within radius, searched over Chebyshev
/// shells of voxel indices around the vertex's nearest cell. A shell is
/// visited while its lower distance bound does not exceed the best hit, so
/// equal-distance candidates further out can still win the index tie-break.
template <typename Accept>
VoxelCandidate nearest_voxel_in_shells(const GridGeometry& g, const Vec3& p, double radius, Accept&& accept) {
  Index3 c = nearest_voxel(g, p).index;
  c.x = std::clamp<std::int64_t>(c.x, 0, g.dims.x - 1);
  c.y = std::clamp<std::int64_t>(c.y, 0, g.dims.y - 1);
  c.z = std::clamp<std::int64_t>(c.z, 0, g.dims.z - 1);
  const std::int64_t cc[3] = {c.x, c.y, c.z};
  const std::int64_t n[3] = {g.dims.x, g.dims.y, g.dims.z};
  const double r2 = radius * radius;
  const std::int64_t kmax = std::max({c.x, n[0] - 1 - c.x, c.y, n[1] - 1 - c.y, c.z, n[2] - 1 - c.z});

  VoxelCandidate best;
  auto consider = [&](const Index3& i) {
    const std::size_t lin = g.linear(i);
    if (!accept(lin)) return;
    const double d2 = squared_distance(p, g.center_unchecked(i));
    if (d2 > r2) return;
    if (!best.found || d2 < best.sq_dist || (d2 == best.sq_dist && i < best.index)) best = {d2, i, true};
  };

  for (std::int64_t k = 0; k <= kmax; ++k) {
    if (k > 0) {
      // Lower bound over the shell: each shell voxel sits exactly k steps
      // from c along at least one axis.
      double lb = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        for (const std::int64_t m : {cc[a] - k, cc[a] + k}) {
          if (m < 0 || m >= n[a]) continue;
          const double coord = g.origin[a] + static_cast<double>(m) * g.spacing[a];
          const double d = p[a] - coord;
          lb = std::min(lb, d * d);
        }
      }
      if (lb > r2) break;
      if (best.found && lb > best.sq_dist) break;
    }
    const std::int64_t z0 = std::max<std::int64_t>(0, c.z - k), z1 = std::min(n[2] - 1, c.z + k);
    const std::int64_t y0 = std::max<std::int64_t>(0, c.y - k), y1 = std::min(n[1] - 1, c.y + k);
    const std::int64_t x0 = std::max<std::int64_t>(0, c.x - k), x1 = std::min(n[0] - 1, c.x + k);
    for (std::int64_t z = z0; z <= z1; ++z) {
      const bool zface = z == c.z - k || z == c.z + k;
      for (std::int64_t y = y0; y <= y1; ++y) {
        const bool yface = y == c.y - k || y == c.y + k;
        if (zface || yface) {
          for (std::int64_t x = x0; x <= x1; ++x) consider({x, y, z});
        } else {
          if (c.x - k >= 0) consider({c.x - k, y, z});
          if (k > 0 && c.x + k < n[0]) consider({c.x + k, y, z});
        }
      }
    }
  }
  return best;
}

}  // namespace detail

/// Grey level of the nearest candidate voxel center for each vertex.
/// Candidates: all voxels (euclidean), inside voxels (internal) or outside
/// voxels (external) per `sides`. `sides` may be omitted for euclidean.
inline SurfaceTexture map_grey_levels(const TriangleMesh& mesh, const VoxelGrid& grid, const MappingCriterion& criterion,
                                      const VoxelSides* sides, unsigned threads = 1) {
  criterion.validate();
  const auto& g = grid.geometry();
  if (criterion.kind != MappingKind::euclidean) {
    if (!sides) throw Error(ErrorCode::invalid_argument, "internal/external mapping needs voxel sides");
    if (!(sides->geometry == g)) throw Error(ErrorCode::size_mismatch, "voxel sides do not match the grid");
    const std::size_t in = sides->inside_count();
    const std::size_t candidates = criterion.kind == MappingKind::internal ? in : sides->inside.size() - in;
    if (candidates == 0)
      throw Error(ErrorCode::not_found, std::string("no candidate voxels for ") + to_string(criterion.kind) + " mapping");
  }

  const std::size_t nv = mesh.vertices.size();
  SurfaceTexture tex;
  tex.criterion = criterion;
  tex.values.name = std::string("tex_") + to_string(criterion.kind);
  tex.values.values.assign(nv, kUnmapped);
  tex.source_voxel.assign(nv, -1);
  const auto& iv = grid.intensities();
  bool unit = true;
  for (double v : iv)
    if (v < 0.0 || v > 1.0) {
      unit = false;
      break;
    }
  tex.values.range = unit ? FieldRange::unit : FieldRange::unbounded_mm;

  const std::uint8_t want = criterion.kind == MappingKind::internal ? 1 : 0;
  std::vector<std::uint8_t> outside(nv, 0);
  parallel_for(nv, threads, [&](std::size_t v) {
    const Vec3& p = mesh.vertices[v];
    outside[v] = world_to_index(g, p).in_bounds ? 0 : 1;
    detail::VoxelCandidate hit;
    if (criterion.kind == MappingKind::euclidean) {
      hit = detail::nearest_voxel_in_shells(g, p, criterion.max_search_radius, [](std::size_t) { return true; });
    } else {
      const auto& flags = sides->inside;
      hit = detail::nearest_voxel_in_shells(g, p, criterion.max_search_radius,
                                            [&](std::size_t lin) { return flags[lin] == want; });
    }
    if (hit.found) {
      const auto lin = g.linear(hit.index);
      tex.values.values[v] = iv[lin];
      tex.source_voxel[v] = static_cast<std::int64_t>(lin);
    }
  });
  for (std::size_t v = 0; v < nv; ++v) {
    tex.unmapped_count += tex.source_voxel[v] < 0 ? 1 : 0;
    tex.outside_grid_count += outside[v];
  }
  return tex;
}

/// Convenience overload: sides from the grid's own mask (`bone_label`).
inline SurfaceTexture map_grey_levels(const TriangleMesh& mesh, const VoxelGrid& grid, const MappingCriterion& criterion,
                                      std::int32_t bone_label, unsigned threads = 1) {
  if (criterion.kind == MappingKind::euclidean) return map_grey_levels(mesh, grid, criterion, nullptr, threads);
  const VoxelSides sides = classify_voxel_side(grid, bone_label);
  return map_grey_levels(mesh, grid, criterion, &sides, threads);
}

struct TextureDifference {
  ScalarField values;  // d1 in [-1,1] on the follow-up mesh
};

/// d1 = baseline-mapped minus follow-up-mapped grey level, per vertex.
/// Positive values point to tissue loss, negative ones to recovery.
inline TextureDifference texture_difference(const SurfaceTexture& baseline, const SurfaceTexture& followup) {
  if (baseline.values.size() != followup.values.size())
    throw Error(ErrorCode::size_mismatch, "textures live on meshes with different vertex counts");
  if (baseline.criterion.kind != followup.criterion.kind)
    throw Error(ErrorCode::invalid_argument, "textures were mapped with different criteria");
  TextureDifference d;
  d.values = {"d1", std::vector<double>(baseline.values.size()), FieldRange::signed_unit};
  for (std::size_t i = 0; i < d.values.values.size(); ++i) {
    const double b = baseline.values.values[i];
    const double f = followup.values.values[i];
    if (is_unmapped(b) || is_unmapped(f)) {
      d.values.values[i] = kUnmapped;
      continue;
    }
    if (b < 0.0 || b > 1.0 || f < 0.0 || f > 1.0)
      throw Error(ErrorCode::invalid_argument, "texture difference needs grey levels normalised to [0,1]");
    d.values.values[i] = b - f;
  }
  return d;
}

struct RegionStat {
  bool present = false;
  double mean = 0.0;
  std::size_t vertex_count = 0;   // mapped vertices used in the mean
  std::size_t total_count = 0;    // all vertices carrying the label
};

inline constexpr int kRegionCount = 3;  // 0 body, 1 arch, 2 process

/// Mean mapped value per region label in {0,1,2}; unmapped vertices are
/// skipped and regions without mapped vertices are reported absent.
inline std::array<RegionStat, kRegionCount> region_mean_intensity(const SurfaceTexture& texture,
                                                                  const ScalarField& region_labels) {
  if (texture.values.size() != region_labels.size())
    throw Error(ErrorCode::size_mismatch, "texture and region labels differ in length");
  std::array<RegionStat, kRegionCount> out{};
  std::array<double, kRegionCount> sum{};
  for (std::size_t i = 0; i < region_labels.size(); ++i) {
    const double l = region_labels.values[i];
    if (!(l == 0.0 || l == 1.0 || l == 2.0)) throw Error(ErrorCode::invalid_argument, "region labels must be 0, 1 or 2");
    auto& r = out[static_cast<int>(l)];
    ++r.total_count;
    const double v = texture.values.values[i];
    if (is_unmapped(v)) continue;
    sum[static_cast<int>(l)] += v;
    ++r.vertex_count;
  }
  for (int k = 0; k < kRegionCount; ++k) {
    out[k].present = out[k].vertex_count > 0;
    out[k].mean = out[k].present ? sum[k] / static_cast<double>(out[k].vertex_count) : 0.0;
  }
  return out;
}

/// 64-bin histogram of mapped values over [lo, hi].
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
};

inline Histogram texture_histogram(const ScalarField& values, std::size_t bins = 64) {
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.range == FieldRange::unit) {
    h.lo = 0.0;
    h.hi = 1.0;
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values.values)
      if (!is_unmapped(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (!(lo <= hi)) return h;
    h.lo = lo;
    h.hi = hi > lo ? hi : lo + 1.0;
  }
  for (double v : values.values) {
    if (is_unmapped(v)) continue;
    auto b = static_cast<std::int64_t>((v - h.lo) / (h.hi - h.lo) * static_cast<double>(bins));
    b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace morphofuse
