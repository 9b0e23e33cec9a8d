#pragma once

#include "morphofuse/core.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace morphofuse {

/// Voxel lattice geometry. The origin is the world position of the CENTER of
/// voxel (0,0,0); voxel i sits at origin + i * spacing (component-wise).
struct GridGeometry {
  Index3 dims{};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x) * static_cast<std::size_t>(dims.y) *
           static_cast<std::size_t>(dims.z);
  }

  bool contains(const Index3& i) const {
    return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < dims.x && i.y < dims.y && i.z < dims.z;
  }

  /// x-fastest linear offset.
  std::size_t linear(const Index3& i) const {
    return static_cast<std::size_t>(i.x) +
           static_cast<std::size_t>(dims.x) *
               (static_cast<std::size_t>(i.y) + static_cast<std::size_t>(dims.y) * static_cast<std::size_t>(i.z));
  }

  Index3 unlinear(std::size_t k) const {
    const auto nx = static_cast<std::size_t>(dims.x);
    const auto ny = static_cast<std::size_t>(dims.y);
    return {static_cast<std::int64_t>(k % nx), static_cast<std::int64_t>((k / nx) % ny),
            static_cast<std::int64_t>(k / (nx * ny))};
  }

  /// Center of voxel `i`; no bounds check.
  Vec3 center_unchecked(const Index3& i) const {
    return {origin.x() + static_cast<double>(i.x) * spacing.x(),
            origin.y() + static_cast<double>(i.y) * spacing.y(),
            origin.z() + static_cast<double>(i.z) * spacing.z()};
  }

  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin;
  }
};

/// 3D scalar image with optional integer label mask (0 = background).
class VoxelGrid {
 public:
  VoxelGrid() = default;

  VoxelGrid(GridGeometry geometry, std::vector<double> intensities,
            std::optional<std::vector<std::int32_t>> labels = std::nullopt)
      : geometry_(std::move(geometry)), intensities_(std::move(intensities)), labels_(std::move(labels)) {
    const auto& d = geometry_.dims;
    if (d.x <= 0 || d.y <= 0 || d.z <= 0) throw Error(ErrorCode::invalid_argument, "grid dims must be positive");
    for (int a = 0; a < 3; ++a) {
      if (!(geometry_.spacing[a] > 0.0) || !std::isfinite(geometry_.spacing[a]))
        throw Error(ErrorCode::invalid_argument, "spacing must be strictly positive");
    }
    if (intensities_.size() != geometry_.voxel_count())
      throw Error(ErrorCode::size_mismatch, "intensity count " + std::to_string(intensities_.size()) +
                                                " does not match dims product " +
                                                std::to_string(geometry_.voxel_count()));
    if (labels_ && labels_->size() != geometry_.voxel_count())
      throw Error(ErrorCode::size_mismatch, "label mask size does not match volume");
  }

  const GridGeometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  const Vec3& spacing() const { return geometry_.spacing; }
  const Vec3& origin() const { return geometry_.origin; }
  std::size_t size() const { return intensities_.size(); }

  const std::vector<double>& intensities() const { return intensities_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<std::int32_t>& labels() const {
    if (!labels_) throw Error(ErrorCode::not_found, "volume has no label mask");
    return *labels_;
  }

  double intensity(const Index3& i) const { return intensities_[geometry_.linear(i)]; }
  std::int32_t label(const Index3& i) const { return labels()[geometry_.linear(i)]; }

  VoxelGrid with_intensities(std::vector<double> values) const {
    return VoxelGrid(geometry_, std::move(values), labels_);
  }
  VoxelGrid with_labels(std::vector<std::int32_t> labels) const {
    return VoxelGrid(geometry_, intensities_, std::move(labels));
  }

 private:
  GridGeometry geometry_;
  std::vector<double> intensities_;
  std::optional<std::vector<std::int32_t>> labels_;
};

/// Affine min-max rescale to [0,1]. Throws degenerate_range on constant images.
inline VoxelGrid normalize_intensities(const VoxelGrid& grid) {
  const auto& v = grid.intensities();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw Error(ErrorCode::degenerate_range, "constant image cannot be normalised");
  // Already-normalised data is returned unchanged (exact idempotence).
  if (lo == 0.0 && hi == 1.0) return grid;
  const double range = hi - lo;
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::clamp((v[k] - lo) / range, 0.0, 1.0);
  return grid.with_intensities(std::move(out));
}

/// Result of a world -> lattice lookup.
struct VoxelLookup {
  Index3 index;
  bool in_bounds = false;
};

/// floor((p - origin) / spacing) per axis, with an out-of-bounds flag.
/// Positions within 1e-9 voxel below an integer snap up to it, so voxel
/// centers always map back to their own index despite rounding in
/// origin + i * spacing.
inline VoxelLookup world_to_index(const GridGeometry& g, const Vec3& p) {
  constexpr double snap = 1e-9;
  VoxelLookup r;
  r.index = {static_cast<std::int64_t>(std::floor((p.x() - g.origin.x()) / g.spacing.x() + snap)),
             static_cast<std::int64_t>(std::floor((p.y() - g.origin.y()) / g.spacing.y() + snap)),
             static_cast<std::int64_t>(std::floor((p.z() - g.origin.z()) / g.spacing.z() + snap))};
  r.in_bounds = g.contains(r.index);
  return r;
}

inline VoxelLookup world_to_index(const VoxelGrid& grid, const Vec3& p) { return world_to_index(grid.geometry(), p); }

/// Index of the voxel whose center is nearest to p (round half up per axis).
inline VoxelLookup nearest_voxel(const GridGeometry& g, const Vec3& p) {
  VoxelLookup r;
  r.index = {static_cast<std::int64_t>(std::floor((p.x() - g.origin.x()) / g.spacing.x() + 0.5)),
             static_cast<std::int64_t>(std::floor((p.y() - g.origin.y()) / g.spacing.y() + 0.5)),
             static_cast<std::int64_t>(std::floor((p.z() - g.origin.z()) / g.spacing.z() + 0.5))};
  r.in_bounds = g.contains(r.index);
  return r;
}

inline Vec3 voxel_center(const GridGeometry& g, const Index3& i) {
  if (!g.contains(i)) throw Error(ErrorCode::out_of_range, "voxel index out of bounds");
  return g.center_unchecked(i);
}

inline Vec3 voxel_center(const VoxelGrid& grid, const Index3& i) { return voxel_center(grid.geometry(), i); }

/// Labels present in the mask (excluding background), ascending.
inline std::vector<std::int32_t> label_ids(const VoxelGrid& grid) {
  std::set<std::int32_t> ids;
  for (auto l : grid.labels())
    if (l != 0) ids.insert(l);
  return {ids.begin(), ids.end()};
}

}  // namespace morphofuse
