#pragma once

#include "morphofuse/detail/mc_tables.hpp"
#include "morphofuse/mesh.hpp"
#include "morphofuse/volume.hpp"

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace morphofuse {

/// Marching cubes over the binary indicator of `label` at isovalue 0.5 with
/// midpoint edge interpolation. The lattice is padded by one background voxel
/// on every side so the surface closes at the volume border. Vertices shared
/// between cells are welded; output winding is outward.
inline TriangleMesh extract_isosurface(const VoxelGrid& grid, std::int32_t label) {
  const auto& g = grid.geometry();
  const auto& labels = grid.labels();

  Index3 lo{g.dims.x, g.dims.y, g.dims.z}, hi{-1, -1, -1};
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != label) continue;
    const Index3 i = g.unlinear(k);
    lo = {std::min(lo.x, i.x), std::min(lo.y, i.y), std::min(lo.z, i.z)};
    hi = {std::max(hi.x, i.x), std::max(hi.y, i.y), std::max(hi.z, i.z)};
  }
  if (hi.x < 0) throw Error(ErrorCode::not_found, "label " + std::to_string(label) + " does not occur in the mask");

  auto inside = [&](std::int64_t x, std::int64_t y, std::int64_t z) -> bool {
    if (x < 0 || y < 0 || z < 0 || x >= g.dims.x || y >= g.dims.y || z >= g.dims.z) return false;
    return labels[g.linear({x, y, z})] == label;
  };

  // Edge key over the padded lattice [-1, dims].
  const std::int64_t px = g.dims.x + 2, py = g.dims.y + 2;
  auto edge_key = [&](std::int64_t x, std::int64_t y, std::int64_t z, int axis) -> std::uint64_t {
    return static_cast<std::uint64_t>(((x + 1) + px * ((y + 1) + py * (z + 1))) * 3 + axis);
  };

  TriangleMesh mesh;
  mesh.bone_id = label;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](std::int64_t x, std::int64_t y, std::int64_t z, int edge) -> std::uint32_t {
    const int a = detail::kEdgeCorners[edge][0];
    const int b = detail::kEdgeCorners[edge][1];
    const int* ca = detail::kCornerOffset[a];
    const int* cb = detail::kCornerOffset[b];
    const std::int64_t bx = x + std::min(ca[0], cb[0]);
    const std::int64_t by = y + std::min(ca[1], cb[1]);
    const std::int64_t bz = z + std::min(ca[2], cb[2]);
    const int axis = ca[0] != cb[0] ? 0 : ca[1] != cb[1] ? 1 : 2;
    const auto key = edge_key(bx, by, bz, axis);
    auto [it, fresh] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (fresh) {
      Vec3 p{static_cast<double>(bx), static_cast<double>(by), static_cast<double>(bz)};
      p[axis] += 0.5;
      mesh.vertices.push_back(g.origin + p.cwiseProduct(g.spacing));
    }
    return it->second;
  };

  for (std::int64_t z = lo.z - 1; z <= hi.z; ++z)
    for (std::int64_t y = lo.y - 1; y <= hi.y; ++y)
      for (std::int64_t x = lo.x - 1; x <= hi.x; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = detail::kCornerOffset[c];
          if (!inside(x + o[0], y + o[1], z + o[2])) cube |= 1 << c;
        }
        if (detail::kEdgeTable[cube] == 0) continue;
        for (int t = 0; detail::kTriTable[cube][t] != -1; t += 3) {
          const auto v0 = vertex_on_edge(x, y, z, detail::kTriTable[cube][t]);
          const auto v1 = vertex_on_edge(x, y, z, detail::kTriTable[cube][t + 1]);
          const auto v2 = vertex_on_edge(x, y, z, detail::kTriTable[cube][t + 2]);
          mesh.triangles.push_back({v0, v1, v2});
        }
      }
  return mesh;
}

}  // namespace morphofuse
