#include "morphofuse/marching_cubes.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace morphofuse;

namespace {

VoxelGrid ball(double radius, double spacing) {
  const auto n = static_cast<std::int64_t>(std::ceil(2.0 * radius / spacing)) + 5;
  GridGeometry g{{n, n, n}, Vec3::Constant(spacing), Vec3::Constant(-0.5 * spacing * static_cast<double>(n - 1))};
  std::vector<double> v(g.voxel_count());
  std::vector<std::int32_t> l(g.voxel_count());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Vec3 c = g.center_unchecked(g.unlinear(k));
    l[k] = c.norm() <= radius ? 1 : 0;
    v[k] = l[k];
  }
  return VoxelGrid(g, v, l);
}

}  // namespace

TEST(MarchingCubes, SingleVoxelIsClosedSurface) {
  GridGeometry g{{3, 3, 3}, Vec3::Ones(), Vec3::Zero()};
  std::vector<std::int32_t> l(27, 0);
  l[g.linear({1, 1, 1})] = 1;
  const auto m = extract_isosurface(VoxelGrid(g, std::vector<double>(27), l), 1);
  EXPECT_EQ(euler_characteristic(m), 2);
  EXPECT_GT(enclosed_volume(m), 0.0);
  EXPECT_EQ(m.vertex_count(), 6u);
  EXPECT_EQ(m.triangle_count(), 8u);
}

TEST(MarchingCubes, MissingLabelIsAnError) {
  GridGeometry g{{3, 3, 3}, Vec3::Ones(), Vec3::Zero()};
  try {
    extract_isosurface(VoxelGrid(g, std::vector<double>(27), std::vector<std::int32_t>(27, 0)), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(MarchingCubes, BallVolumeAndArea) {
  const double r = 10.0;
  for (double spacing : {1.0, 0.5}) {
    const auto m = extract_isosurface(ball(r, spacing), 1);
    const double v_true = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    const double a_true = 4.0 * std::numbers::pi * r * r;
    EXPECT_EQ(euler_characteristic(m), 2);
    EXPECT_NEAR(enclosed_volume(m), v_true, 0.03 * v_true) << spacing;
    const double a = surface_area(m);
    EXPECT_GT(a, a_true) << spacing;
    EXPECT_LT(a, 1.10 * a_true) << spacing;
  }
}

TEST(MarchingCubes, VerticesStayNearLabelledVoxels) {
  std::mt19937_64 rng(9);
  GridGeometry g{{12, 10, 9}, Vec3(0.5, 0.75, 1.25), Vec3(-3, 2, 7)};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::int32_t> l(g.voxel_count(), 0);
    for (auto& x : l) x = oracle::uniform(rng, 0, 1) < 0.3 ? 2 : 0;
    l[0] = 2;
    const auto m = extract_isosurface(VoxelGrid(g, std::vector<double>(l.size()), l), 2);
    for (const auto& v : m.vertices) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.size(); ++k)
        if (l[k] == 2) {
          const Vec3 d = (g.center_unchecked(g.unlinear(k)) - v).cwiseQuotient(g.spacing).cwiseAbs();
          best = std::min(best, d.maxCoeff());
        }
      ASSERT_LE(best, 0.5 + 1e-12);
    }
    for (const auto& t : m.triangles)
      for (auto i : t) ASSERT_LT(i, m.vertex_count());
  }
}

TEST(MarchingCubes, ClosedManifoldEdges) {
  const auto m = extract_isosurface(ball(6.0, 1.0), 1);
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  for (const auto& [e, n] : directed) {
    ASSERT_EQ(n, 1);
    ASSERT_EQ(directed.count({e.second, e.first}), 1u);
  }
}
