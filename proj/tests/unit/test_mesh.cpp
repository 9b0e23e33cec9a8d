#include "morphofuse/mesh.hpp"
#include "morphofuse/phantom.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace morphofuse;

namespace {

TriangleMesh tetrahedron() {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

}  // namespace

TEST(TriangleMesh, TetrahedronMeasures) {
  const auto m = tetrahedron();
  EXPECT_NEAR(enclosed_volume(m), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(surface_area(m), 1.5 + std::sqrt(3.0) / 2.0, 1e-12);
  EXPECT_EQ(euler_characteristic(m), 2);
}

TEST(TriangleMesh, ValidateRejectsBadIndices) {
  auto m = tetrahedron();
  m.triangles.push_back({0, 1, 9});
  try {
    m.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::out_of_range);
  }
  m = tetrahedron();
  m.triangles.push_back({0, 0, 1});
  EXPECT_THROW(m.validate(), Error);
}

TEST(TriangleMesh, ChannelLengthMustMatch) {
  auto m = tetrahedron();
  EXPECT_THROW(m.set_channel({"d1", {0.0, 0.0}, FieldRange::signed_unit}), Error);
  m.set_channel({"d1", {0.0, 0.5, -0.5, 1.0}, FieldRange::signed_unit});
  EXPECT_TRUE(m.channel("d1").conforms());
  EXPECT_THROW(m.channel("d2"), Error);
}

TEST(ScalarField, Conformance) {
  EXPECT_TRUE((ScalarField{"a", {0.0, 1.0, kUnmapped}, FieldRange::unit}).conforms());
  EXPECT_FALSE((ScalarField{"a", {1.5}, FieldRange::unit}).conforms());
  EXPECT_FALSE((ScalarField{"a", {-1.5}, FieldRange::signed_unit}).conforms());
  EXPECT_FALSE((ScalarField{"a", {0.5}, FieldRange::label}).conforms());
}

TEST(RigidTransform, InverseAndCompose) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 20; ++n) {
    const Vec3 axis(oracle::uniform(rng, -1, 1), oracle::uniform(rng, -1, 1), oracle::uniform(rng, -1, 1));
    const auto xf = RigidTransform::from_axis_angle(axis, oracle::uniform(rng, 0, 3),
                                                    Vec3(oracle::uniform(rng, -9, 9), 1, 2));
    EXPECT_TRUE(xf.is_proper());
    const Vec3 p(1.5, -2, 3);
    EXPECT_LT((xf.inverse().apply(xf.apply(p)) - p).norm(), 1e-12);
    EXPECT_LT((xf.compose(xf.inverse()).apply(p) - p).norm(), 1e-12);
  }
  EXPECT_NEAR(RigidTransform::from_axis_angle(Vec3::UnitZ(), 0.25).angle(), 0.25, 1e-12);
}

TEST(TriangleMesh, CentroidOfSymmetricShell) {
  const auto m = make_cube_sphere(Vec3(3, -4, 5), 10.0, 1.0);
  EXPECT_LT((mesh_centroid(m) - Vec3(3, -4, 5)).norm(), 1e-9);
  EXPECT_LT((vertex_mean(m.vertices) - Vec3(3, -4, 5)).norm(), 1e-9);
  EXPECT_EQ(euler_characteristic(m), 2);
  EXPECT_NEAR(enclosed_volume(m), 4.0 / 3.0 * std::numbers::pi * 1000.0, 0.01 * 4.0 / 3.0 * std::numbers::pi * 1000.0);
}

TEST(TriangleMesh, RigidMotionPreservesMeasures) {
  const auto m = make_cube_sphere(Vec3::Zero(), 7.0, 1.0);
  const auto xf = RigidTransform::from_axis_angle(Vec3(1, 2, 3), 0.7, Vec3(5, -1, 2));
  const auto t = transformed(m, xf);
  EXPECT_NEAR(surface_area(t), surface_area(m), 1e-9 * surface_area(m));
  EXPECT_NEAR(enclosed_volume(t), enclosed_volume(m), 1e-9 * enclosed_volume(m));
  EXPECT_LT((mesh_centroid(t) - xf.apply(mesh_centroid(m))).norm(), 1e-9);
}
