#pragma once

#include "morphofuse/mesh.hpp"
#include "morphofuse/volume.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <tuple>
#include <vector>

namespace morphofuse {

namespace detail {
/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
}  // namespace detail

/// Egg-shaped ellipsoid with a side knob. No proper rotation maps it onto
/// itself, so registration has a unique answer.
struct PhantomBone {
  std::int32_t label = 0;
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3(7.0, 5.0, 4.0);
  Mat3 rotation = Mat3::Identity();

  Vec3 local(const Vec3& p) const { return rotation.transpose() * (p - center); }
  Vec3 knob_center() const { return center + rotation * Vec3(0.45 * radii.x(), 0.35 * radii.y(), 0.55 * radii.z()); }
  double knob_radius() const { return 0.45 * radii.z(); }

  bool contains(const Vec3& p) const {
    const Vec3 q = local(p);
    const double rx = radii.x() * (1.0 + 0.2 * q.y() / radii.y());
    const double e = (q.x() / rx) * (q.x() / rx) + (q.y() / radii.y()) * (q.y() / radii.y()) +
                     (q.z() / radii.z()) * (q.z() / radii.z());
    return e <= 1.0 || (p - knob_center()).norm() <= knob_radius();
  }

  /// Top pole (+z in the bone frame) and its outward normal.
  Vec3 pole() const { return center + rotation * Vec3(0.0, 0.0, radii.z()); }
  Vec3 pole_normal() const { return rotation * Vec3(0.0, 0.0, 1.0); }
};

struct WristPhantomParams {
  std::uint64_t seed = 7;
  double spacing = 0.5;
  double background = 0.1;
  double bone = 0.9;
  double noise = 0.02;
  double dent_depth = 2.0;
  double dent_radius = 4.0;
  double dent_intensity_drop = 0.8;
  double bump_height = 1.5;
  double bump_radius = 3.0;
};

struct WristPhantom {
  VoxelGrid baseline;
  VoxelGrid followup;
  std::vector<PhantomBone> bones;
  std::int32_t dent_bone = 1;
  Vec3 dent_center = Vec3::Zero();  // deepest point of the dent
  std::int32_t bump_bone = 2;
  Vec3 bump_center = Vec3::Zero();  // outermost point of the bump
  WristPhantomParams params;

  nlohmann::ordered_json truth() const;
};

/// Five bones in a row, identical pose in both exams. At follow-up, bone
/// `dent_bone` loses a spherical bite (`dent_depth` deep) whose voxels drop
/// to background; bone `bump_bone` grows a bump of bone-level intensity.
/// The noise field is shared by both exams.
inline WristPhantom make_wrist_phantom(const WristPhantomParams& p = {}) {
  WristPhantom ph;
  ph.params = p;
  const std::array<Vec3, 5> radii = {Vec3(7.0, 5.0, 4.0), Vec3(6.5, 4.8, 4.2), Vec3(6.0, 5.2, 3.8),
                                     Vec3(7.2, 4.6, 4.0), Vec3(6.2, 4.9, 4.4)};
  const std::array<Vec3, 5> axes = {Vec3(0, 0, 1), Vec3(1, 1, 0), Vec3(0, 1, 1), Vec3(1, 0, 1), Vec3(1, 1, 1)};
  const std::array<double, 5> angles = {0.3, -0.2, 0.25, -0.35, 0.15};
  for (int b = 0; b < 5; ++b) {
    PhantomBone bone;
    bone.label = b + 1;
    bone.radii = radii[b];
    bone.center = Vec3(18.0 * b, 0.0, 0.0);
    bone.rotation = Eigen::AngleAxisd(angles[b], axes[b].normalized()).toRotationMatrix();
    ph.bones.push_back(bone);
  }

  const double margin = 4.0;
  const Vec3 lo(-9.0 - margin, -8.0 - margin, -8.0 - margin);
  const Vec3 hi(18.0 * 4 + 9.0 + margin, 8.0 + margin, 8.0 + margin);
  GridGeometry g;
  g.spacing = Vec3::Constant(p.spacing);
  g.origin = lo;
  g.dims = {static_cast<std::int64_t>(std::ceil((hi.x() - lo.x()) / p.spacing)) + 1,
            static_cast<std::int64_t>(std::ceil((hi.y() - lo.y()) / p.spacing)) + 1,
            static_cast<std::int64_t>(std::ceil((hi.z() - lo.z()) / p.spacing)) + 1};

  const auto& dented = ph.bones[ph.dent_bone - 1];
  const Vec3 dent_pole = dented.pole();
  const Vec3 dent_n = dented.pole_normal();
  const Vec3 dent_ball = dent_pole + (p.dent_radius - p.dent_depth) * dent_n;
  ph.dent_center = dent_pole - p.dent_depth * dent_n;

  const auto& bumped = ph.bones[ph.bump_bone - 1];
  const Vec3 bump_n = bumped.pole_normal();
  const Vec3 bump_ball = bumped.pole() + (p.bump_height - p.bump_radius) * bump_n;
  ph.bump_center = bumped.pole() + p.bump_height * bump_n;

  const std::size_t n = g.voxel_count();
  std::vector<double> i1(n), i2(n);
  std::vector<std::int32_t> l1(n, 0), l2(n, 0);
  std::mt19937_64 rng(p.seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double noise = p.noise * (2.0 * detail::uniform01(rng) - 1.0);
    const Vec3 c = g.center_unchecked(g.unlinear(k));
    std::int32_t label = 0;
    for (const auto& b : ph.bones)
      if (b.contains(c)) {
        label = b.label;
        break;
      }
    std::int32_t label2 = label;
    if (label == ph.dent_bone && (c - dent_ball).norm() <= p.dent_radius) label2 = 0;
    if (label == 0 && (c - bump_ball).norm() <= p.bump_radius) label2 = ph.bump_bone;
    l1[k] = label;
    l2[k] = label2;
    i1[k] = (label ? p.bone : p.background) + noise;
    i2[k] = (label2 ? p.bone : p.background) + noise;
    if (label == ph.dent_bone && label2 == 0) i2[k] = p.bone - p.dent_intensity_drop + noise;
  }
  ph.baseline = VoxelGrid(g, std::move(i1), std::move(l1));
  ph.followup = VoxelGrid(g, std::move(i2), std::move(l2));
  return ph;
}

/// Single ball of radius 10 mm with the same dent as the wrist phantom's
/// eroded bone. Both exams share the noise field.
inline WristPhantom make_sphere_dent_phantom(const WristPhantomParams& p = {}) {
  WristPhantom ph;
  ph.params = p;
  PhantomBone ball;
  ball.label = 1;
  ball.radii = Vec3::Constant(10.0);
  ph.bones.push_back(ball);
  ph.dent_bone = 1;
  ph.bump_bone = 0;

  const double half = 10.0 + 4.0;
  GridGeometry g;
  g.spacing = Vec3::Constant(p.spacing);
  g.origin = Vec3::Constant(-half);
  const auto n1 = static_cast<std::int64_t>(std::ceil(2.0 * half / p.spacing)) + 1;
  g.dims = {n1, n1, n1};
  const Vec3 normal(0.0, 0.0, 1.0);
  const Vec3 pole = 10.0 * normal;
  const Vec3 bite = pole + (p.dent_radius - p.dent_depth) * normal;
  ph.dent_center = pole - p.dent_depth * normal;

  const std::size_t n = g.voxel_count();
  std::vector<double> i1(n), i2(n);
  std::vector<std::int32_t> l1(n, 0), l2(n, 0);
  std::mt19937_64 rng(p.seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double noise = p.noise * (2.0 * detail::uniform01(rng) - 1.0);
    const Vec3 c = g.center_unchecked(g.unlinear(k));
    const bool in1 = c.norm() <= 10.0;
    const bool bitten = in1 && (c - bite).norm() <= p.dent_radius;
    l1[k] = in1 ? 1 : 0;
    l2[k] = in1 && !bitten ? 1 : 0;
    i1[k] = (in1 ? p.bone : p.background) + noise;
    i2[k] = (bitten ? p.bone - p.dent_intensity_drop : in1 ? p.bone : p.background) + noise;
  }
  ph.baseline = VoxelGrid(g, std::move(i1), std::move(l1));
  ph.followup = VoxelGrid(g, std::move(i2), std::move(l2));
  return ph;
}

namespace detail {
inline nlohmann::ordered_json to_json_vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
}  // namespace detail

inline nlohmann::ordered_json WristPhantom::truth() const {
  nlohmann::ordered_json j;
  j["kind"] = bones.size() == 1 ? "sphere-dent" : "wrist-pair";
  j["seed"] = params.seed;
  j["dent_bone"] = dent_bone;
  j["dent_center_mm"] = detail::to_json_vec(dent_center);
  j["dent_depth_mm"] = params.dent_depth;
  j["dent_intensity_drop"] = params.dent_intensity_drop;
  if (bump_bone != 0) {
    j["bump_bone"] = bump_bone;
    j["bump_center_mm"] = detail::to_json_vec(bump_center);
    j["bump_height_mm"] = params.bump_height;
  }
  auto& bones = j["bones"] = nlohmann::ordered_json::array();
  for (const auto& b : this->bones)
    bones.push_back({{"label", b.label}, {"center_mm", detail::to_json_vec(b.center)},
                     {"radii_mm", detail::to_json_vec(b.radii)}});
  return j;
}

// ---------------------------------------------------------------------------
// Spine

/// Closed sphere mesh built by projecting a subdivided cube. Edge length is
/// about `edge` mm, so vertex counts scale with area.
inline TriangleMesh make_cube_sphere(const Vec3& center, double radius, double edge = 1.0) {
  const int m = std::max(2, static_cast<int>(std::ceil(0.5 * std::numbers::pi * radius / edge)));
  TriangleMesh mesh;
  std::map<std::tuple<int, int, int>, std::uint32_t> index;
  auto vertex = [&](int i, int j, int k) {
    auto [it, fresh] = index.try_emplace({i, j, k}, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (fresh) {
      // Equal-angle warp keeps cell sizes close to uniform.
      auto warp = [&](int a) { return std::tan(0.25 * std::numbers::pi * (2.0 * a / m - 1.0)); };
      mesh.vertices.push_back(center + radius * Vec3(warp(i), warp(j), warp(k)).normalized());
    }
    return it->second;
  };
  for (int axis = 0; axis < 3; ++axis)
    for (int side : {0, m})
      for (int u = 0; u < m; ++u)
        for (int v = 0; v < m; ++v) {
          auto at = [&](int a, int b) {
            int c[3];
            c[axis] = side;
            c[(axis + 1) % 3] = a;
            c[(axis + 2) % 3] = b;
            return vertex(c[0], c[1], c[2]);
          };
          const std::uint32_t q[4] = {at(u, v), at(u + 1, v), at(u + 1, v + 1), at(u, v + 1)};
          for (const Triangle& t : {Triangle{q[0], q[1], q[2]}, Triangle{q[0], q[2], q[3]}}) {
            const Vec3& a = mesh.vertices[t[0]];
            const Vec3 nrm = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
            mesh.triangles.push_back(nrm.dot(a - center) >= 0.0 ? t : Triangle{t[0], t[2], t[1]});
          }
        }
  return mesh;
}

/// Concatenation of meshes into one vertex/triangle list.
inline TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const auto& p : parts) {
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& t : p.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return out;
}

struct SpinePhantomParams {
  std::uint64_t seed = 11;
  bool fractured = false;
  std::int32_t fractured_id = 3;
  std::array<double, 3> shell_radii = {10.0, 18.0, 26.0};
  double fractured_body_radius = 5.5;
  double body_hu = 250.0;
  double arch_hu = 700.0;
  double process_hu = 1000.0;
  double soft_tissue_hu = 40.0;
  double fractured_body_hu = 120.0;
  double noise_hu = 5.0;
  double spacing = 1.0;
  double mesh_edge = 1.0;
  double mask_margin = 1.5;  // mask and process layer reach this far past the outer shell
};

struct PhantomVertebra {
  std::int32_t id = 0;
  Vec3 center = Vec3::Zero();
  std::array<double, 3> radii{};
  std::array<double, 3> hu{};
  TriangleMesh mesh;        // three concentric shells
  ScalarField true_region;  // expected label per vertex
};

struct SpinePhantom {
  VoxelGrid volume;
  std::vector<PhantomVertebra> vertebrae;
  SpinePhantomParams params;

  nlohmann::ordered_json truth() const;
};

/// Five vertebrae along z, each three nested spherical shells standing in
/// for body, arch and processes. Each shell sits inside its own HU layer
/// (layer boundaries halfway between shells, the outer layer ending
/// `mask_margin` past the last shell), so every criterion samples a single
/// tissue. Per-vertebra radius and HU offsets mimic between-level variation.
inline SpinePhantom make_spine_phantom(const SpinePhantomParams& p = {}) {
  SpinePhantom ph;
  ph.params = p;
  const std::array<double, 5> radius_jitter = {-0.3, 0.15, 0.0, -0.15, 0.3};
  const std::array<double, 5> hu_jitter = {-20.0, 10.0, 0.0, 20.0, -10.0};
  const double pitch = 2.0 * p.shell_radii[2] + 8.0;
  for (int k = 0; k < 5; ++k) {
    PhantomVertebra v;
    v.id = k + 1;
    v.center = Vec3(0.0, 0.0, pitch * k);
    for (int r = 0; r < 3; ++r) v.radii[r] = p.shell_radii[r] + radius_jitter[k];
    v.hu = {p.body_hu + hu_jitter[k], p.arch_hu + hu_jitter[k], p.process_hu + hu_jitter[k]};
    if (p.fractured && v.id == p.fractured_id) {
      v.radii[0] = p.fractured_body_radius;
      v.hu[0] = p.fractured_body_hu;
    }
    std::vector<TriangleMesh> shells;
    std::vector<double> truth;
    for (int r = 0; r < 3; ++r) {
      shells.push_back(make_cube_sphere(v.center, v.radii[r], p.mesh_edge));
      truth.insert(truth.end(), shells.back().vertices.size(), static_cast<double>(r));
    }
    v.mesh = merge_meshes(shells);
    v.mesh.bone_id = v.id;
    v.true_region = {"region", std::move(truth), FieldRange::label};
    ph.vertebrae.push_back(std::move(v));
  }

  const double margin = 6.0;
  const double rmax = p.shell_radii[2] + p.mask_margin + 1.0;
  GridGeometry g;
  g.spacing = Vec3::Constant(p.spacing);
  g.origin = Vec3(-rmax - margin, -rmax - margin, -rmax - margin);
  const Vec3 extent(2.0 * (rmax + margin), 2.0 * (rmax + margin), pitch * 4 + 2.0 * (rmax + margin));
  g.dims = {static_cast<std::int64_t>(std::ceil(extent.x() / p.spacing)) + 1,
            static_cast<std::int64_t>(std::ceil(extent.y() / p.spacing)) + 1,
            static_cast<std::int64_t>(std::ceil(extent.z() / p.spacing)) + 1};
  const std::size_t n = g.voxel_count();
  std::vector<double> hu(n);
  std::vector<std::int32_t> labels(n, 0);
  std::mt19937_64 rng(p.seed);
  for (std::size_t k = 0; k < n; ++k) {
    const double noise = p.noise_hu * (2.0 * detail::uniform01(rng) - 1.0);
    const Vec3 c = g.center_unchecked(g.unlinear(k));
    const auto z = static_cast<std::size_t>(std::clamp(std::lround(c.z() / pitch), 0L, 4L));
    const auto& v = ph.vertebrae[z];
    const double r = (c - v.center).norm();
    double value = p.soft_tissue_hu;
    if (r <= v.radii[2] + p.mask_margin) {
      labels[k] = v.id;
      const double b1 = 0.5 * (v.radii[0] + v.radii[1]);
      const double b2 = 0.5 * (v.radii[1] + v.radii[2]);
      value = r < b1 ? v.hu[0] : r < b2 ? v.hu[1] : v.hu[2];
    }
    hu[k] = value + noise;
  }
  ph.volume = VoxelGrid(g, std::move(hu), std::move(labels));
  return ph;
}

inline nlohmann::ordered_json SpinePhantom::truth() const {
  nlohmann::ordered_json j;
  j["kind"] = params.fractured ? "spine-fractured" : "spine-healthy";
  j["seed"] = params.seed;
  if (params.fractured) j["fractured_vertebra"] = params.fractured_id;
  auto& vs = j["vertebrae"] = nlohmann::ordered_json::array();
  for (const auto& v : vertebrae)
    vs.push_back({{"id", v.id},
                  {"centroid_mm", detail::to_json_vec(v.center)},
                  {"shell_radii_mm", {v.radii[0], v.radii[1], v.radii[2]}},
                  {"region_hu", {v.hu[0], v.hu[1], v.hu[2]}}});
  return j;
}

}  // namespace morphofuse
