#pragma once

#include "morphofuse/core.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace morphofuse {

/// Declared value range of a per-vertex channel.
enum class FieldRange { unit, signed_unit, unbounded_mm, label };

inline const char* to_string(FieldRange r) {
  switch (r) {
    case FieldRange::unit: return "unit";
    case FieldRange::signed_unit: return "signed_unit";
    case FieldRange::unbounded_mm: return "unbounded";
    case FieldRange::label: return "label";
  }
  return "?";
}

inline FieldRange parse_field_range(const std::string& s) {
  if (s == "unit") return FieldRange::unit;
  if (s == "signed_unit") return FieldRange::signed_unit;
  if (s == "unbounded") return FieldRange::unbounded_mm;
  if (s == "label") return FieldRange::label;
  throw Error(ErrorCode::parse, "unknown field range '" + s + "'");
}

/// Named per-vertex scalar channel. NaN marks unmapped vertices.
struct ScalarField {
  std::string name;
  std::vector<double> values;
  FieldRange range = FieldRange::unbounded_mm;

  std::size_t size() const { return values.size(); }

  /// True when every mapped value lies inside the declared range.
  bool conforms() const {
    for (double v : values) {
      if (is_unmapped(v)) continue;
      switch (range) {
        case FieldRange::unit:
          if (v < 0.0 || v > 1.0) return false;
          break;
        case FieldRange::signed_unit:
          if (v < -1.0 || v > 1.0) return false;
          break;
        case FieldRange::label:
          if (v != std::floor(v)) return false;
          break;
        case FieldRange::unbounded_mm:
          if (!std::isfinite(v)) return false;
          break;
      }
    }
    return true;
  }
};

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle surface in world millimetres.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::map<std::string, ScalarField> channels;
  std::optional<std::int32_t> bone_id;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
  bool empty() const { return vertices.empty(); }

  bool has_channel(const std::string& name) const { return channels.count(name) != 0; }

  const ScalarField& channel(const std::string& name) const {
    auto it = channels.find(name);
    if (it == channels.end()) throw Error(ErrorCode::not_found, "unknown channel '" + name + "'");
    return it->second;
  }

  void set_channel(ScalarField field) {
    if (field.values.size() != vertices.size())
      throw Error(ErrorCode::size_mismatch, "channel '" + field.name + "' has " + std::to_string(field.values.size()) +
                                                " values for " + std::to_string(vertices.size()) + " vertices");
    auto name = field.name;
    channels.insert_or_assign(std::move(name), std::move(field));
  }

  /// Throws on out-of-range or repeated triangle indices and on channel length mismatch.
  void validate() const {
    const auto n = vertices.size();
    for (const auto& t : triangles) {
      for (auto i : t)
        if (i >= n)
          throw Error(ErrorCode::out_of_range, "triangle index " + std::to_string(i) + " >= vertex count " +
                                                   std::to_string(n));
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
        throw Error(ErrorCode::invalid_argument, "degenerate triangle with repeated index");
    }
    for (const auto& [name, field] : channels)
      if (field.values.size() != n) throw Error(ErrorCode::size_mismatch, "channel '" + name + "' length mismatch");
  }
};

/// Rotation + translation acting as x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (this ∘ other)(x) = this(other(x)).
  RigidTransform compose(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  bool is_identity() const { return rotation == Mat3::Identity() && translation == Vec3::Zero(); }

  /// Orthonormality and det = +1 within `tol`.
  bool is_proper(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }

  /// Rotation angle in radians.
  double angle() const {
    return std::acos(std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0));
  }

  static RigidTransform from_axis_angle(const Vec3& axis, double radians, const Vec3& t = Vec3::Zero()) {
    return {Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix(), t};
  }
};

/// Copy of the mesh with every vertex moved by `xf`; channels travel along.
inline TriangleMesh transformed(const TriangleMesh& mesh, const RigidTransform& xf) {
  if (xf.is_identity()) return mesh;
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = xf.apply(v);
  return out;
}

inline double triangle_area(const TriangleMesh& m, const Triangle& t) {
  return 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
}

inline double surface_area(const TriangleMesh& m) {
  double a = 0.0;
  for (const auto& t : m.triangles) a += triangle_area(m, t);
  return a;
}

/// Signed enclosed volume via the divergence theorem (positive for outward winding).
inline double enclosed_volume(const TriangleMesh& m) {
  double v = 0.0;
  for (const auto& t : m.triangles)
    v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]]));
  return v / 6.0;
}

/// V - E + F with edges counted once per unordered vertex pair.
inline std::int64_t euler_characteristic(const TriangleMesh& m) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) {
      auto a = t[k], b = t[(k + 1) % 3];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  return static_cast<std::int64_t>(m.vertices.size()) - static_cast<std::int64_t>(edges.size()) +
         static_cast<std::int64_t>(m.triangles.size());
}

/// Area-weighted surface centroid. Meshes without triangles fall back to the
/// vertex mean.
inline Vec3 mesh_centroid(const TriangleMesh& m) {
  if (m.vertices.empty()) throw Error(ErrorCode::invalid_argument, "centroid of an empty mesh");
  Vec3 acc = Vec3::Zero();
  double area = 0.0;
  for (const auto& t : m.triangles) {
    const double a = triangle_area(m, t);
    acc += a * (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
    area += a;
  }
  if (area > 0.0) return acc / area;
  Vec3 mean = Vec3::Zero();
  for (const auto& v : m.vertices) mean += v;
  return mean / static_cast<double>(m.vertices.size());
}

/// Arithmetic mean of the vertex positions.
inline Vec3 vertex_mean(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& v : pts) mean += v;
  return pts.empty() ? mean : Vec3(mean / static_cast<double>(pts.size()));
}

}  // namespace morphofuse
