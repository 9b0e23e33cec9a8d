#pragma once

#include "morphofuse/kdtree.hpp"
#include "morphofuse/mesh.hpp"

#include <Eigen/SVD>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace morphofuse {

struct IcpParams {
  double tol = 1e-6;        // relative RMS change that counts as converged
  int max_iters = 100;
  double trim_fraction = 0.0;  // drop this share of worst pairs (0.1 with --trimmed)
  unsigned threads = 1;
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  double final_rms = 0.0;
  bool converged = false;
  /// Mean squared pair distance after each correspondence step.
  std::vector<double> objective;
};

/// Least-squares rigid transform taking src[i] onto dst[i] (SVD solve with
/// reflection guard).
inline RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.empty()) throw Error(ErrorCode::invalid_argument, "kabsch needs matched pairs");
  const Vec3 cs = vertex_mean({src.begin(), src.end()});
  const Vec3 cd = vertex_mean({dst.begin(), dst.end()});
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform xf;
  xf.rotation = v * fix * u.transpose();
  xf.translation = cd - xf.rotation * cs;
  return xf;
}

/// True when all points lie (numerically) on a line.
inline bool is_collinear(std::span<const Vec3> pts) {
  if (pts.size() < 3) return true;
  const Vec3 c = vertex_mean({pts.begin(), pts.end()});
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const auto ev = es.eigenvalues();  // ascending
  return ev(2) <= 0.0 || ev(1) <= 1e-12 * ev(2);
}

/// Point-to-point ICP aligning `source` onto `target`, initialised by
/// centroid alignment. The returned transform maps source coordinates into
/// the target frame.
inline IcpResult rigid_icp(const TriangleMesh& source, const TriangleMesh& target, const IcpParams& params = {}) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::invalid_argument, "ICP needs non-empty meshes");
  if (is_collinear(source.vertices)) throw Error(ErrorCode::invalid_argument, "degenerate ICP source: collinear vertices");
  if (!(params.trim_fraction >= 0.0 && params.trim_fraction < 1.0))
    throw Error(ErrorCode::invalid_argument, "trim fraction must lie in [0,1)");

  const auto& src = source.vertices;
  const KdTree tree(target.vertices);
  const std::size_t n = src.size();
  const auto keep = std::max<std::size_t>(
      3, static_cast<std::size_t>(std::ceil((1.0 - params.trim_fraction) * static_cast<double>(n))));

  Vec3 lo = target.vertices.front(), hi = lo;
  for (const auto& p : target.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double abs_tol = 1e-9 * (1.0 + (hi - lo).norm());

  IcpResult res;
  res.transform.translation = vertex_mean(target.vertices) - vertex_mean(src);

  std::vector<KdTree::Hit> hits(n);
  std::vector<std::uint32_t> order(n);
  std::vector<Vec3> from, to;
  double prev_rms = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= params.max_iters; ++it) {
    parallel_for(n, params.threads, [&](std::size_t i) { hits[i] = tree.nearest(res.transform.apply(src[i])); });

    std::iota(order.begin(), order.end(), 0u);
    const std::size_t used = std::min(keep, n);
    if (used < n) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(used), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) {
                         return hits[a].sq_dist < hits[b].sq_dist || (hits[a].sq_dist == hits[b].sq_dist && a < b);
                       });
      std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(used));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < used; ++k) sum += hits[order[k]].sq_dist;
    const double mse = sum / static_cast<double>(used);
    const double rms = std::sqrt(mse);
    res.objective.push_back(mse);
    res.iterations = it;
    res.final_rms = rms;

    if (rms <= abs_tol || (std::isfinite(prev_rms) && std::abs(prev_rms - rms) <= params.tol * prev_rms)) {
      res.converged = true;
      break;
    }
    from.resize(used);
    to.resize(used);
    for (std::size_t k = 0; k < used; ++k) {
      from[k] = src[order[k]];
      to[k] = tree.point(hits[order[k]].index);
    }
    res.transform = kabsch(from, to);
    prev_rms = rms;
  }
  return res;
}

/// d_A(B) := max_{a in A} min_{b in B} |a - b| over vertex sets.
inline double directed_hausdorff(const TriangleMesh& a, const TriangleMesh& b, unsigned threads = 1) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::invalid_argument, "Hausdorff distance of an empty mesh");
  const KdTree tree(b.vertices);
  std::vector<double> d2(a.vertices.size());
  parallel_for(a.vertices.size(), threads, [&](std::size_t i) { d2[i] = tree.nearest(a.vertices[i]).sq_dist; });
  return std::sqrt(*std::max_element(d2.begin(), d2.end()));
}

/// Symmetric vertex-set Hausdorff distance max{d_X1(X2), d_X2(X1)}.
inline double hausdorff_distance(const TriangleMesh& x1, const TriangleMesh& x2, unsigned threads = 1) {
  return std::max(directed_hausdorff(x1, x2, threads), directed_hausdorff(x2, x1, threads));
}

/// Min-max scaling of a field to [0,1]. A zero range yields all zeros and
/// sets `degenerate`. Unmapped entries stay unmapped.
struct UnitScaling {
  ScalarField field;
  bool degenerate = false;
  double lo = 0.0;
  double hi = 0.0;
};

inline UnitScaling scale_to_unit(const ScalarField& in, std::string name) {
  UnitScaling out;
  out.field.name = std::move(name);
  out.field.range = FieldRange::unit;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : in.values)
    if (!is_unmapped(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  out.lo = lo;
  out.hi = hi;
  out.degenerate = !(hi > lo);
  out.field.values.resize(in.values.size());
  for (std::size_t i = 0; i < in.values.size(); ++i) {
    const double v = in.values[i];
    if (is_unmapped(v)) out.field.values[i] = kUnmapped;
    else out.field.values[i] = out.degenerate ? 0.0 : std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

/// Closest point to p on triangle (a, b, c).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

enum class DistanceMode { vertex_to_vertex, point_to_triangle };

struct FollowupDistances {
  ScalarField per_vertex_mm;  // unbounded mm on the follow-up mesh
  double hausdorff_mm = 0.0;
  ScalarField normalized;     // d2, in [0,1]
  bool degenerate_range = false;
};

/// Per follow-up vertex: minimum distance to the baseline vertex set (or,
/// with point_to_triangle, to the baseline surface), plus its [0,1] scaling.
/// Meshes must already be co-registered.
inline FollowupDistances vertex_distance_field(const TriangleMesh& followup, const TriangleMesh& baseline,
                                               DistanceMode mode = DistanceMode::vertex_to_vertex,
                                               unsigned threads = 1) {
  if (baseline.empty()) throw Error(ErrorCode::invalid_argument, "baseline mesh is empty");
  if (followup.empty()) throw Error(ErrorCode::invalid_argument, "follow-up mesh is empty");
  const KdTree tree(baseline.vertices);
  const std::size_t n = followup.vertices.size();
  FollowupDistances out;
  out.per_vertex_mm = {"distance_mm", std::vector<double>(n), FieldRange::unbounded_mm};

  if (mode == DistanceMode::vertex_to_vertex) {
    parallel_for(n, threads, [&](std::size_t i) {
      out.per_vertex_mm.values[i] = std::sqrt(tree.nearest(followup.vertices[i]).sq_dist);
    });
  } else {
    std::vector<std::vector<std::uint32_t>> incident(baseline.vertices.size());
    double max_edge = 0.0;
    for (std::uint32_t t = 0; t < baseline.triangles.size(); ++t) {
      const auto& tri = baseline.triangles[t];
      for (int k = 0; k < 3; ++k) {
        incident[tri[k]].push_back(t);
        max_edge = std::max(max_edge, (baseline.vertices[tri[k]] - baseline.vertices[tri[(k + 1) % 3]]).norm());
      }
    }
    parallel_for(n, threads, [&](std::size_t i) {
      const Vec3& p = followup.vertices[i];
      double best2 = tree.nearest(p).sq_dist;
      // The closest surface point lies on a triangle with a vertex within
      // sqrt(best2) + max_edge of p.
      for (auto v : tree.within(p, std::sqrt(best2) + max_edge))
        for (auto t : incident[v]) {
          const auto& tri = baseline.triangles[t];
          const Vec3 q = closest_point_on_triangle(p, baseline.vertices[tri[0]], baseline.vertices[tri[1]],
                                                   baseline.vertices[tri[2]]);
          best2 = std::min(best2, squared_distance(p, q));
        }
      out.per_vertex_mm.values[i] = std::sqrt(best2);
    });
  }
  out.hausdorff_mm = std::max(*std::max_element(out.per_vertex_mm.values.begin(), out.per_vertex_mm.values.end()),
                              directed_hausdorff(baseline, followup, threads));
  auto scaled = scale_to_unit(out.per_vertex_mm, "d2");
  out.normalized = std::move(scaled.field);
  out.degenerate_range = scaled.degenerate;
  return out;
}

/// Joint [0,1] scaling of several bones' raw distances (district-wide
/// normalisation). Returns one d2 field per input, in order.
inline std::vector<ScalarField> normalize_district(std::span<const ScalarField> raw, bool* degenerate = nullptr) {
  ScalarField all;
  for (const auto& f : raw) all.values.insert(all.values.end(), f.values.begin(), f.values.end());
  auto scaled = scale_to_unit(all, "d2");
  if (degenerate) *degenerate = scaled.degenerate;
  std::vector<ScalarField> out;
  std::size_t offset = 0;
  for (const auto& f : raw) {
    ScalarField d2{"d2", {}, FieldRange::unit};
    d2.values.assign(scaled.field.values.begin() + static_cast<std::ptrdiff_t>(offset),
                     scaled.field.values.begin() + static_cast<std::ptrdiff_t>(offset + f.values.size()));
    offset += f.values.size();
    out.push_back(std::move(d2));
  }
  return out;
}

}  // namespace morphofuse
