#pragma once

#include "morphofuse/core.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace morphofuse {

/// Squared Euclidean distance, evaluated in a fixed order so every caller
/// (tree search and exhaustive scans alike) rounds identically.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Static 3D kd-tree for exact nearest-neighbour and radius queries.
/// Ties in distance resolve to the smallest original point index.
class KdTree {
 public:
  struct Hit {
    std::uint32_t index = 0;
    double sq_dist = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;

  explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) return;
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(std::uint32_t i) const { return points_[i]; }

  Hit nearest(const Vec3& q) const {
    Hit best;
    if (!nodes_.empty()) search_nearest(0, q, best);
    return best;
  }

  /// Indices of all points with squared distance <= r^2, ascending.
  std::vector<std::uint32_t> within(const Vec3& q, double r) const {
    std::vector<std::uint32_t> out;
    if (!nodes_.empty()) search_radius(0, q, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, 0, 0.0});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (auto k = begin; k < end; ++k) {
      lo = lo.cwiseMin(points_[order_[k]]);
      hi = hi.cwiseMax(points_[order_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Left subtree holds coordinates <= split, right subtree >= split.
  void search_nearest(std::int32_t id, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (auto k = n.begin; k < n.end; ++k) {
        const auto idx = order_[k];
        const double d = squared_distance(q, points_[idx]);
        if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const auto near = diff <= 0.0 ? n.left : n.right;
    const auto far = diff <= 0.0 ? n.right : n.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.sq_dist) search_nearest(far, q, best);
  }

  void search_radius(std::int32_t id, const Vec3& q, double r2, std::vector<std::uint32_t>& out) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (auto k = n.begin; k < n.end; ++k)
        if (squared_distance(q, points_[order_[k]]) <= r2) out.push_back(order_[k]);
      return;
    }
    const double diff = q[n.axis] - n.split;
    if (diff <= 0.0 || diff * diff <= r2) search_radius(n.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) search_radius(n.right, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace morphofuse
