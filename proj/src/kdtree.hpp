#pragma once

#include "nocspose/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace nocspose {

/// Static 3D kd-tree over a point list; supports nearest-within-radius and
/// k-nearest queries.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Vec3>& points) : points_(points) {
    indices_.resize(points.size());
    std::iota(indices_.begin(), indices_.end(), 0);
    nodes_.reserve(points.size() * 2 / kLeafSize + 4);
    if (!points.empty()) root_ = build(0, static_cast<int>(points.size()));
  }

  /// Index of the nearest point within max_dist, or -1.
  int nearest(const Vec3& query, double max_dist) const {
    int best = -1;
    double best_d2 = max_dist * max_dist;
    if (root_ >= 0) nearest_rec(root_, query, best, best_d2);
    return best;
  }

  /// Indices of the k nearest points (k clamped to the point count).
  std::vector<int> knn(const Vec3& query, int k) const {
    k = std::min<int>(k, static_cast<int>(points_.size()));
    std::vector<std::pair<double, int>> heap;  // max-heap on distance
    heap.reserve(k);
    if (root_ >= 0) knn_rec(root_, query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<int> out(heap.size());
    for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    int axis = -1;        // -1 for leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into indices_
  };

  int build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3 lo = points_[indices_[begin]];
    Vec3 hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[indices_[i]]);
      hi = hi.cwiseMax(points_[indices_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(indices_.begin() + begin, indices_.begin() + mid, indices_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    node.axis = axis;
    node.split = points_[indices_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void nearest_rec(int node_idx, const Vec3& q, int& best, double& best_d2) const {
    const Node& node = nodes_[node_idx];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = indices_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    nearest_rec(near, q, best, best_d2);
    if (delta * delta <= best_d2) nearest_rec(far, q, best, best_d2);
  }

  void knn_rec(int node_idx, const Vec3& q, int k, std::vector<std::pair<double, int>>& heap) const {
    const Node& node = nodes_[node_idx];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = indices_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (static_cast<int>(heap.size()) < k) {
          heap.emplace_back(d2, idx);
          std::push_heap(heap.begin(), heap.end());
        } else if (d2 < heap.front().first) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = {d2, idx};
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    knn_rec(near, q, k, heap);
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().first) knn_rec(far, q, k, heap);
  }

  const std::vector<Vec3>& points_;
  std::vector<int> indices_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace nocspose
