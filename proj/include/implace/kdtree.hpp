#pragma once

#include "implace/core.hpp"

namespace implace {

// Exact 3D kd-tree over a point array. Nodes are stored flat; build is a
// median split. Supports radius search and k-nearest-neighbor queries.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    nodes_.reserve(points_.size());
    if (!order_.empty()) root_ = build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  // All indices with |points[i] - query| <= radius.
  void radius_search(const Vec3& query, double radius, std::vector<std::uint32_t>& out) const {
    out.clear();
    if (root_ < 0) return;
    radius_visit(root_, query, radius * radius, out);
  }

  // k nearest neighbors (index, squared distance), closest first.
  void knn(const Vec3& query, int k, std::vector<std::pair<std::uint32_t, double>>& out) const {
    out.clear();
    if (root_ < 0 || k <= 0) return;
    knn_visit(root_, query, static_cast<std::size_t>(k), out);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
  }

 private:
  struct Node {
    std::uint32_t point = 0;
    int axis = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    if (begin >= end) return -1;
    // split on the widest axis of this subset
    Aabb box;
    for (std::size_t i = begin; i < end; ++i) box.expand(points_[order_[i]]);
    Vec3 ext = box.extent();
    int axis = 0;
    if (ext.y() > ext.x()) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    std::size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    Node node;
    node.point = order_[mid];
    node.axis = axis;
    std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    std::int32_t left = build(begin, mid);
    std::int32_t right = build(mid + 1, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void radius_visit(std::int32_t id, const Vec3& query, double r2,
                    std::vector<std::uint32_t>& out) const {
    const Node& node = nodes_[id];
    const Vec3& p = points_[node.point];
    if ((p - query).squaredNorm() <= r2) out.push_back(node.point);
    double delta = query[node.axis] - p[node.axis];
    std::int32_t near = delta < 0 ? node.left : node.right;
    std::int32_t far = delta < 0 ? node.right : node.left;
    if (near >= 0) radius_visit(near, query, r2, out);
    if (far >= 0 && delta * delta <= r2) radius_visit(far, query, r2, out);
  }

  void knn_visit(std::int32_t id, const Vec3& query, std::size_t k,
                 std::vector<std::pair<std::uint32_t, double>>& heap) const {
    const Node& node = nodes_[id];
    const Vec3& p = points_[node.point];
    double d2 = (p - query).squaredNorm();
    if (heap.size() < k) {
      heap.emplace_back(node.point, d2);
      std::push_heap(heap.begin(), heap.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    } else if (d2 < heap.front().second) {
      std::pop_heap(heap.begin(), heap.end(),
                    [](const auto& a, const auto& b) { return a.second < b.second; });
      heap.back() = {node.point, d2};
      std::push_heap(heap.begin(), heap.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    }
    double delta = query[node.axis] - p[node.axis];
    std::int32_t near = delta < 0 ? node.left : node.right;
    std::int32_t far = delta < 0 ? node.right : node.left;
    if (near >= 0) knn_visit(near, query, k, heap);
    if (far >= 0 && (heap.size() < k || delta * delta < heap.front().second))
      knn_visit(far, query, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

// PCA surface normal from a neighborhood; returns false when the
// neighborhood is too small or degenerate.
inline bool pca_normal(const std::vector<Vec3>& pts, const std::vector<std::uint32_t>& ids,
                       Vec3& normal) {
  if (ids.size() < 4) return false;
  Vec3 mean = Vec3::Zero();
  for (auto i : ids) mean += pts[i];
  mean /= static_cast<double>(ids.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : ids) {
    Vec3 d = pts[i] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) return false;
  normal = eig.eigenvectors().col(0);  // smallest eigenvalue
  return true;
}

}  // namespace implace
