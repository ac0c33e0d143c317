#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace propfield {

/// Exact static k-d tree over 3D points. Neighbors are ordered by
/// (squared distance, index), so equidistant points resolve to the lowest
/// index, matching a linear scan.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double squared_distance;
  };

  KdTree() = default;
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  Neighbor nearest(const Eigen::Vector3d& query) const;

  /// k nearest, ascending. When skip is a valid index that point is ignored
  /// (used for self-exclusion).
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k,
                            std::size_t skip = static_cast<std::size_t>(-1)) const;

 private:
  struct Node {
    std::size_t begin;
    std::size_t end;
    int axis;  // -1 for leaves
    double split;
    std::size_t left;
    std::size_t right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Eigen::Vector3d& query, std::size_t k, std::size_t skip,
              std::vector<Neighbor>& heap) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace propfield
