#pragma once

#include <vector>

#include <Eigen/Dense>

#include "splatreorg/common.hpp"

namespace splatreorg {

// Exact k-nearest-neighbor index over an immutable 3D point set.
// Results are identical to a brute-force scan: neighbors are ordered by
// (squared distance, point index) ascending, so ties always resolve to the
// smaller index and answers are reproducible across thread counts and
// platforms. Queries are const and safe to run concurrently.
class PointIndex {
 public:
  struct Neighbor {
    Index index;
    double squared_distance;
  };

  // Throws std::invalid_argument on an empty or non-finite point set.
  static PointIndex build(const Eigen::MatrixX3d& points);

  Index size() const { return points_.rows(); }
  const Eigen::MatrixX3d& points() const { return points_; }

  // k nearest neighbors of q. exclude omits one member point by index
  // (pass the query's own index when q is a member); -1 keeps everything.
  // Throws std::invalid_argument when k is out of range.
  std::vector<Neighbor> knn(const Eigen::Vector3d& q, Index k, Index exclude = -1) const;

  // Index of the closest point; smallest index on distance ties.
  Index nearest(const Eigen::Vector3d& q) const;

  // All member indices with squared distance <= radius_sq, ascending index.
  std::vector<Index> within_radius(const Eigen::Vector3d& q, double radius_sq) const;

  // Batch kNN over the rows of queries, parallelized over queries with
  // per-row outputs (identical to a sequential loop). When exclude_self is
  // true, query row i omits member index i.
  std::vector<std::vector<Neighbor>> knn_batch(const Eigen::MatrixX3d& queries, Index k,
                                               bool exclude_self = false) const;

 private:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;     // coordinate of the pivot point along axis
    Index point = -1;       // pivot point stored at this node
    std::int32_t left = -1;
    std::int32_t right = -1;
    Index leaf_begin = 0, leaf_end = 0;  // range into order_ for leaves
  };

  PointIndex() = default;
  std::int32_t build_node(Index begin, Index end);

  Eigen::MatrixX3d points_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace splatreorg
