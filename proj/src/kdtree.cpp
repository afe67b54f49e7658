#include "splatreorg/kdtree.hpp"

#include <algorithm>
#include <stdexcept>

namespace splatreorg {

namespace {

constexpr Index kLeafSize = 16;

// Total order on candidates: (squared distance, index) ascending.
inline bool better(const PointIndex::Neighbor& a, const PointIndex::Neighbor& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return a.index < b.index;
}

struct HeapCmp {
  bool operator()(const PointIndex::Neighbor& a, const PointIndex::Neighbor& b) const {
    return better(a, b);  // max-heap on the total order; top() is the worst kept
  }
};

}  // namespace

PointIndex PointIndex::build(const Eigen::MatrixX3d& points) {
  if (points.rows() < 1) throw std::invalid_argument("point index needs at least one point");
  if (!points.allFinite()) throw std::invalid_argument("point index given non-finite coordinate");
  PointIndex index;
  index.points_ = points;
  index.order_.resize(points.rows());
  for (Index i = 0; i < points.rows(); ++i) index.order_[i] = i;
  index.nodes_.reserve(static_cast<size_t>(2 * points.rows() / kLeafSize + 8));
  index.root_ = index.build_node(0, points.rows());
  return index;
}

std::int32_t PointIndex::build_node(Index begin, Index end) {
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[id].leaf_begin = begin;
    nodes_[id].leaf_end = end;
    return id;
  }
  // Split the widest extent; ties go to the lower axis.
  Eigen::Vector3d lo = points_.row(order_[begin]);
  Eigen::Vector3d hi = lo;
  for (Index i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  double extent = hi[0] - lo[0];
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > extent) {
      extent = hi[a] - lo[a];
      axis = a;
    }
  }
  const Index mid = begin + (end - begin) / 2;
  // (coordinate, index) is a total order, so the median element and the
  // partition contents are unique regardless of nth_element internals.
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Index a, Index b) {
                     const double ca = points_(a, axis), cb = points_(b, axis);
                     if (ca != cb) return ca < cb;
                     return a < b;
                   });
  const Index pivot = order_[mid];
  const std::int32_t left = build_node(begin, mid);
  const std::int32_t right = build_node(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = points_(pivot, axis);
  nodes_[id].point = pivot;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

struct KnnSearch {
  const Eigen::MatrixX3d& points;
  const Eigen::Vector3d& q;
  Index k;
  Index exclude;
  std::vector<PointIndex::Neighbor>& heap;

  void offer(Index idx) {
    if (idx == exclude) return;
    const double d2 = (points.row(idx).transpose() - q).squaredNorm();
    const PointIndex::Neighbor cand{idx, d2};
    const HeapCmp cmp;
    if (static_cast<Index>(heap.size()) < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), cmp);
    } else if (better(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), cmp);
    }
  }
};

}  // namespace

std::vector<PointIndex::Neighbor> PointIndex::knn(const Eigen::Vector3d& q, Index k,
                                                  Index exclude) const {
  const Index available = size() - (exclude >= 0 && exclude < size() ? 1 : 0);
  if (k < 1 || k > available) throw std::invalid_argument("knn: k out of range");

  std::vector<Neighbor> heap;
  heap.reserve(static_cast<size_t>(k));
  KnnSearch search{points_, q, k, exclude, heap};

  // Recursive descent, near child first; the far child is visited unless
  // every point beyond the plane is strictly worse than the current k-th
  // best (a tie could still win on the index order, so equality descends).
  auto visit = [&](auto&& self, std::int32_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (Index i = node.leaf_begin; i < node.leaf_end; ++i) search.offer(order_[i]);
      return;
    }
    const double delta = q[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    self(self, near);
    if (static_cast<Index>(heap.size()) < k || delta * delta <= heap.front().squared_distance) {
      self(self, far);
    }
  };
  visit(visit, root_);

  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

Index PointIndex::nearest(const Eigen::Vector3d& q) const { return knn(q, 1)[0].index; }

std::vector<Index> PointIndex::within_radius(const Eigen::Vector3d& q, double radius_sq) const {
  std::vector<Index> out;
  std::vector<std::int32_t> stack;
  stack.push_back(root_);
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (Index i = node.leaf_begin; i < node.leaf_end; ++i) {
        const Index idx = order_[i];
        if ((points_.row(idx).transpose() - q).squaredNorm() <= radius_sq) out.push_back(idx);
      }
      continue;
    }
    const double delta = q[node.axis] - node.split;
    if (delta * delta <= radius_sq) {
      stack.push_back(node.left);
      stack.push_back(node.right);
    } else if (delta < 0.0) {
      stack.push_back(node.left);
    } else {
      stack.push_back(node.right);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<PointIndex::Neighbor>> PointIndex::knn_batch(
    const Eigen::MatrixX3d& queries, Index k, bool exclude_self) const {
  std::vector<std::vector<Neighbor>> out(static_cast<size_t>(queries.rows()));
  parallel_for(queries.rows(), [&](std::int64_t i) {
    out[static_cast<size_t>(i)] =
        knn(queries.row(i).transpose(), k, exclude_self ? static_cast<Index>(i) : Index{-1});
  });
  return out;
}

}  // namespace splatreorg
