#include "fusenet/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

#include "fusenet/errors.hpp"

namespace fusenet::neighbors {

namespace {

// Same operation order everywhere so tree and scan agree exactly.
inline double dist2(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct Candidate {
  double d2;
  std::uint32_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

void check_k(std::size_t k, std::size_t n) {
  if (k < 1) throw std::invalid_argument("knn: K must be at least 1");
  if (k > n) {
    throw std::invalid_argument("knn: K=" + std::to_string(k) + " exceeds point count " + std::to_string(n));
  }
}

// Bounded max-heap keeping the k best candidates under Candidate::operator<.
class BestK {
 public:
  explicit BestK(std::size_t k) : k_(k) {}
  bool full() const { return heap_.size() == k_; }
  double worst_d2() const { return heap_.top().d2; }
  void offer(Candidate c) {
    if (!full()) {
      heap_.push(c);
    } else if (c < heap_.top()) {
      heap_.pop();
      heap_.push(c);
    }
  }
  std::vector<std::uint32_t> sorted_indices() {
    std::vector<Candidate> all;
    all.reserve(heap_.size());
    while (!heap_.empty()) {
      all.push_back(heap_.top());
      heap_.pop();
    }
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> out(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) out[i] = all[i].index;
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Candidate> heap_;
};

}  // namespace

KdTree::KdTree(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()) {
  if (points_.empty()) throw std::invalid_argument("KdTree: need at least one point");
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("KdTree: too many points");
  }
  if (leaf_size < 1) leaf_size = 1;
  for (const auto& p : points_) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw DataError("KdTree: non-finite coordinate");
    }
  }
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / leaf_size + 1);
  build(0, static_cast<std::uint32_t>(order_.size()), leaf_size);
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= leaf_size) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Point3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Point3& p = points_[order_[i]];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) {
    // All coincident: one bucket, whatever its size.
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    const double pa = points_[a][axis], pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, less);
  const double split = points_[order_[mid]][axis];
  const std::uint32_t left = build(begin, mid, leaf_size);
  const std::uint32_t right = build(mid, end, leaf_size);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::uint32_t> KdTree::query(const Point3& q, std::size_t k) const {
  check_k(k, points_.size());
  BestK best(k);
  // Explicit stack of (node, lower bound on squared distance to its region).
  std::vector<std::pair<std::uint32_t, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    // Strict comparison: an equal-distance point with a smaller index may still be inside.
    if (best.full() && bound > best.worst_d2()) continue;
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        best.offer({dist2(points_[order_[i]], q), order_[i]});
      }
      continue;
    }
    // Left holds coordinates <= split, right holds coordinates >= split.
    const double diff = q[n.axis] - n.split;
    const double plane2 = diff * diff;
    const std::uint32_t near = diff < 0 ? n.left : n.right;
    const std::uint32_t far = diff < 0 ? n.right : n.left;
    stack.emplace_back(far, std::max(bound, plane2));
    stack.emplace_back(near, bound);
  }
  return best.sorted_indices();
}

std::size_t KdTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.axis < 0; }));
}

std::size_t KdTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 1}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes_[id].axis >= 0) {
      stack.emplace_back(nodes_[id].left, d + 1);
      stack.emplace_back(nodes_[id].right, d + 1);
    }
  }
  return best;
}

std::vector<std::size_t> KdTree::leaf_membership_counts() const {
  std::vector<std::size_t> counts(points_.size(), 0);
  for (const Node& n : nodes_) {
    if (n.axis >= 0) continue;
    for (std::uint32_t i = n.begin; i < n.end; ++i) ++counts[order_[i]];
  }
  return counts;
}

std::vector<std::uint32_t> brute_force_knn(std::span<const Point3> points, const Point3& q, std::size_t k) {
  check_k(k, points.size());
  std::vector<Candidate> all(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    all[i] = {dist2(points[i], q), static_cast<std::uint32_t>(i)};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  std::vector<std::uint32_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = all[i].index;
  return out;
}

namespace {

template <typename Query>
NeighborTable make_table(const geometry::PointSet& points, std::size_t k, Query&& query) {
  const std::size_t n = points.size();
  check_k(k, n);
  NeighborTable t;
  t.rows = n;
  t.k = k;
  t.indices.resize(n * k);
  t.offsets.resize(n * k * 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> row = query(points.coords[i], k);
    // Self goes first even when coincident points with smaller indices exist.
    const auto self = static_cast<std::uint32_t>(i);
    auto it = std::find(row.begin(), row.end(), self);
    if (it == row.end()) it = row.end() - 1;
    std::move_backward(row.begin(), it, it + 1);
    row[0] = self;
    for (std::size_t j = 0; j < k; ++j) {
      t.indices[i * k + j] = row[j];
      const Point3& a = points.coords[i];
      const Point3& b = points.coords[row[j]];
      for (int c = 0; c < 3; ++c) t.offsets[(i * k + j) * 3 + c] = a[c] - b[c];
    }
  }
  return t;
}

}  // namespace

NeighborTable precompute_table(const geometry::PointSet& points, std::size_t k) {
  if (points.empty()) throw std::invalid_argument("precompute_table: empty point set");
  const KdTree tree(points);
  return make_table(points, k, [&](const Point3& q, std::size_t kk) { return tree.query(q, kk); });
}

NeighborTable brute_force_table(const geometry::PointSet& points, std::size_t k) {
  if (points.empty()) throw std::invalid_argument("brute_force_table: empty point set");
  return make_table(points, k, [&](const Point3& q, std::size_t kk) {
    return brute_force_knn(points.coords, q, kk);
  });
}

NeighborTable NeighborTable::concat(std::span<const NeighborTable> parts) {
  NeighborTable out;
  if (parts.empty()) return out;
  out.k = parts[0].k;
  std::uint32_t shift = 0;
  for (const auto& p : parts) {
    if (p.k != out.k) throw std::invalid_argument("NeighborTable::concat: K differs across frames");
    for (auto idx : p.indices) out.indices.push_back(idx + shift);
    out.offsets.insert(out.offsets.end(), p.offsets.begin(), p.offsets.end());
    out.rows += p.rows;
    shift += static_cast<std::uint32_t>(p.rows);
  }
  return out;
}

NeighborTable NeighborTable::permuted(std::span<const std::uint32_t> perm) const {
  if (perm.size() != rows) throw std::invalid_argument("NeighborTable::permuted: permutation size mismatch");
  NeighborTable out = *this;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t dst = perm[i];
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[dst * k + j] = perm[indices[i * k + j]];
      for (int c = 0; c < 3; ++c) out.offsets[(dst * k + j) * 3 + c] = offsets[(i * k + j) * 3 + c];
    }
  }
  return out;
}

}  // namespace fusenet::neighbors
