#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fusenet/geometry.hpp"

namespace fusenet::neighbors {

using geometry::Point3;

/// Exact K-nearest-neighbor index over a fixed 3-D point set.
///
/// Nodes split at the median of the axis with the widest extent; buckets of at
/// most `leaf_size` points sit at the leaves. Results are ordered by squared
/// Euclidean distance, ties broken by ascending point index, and equal those
/// of brute_force_knn bit for bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 8);
  explicit KdTree(const geometry::PointSet& points, std::size_t leaf_size = 8)
      : KdTree(std::span<const Point3>(points.coords), leaf_size) {}

  std::vector<std::uint32_t> query(const Point3& q, std::size_t k) const;

  std::size_t size() const { return points_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const;
  std::size_t depth() const;

  /// Leaf membership per point; used to check that every point has exactly one leaf.
  std::vector<std::size_t> leaf_membership_counts() const;

 private:
  struct Node {
    double split = 0;
    int axis = -1;  // -1 marks a leaf
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;  // leaf range in order_
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Exhaustive scan with the same ordering rule as KdTree::query.
std::vector<std::uint32_t> brute_force_knn(std::span<const Point3> points, const Point3& q, std::size_t k);

/// Per-point neighbor cache: row i lists K point indices (self first, then by
/// distance and index) and the offsets x_i - x_neighbor.
struct NeighborTable {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // rows * k
  std::vector<double> offsets;         // rows * k * 3

  std::uint32_t index(std::size_t i, std::size_t j) const { return indices[i * k + j]; }
  Point3 offset(std::size_t i, std::size_t j) const {
    const double* o = &offsets[(i * k + j) * 3];
    return {o[0], o[1], o[2]};
  }

  /// Block-diagonal stacking for a batch of frames; indices of part f are
  /// shifted by the total row count of parts before it.
  static NeighborTable concat(std::span<const NeighborTable> parts);
  /// Applies a point relabelling: row perm[i] of the result is row i of this
  /// table with every index j replaced by perm[j].
  NeighborTable permuted(std::span<const std::uint32_t> perm) const;
};

NeighborTable precompute_table(const geometry::PointSet& points, std::size_t k = 9);

/// Same contract as precompute_table, from exhaustive search.
NeighborTable brute_force_table(const geometry::PointSet& points, std::size_t k);

}  // namespace fusenet::neighbors
