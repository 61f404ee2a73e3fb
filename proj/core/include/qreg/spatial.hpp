#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qreg/geometry.hpp"

namespace qreg {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Immutable 3-d tree with axis-aligned median splits answering exact k-NN
/// queries. Results are ordered by ascending distance, ties by ascending
/// point index. Owns a copy of the points; concurrent queries are safe.
class KdTree {
 public:
  /// Throws EmptyCloud.
  explicit KdTree(const PointCloud& cloud, std::size_t leaf_size = 8);

  /// Returns exactly min(k, size()) neighbors. k = 0 yields an empty list.
  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const;

  std::size_t size() const noexcept { return points_.size(); }
  std::size_t leaf_count() const noexcept;
  const Point3& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    // Leaves: [begin, end) into order_. Inner nodes: children and split plane.
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

inline KdTree build_index(const PointCloud& cloud) { return KdTree(cloud); }

inline std::vector<Neighbor> knn(const KdTree& index, const Point3& query, std::size_t k) {
  return index.knn(query, k);
}

}  // namespace qreg
