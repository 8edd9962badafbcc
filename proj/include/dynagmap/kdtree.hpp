#pragma once

#include <cstddef>
#include <vector>

#include "dynagmap/types.hpp"

namespace dynagmap {

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Static 3D kd-tree. Nearest-neighbour queries return exactly what a linear
/// scan would, including the lowest-index winner on distance ties.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points);

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

    /// Requires a non-empty tree.
    Neighbor nearest(const Vec3& q) const;
    /// The k closest points ordered by (distance, index).
    std::vector<Neighbor> k_nearest(const Vec3& q, std::size_t k) const;

private:
    struct Node {
        std::size_t begin, end;  // range in order_
        int axis = -1;           // -1 for leaves
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end);

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

/// Linear-scan reference with the same tie rule.
Neighbor brute_force_nearest(const std::vector<Vec3>& points, const Vec3& q);

inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace dynagmap
