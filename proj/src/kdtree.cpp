#include "dynagmap/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynagmap/errors.hpp"

namespace dynagmap {

namespace {
constexpr std::size_t kLeafSize = 8;

struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    std::size_t index = std::numeric_limits<std::size_t>::max();

    void offer(double cand_d2, std::size_t cand) {
        if (cand_d2 < d2 || (cand_d2 == d2 && cand < index)) {
            d2 = cand_d2;
            index = cand;
        }
    }
};
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)), order_(points_.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (!(hi[axis] > lo[axis])) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                         return points_[a][axis] < points_[b][axis] ||
                                (points_[a][axis] == points_[b][axis] && a < b);
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = points_[order_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

Neighbor KdTree::nearest(const Vec3& q) const {
    if (points_.empty()) throw InvalidParameter("nearest-neighbour query on an empty tree");
    Best best;
    // iterative descent with an explicit stack of (node, lower bound on d2)
    std::vector<std::pair<int, double>> stack{{0, 0.0}};
    while (!stack.empty()) {
        const auto [id, bound] = stack.back();
        stack.pop_back();
        if (bound > best.d2) continue;
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i)
                best.offer(squared_distance(points_[order_[i]], q), order_[i]);
            continue;
        }
        // left holds coordinates <= split, right holds >= split
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0 ? n.left : n.right;
        const int far = diff < 0 ? n.right : n.left;
        stack.push_back({far, std::max(bound, diff * diff)});
        stack.push_back({near, bound});
    }
    return {best.index, std::sqrt(best.d2)};
}

std::vector<Neighbor> KdTree::k_nearest(const Vec3& q, std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> heap;  // max-heap on (d2, index)
    k = std::min(k, points_.size());
    if (k == 0) return {};
    std::vector<std::pair<int, double>> stack{{0, 0.0}};
    auto worst = [&] {
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().first;
    };
    while (!stack.empty()) {
        const auto [id, bound] = stack.back();
        stack.pop_back();
        if (bound > worst()) continue;
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const std::pair<double, std::size_t> cand{squared_distance(points_[order_[i]], q),
                                                          order_[i]};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end());
                } else if (cand < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            continue;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0 ? n.left : n.right;
        const int far = diff < 0 ? n.right : n.left;
        stack.push_back({far, std::max(bound, diff * diff)});
        stack.push_back({near, bound});
    }
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const auto& [d2, i] : heap) out.push_back({i, std::sqrt(d2)});
    return out;
}

Neighbor brute_force_nearest(const std::vector<Vec3>& points, const Vec3& q) {
    if (points.empty()) throw InvalidParameter("nearest-neighbour query on an empty set");
    Best best;
    for (std::size_t i = 0; i < points.size(); ++i) best.offer(squared_distance(points[i], q), i);
    return {best.index, std::sqrt(best.d2)};
}

}  // namespace dynagmap
