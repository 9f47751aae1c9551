#include "puxp/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace puxp {
namespace {

// Lower bound on the squared distance from q to any point in [lo, hi].
// Rounding is monotone, so this stays a lower bound in floating point.
double box_distance(Vec3 q, Vec3 lo, Vec3 hi) {
    double d[3];
    for (std::size_t a = 0; a < 3; ++a) {
        const double v = q[a];
        d[a] = v < lo[a] ? lo[a] - v : (v > hi[a] ? v - hi[a] : 0.0);
    }
    return d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points), order_(points.size()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
        build(0, static_cast<std::uint32_t>(points_.size()));
    }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = node.hi = points_[order_[begin]];
    for (std::uint32_t i = begin; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        node.lo = {std::min(node.lo.x, p.x), std::min(node.lo.y, p.y), std::min(node.lo.z, p.z)};
        node.hi = {std::max(node.hi.x, p.x), std::max(node.hi.y, p.y), std::max(node.hi.z, p.z)};
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= leaf_size_) return id;

    const Vec3 extent = node.hi - node.lo;
    std::size_t axis = 0;
    if (extent.y > extent[axis]) axis = 1;
    if (extent.z > extent[axis]) axis = 2;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double va = points_[a][axis], vb = points_[b][axis];
                         return va < vb || (va == vb && a < b);
                     });
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<KdTree::Neighbor> KdTree::knn(Vec3 query, std::size_t k, std::size_t exclude) const {
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    if (k > 0 && !nodes_.empty()) search(0, query, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
}

void KdTree::search(std::int32_t id, Vec3 q, std::size_t k, std::size_t exclude,
                    std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    // Equal distance is not pruned: a tied point with a smaller index still wins.
    if (heap.size() == k && box_distance(q, node.lo, node.hi) > heap.front().dist2) return;

    if (node.left < 0) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            const std::uint32_t idx = order_[i];
            if (idx == exclude) continue;
            const Neighbor cand{squared_distance(q, points_[idx]), idx};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const Node& l = nodes_[node.left];
    const Node& r = nodes_[node.right];
    if (box_distance(q, l.lo, l.hi) <= box_distance(q, r.lo, r.hi)) {
        search(node.left, q, k, exclude, heap);
        search(node.right, q, k, exclude, heap);
    } else {
        search(node.right, q, k, exclude, heap);
        search(node.left, q, k, exclude, heap);
    }
}

}  // namespace puxp
