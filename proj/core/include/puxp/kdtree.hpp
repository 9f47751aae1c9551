#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "puxp/geometry.hpp"

namespace puxp {

/// Static 3D kd-tree over a borrowed point array. Queries return the exact
/// k nearest points ordered by (squared distance, index), the same total
/// order the brute-force search uses.
class KdTree {
public:
    static constexpr std::size_t kNoExclude = std::numeric_limits<std::size_t>::max();

    struct Neighbor {
        double dist2;
        std::uint32_t index;
        bool operator<(const Neighbor& o) const {
            return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
        }
    };

    explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 12);

    /// The k nearest points to `query`, skipping index `exclude`.
    std::vector<Neighbor> knn(Vec3 query, std::size_t k, std::size_t exclude = kNoExclude) const;

    Neighbor nearest(Vec3 query) const { return knn(query, 1).front(); }

private:
    struct Node {
        Vec3 lo, hi;  // bounding box
        std::uint32_t begin, end;
        std::int32_t left = -1, right = -1;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::int32_t node, Vec3 q, std::size_t k, std::size_t exclude, std::vector<Neighbor>& heap) const;

    std::span<const Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

}  // namespace puxp
