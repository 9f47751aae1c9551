#include "puxp/geometry.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/ops.hpp"
#include "puxp/kdtree.hpp"

namespace puxp {

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw ConfigError("point cloud must contain at least one point");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Vec3& p = points_[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw NumericalError(fmt::format("point {} has a non-finite coordinate", i));
        }
    }
}

PointCloud PointCloud::from_tensor(const Tensor& coords) {
    if (coords.rank() != 2 || coords.dim(1) != 3) {
        throw DimensionError(fmt::format("coordinates must be [N x 3], got {}", coords.shape().str()));
    }
    std::vector<Vec3> pts(coords.dim(0));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = {coords.at(i, 0), coords.at(i, 1), coords.at(i, 2)};
        if (!std::isfinite(pts[i].x) || !std::isfinite(pts[i].y) || !std::isfinite(pts[i].z)) {
            throw NumericalError(fmt::format("regressed row {} is non-finite", i));
        }
    }
    return PointCloud(std::move(pts));
}

Tensor PointCloud::to_tensor() const {
    std::vector<double> v;
    v.reserve(points_.size() * 3);
    for (const Vec3& p : points_) {
        v.push_back(p.x);
        v.push_back(p.y);
        v.push_back(p.z);
    }
    return Tensor::from(Shape{points_.size(), 3}, std::move(v));
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        for (std::uint32_t v : faces_[f]) {
            if (v >= vertices_.size()) {
                throw IndexError(fmt::format("face {} references vertex {} but the mesh has {} vertices", f, v,
                                             vertices_.size()));
            }
        }
    }
}

bool is_degenerate(const std::array<Vec3, 3>& tri) {
    const Vec3 ab = tri[1] - tri[0], ac = tri[2] - tri[0], bc = tri[2] - tri[1];
    const double longest = std::max({dot(ab, ab), dot(ac, ac), dot(bc, bc)});
    return norm(cross(ab, ac)) <= 1e-12 * longest;
}

std::size_t TriangleMesh::drop_degenerate_faces() {
    const std::size_t before = faces_.size();
    std::erase_if(faces_, [&](const Face& f) {
        return is_degenerate({vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]});
    });
    return before - faces_.size();
}

namespace geometry {
namespace {

using Neighbor = KdTree::Neighbor;

void check_k(std::size_t k, std::size_t n) {
    if (k == 0 || k >= n) {
        throw ConfigError(fmt::format("neighbor count k = {} must satisfy 1 <= k < N = {}", k, n));
    }
}

// Shared selection: the k smallest (dist2, index) pairs, ascending.
void write_row(IndexMatrix& out, std::size_t row, std::vector<Neighbor>& cands, std::size_t k) {
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end());
    auto dst = out.row(row);
    for (std::size_t j = 0; j < k; ++j) dst[j] = cands[j].index;
}

}  // namespace

IndexMatrix knn_bruteforce(const PointCloud& cloud, std::size_t k) {
    const std::size_t n = cloud.size();
    check_k(k, n);
    IndexMatrix out(n, k);
    std::vector<Neighbor> cands;
    cands.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cands.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) cands.push_back({squared_distance(cloud[i], cloud[j]), static_cast<std::uint32_t>(j)});
        }
        write_row(out, i, cands, k);
    }
    return out;
}

IndexMatrix knn_accelerated(const PointCloud& cloud, std::size_t k) {
    const std::size_t n = cloud.size();
    check_k(k, n);
    const KdTree tree(cloud.points());
    IndexMatrix out(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto found = tree.knn(cloud[i], k, i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < k; ++j) dst[j] = found[j].index;
    }
    return out;
}

IndexMatrix knn_features(const Tensor& features, std::size_t k) {
    if (features.rank() != 2) {
        throw DimensionError(fmt::format("knn_features expects [M x C], got {}", features.shape().str()));
    }
    const std::size_t m = features.dim(0), c = features.dim(1);
    check_k(k, m);
    auto f = features.data();
    IndexMatrix out(m, k);
    std::vector<Neighbor> cands;
    cands.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        cands.clear();
        const double* fi = f.data() + i * c;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double* fj = f.data() + j * c;
            double d2 = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = fi[ch] - fj[ch];
                d2 += d * d;
            }
            cands.push_back({d2, static_cast<std::uint32_t>(j)});
        }
        write_row(out, i, cands, k);
        if (ops::MarginProbe::active() && cands.size() > k) {
            // Distance gap between the last chosen and the first rejected neighbor.
            const double kept = std::sqrt(cands[k - 1].dist2);
            double next = std::numeric_limits<double>::infinity();
            for (std::size_t j = k; j < cands.size(); ++j) next = std::min(next, std::sqrt(cands[j].dist2));
            if (next != kept) ops::MarginProbe::record(next - kept);
        }
    }
    return out;
}

IndexMatrix expand_index(const IndexMatrix& idx) {
    idx.validate_bounds(idx.rows());
    const std::size_t m = idx.rows(), k = idx.k();
    IndexMatrix out(2 * m, k);
    for (std::size_t i = 0; i < m; ++i) {
        auto src = idx.row(i);
        for (std::size_t child = 0; child < 2; ++child) {
            auto dst = out.row(2 * i + child);
            for (std::size_t j = 0; j < k; ++j) dst[j] = 2 * src[j];
        }
    }
    return out;
}

double point_triangle_distance(Vec3 p, const std::array<Vec3, 3>& tri) {
    if (is_degenerate(tri)) throw ConfigError("point_triangle_distance: degenerate triangle");
    const auto& [a, b, c] = tri;
    // Closest point by Voronoi region of the triangle (vertex, edge, face).
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return norm(p - a);

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return norm(p - b);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return norm(p - (a + v * ab));
    }

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return norm(p - c);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return norm(p - (a + w * ac));
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm(p - (b + w * (c - b)));
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return norm(p - (a + v * ab + w * ac));
}

}  // namespace geometry
}  // namespace puxp
