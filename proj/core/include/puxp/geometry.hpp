#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "puxp/index_matrix.hpp"
#include "puxp/tensor.hpp"

namespace puxp {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(Vec3 a, Vec3 b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

/// Squared Euclidean distance. Every nearest-neighbor path in the library
/// uses this exact expression so that results compare bitwise.
inline double squared_distance(Vec3 a, Vec3 b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

/// Ordered, non-empty set of finite 3D points; order defines row identity.
class PointCloud {
public:
    PointCloud() = default;
    /// Throws ConfigError if empty, NumericalError on a non-finite coordinate.
    explicit PointCloud(std::vector<Vec3> points);

    /// [N x 3] tensor -> cloud. Non-finite rows are reported by index.
    static PointCloud from_tensor(const Tensor& coords);

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Vec3& operator[](std::size_t i) const { return points_[i]; }
    std::span<const Vec3> points() const { return points_; }
    auto begin() const { return points_.begin(); }
    auto end() const { return points_.end(); }

    Tensor to_tensor() const;

private:
    std::vector<Vec3> points_;
};

using Face = std::array<std::uint32_t, 3>;

class TriangleMesh {
public:
    TriangleMesh() = default;
    /// Throws IndexError naming the first face with an out-of-range index.
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    std::span<const Vec3> vertices() const { return vertices_; }
    std::span<const Face> faces() const { return faces_; }
    std::array<Vec3, 3> triangle(std::size_t f) const {
        return {vertices_[faces_[f][0]], vertices_[faces_[f][1]], vertices_[faces_[f][2]]};
    }

    /// Drops zero-area faces; returns how many were removed.
    std::size_t drop_degenerate_faces();

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
};

bool is_degenerate(const std::array<Vec3, 3>& tri);

namespace geometry {

/// Row i lists the k nearest other points to point i, ascending by distance,
/// ties broken by the smaller index. Requires k < N.
IndexMatrix knn_bruteforce(const PointCloud& cloud, std::size_t k);

/// Same contract as knn_bruteforce, answered with a kd-tree.
IndexMatrix knn_accelerated(const PointCloud& cloud, std::size_t k);

/// KNN in feature space over the rows of an [M x C] tensor.
IndexMatrix knn_features(const Tensor& features, std::size_t k);

/// Graph for the doubled point set: rows 2i and 2i + 1 both copy row i with
/// every neighbor j mapped to 2j, its first child.
IndexMatrix expand_index(const IndexMatrix& idx);

/// Distance from p to the closest point of the closed triangle. Throws
/// ConfigError for a degenerate triangle.
double point_triangle_distance(Vec3 p, const std::array<Vec3, 3>& tri);

}  // namespace geometry
}  // namespace puxp
