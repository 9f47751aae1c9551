#pragma once

#include <cstddef>
#include <optional>

#include "puxp/geometry.hpp"
#include "puxp/tensor.hpp"

namespace puxp::metrics {

// Conventions: CD sums the two directed means of squared nearest-neighbor
// distances; HD is the larger directed maximum of unsquared distances; P2F is
// the mean unsquared distance from each predicted point to the mesh surface,
// predicted -> mesh only. Values are stored raw; tables scale by 1e3.

/// Chamfer distance, answered with kd-trees.
double chamfer(const PointCloud& pred, const PointCloud& gt);
/// Hausdorff distance, answered with kd-trees.
double hausdorff(const PointCloud& pred, const PointCloud& gt);
/// Mean point-to-surface distance. Throws ConfigError for a mesh without faces.
double point_to_face(const PointCloud& pred, const TriangleMesh& mesh);

/// O(N * M) reference implementations the accelerated paths must match.
namespace reference {
double chamfer(const PointCloud& pred, const PointCloud& gt);
double hausdorff(const PointCloud& pred, const PointCloud& gt);
}  // namespace reference

struct MetricReport {
    double cd = 0.0;
    double hd = 0.0;
    std::optional<double> p2f;
    std::size_t pred_points = 0;
    std::size_t gt_points = 0;
};

/// CD and HD always; P2F iff `mesh` is given.
MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, const TriangleMesh* mesh = nullptr);

/// Differentiable chamfer loss of [P x 3] predicted coordinates against a
/// fixed target. Nearest-neighbor assignments are treated as constants.
Tensor chamfer_loss(const Tensor& pred, const PointCloud& gt);

}  // namespace puxp::metrics
