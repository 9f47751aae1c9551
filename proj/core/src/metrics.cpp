#include "puxp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/ops.hpp"
#include "puxp/kdtree.hpp"

namespace puxp::metrics {
namespace {

void require_points(const PointCloud& cloud, const char* what) {
    if (cloud.empty()) throw ConfigError(fmt::format("{} point cloud is empty", what));
}

// Squared distance from every point of `from` to its nearest point in `to`.
std::vector<double> nearest_sq_tree(const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to.points());
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = tree.nearest(from[i]).dist2;
    return d;
}

std::vector<double> nearest_sq_brute(const PointCloud& from, const PointCloud& to) {
    std::vector<double> d(from.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < from.size(); ++i) {
        for (const Vec3& q : to) d[i] = std::min(d[i], squared_distance(from[i], q));
    }
    return d;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

double chamfer(const PointCloud& pred, const PointCloud& gt) {
    require_points(pred, "predicted");
    require_points(gt, "ground-truth");
    return mean(nearest_sq_tree(pred, gt)) + mean(nearest_sq_tree(gt, pred));
}

double hausdorff(const PointCloud& pred, const PointCloud& gt) {
    require_points(pred, "predicted");
    require_points(gt, "ground-truth");
    return std::sqrt(std::max(max_of(nearest_sq_tree(pred, gt)), max_of(nearest_sq_tree(gt, pred))));
}

double point_to_face(const PointCloud& pred, const TriangleMesh& mesh) {
    require_points(pred, "predicted");
    if (mesh.faces().empty()) throw ConfigError("point_to_face: mesh has no faces");
    double total = 0.0;
    for (const Vec3& p : pred) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < mesh.faces().size(); ++f) {
            best = std::min(best, geometry::point_triangle_distance(p, mesh.triangle(f)));
        }
        total += best;
    }
    return total / static_cast<double>(pred.size());
}

namespace reference {

double chamfer(const PointCloud& pred, const PointCloud& gt) {
    require_points(pred, "predicted");
    require_points(gt, "ground-truth");
    return mean(nearest_sq_brute(pred, gt)) + mean(nearest_sq_brute(gt, pred));
}

double hausdorff(const PointCloud& pred, const PointCloud& gt) {
    require_points(pred, "predicted");
    require_points(gt, "ground-truth");
    return std::sqrt(std::max(max_of(nearest_sq_brute(pred, gt)), max_of(nearest_sq_brute(gt, pred))));
}

}  // namespace reference

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt, const TriangleMesh* mesh) {
    MetricReport r;
    r.cd = chamfer(pred, gt);
    r.hd = hausdorff(pred, gt);
    if (mesh) r.p2f = point_to_face(pred, *mesh);
    r.pred_points = pred.size();
    r.gt_points = gt.size();
    return r;
}

Tensor chamfer_loss(const Tensor& pred, const PointCloud& gt) {
    if (pred.rank() != 2 || pred.dim(1) != 3 || pred.dim(0) == 0) {
        throw DimensionError(fmt::format("chamfer_loss expects [P x 3] predictions, got {}", pred.shape().str()));
    }
    require_points(gt, "ground-truth");
    const std::size_t np = pred.dim(0), nq = gt.size();
    auto pd = pred.data();
    std::vector<Vec3> p(np);
    for (std::size_t i = 0; i < np; ++i) p[i] = {pd[3 * i], pd[3 * i + 1], pd[3 * i + 2]};

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // The trees order ties by index, so the chosen partners are the ones a
    // first-minimum linear scan would pick.
    std::vector<double> best_p(np, kInf), best_q(nq, kInf);
    std::vector<std::uint32_t> arg_p(np, 0), arg_q(nq, 0);
    {
        const KdTree gt_tree(gt.points());
        for (std::size_t i = 0; i < np; ++i) {
            const auto hit = gt_tree.nearest(p[i]);
            best_p[i] = hit.dist2;
            arg_p[i] = hit.index;
        }
        const KdTree pred_tree(p);
        for (std::size_t j = 0; j < nq; ++j) {
            const auto hit = pred_tree.nearest(gt[j]);
            best_q[j] = hit.dist2;
            arg_q[j] = hit.index;
        }
    }
    if (ops::MarginProbe::active()) {
        // Gap between the chosen and the runner-up partner, in distance units.
        for (std::size_t i = 0; i < np; ++i) {
            for (std::size_t j = 0; j < nq; ++j) {
                const double d = squared_distance(p[i], gt[j]);
                if (j != arg_p[i] && d != best_p[i]) ops::MarginProbe::record(std::sqrt(d) - std::sqrt(best_p[i]));
                if (i != arg_q[j] && d != best_q[j]) ops::MarginProbe::record(std::sqrt(d) - std::sqrt(best_q[j]));
            }
        }
    }
    double sp = 0.0, sq = 0.0;
    for (double d : best_p) sp += d;
    for (double d : best_q) sq += d;
    const double loss = sp / static_cast<double>(np) + sq / static_cast<double>(nq);
    if (!std::isfinite(loss)) throw NumericalError("chamfer loss is not finite");

    std::vector<Vec3> targets(gt.begin(), gt.end());
    return Tensor::make_result(
        Shape{1}, {loss}, {pred},
        [p = std::move(p), targets = std::move(targets), arg_p = std::move(arg_p), arg_q = std::move(arg_q)](
            detail::Node& self) {
            auto& g = self.inputs[0]->ensure_grad();
            const double up = self.grad[0];
            const double wp = 2.0 * up / static_cast<double>(p.size());
            const double wq = 2.0 * up / static_cast<double>(targets.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
                const Vec3 d = p[i] - targets[arg_p[i]];
                g[3 * i] += wp * d.x;
                g[3 * i + 1] += wp * d.y;
                g[3 * i + 2] += wp * d.z;
            }
            for (std::size_t j = 0; j < targets.size(); ++j) {
                const std::size_t i = arg_q[j];
                const Vec3 d = p[i] - targets[j];
                g[3 * i] += wq * d.x;
                g[3 * i + 1] += wq * d.y;
                g[3 * i + 2] += wq * d.z;
            }
        });
}

}  // namespace puxp::metrics
