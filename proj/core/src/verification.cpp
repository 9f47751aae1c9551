#include "puxp/verification.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/geometry.hpp"
#include "puxp/metrics.hpp"
#include "puxp/model.hpp"
#include "puxp/nn.hpp"
#include "puxp/ops.hpp"
#include "puxp/random.hpp"
#include "puxp/units.hpp"

namespace puxp::verification {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
    std::vector<double> v(shape.numel());
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from(shape, std::move(v), requires_grad);
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return PointCloud(std::move(pts));
}

// Biases start at zero, which parks dead ReLU rows exactly on the kink.
// Checks run at a generic point instead.
std::vector<Tensor> store_leaves(const ParameterStore& store, Rng& rng) {
    std::vector<Tensor> leaves;
    for (const Parameter& p : store) {
        Tensor t = p.tensor;
        if (p.name.ends_with(".bias")) {
            for (double& v : t.mutable_data()) v = rng.uniform(-0.5, 0.5);
        }
        leaves.push_back(t);
    }
    return leaves;
}

struct Owned {
    ParameterStore store;
    std::unique_ptr<units::ExpansionUnit> unit;
    std::unique_ptr<units::RegressionStage> stage;
    std::vector<nn::EdgeConvLayer> edge;
    std::vector<nn::SharedMLP> mlp;
    std::unique_ptr<UpsamplingModel> model;
    IndexMatrix graph;
    PointCloud cloud;
};

}  // namespace

std::vector<GradCase> gradient_cases(std::uint64_t seed, double min_margin) {
    using Factory = std::function<GradCase(Rng&)>;
    std::vector<std::pair<std::string, Factory>> factories;

    auto unary = [&](std::string name, std::function<Tensor(Rng&)> input, std::function<Tensor(const Tensor&)> f) {
        factories.emplace_back(name, [name, input, f](Rng& rng) {
            const Tensor x = input(rng);
            const Tensor w = random_tensor(f(x).shape(), rng, false);
            return GradCase{name, {x}, [x, w, f] { return ops::sum(ops::mul(f(x), w)); }, nullptr};
        });
    };
    auto binary = [&](std::string name, Shape sa, Shape sb, std::function<Tensor(const Tensor&, const Tensor&)> f) {
        factories.emplace_back(name, [name, sa, sb, f](Rng& rng) {
            const Tensor a = random_tensor(sa, rng), b = random_tensor(sb, rng);
            const Tensor w = random_tensor(f(a, b).shape(), rng, false);
            return GradCase{name, {a, b}, [a, b, w, f] { return ops::sum(ops::mul(f(a, b), w)); }, nullptr};
        });
    };
    auto plain = [](Shape shape) { return [shape](Rng& rng) { return random_tensor(shape, rng); }; };

    binary("ops.matmul", {4, 3}, {3, 2}, ops::matmul);
    binary("ops.add", {3, 4}, {3, 4}, ops::add);
    binary("ops.sub", {3, 4}, {3, 4}, ops::sub);
    binary("ops.mul", {3, 4}, {3, 4}, ops::mul);
    unary("ops.scale", plain({3, 4}), [](const Tensor& x) { return ops::scale(x, -2.5); });
    binary("ops.add_bias.rank2", {4, 3}, {3}, ops::add_bias);
    binary("ops.add_bias.rank3", {2, 3, 4}, {4}, ops::add_bias);
    binary("ops.add_per_row", {3, 2, 4}, {3, 4}, ops::add_per_row);
    unary("ops.relu", plain({4, 4}), ops::relu);
    binary("ops.concat_last", {4, 2}, {4, 3}, ops::concat_last);
    {
        // Repeated indices exercise the scatter-add in backward.
        const IndexMatrix idx(4, 3, {0, 1, 1, 4, 4, 4, 2, 0, 3, 1, 2, 0});
        unary("ops.gather_rows", plain({5, 3}), [idx](const Tensor& x) { return ops::gather_rows(x, idx); });
    }
    unary("ops.max_over_k", plain({3, 4, 2}), ops::max_over_k);
    {
        const IndexMatrix idx(4, 3, {1, 2, 3, 0, 4, 2, 3, 1, 0, 2, 4, 1});
        unary("ops.gather_max", plain({5, 3}), [idx](const Tensor& x) { return ops::gather_max(x, idx); });
    }
    unary("ops.reshape", plain({2, 6}), [](const Tensor& x) { return ops::reshape(x, {3, 4}); });
    unary("ops.shuffle_expand", plain({3, 8}), [](const Tensor& x) { return ops::shuffle_expand(x, 4); });
    unary("ops.shuffle_collapse", plain({8, 2}), [](const Tensor& x) { return ops::shuffle_collapse(x, 4); });
    unary("ops.repeat_rows", plain({3, 2}), [](const Tensor& x) { return ops::repeat_rows(x, 3); });
    unary("ops.sum", plain({3, 4}), ops::sum);
    unary("ops.mean", plain({3, 4}), ops::mean);
    factories.emplace_back("metrics.chamfer_loss", [](Rng& rng) {
        const PointCloud gt = random_cloud(5, rng);
        const Tensor pred = random_tensor({6, 3}, rng);
        return GradCase{"metrics.chamfer_loss", {pred}, [pred, gt] { return metrics::chamfer_loss(pred, gt); }, nullptr};
    });
    unary("nn.duplicate_with_code", plain({4, 3}), nn::duplicate_with_code);

    // Modules with registered parameters; the input features are leaves too.
    const std::size_t n = 8, c = 4, k = 3;
    using Build = std::function<void(Owned&, Rng&)>;
    using Apply = std::function<Tensor(const Owned&, const Tensor&)>;
    auto module = [&](std::string name, Shape input, Build build, Apply f) {
        factories.emplace_back(name, [=](Rng& rng) {
            auto owned = std::make_shared<Owned>();
            build(*owned, rng);
            owned->graph = geometry::knn_accelerated(random_cloud(input[0], rng), k);
            auto leaves = store_leaves(owned->store, rng);
            const Tensor x = random_tensor(input, rng);
            leaves.push_back(x);
            const Tensor w = random_tensor(f(*owned, x).shape(), rng, false);
            return GradCase{name, std::move(leaves), [owned, x, w, f] { return ops::sum(ops::mul(f(*owned, x), w)); },
                            owned};
        });
    };
    module("nn.shared_mlp", {6, 3},
           [](Owned& o, Rng& rng) { o.mlp.emplace_back("mlp", std::vector<std::size_t>{3, 4, 4, 2}, o.store, rng); },
           [](const Owned& m, const Tensor& x) { return m.mlp[0].apply(x); });
    for (std::size_t depth : {1, 2}) {
        module(fmt::format("nn.edgeconv.depth{}", depth), {n, c},
               [=](Owned& o, Rng& rng) {
                   o.edge.emplace_back("edge", c, 3, o.store, rng, nn::EdgeConvOptions{.depth = depth});
               },
               [](const Owned& m, const Tensor& x) { return m.edge[0].apply(x, m.graph); });
    }
    auto unit_case = [&](std::string name, units::ExpansionSpec spec) {
        spec.channels = c;
        spec.k = k;
        spec.ratio = 4;
        module(std::move(name), {n, c}, [spec](Owned& o, Rng& rng) { o.unit = units::make_unit(spec, o.store, rng); },
               [](const Owned& m, const Tensor& x) { return m.unit->expand({x, &m.graph}).features; });
    };
    for (auto kind : units::kAllUnits) {
        unit_case(fmt::format("units.{}", units::to_string(kind)), units::ExpansionSpec::for_kind(kind));
    }
    {
        auto spec = units::ExpansionSpec::for_kind(units::UnitKind::proedgeshuffle);
        spec.index_mode = units::IndexMode::feature_knn;
        unit_case("units.proedgeshuffle.feature_knn", spec);
    }
    for (auto mode : {units::RegressionMode::direct, units::RegressionMode::edgeconv_after,
                      units::RegressionMode::edgeconv_before}) {
        auto spec = units::ExpansionSpec::for_kind(units::UnitKind::single_mlp);
        spec.channels = c;
        spec.k = k;
        spec.head_hidden = 4;
        spec.regression_mode = mode;
        module(fmt::format("units.regression.{}", units::to_string(mode)), {n, c},
               [spec](Owned& o, Rng& rng) { o.stage = std::make_unique<units::RegressionStage>(spec, o.store, rng); },
               [](const Owned& m, const Tensor& x) {
                   return m.stage->apply(x, [&m]() -> const IndexMatrix& { return m.graph; });
               });
    }
    factories.emplace_back("model.forward_chamfer", [=](Rng& rng) {
        ModelSpec spec;
        spec.backbone = {BackboneKind::edgeconv_stack, 1, c};
        spec.unit = units::ExpansionSpec::for_kind(units::UnitKind::proedgeshuffle);
        spec.unit.channels = c;
        spec.unit.ratio = 2;
        spec.unit.k = k;
        spec.unit.head_hidden = 4;
        auto o = std::make_shared<Owned>();
        o->model = std::make_unique<UpsamplingModel>(spec, rng.next_u64());
        o->cloud = random_cloud(n, rng);
        o->graph = geometry::knn_accelerated(o->cloud, k);
        const PointCloud gt = random_cloud(2 * n, rng);
        auto leaves = store_leaves(o->model->params(), rng);
        return GradCase{"model.forward_chamfer", std::move(leaves),
                        [o, gt] { return metrics::chamfer_loss(o->model->forward(o->cloud, &o->graph), gt); }, o};
    });

    // Redraw each case until its evaluation point sits at least `min_margin`
    // away from every kink and every discrete switch.
    constexpr std::size_t kMaxAttempts = 1000;
    std::vector<GradCase> cases;
    for (std::size_t i = 0; i < factories.size(); ++i) {
        bool accepted = false;
        for (std::size_t attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
            Rng rng(Rng::mix(seed ^ Rng::mix((i << 20) | attempt)));
            GradCase gc = factories[i].second(rng);
            ops::MarginProbe probe;
            gc.loss();
            if (probe.margin() >= min_margin) {
                cases.push_back(std::move(gc));
                accepted = true;
            }
        }
        if (!accepted) {
            throw NumericalError(fmt::format("no generic evaluation point found for gradient case '{}'",
                                             factories[i].first));
        }
    }
    return cases;
}

SuiteResult run_gradcheck(const GradcheckOptions& options) {
    SuiteResult result;
    for (GradCase& gc : gradient_cases(options.seed, options.min_margin)) {
        if (options.only && gc.name != *options.only) continue;
        ++result.cases;
        for (Tensor& leaf : gc.leaves) leaf.zero_grad();
        backward(gc.loss());
        std::vector<std::vector<double>> analytic;
        for (const Tensor& leaf : gc.leaves) {
            analytic.push_back(leaf.grad());
        }
        bool failed = false;
        for (std::size_t l = 0; l < gc.leaves.size() && !failed; ++l) {
            auto data = gc.leaves[l].mutable_data();
            for (std::size_t e = 0; e < data.size() && !failed; ++e) {
                const double original = data[e];
                data[e] = original + options.step;
                const double up = gc.loss().item();
                data[e] = original - options.step;
                const double down = gc.loss().item();
                data[e] = original;
                const double numeric = (up - down) / (2.0 * options.step);
                const double a = analytic[l][e];
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
                ++result.checks;
                if (!(rel <= options.tolerance)) {
                    failed = true;
                    result.failures.push_back(
                        {gc.name,
                         fmt::format("leaf {} element {}: analytic {:.12g}, numeric {:.12g}, relative error {:.3g}", l,
                                     e, a, numeric, rel),
                         fmt::format("suite=gradcheck\nseed={}\ncase={}\nleaf={}\nelement={}\nstep={}\ntolerance={}\n"
                                     "min_margin={}\n",
                                     options.seed, gc.name, l, e, options.step, options.tolerance,
                                     options.min_margin)});
                }
            }
        }
    }
    if (options.only && result.cases == 0) throw ConfigError(fmt::format("no gradient case named '{}'", *options.only));
    return result;
}

namespace {

struct KnnCase {
    PointCloud cloud;
    std::size_t k;
};

KnnCase knn_case(const KnncheckOptions& options, std::size_t index) {
    Rng rng(Rng::mix(options.seed ^ Rng::mix(index)));
    const std::size_t k = options.ks[index % options.ks.size()];
    if (options.max_points <= k) throw ConfigError("knncheck max_points must exceed every k");
    const std::size_t n = k + 1 + rng.below(options.max_points - k);
    const bool snapped = index % 2 == 1;
    std::vector<Vec3> pts(n);
    for (auto& p : pts) {
        if (snapped) {
            p = {0.25 * double(rng.below(5)), 0.25 * double(rng.below(5)), 0.25 * double(rng.below(5))};
        } else {
            p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        }
    }
    return {PointCloud(std::move(pts)), k};
}

}  // namespace

SuiteResult run_knncheck(const KnncheckOptions& options) {
    if (options.ks.empty()) throw ConfigError("knncheck needs at least one k");
    SuiteResult result;
    for (std::size_t i = 0; i < options.clouds; ++i) {
        if (options.only && *options.only != i) continue;
        ++result.cases;
        const KnnCase kc = knn_case(options, i);
        const IndexMatrix fast = geometry::knn_accelerated(kc.cloud, kc.k);
        const IndexMatrix slow = geometry::knn_bruteforce(kc.cloud, kc.k);
        ++result.checks;
        if (fast == slow) continue;
        std::size_t row = 0;
        while (row < slow.rows() && std::equal(fast.row(row).begin(), fast.row(row).end(), slow.row(row).begin())) {
            ++row;
        }
        std::string points;
        for (const Vec3& p : kc.cloud.points()) points += fmt::format("# {:.17g} {:.17g} {:.17g}\n", p.x, p.y, p.z);
        result.failures.push_back(
            {fmt::format("cloud {}", i),
             fmt::format("n={} k={}: rows differ first at row {}", kc.cloud.size(), kc.k, row),
             fmt::format("suite=knncheck\nseed={}\ncloud={}\nn={}\nk={}\n# points:\n{}", options.seed, i,
                         kc.cloud.size(), kc.k, points)});
    }
    if (options.only && result.cases == 0) throw ConfigError(fmt::format("cloud index {} out of range", *options.only));
    return result;
}

}  // namespace puxp::verification
