#include <fmt/format.h>
#include <gtest/gtest.h>

#include "finite_diff.hpp"
#include "fixtures.hpp"
#include "puxp/error.hpp"
#include "puxp/geometry.hpp"
#include "puxp/metrics.hpp"
#include "puxp/nn.hpp"
#include "puxp/ops.hpp"
#include "puxp/units.hpp"

using namespace puxp;
using testkit::matrix;
using testkit::set_param;
using testkit::values;

namespace {

units::ExpansionSpec spec_for(units::UnitKind kind, std::size_t ratio, std::size_t channels, std::size_t k = 2) {
    auto spec = units::ExpansionSpec::for_kind(kind);
    spec.ratio = ratio;
    spec.channels = channels;
    spec.k = k;
    return spec;
}

// Zeroes every bias in the store.
void zero_biases(const ParameterStore& store) {
    for (const auto& p : store)
        if (p.name.ends_with("bias")) testkit::fill_param(store, p.name, 0.0);
}

}  // namespace

TEST(SharedMlp, IdentityLayerPassesInputThrough) {
    ParameterStore store;
    Rng rng(1);
    nn::SharedMLP mlp("m", {3, 3}, store, rng);
    set_param(store, "m.0.weight", testkit::identity(3));
    const Tensor x = testkit::random_tensor({4, 3}, 2);
    EXPECT_EQ(values(mlp.apply(x)), values(x));
}

TEST(SharedMlp, RowPermutationCommutes) {
    ParameterStore store;
    Rng rng(1);
    nn::SharedMLP mlp("m", {3, 5, 2}, store, rng);
    const Tensor x = testkit::random_tensor({4, 3}, 3);
    const IndexMatrix perm(4, 1, {2, 0, 3, 1});
    const Tensor permuted = ops::reshape(ops::gather_rows(x, perm), {4, 3});
    const Tensor a = ops::reshape(ops::gather_rows(mlp.apply(x), perm), {4, 2});
    EXPECT_EQ(values(a), values(mlp.apply(permuted)));
}

TEST(SharedMlp, MatchesHandUnrolledRows) {
    ParameterStore store;
    Rng rng(4);
    nn::SharedMLP mlp("m", {2, 3, 1}, store, rng);
    testkit::fill_param(store, "m.0.bias", 0.1);
    testkit::fill_param(store, "m.1.bias", -0.2);
    const Tensor x = testkit::random_tensor({3, 2}, 5);
    const Tensor out = mlp.apply(x);
    const Tensor w0 = store.get("m.0.weight").tensor, w1 = store.get("m.1.weight").tensor;
    for (std::size_t i = 0; i < 3; ++i) {
        double y = -0.2;
        for (std::size_t h = 0; h < 3; ++h) {
            const double pre = x.at(i, 0) * w0.at(0, h) + x.at(i, 1) * w0.at(1, h) + 0.1;
            y += std::max(pre, 0.0) * w1.at(h, 0);
        }
        EXPECT_NEAR(out.at(i, 0), y, 1e-15);
    }
}

TEST(EdgeConv, IdenticalFeaturesGiveIdenticalRows) {
    ParameterStore store;
    Rng rng(2);
    nn::EdgeConvLayer conv("e", 3, 4, store, rng);
    testkit::fill_param(store, "e.bias", 0.3);
    const Tensor x = Tensor::full({5, 3}, 0.7);
    const Tensor out = conv.apply(x, geometry::knn_bruteforce(testkit::random_cloud(5, 1), 2));
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at(i, c), out.at(0, c));
}

TEST(EdgeConv, SingleNeighborIsTheAggregation) {
    ParameterStore store;
    Rng rng(3);
    nn::EdgeConvLayer conv("e", 2, 2, store, rng, {.relu_output = false});
    const Tensor x = testkit::random_tensor({3, 2}, 9);
    const IndexMatrix idx(3, 1, {1, 2, 0});
    const Tensor out = conv.apply(x, idx);
    const Tensor wc = conv.w_center(), we = conv.w_edge();
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t j = idx(i, 0);
        for (std::size_t c = 0; c < 2; ++c) {
            double v = 0.0;
            for (std::size_t d = 0; d < 2; ++d) v += x.at(i, d) * wc.at(d, c) + (x.at(j, d) - x.at(i, d)) * we.at(d, c);
            EXPECT_NEAR(out.at(i, c), v, 1e-15);
        }
    }
}

TEST(EdgeConv, HandComputedLinearCase) {
    ParameterStore store;
    Rng rng(1);
    nn::EdgeConvLayer conv("e", 1, 1, store, rng, {.relu_output = false});
    set_param(store, "e.w_center", {2});
    set_param(store, "e.w_edge", {3});
    set_param(store, "e.bias", {0.5});
    const Tensor out = conv.apply(Tensor::from({3, 1}, {1, 2, 4}), IndexMatrix(3, 1, {1, 2, 0}));
    // 2 x_i + 3 (x_j - x_i) + 0.5
    EXPECT_EQ(values(out), (std::vector<double>{5.5, 10.5, -0.5}));
}

TEST(EdgeConv, GraphRowCountMustMatch) {
    ParameterStore store;
    Rng rng(1);
    nn::EdgeConvLayer conv("e", 2, 2, store, rng);
    EXPECT_THROW(conv.apply(testkit::random_tensor({4, 2}, 1), IndexMatrix(3, 1, {1, 2, 0})), DimensionError);
}

TEST(DuplicateWithCode, AppendsAlternatingCodes) {
    EXPECT_EQ(values(nn::duplicate_with_code(matrix({{7}}))), (std::vector<double>{7, 1, 7, -1}));
    const Tensor x = testkit::random_tensor({4, 3}, 2);
    const Tensor d = nn::duplicate_with_code(x);
    ASSERT_EQ(d.shape(), Shape({8, 4}));
    for (std::size_t r = 0; r < 8; ++r) {
        EXPECT_EQ(d.at(r, 3), r % 2 == 0 ? 1.0 : -1.0);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(d.at(r, c), x.at(r / 2, c));
    }
}

TEST(Regress, IdentityHeadReturnsFeatures) {
    ParameterStore store;
    Rng rng(1);
    nn::SharedMLP head("h", {3, 3}, store, rng);
    set_param(store, "h.0.weight", testkit::identity(3));
    const PointCloud cloud = testkit::random_cloud(5, 3);
    const PointCloud out = nn::regress_coords(head, cloud.to_tensor());
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(out[i], cloud[i]);
}

TEST(Regress, HeadMustEndInThreeColumns) {
    ParameterStore store;
    Rng rng(1);
    nn::SharedMLP head("h", {3, 2}, store, rng);
    EXPECT_THROW(nn::regress(head, testkit::random_tensor({2, 3}, 1)), ConfigError);
}

TEST(Regress, ChamferGradientThroughHeadMatchesFiniteDifferences) {
    ParameterStore store;
    Rng rng(5);
    nn::SharedMLP head("h", {2, 3}, store, rng);
    testkit::fill_param(store, "h.0.bias", 0.05);
    const Tensor x = testkit::random_tensor({4, 2}, 6, true);
    const PointCloud gt = testkit::random_cloud(4, 7);
    std::vector<Tensor> leaves{x};
    for (const auto& p : store) leaves.push_back(p.tensor);
    const auto cmp =
        testkit::compare_gradients(leaves, [&] { return metrics::chamfer_loss(nn::regress(head, x), gt); });
    EXPECT_LT(cmp.max_relative_error, 1e-4) << cmp.worst;
}

TEST(ExpansionSpec, ProEdgeShuffleRatioMustBePowerOfTwo) {
    auto spec = spec_for(units::UnitKind::proedgeshuffle, 3, 4);
    try {
        spec.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("ratio must be a power of 2"), std::string::npos);
    }
    spec.ratio = 32;
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Branch, RatioOneIdentityLayersReturnInput) {
    ParameterStore store;
    Rng rng(1);
    auto spec = spec_for(units::UnitKind::branch, 1, 3);
    const auto unit = units::make_unit(spec, store, rng);
    set_param(store, "unit.branch0.0.weight", testkit::identity(3));
    set_param(store, "unit.branch0.1.weight", testkit::identity(3));
    zero_biases(store);
    // Non-negative input passes the inner ReLU untouched.
    const Tensor x = Tensor::from({2, 3}, {0.1, 0.2, 0.3, 1.5, 0.0, 2.0});
    EXPECT_EQ(values(unit->expand({x, nullptr}).features), values(x));
}

TEST(Branch, ZeroInputGivesZeroOutputWithoutBias) {
    ParameterStore store;
    Rng rng(1);
    auto spec = spec_for(units::UnitKind::branch, 4, 3);
    spec.bias = false;
    const auto unit = units::make_unit(spec, store, rng);
    const Tensor out = unit->expand({Tensor::zeros({5, 3}), nullptr}).features;
    EXPECT_EQ(out.shape(), Shape({20, 3}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Branch, HandComputedTwoBranches) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::branch, 2, 1), store, rng);
    set_param(store, "unit.branch0.0.weight", {2});
    set_param(store, "unit.branch0.0.bias", {1});
    set_param(store, "unit.branch0.1.weight", {3});
    set_param(store, "unit.branch0.1.bias", {-1});
    set_param(store, "unit.branch1.0.weight", {-1});
    set_param(store, "unit.branch1.0.bias", {0});
    set_param(store, "unit.branch1.1.weight", {0.5});
    set_param(store, "unit.branch1.1.bias", {2});
    const Tensor out = unit->expand({Tensor::from({2, 1}, {1, -2}), nullptr}).features;
    // branch0: 3 relu(2x + 1) - 1; branch1: 0.5 relu(-x) + 2; children interleave per point.
    EXPECT_EQ(values(out), (std::vector<double>{8, 2, -1, 3}));
}

TEST(Duplicate, RoundsDoubleRows) {
    ParameterStore store;
    Rng rng(1);
    const auto two = units::make_unit(spec_for(units::UnitKind::duplicate, 2, 4), store, rng, "a");
    EXPECT_EQ(two->expand({testkit::random_tensor({3, 4}, 1), nullptr}).features.dim(0), 6u);
    const auto four = units::make_unit(spec_for(units::UnitKind::duplicate, 4, 4), store, rng, "b");
    const auto result = four->expand({testkit::random_tensor({3, 4}, 1), nullptr});
    EXPECT_EQ(result.row_trace, (std::vector<std::size_t>{3, 6, 12}));
    EXPECT_EQ(store.scalar_count("b."), 2 * (5 * 4 + 4));
}

TEST(SingleMlp, StackedIdentityCopiesParentToChildren) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::single_mlp, 2, 3), store, rng);
    std::vector<double> w(3 * 6, 0.0);
    for (std::size_t c = 0; c < 3; ++c) w[c * 6 + c] = w[c * 6 + 3 + c] = 1.0;
    set_param(store, "unit.expand.weight", w);
    zero_biases(store);
    const Tensor x = testkit::random_tensor({4, 3}, 2);
    const Tensor out = unit->expand({x, nullptr}).features;
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(i, c), x.at(i / 2, c));
}

TEST(MultilayerMlp, IdentityHiddenLayersReduceToSingle) {
    ParameterStore store;
    Rng rng(1);
    const auto single = units::make_unit(spec_for(units::UnitKind::single_mlp, 4, 3), store, rng, "s");
    const auto multi = units::make_unit(spec_for(units::UnitKind::multilayer_mlp, 4, 3), store, rng, "m");
    for (int l = 0; l < 5; ++l) set_param(store, fmt::format("m.extract.{}.weight", l), testkit::identity(3));
    zero_biases(store);
    set_param(store, "m.expand.weight", values(store.get("s.expand.weight").tensor));
    Tensor x = testkit::random_tensor({5, 3}, 3);
    x = ops::relu(x);  // identity hidden layers are exact on non-negative input
    EXPECT_EQ(values(multi->expand({x, nullptr}).features), values(single->expand({x, nullptr}).features));
}

TEST(ProgressiveMlp, TwoRoundsForRatioFour) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::progressive_mlp, 4, 4), store, rng);
    const auto result = unit->expand({testkit::random_tensor({3, 4}, 1), nullptr});
    EXPECT_EQ(result.row_trace, (std::vector<std::size_t>{3, 6, 12}));
    EXPECT_EQ(result.features.shape(), Shape({12, 4}));
}

TEST(NodeShuffle, OutputRowsAreRatioTimesInput) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::nodeshuffle, 4, 4, 3), store, rng);
    const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(9, 2), 3);
    EXPECT_EQ(unit->expand({testkit::random_tensor({9, 4}, 1), &g}).features.shape(), Shape({36, 4}));
    EXPECT_THROW(unit->expand({testkit::random_tensor({9, 4}, 1), nullptr}), ConfigError);
}

TEST(NodeShuffle, HandComputedSmallGraph) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::nodeshuffle, 2, 1, 1), store, rng);
    set_param(store, "unit.edge.w_center", {2, 1});
    set_param(store, "unit.edge.w_edge", {3, -1});
    set_param(store, "unit.edge.bias", {0.5, 0});
    const IndexMatrix g(3, 1, {1, 2, 0});
    const Tensor out = unit->expand({Tensor::from({3, 1}, {1, 2, 4}), &g}).features;
    // channel 0: 2 x_i + 3 (x_j - x_i) + 0.5 -> 5.5, 10.5, -0.5; channel 1: x_i - (x_j - x_i) -> 0, 0, 7;
    // ReLU inside h, then each point's two channels become its two children.
    EXPECT_EQ(values(out), (std::vector<double>{5.5, 0, 10.5, 0, 0, 7}));
}

TEST(NodeShuffle, PermutingPointsPermutesChildBlocks) {
    ParameterStore store;
    Rng rng(3);
    const auto unit = units::make_unit(spec_for(units::UnitKind::nodeshuffle, 2, 3, 2), store, rng);
    const PointCloud cloud = testkit::random_cloud(6, 4);
    const Tensor x = testkit::random_tensor({6, 3}, 5);
    const std::vector<std::uint32_t> perm{3, 0, 5, 1, 4, 2};  // new row i holds old row perm[i]
    std::vector<Vec3> moved;
    for (auto p : perm) moved.push_back(cloud[p]);
    const Tensor xp = ops::reshape(ops::gather_rows(x, IndexMatrix(6, 1, perm)), {6, 3});
    const IndexMatrix g = geometry::knn_bruteforce(cloud, 2), gp = geometry::knn_bruteforce(PointCloud(moved), 2);
    const Tensor a = unit->expand({x, &g}).features, b = unit->expand({xp, &gp}).features;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(b.at(2 * i + s, c), a.at(2 * perm[i] + s, c));
}

TEST(ProEdgeShuffle, RowTraceFollowsRounds) {
    ParameterStore store;
    Rng rng(1);
    const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(5, 2), 2);
    const auto two = units::make_unit(spec_for(units::UnitKind::proedgeshuffle, 2, 4), store, rng, "a");
    EXPECT_EQ(two->expand({testkit::random_tensor({5, 4}, 1), &g}).row_trace, (std::vector<std::size_t>{5, 10}));
    const auto sixteen = units::make_unit(spec_for(units::UnitKind::proedgeshuffle, 16, 4), store, rng, "b");
    EXPECT_EQ(sixteen->expand({testkit::random_tensor({5, 4}, 1), &g}).row_trace,
              (std::vector<std::size_t>{5, 10, 20, 40, 80}));
}

TEST(ProEdgeShuffle, ExpandModeGraphIsExpandIndexOfBase) {
    ParameterStore store;
    Rng rng(1);
    const IndexMatrix base = geometry::knn_bruteforce(testkit::random_cloud(4, 7), 2);
    const auto unit = units::make_unit(spec_for(units::UnitKind::proedgeshuffle, 2, 4), store, rng);
    const auto result = unit->expand({testkit::random_tensor({4, 4}, 1), &base});
    ASSERT_TRUE(result.graph.has_value());
    EXPECT_EQ(*result.graph, geometry::expand_index(base));
}

TEST(ProEdgeShuffle, FeatureKnnModeBuildsValidGraph) {
    ParameterStore store;
    Rng rng(1);
    auto spec = spec_for(units::UnitKind::proedgeshuffle, 4, 4, 3);
    spec.index_mode = units::IndexMode::feature_knn;
    const auto unit = units::make_unit(spec, store, rng);
    const IndexMatrix base = geometry::knn_bruteforce(testkit::random_cloud(8, 7), 3);
    const auto result = unit->expand({testkit::random_tensor({8, 4}, 1), &base});
    ASSERT_TRUE(result.graph.has_value());
    EXPECT_EQ(result.graph->rows(), 32u);
    EXPECT_NO_THROW(result.graph->validate_graph());
}

TEST(Regression, EveryModeReturnsOneRowPerFeatureRow) {
    for (auto mode : {units::RegressionMode::direct, units::RegressionMode::edgeconv_after,
                      units::RegressionMode::edgeconv_before}) {
        ParameterStore store;
        Rng rng(1);
        auto spec = spec_for(units::UnitKind::single_mlp, 4, 4, 3);
        spec.regression_mode = mode;
        const units::RegressionStage stage(spec, store, rng);
        const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(12, 3), 3);
        const Tensor out = stage.apply(testkit::random_tensor({12, 4}, 2), [&]() -> const IndexMatrix& { return g; });
        EXPECT_EQ(out.shape(), Shape({12, 3}));
    }
}

TEST(Regression, DirectModeNeverRequestsTheGraph) {
    ParameterStore store;
    Rng rng(1);
    auto spec = spec_for(units::UnitKind::single_mlp, 4, 4, 3);
    spec.regression_mode = units::RegressionMode::direct;
    const units::RegressionStage stage(spec, store, rng);
    int requests = 0;
    const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(8, 3), 3);
    stage.apply(testkit::random_tensor({8, 4}, 2), [&]() -> const IndexMatrix& {
        ++requests;
        return g;
    });
    EXPECT_EQ(requests, 0);
}

TEST(Regression, FusionBeforeHeadKeepsIdenticalRowsIdentical) {
    ParameterStore store;
    Rng rng(1);
    auto spec = spec_for(units::UnitKind::proedgeshuffle, 4, 4, 3);
    const units::RegressionStage stage(spec, store, rng);
    const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(8, 3), 3);
    const Tensor out = stage.apply(Tensor::full({8, 4}, 0.4), [&]() -> const IndexMatrix& { return g; });
    for (std::size_t i = 1; i < 8; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(i, c), out.at(0, c));
}

TEST(Units, EveryKindAndRatioYieldsRatioTimesRows) {
    const IndexMatrix g = geometry::knn_bruteforce(testkit::random_cloud(6, 3), 2);
    for (auto kind : units::kAllUnits) {
        for (std::size_t r : {2, 4, 8, 16}) {
            ParameterStore store;
            Rng rng(2);
            const auto unit = units::make_unit(spec_for(kind, r, 4), store, rng);
            const auto out = unit->expand({testkit::random_tensor({6, 4}, 1), &g});
            EXPECT_EQ(out.features.shape(), Shape({6 * r, 4})) << units::to_string(kind) << " r=" << r;
        }
    }
}

TEST(Units, WrongFeatureWidthThrows) {
    ParameterStore store;
    Rng rng(1);
    const auto unit = units::make_unit(spec_for(units::UnitKind::single_mlp, 2, 4), store, rng);
    EXPECT_THROW(unit->expand({testkit::random_tensor({3, 5}, 1), nullptr}), DimensionError);
}
