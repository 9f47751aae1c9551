#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "puxp/error.hpp"
#include "puxp/pipeline.hpp"
#include "puxp/shapes.hpp"

using namespace puxp;
using pipeline::TrainConfig;

namespace {

TrainConfig small_config(units::UnitKind kind = units::UnitKind::proedgeshuffle, std::size_t steps = 30) {
    TrainConfig cfg;
    cfg.model.backbone.width = 8;
    cfg.model.unit = units::ExpansionSpec::for_kind(kind);
    cfg.model.unit.channels = 8;
    cfg.model.unit.k = 4;
    cfg.model.unit.ratio = 2;
    cfg.model.unit.head_hidden = 8;
    cfg.steps = steps;
    cfg.data.shapes = {shapes::ShapeKind::sphere};
    cfg.data.n = 32;
    return cfg;
}

pipeline::Dataset dataset_for(const TrainConfig& cfg) {
    return pipeline::make_dataset(cfg.data, cfg.model.unit.ratio, cfg.model.unit.k);
}

}  // namespace

TEST(Shapes, SphereSamplesLieOnUnitSphere) {
    const auto pair = shapes::sample_pair(shapes::SyntheticShape::standard(shapes::ShapeKind::sphere), 64, 4, 3);
    for (const Vec3& p : pair.gt.points()) EXPECT_NEAR(std::sqrt(dot(p, p)), 1.0, 1e-12);
}

TEST(Shapes, EveryKindSamplesOnItsSurface) {
    for (auto kind : shapes::kAllShapes) {
        const auto shape = shapes::SyntheticShape::standard(kind);
        const auto pair = shapes::sample_pair(shape, 32, 4, 1);
        for (const Vec3& p : pair.gt.points()) EXPECT_LT(shape.surface_residual(p), 1e-12) << shapes::to_string(kind);
    }
}

TEST(Shapes, CountsAreExact) {
    const auto pair = shapes::sample_pair(shapes::SyntheticShape::standard(shapes::ShapeKind::torus), 40, 4, 9);
    EXPECT_EQ(pair.input.size(), 40u);
    EXPECT_EQ(pair.gt.size(), 160u);
}

TEST(Shapes, SameSeedSamePair) {
    const auto shape = shapes::SyntheticShape::standard(shapes::ShapeKind::cylinder);
    const auto a = shapes::sample_pair(shape, 16, 2, 5), b = shapes::sample_pair(shape, 16, 2, 5);
    EXPECT_TRUE(std::equal(a.input.begin(), a.input.end(), b.input.begin()));
    EXPECT_TRUE(std::equal(a.gt.begin(), a.gt.end(), b.gt.begin()));
    const auto c = shapes::sample_pair(shape, 16, 2, 6);
    EXPECT_FALSE(std::equal(a.gt.begin(), a.gt.end(), c.gt.begin()));
}

TEST(Shapes, InvalidParametersAndSizesThrow) {
    EXPECT_THROW((shapes::SyntheticShape{shapes::ShapeKind::torus, 0.5, 1.0}).validate(), ConfigError);
    EXPECT_THROW((shapes::SyntheticShape{shapes::ShapeKind::sphere, -1.0}).validate(), ConfigError);
    EXPECT_THROW(shapes::sample_pair(shapes::SyntheticShape::standard(shapes::ShapeKind::sphere), 4, 2, 1), ConfigError);
}

TEST(Train, ZeroLearningRateGivesConstantCurve) {
    TrainConfig cfg = small_config(units::UnitKind::proedgeshuffle, 10);
    cfg.adam.lr = 0.0;
    const auto result = pipeline::train(cfg, dataset_for(cfg));
    ASSERT_EQ(result.losses.size(), 10u);
    for (double l : result.losses) EXPECT_EQ(l, result.losses.front());
}

TEST(Train, SameSeedIsBitwiseDeterministic) {
    const TrainConfig cfg = small_config(units::UnitKind::nodeshuffle, 15);
    const auto data = dataset_for(cfg);
    const auto a = pipeline::train(cfg, data), b = pipeline::train(cfg, data);
    EXPECT_EQ(a.losses, b.losses);
    for (const auto& p : a.model.params())
        EXPECT_EQ(testkit::values(p.tensor), testkit::values(b.model.params().get(p.name).tensor)) << p.name;
}

TEST(Train, CallbackSeesEveryStep) {
    const TrainConfig cfg = small_config(units::UnitKind::branch, 7);
    std::vector<std::size_t> seen;
    const auto result = pipeline::train(cfg, dataset_for(cfg), [&](std::size_t step, double) { seen.push_back(step); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(TrainConfig, RoundTripsThroughKeyValueText) {
    TrainConfig cfg = small_config(units::UnitKind::progressive_mlp);
    cfg.seed = 42;
    cfg.adam.lr = 0.005;
    const TrainConfig back = TrainConfig::from_config(KeyValueConfig::parse(cfg.to_config().str()));
    EXPECT_EQ(back.to_config(), cfg.to_config());
}

TEST(TrainConfig, CosineScheduleDecaysFromInitialRate) {
    TrainConfig cfg = small_config();
    cfg.steps = 100;
    EXPECT_EQ(cfg.lr_at(0), cfg.adam.lr);
    EXPECT_EQ(cfg.lr_at(99), cfg.adam.lr);
    cfg.lr_schedule = pipeline::LrSchedule::cosine;
    EXPECT_EQ(cfg.lr_at(0), cfg.adam.lr);
    EXPECT_NEAR(cfg.lr_at(50), 0.5 * cfg.adam.lr, 1e-18);
    EXPECT_LT(cfg.lr_at(99), 1e-3 * cfg.adam.lr);
    const TrainConfig back = TrainConfig::from_config(cfg.to_config());
    EXPECT_EQ(back.lr_schedule, pipeline::LrSchedule::cosine);

    auto bad = cfg.to_config();
    bad.set("train.lr_schedule", "step");
    EXPECT_THROW(TrainConfig::from_config(bad), ConfigError);
}

TEST(TrainConfig, UnknownKeysAndSectionsAreRejected) {
    auto cfg = small_config().to_config();
    cfg.set("train.stepz", "3");
    EXPECT_THROW(TrainConfig::from_config(cfg), ConfigError);
    auto other = small_config().to_config();
    other.set("optimizer.lr", "3");
    EXPECT_THROW(TrainConfig::from_config(other), ConfigError);
}

TEST(Evaluate, GroundTruthAgainstItselfIsZero) {
    const TrainConfig cfg = small_config();
    pipeline::DataSpec data = cfg.data;
    data.shapes = {shapes::ShapeKind::box_surface, shapes::ShapeKind::sphere};
    for (const auto& sample : pipeline::make_dataset(data, 2, 0)) {
        const auto& pair = sample.pair;
        const auto report = metrics::evaluate(pair.gt, pair.gt, &pair.mesh);
        EXPECT_EQ(report.cd, 0.0);
        EXPECT_EQ(report.hd, 0.0);
        const auto shape = shapes::SyntheticShape::standard(sample.name.starts_with("box") ? shapes::ShapeKind::box_surface
                                                                                          : shapes::ShapeKind::sphere);
        // Exact for the box, bounded by the tessellation error for curved surfaces.
        EXPECT_LE(*report.p2f, shape.tessellation_error(data.mesh_resolution) + 1e-12) << sample.name;
        if (sample.name.starts_with("box")) EXPECT_LT(*report.p2f, 1e-12);
    }
}

TEST(Evaluate, OneRowPerSamplePlusAggregate) {
    TrainConfig cfg = small_config(units::UnitKind::single_mlp, 1);
    cfg.data.shapes = {shapes::ShapeKind::sphere, shapes::ShapeKind::torus};
    cfg.data.samples_per_shape = 2;
    const auto data = dataset_for(cfg);
    const auto rows = pipeline::evaluate(UpsamplingModel(cfg.model, 1), data);
    ASSERT_EQ(rows.size(), data.size() + 1);
    EXPECT_EQ(rows.back().name, "aggregate");
}

TEST(Evaluate, TrainedBeatsUntrained) {
    const TrainConfig cfg = small_config(units::UnitKind::proedgeshuffle, 150);
    const auto data = dataset_for(cfg);
    const auto trained = pipeline::train(cfg, data);
    const UpsamplingModel untrained(cfg.model, Rng::mix(cfg.seed));
    EXPECT_LT(pipeline::evaluate(trained.model, data).back().report.cd,
              pipeline::evaluate(untrained, data).back().report.cd);
}

TEST(Compare, IdenticalRunsGiveIdenticalRows) {
    const TrainConfig cfg = small_config(units::UnitKind::duplicate, 5);
    pipeline::CompareOptions options;
    options.seeds = {1, 2};
    options.jobs = 2;
    const auto rows = pipeline::compare_units({{"a", cfg}, {"b", cfg}}, options);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].cd, rows[1].cd);
    EXPECT_EQ(rows[0].hd, rows[1].hd);
    EXPECT_EQ(rows[0].p2f, rows[1].p2f);
    EXPECT_EQ(rows[0].seeds, 2u);
}

TEST(Compare, RowsFollowRequestOrder) {
    pipeline::CompareOptions options;
    options.seeds = {1};
    options.jobs = 3;
    const auto rows = pipeline::compare_units({{"z", small_config(units::UnitKind::nodeshuffle, 3)},
                                               {"a", small_config(units::UnitKind::branch, 3)},
                                               {"m", small_config(units::UnitKind::single_mlp, 3)}},
                                              options);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].label, "z");
    EXPECT_EQ(rows[1].label, "a");
    EXPECT_EQ(rows[2].label, "m");
    EXPECT_EQ(rows[1].unit, "branch");
}

TEST(Compare, MismatchedBudgetsAreRefused) {
    pipeline::CompareOptions options;
    options.seeds = {1};
    EXPECT_THROW(pipeline::compare_units({{"a", small_config(units::UnitKind::branch, 5)},
                                          {"b", small_config(units::UnitKind::branch, 6)}},
                                         options),
                 ConfigError);
    TrainConfig other_data = small_config(units::UnitKind::branch, 5);
    other_data.data.n = 40;
    EXPECT_THROW(pipeline::compare_units({{"a", small_config(units::UnitKind::branch, 5)}, {"b", other_data}}, options),
                 ConfigError);
}

TEST(Compare, PresetsCoverUnitsAndAblationMatrix) {
    const TrainConfig base = small_config();
    const auto units = pipeline::units_preset(base);
    ASSERT_EQ(units.size(), 7u);
    for (const auto& run : units) EXPECT_EQ(run.config.model.unit.ratio, base.model.unit.ratio);
    const auto ablation = pipeline::ablation_preset(base);
    ASSERT_EQ(ablation.size(), 6u);
    EXPECT_EQ(ablation.front().label, "proedgeshuffle/feature_knn/direct");
}

TEST(Compare, RunsFromConfigApplyOverrides) {
    auto cfg = small_config().to_config();
    cfg.set("run.first.unit.kind", "branch");
    cfg.set("run.second.unit.kind", "nodeshuffle");
    cfg.set("compare.seeds", "4,5");
    cfg.set("compare.runs", "second,first");
    pipeline::CompareOptions options;
    const auto runs = pipeline::runs_from_config(cfg, options);
    ASSERT_EQ(runs.size(), 2u);
    EXPECT_EQ(runs[0].label, "second");
    EXPECT_EQ(runs[0].config.model.unit.kind, units::UnitKind::nodeshuffle);
    EXPECT_EQ(runs[1].config.model.unit.kind, units::UnitKind::branch);
    EXPECT_EQ(options.seeds, (std::vector<std::uint64_t>{4, 5}));
}
