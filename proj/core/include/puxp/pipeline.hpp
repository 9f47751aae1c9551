#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "puxp/config.hpp"
#include "puxp/metrics.hpp"
#include "puxp/model.hpp"
#include "puxp/optim.hpp"
#include "puxp/shapes.hpp"

namespace puxp::pipeline {

/// Which synthetic samples to train or evaluate on.
struct DataSpec {
    std::vector<shapes::ShapeKind> shapes{std::begin(shapes::kAllShapes), std::end(shapes::kAllShapes)};
    std::size_t n = 256;
    std::size_t samples_per_shape = 1;
    std::uint64_t seed = 1;
    std::size_t mesh_resolution = 48;
};

struct Sample {
    std::string name;
    shapes::SamplePair pair;
    std::optional<IndexMatrix> base_graph;
};

using Dataset = std::vector<Sample>;

/// One sample per (shape, repetition), seeded from data.seed. Base graphs
/// are precomputed when `k` > 0.
Dataset make_dataset(const DataSpec& data, std::size_t ratio, std::size_t k);

/// Learning-rate schedule over the training run. Cosine decays from
/// `adam.lr` at step 0 towards zero at the last step.
enum class LrSchedule { constant, cosine };

struct TrainConfig {
    ModelSpec model;
    AdamConfig adam;
    LrSchedule lr_schedule = LrSchedule::constant;
    std::size_t steps = 2000;
    std::size_t batch = 1;
    std::uint64_t seed = 1;
    DataSpec data;

    void validate() const;

    /// `train.*`, `data.*` plus the model's `backbone.*` / `unit.*` keys.
    KeyValueConfig to_config() const;
    /// Strict: unknown keys in any known section, or unknown sections, throw.
    static TrainConfig from_config(const KeyValueConfig& cfg);

    /// Learning rate used for the update at `step`.
    double lr_at(std::size_t step) const;
};

struct TrainResult {
    UpsamplingModel model;
    std::vector<double> losses;  // one per step, before that step's update
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Minimizes the mean chamfer loss over each batch with Adam. Batches cycle
/// through the dataset in order. Throws NumericalError naming the step on
/// divergence.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const StepCallback& on_step = {});

struct EvalRow {
    std::string name;
    metrics::MetricReport report;
};

/// One row per sample followed by an "aggregate" row holding the means.
std::vector<EvalRow> evaluate(const UpsamplingModel& model, const Dataset& dataset);

struct ComparisonRow {
    std::string label;
    std::string backbone;
    std::string unit;
    std::string index_mode;
    std::string regression_mode;
    std::size_t seeds = 0;
    std::size_t steps = 0;
    std::size_t backbone_params = 0;
    std::size_t unit_params = 0;
    std::size_t head_params = 0;
    double cd = 0.0;
    double hd = 0.0;
    double p2f = 0.0;
};

struct CompareRun {
    std::string label;
    TrainConfig config;
};

struct CompareOptions {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    /// Held-out evaluation data; same shapes, different sampling seed.
    std::uint64_t eval_seed_offset = 1000;
    std::size_t jobs = 1;
};

/// Trains and evaluates every run under every seed and averages the
/// aggregate metrics per run. Refuses runs with different step budgets,
/// data or backbone parameter counts. Rows follow the request order.
std::vector<ComparisonRow> compare_units(const std::vector<CompareRun>& runs, const CompareOptions& options);

/// Reads `compare.seeds`, `compare.jobs` and `compare.eval_seed_offset`
/// into `options`; other `compare.` keys except `compare.runs` throw.
void apply_compare_options(const KeyValueConfig& cfg, CompareOptions& options);

/// Runs declared in a flat config: shared keys at top level, per-run
/// overrides under `run.<label>.`; `compare.seeds` and `compare.jobs` set options.
std::vector<CompareRun> runs_from_config(const KeyValueConfig& cfg, CompareOptions& options);

/// The seven units under one backbone, in table order.
std::vector<CompareRun> units_preset(const TrainConfig& base);
/// proedgeshuffle over index_mode x regression_mode.
std::vector<CompareRun> ablation_preset(const TrainConfig& base);

}  // namespace puxp::pipeline
