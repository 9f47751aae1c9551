#include "puxp/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/geometry.hpp"
#include "puxp/ops.hpp"

namespace puxp::pipeline {
namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

std::string shape_list(const std::vector<shapes::ShapeKind>& kinds) {
    std::vector<std::string> names;
    for (auto k : kinds) names.emplace_back(shapes::to_string(k));
    return join(names);
}

KeyValueConfig data_config(const DataSpec& d) {
    KeyValueConfig c;
    c.set("data.shapes", shape_list(d.shapes));
    c.set("data.n", std::to_string(d.n));
    c.set("data.samples_per_shape", std::to_string(d.samples_per_shape));
    c.set("data.seed", std::to_string(d.seed));
    c.set("data.mesh_resolution", std::to_string(d.mesh_resolution));
    return c;
}

}  // namespace

Dataset make_dataset(const DataSpec& data, std::size_t ratio, std::size_t k) {
    if (data.shapes.empty()) throw ConfigError("dataset needs at least one shape");
    if (data.samples_per_shape == 0) throw ConfigError("data.samples_per_shape must be positive");
    Dataset out;
    for (std::size_t s = 0; s < data.shapes.size(); ++s) {
        const auto shape = shapes::SyntheticShape::standard(data.shapes[s]);
        for (std::size_t rep = 0; rep < data.samples_per_shape; ++rep) {
            const std::uint64_t seed = Rng::mix(data.seed ^ Rng::mix((s << 16) | rep));
            Sample sample{fmt::format("{}#{}", shapes::to_string(data.shapes[s]), rep),
                          shapes::sample_pair(shape, data.n, ratio, seed, data.mesh_resolution), std::nullopt};
            if (k > 0) sample.base_graph = geometry::knn_accelerated(sample.pair.input, k);
            out.push_back(std::move(sample));
        }
    }
    return out;
}

void TrainConfig::validate() const {
    model.validate();
    if (steps == 0) throw ConfigError("train.steps must be positive");
    if (batch == 0) throw ConfigError("train.batch must be positive");
    if (!(adam.lr >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    if (data.n <= model.unit.k && model.needs_base_graph()) {
        throw ConfigError(fmt::format("data.n = {} must exceed k = {}", data.n, model.unit.k));
    }
}

KeyValueConfig TrainConfig::to_config() const {
    KeyValueConfig c = model.to_config();
    c.merge(data_config(data));
    c.set("train.lr", fmt::format("{}", adam.lr));
    c.set("train.beta1", fmt::format("{}", adam.beta1));
    c.set("train.beta2", fmt::format("{}", adam.beta2));
    c.set("train.eps", fmt::format("{}", adam.eps));
    c.set("train.lr_schedule", lr_schedule == LrSchedule::cosine ? "cosine" : "constant");
    c.set("train.steps", std::to_string(steps));
    c.set("train.batch", std::to_string(batch));
    c.set("train.seed", std::to_string(seed));
    return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    for (const auto& [key, value] : cfg.entries()) {
        const auto section = key.substr(0, key.find('.'));
        if (section != "train" && section != "data" && section != "backbone" && section != "unit") {
            throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
    }
    cfg.section("train").reject_unknown({"lr", "lr_schedule", "beta1", "beta2", "eps", "steps", "batch", "seed"});
    cfg.section("data").reject_unknown({"shapes", "n", "samples_per_shape", "seed", "mesh_resolution"});

    TrainConfig t;
    t.model = ModelSpec::from_config(cfg);
    t.adam.lr = cfg.get_double("train.lr", t.adam.lr);
    t.adam.beta1 = cfg.get_double("train.beta1", t.adam.beta1);
    t.adam.beta2 = cfg.get_double("train.beta2", t.adam.beta2);
    t.adam.eps = cfg.get_double("train.eps", t.adam.eps);
    if (auto v = cfg.get("train.lr_schedule")) {
        if (*v == "cosine") t.lr_schedule = LrSchedule::cosine;
        else if (*v != "constant") throw ConfigError(fmt::format("unknown train.lr_schedule '{}' (constant | cosine)", *v));
    }
    t.steps = cfg.get_size("train.steps", t.steps);
    t.batch = cfg.get_size("train.batch", t.batch);
    t.seed = cfg.get_u64("train.seed", t.seed);
    if (auto v = cfg.get("data.shapes")) {
        t.data.shapes.clear();
        for (const auto& name : split_list(*v)) t.data.shapes.push_back(shapes::parse_shape_kind(name));
    }
    t.data.n = cfg.get_size("data.n", t.data.n);
    t.data.samples_per_shape = cfg.get_size("data.samples_per_shape", t.data.samples_per_shape);
    t.data.seed = cfg.get_u64("data.seed", t.data.seed);
    t.data.mesh_resolution = cfg.get_size("data.mesh_resolution", t.data.mesh_resolution);
    t.validate();
    return t;
}

double TrainConfig::lr_at(std::size_t step) const {
    if (lr_schedule == LrSchedule::constant) return adam.lr;
    return 0.5 * adam.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(steps)));
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const StepCallback& on_step) {
    config.validate();
    if (dataset.empty()) throw ConfigError("training dataset is empty");
    TrainResult result{UpsamplingModel(config.model, Rng::mix(config.seed)), {}};
    UpsamplingModel& model = result.model;
    AdamState state = AdamState::for_store(model.params());
    result.losses.reserve(config.steps);

    for (std::size_t step = 0; step < config.steps; ++step) {
        Tensor total;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const Sample& sample = dataset[(step * config.batch + b) % dataset.size()];
            const IndexMatrix* graph = sample.base_graph ? &*sample.base_graph : nullptr;
            std::optional<IndexMatrix> local;
            if (model.spec().needs_base_graph() && (!graph || graph->k() != config.model.unit.k)) {
                local = model.base_graph(sample.pair.input);
                graph = &*local;
            }
            Tensor loss;
            try {
                loss = metrics::chamfer_loss(model.forward(sample.pair.input, graph), sample.pair.gt);
            } catch (const NumericalError& e) {
                throw NumericalError(fmt::format("diverged at step {}: {}", step, e.what()));
            }
            total = total.defined() ? ops::add(total, loss) : loss;
        }
        const Tensor loss = ops::scale(total, 1.0 / static_cast<double>(config.batch));
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericalError(fmt::format("diverged at step {}: loss is {}", step, value));

        model.params().zero_grad();
        backward(loss);
        try {
            AdamConfig adam = config.adam;
            adam.lr = config.lr_at(step);
            adam_step(model.params(), state, adam);
        } catch (const NumericalError& e) {
            throw NumericalError(fmt::format("diverged at step {}: {}", step, e.what()));
        }
        result.losses.push_back(value);
        if (on_step) on_step(step, value);
    }
    model.params().zero_grad();
    return result;
}

std::vector<EvalRow> evaluate(const UpsamplingModel& model, const Dataset& dataset) {
    if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
    std::vector<EvalRow> rows;
    EvalRow agg{"aggregate", {}};
    double p2f_sum = 0.0;
    bool all_p2f = true;
    for (const Sample& sample : dataset) {
        const std::size_t expected = sample.pair.input.size() * model.spec().unit.ratio;
        if (sample.pair.gt.size() != expected) {
            throw ConfigError(fmt::format("sample '{}' has {} ground-truth points, model produces {}", sample.name,
                                          sample.pair.gt.size(), expected));
        }
        const IndexMatrix* graph = sample.base_graph ? &*sample.base_graph : nullptr;
        std::optional<IndexMatrix> local;
        if (model.spec().needs_base_graph() && (!graph || graph->k() != model.spec().unit.k)) {
            local = model.base_graph(sample.pair.input);
            graph = &*local;
        }
        const PointCloud pred = PointCloud::from_tensor(model.forward(sample.pair.input, graph));
        const TriangleMesh* mesh = sample.pair.mesh.faces().empty() ? nullptr : &sample.pair.mesh;
        EvalRow row{sample.name, metrics::evaluate(pred, sample.pair.gt, mesh)};
        agg.report.cd += row.report.cd;
        agg.report.hd += row.report.hd;
        if (row.report.p2f) p2f_sum += *row.report.p2f;
        else all_p2f = false;
        agg.report.pred_points += row.report.pred_points;
        agg.report.gt_points += row.report.gt_points;
        rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(rows.size());
    agg.report.cd /= n;
    agg.report.hd /= n;
    if (all_p2f) agg.report.p2f = p2f_sum / n;
    rows.push_back(std::move(agg));
    return rows;
}

std::vector<ComparisonRow> compare_units(const std::vector<CompareRun>& runs, const CompareOptions& options) {
    if (runs.empty()) throw ConfigError("compare needs at least one run");
    if (options.seeds.empty()) throw ConfigError("compare needs at least one seed");

    // Fairness: same budget, same data, same backbone capacity.
    const TrainConfig& first = runs.front().config;
    const std::size_t backbone_params = UpsamplingModel(first.model, 0).backbone_params();
    for (const auto& run : runs) {
        run.config.validate();
        const TrainConfig& c = run.config;
        if (c.steps != first.steps || c.batch != first.batch) {
            throw ConfigError(fmt::format("run '{}' trains for {}x{} steps, '{}' for {}x{}; budgets must match",
                                          run.label, c.steps, c.batch, runs.front().label, first.steps, first.batch));
        }
        if (!(data_config(c.data) == data_config(first.data)) || c.model.unit.ratio != first.model.unit.ratio) {
            throw ConfigError(fmt::format("run '{}' uses different data or ratio than '{}'", run.label,
                                          runs.front().label));
        }
        const std::size_t bp = UpsamplingModel(c.model, 0).backbone_params();
        if (bp != backbone_params) {
            throw ConfigError(fmt::format("run '{}' has {} backbone parameters, '{}' has {}", run.label, bp,
                                          runs.front().label, backbone_params));
        }
    }

    struct Job {
        std::size_t run;
        std::uint64_t seed;
        metrics::MetricReport report;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < runs.size(); ++r)
        for (auto seed : options.seeds) jobs.push_back({r, seed, {}});

    std::vector<Dataset> train_sets(runs.size()), eval_sets(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const TrainConfig& c = runs[r].config;
        train_sets[r] = make_dataset(c.data, c.model.unit.ratio, c.model.unit.k);
        DataSpec held_out = c.data;
        held_out.seed += options.eval_seed_offset;
        eval_sets[r] = make_dataset(held_out, c.model.unit.ratio, c.model.unit.k);
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
            try {
                TrainConfig c = runs[jobs[j].run].config;
                c.seed = jobs[j].seed;
                const TrainResult trained = train(c, train_sets[jobs[j].run]);
                jobs[j].report = evaluate(trained.model, eval_sets[jobs[j].run]).back().report;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<ComparisonRow> rows;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const TrainConfig& c = runs[r].config;
        const UpsamplingModel probe(c.model, 0);
        ComparisonRow row{runs[r].label,
                          std::string(to_string(c.model.backbone.kind)),
                          std::string(units::to_string(c.model.unit.kind)),
                          std::string(units::to_string(c.model.unit.index_mode)),
                          std::string(units::to_string(c.model.unit.regression_mode)),
                          options.seeds.size(),
                          c.steps,
                          probe.backbone_params(),
                          probe.unit_params(),
                          probe.head_params()};
        for (const Job& job : jobs) {
            if (job.run != r) continue;
            row.cd += job.report.cd;
            row.hd += job.report.hd;
            row.p2f += job.report.p2f.value_or(0.0);
        }
        const double n = static_cast<double>(options.seeds.size());
        row.cd /= n;
        row.hd /= n;
        row.p2f /= n;
        rows.push_back(std::move(row));
    }
    return rows;
}

void apply_compare_options(const KeyValueConfig& cfg, CompareOptions& options) {
    const KeyValueConfig compare = cfg.section("compare");
    compare.reject_unknown({"seeds", "jobs", "runs", "eval_seed_offset"});
    if (auto seeds = compare.get("seeds")) {
        options.seeds.clear();
        for (const auto& s : split_list(*seeds)) {
            KeyValueConfig one;
            one.set("seed", s);
            options.seeds.push_back(one.get_u64("seed", 0));
        }
    }
    options.jobs = compare.get_size("jobs", options.jobs);
    options.eval_seed_offset = compare.get_u64("eval_seed_offset", options.eval_seed_offset);
}

std::vector<CompareRun> runs_from_config(const KeyValueConfig& cfg, CompareOptions& options) {
    KeyValueConfig base;
    for (const auto& [k, v] : cfg.entries()) {
        if (!k.starts_with("run.") && !k.starts_with("compare.")) base.set(k, v);
    }
    apply_compare_options(cfg, options);
    const KeyValueConfig compare = cfg.section("compare");

    std::vector<std::string> labels = compare.get_list("runs", cfg.children("run"));
    if (labels.empty()) throw ConfigError("compare config declares no runs (run.<label>.<key>=...)");
    std::vector<CompareRun> runs;
    for (const auto& label : labels) {
        KeyValueConfig merged = base;
        merged.merge(cfg.section("run." + label));
        runs.push_back({label, TrainConfig::from_config(merged)});
    }
    return runs;
}

namespace {

TrainConfig with_unit(const TrainConfig& base, units::UnitKind kind) {
    TrainConfig c = base;
    units::ExpansionSpec u = units::ExpansionSpec::for_kind(kind);
    u.ratio = base.model.unit.ratio;
    u.k = base.model.unit.k;
    u.channels = base.model.unit.channels;
    u.edge_depth = base.model.unit.edge_depth;
    u.head_hidden = base.model.unit.head_hidden;
    u.bias = base.model.unit.bias;
    c.model.unit = u;
    return c;
}

}  // namespace

std::vector<CompareRun> units_preset(const TrainConfig& base) {
    std::vector<CompareRun> runs;
    for (auto kind : units::kAllUnits) runs.push_back({std::string(units::to_string(kind)), with_unit(base, kind)});
    return runs;
}

std::vector<CompareRun> ablation_preset(const TrainConfig& base) {
    std::vector<CompareRun> runs;
    for (auto index : {units::IndexMode::feature_knn, units::IndexMode::expand}) {
        for (auto reg : {units::RegressionMode::direct, units::RegressionMode::edgeconv_after,
                         units::RegressionMode::edgeconv_before}) {
            TrainConfig c = with_unit(base, units::UnitKind::proedgeshuffle);
            c.model.unit.index_mode = index;
            c.model.unit.regression_mode = reg;
            runs.push_back({fmt::format("proedgeshuffle/{}/{}", units::to_string(index), units::to_string(reg)), c});
        }
    }
    return runs;
}

}  // namespace puxp::pipeline
