// Command-line front end. Exit codes: 0 success, 1 property failure,
// 2 usage/config/format error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "puxp/allocator.hpp"
#include "puxp/config.hpp"
#include "puxp/error.hpp"
#include "puxp/io.hpp"
#include "puxp/metrics.hpp"
#include "puxp/pipeline.hpp"
#include "puxp/verification.hpp"

namespace fs = std::filesystem;
using namespace puxp;

namespace {

constexpr int kOk = 0;
constexpr int kPropertyFailure = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

// Flags shared by train and compare. Each maps onto one config key and only
// overrides it when given.
struct TrainFlags {
    std::optional<std::string> config_file;
    std::vector<std::string> sets;
    std::optional<std::string> unit, backbone, index_mode, regression, shapes, lr_schedule;
    std::optional<std::size_t> ratio, k, steps, n, width, depth, batch, head_hidden;
    std::optional<std::uint64_t> seed, data_seed;
    std::optional<double> lr;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
        cmd.add_option("--set", sets, "override one key, e.g. --set unit.k=8 (repeatable)");
        cmd.add_option("--unit", unit, "expansion unit kind");
        cmd.add_option("--backbone", backbone, "mlp_stack | edgeconv_stack");
        cmd.add_option("--ratio", ratio, "upsampling ratio r");
        cmd.add_option("--k", k, "neighbors per point");
        cmd.add_option("--steps", steps, "optimizer steps");
        cmd.add_option("--seed", seed, "training seed");
        cmd.add_option("--n", n, "input points per sample");
        cmd.add_option("--width", width, "feature width C");
        cmd.add_option("--depth", depth, "backbone depth");
        cmd.add_option("--batch", batch, "samples per step");
        cmd.add_option("--head-hidden", head_hidden, "hidden width of the coordinate head");
        cmd.add_option("--index-mode", index_mode, "expand | feature_knn");
        cmd.add_option("--regression", regression, "direct | edgeconv_after | edgeconv_before");
        cmd.add_option("--lr", lr, "Adam learning rate");
        cmd.add_option("--lr-schedule", lr_schedule, "constant | cosine");
        cmd.add_option("--data-seed", data_seed, "sampling seed for the synthetic data");
        cmd.add_option("--shapes", shapes, "comma-separated shape list");
    }

    KeyValueConfig overrides() const {
        KeyValueConfig cfg;
        if (config_file) cfg = KeyValueConfig::load(*config_file);
        auto put = [&](const char* key, const auto& value) {
            if (!value) return;
            if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, std::string>) {
                cfg.set(key, *value);
            } else {
                cfg.set(key, fmt::format("{}", *value));
            }
        };
        put("unit.kind", unit);
        put("backbone.kind", backbone);
        put("unit.index_mode", index_mode);
        put("unit.regression_mode", regression);
        put("data.shapes", shapes);
        put("unit.ratio", ratio);
        put("unit.k", k);
        put("train.steps", steps);
        put("data.n", n);
        put("backbone.width", width);
        put("backbone.depth", depth);
        put("train.batch", batch);
        put("unit.head_hidden", head_hidden);
        put("train.seed", seed);
        put("data.seed", data_seed);
        put("train.lr", lr);
        put("train.lr_schedule", lr_schedule);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", s));
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        return cfg;
    }
};

void print_resolved(const std::string& command, const KeyValueConfig& cfg) {
    fmt::print("# puxp {} resolved configuration\n{}# end configuration\n", command, cfg.str());
    std::fflush(stdout);
}

int cmd_train(const TrainFlags& flags, const std::string& out_dir) {
    const pipeline::TrainConfig config = pipeline::TrainConfig::from_config(flags.overrides());
    KeyValueConfig shown = config.to_config();
    shown.set("out", out_dir);
    print_resolved("train", shown);

    const pipeline::Dataset data = pipeline::make_dataset(config.data, config.model.unit.ratio, config.model.unit.k);
    const std::size_t every = std::max<std::size_t>(1, config.steps / 10);
    const auto result = pipeline::train(config, data, [&](std::size_t step, double loss) {
        if (step % every == 0 || step + 1 == config.steps) fmt::print("step {} loss {:.9g}\n", step, loss);
    });

    fs::create_directories(out_dir);
    io::save_checkpoint(fs::path(out_dir) / "model.puxp", result.model);
    io::write_loss_csv(fs::path(out_dir) / "loss.csv", result.losses);
    {
        std::ofstream cfg_out(fs::path(out_dir) / "config.txt", std::ios::binary);
        cfg_out << config.to_config().str();
    }
    fmt::print("wrote {}/model.puxp, {}/loss.csv ({} rows)\n", out_dir, out_dir, result.losses.size());
    return kOk;
}

int cmd_upsample(const std::string& model_path, const std::string& input, const std::string& output) {
    const UpsamplingModel model = io::load_checkpoint(model_path);
    KeyValueConfig shown = model.spec().to_config();
    shown.set("model", model_path);
    shown.set("input", input);
    shown.set("out", output);
    print_resolved("upsample", shown);

    const PointCloud cloud = io::read_xyz(input);
    if (model.spec().needs_base_graph() && cloud.size() <= model.spec().unit.k) {
        throw ConfigError(fmt::format("input has {} points, the model needs more than k = {}", cloud.size(),
                                      model.spec().unit.k));
    }
    const PointCloud dense = model.upsample(cloud);
    io::write_xyz(output, dense);
    fmt::print("upsampled {} -> {} points\n", cloud.size(), dense.size());
    return kOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::optional<std::string>& mesh_path,
             const std::optional<std::string>& out) {
    KeyValueConfig shown;
    shown.set("pred", pred_path);
    shown.set("gt", gt_path);
    shown.set("mesh", mesh_path.value_or(""));
    shown.set("out", out.value_or(""));
    print_resolved("eval", shown);

    const PointCloud pred = io::read_xyz(pred_path);
    const PointCloud gt = io::read_xyz(gt_path);
    std::optional<io::OffMesh> mesh;
    if (mesh_path) {
        mesh = io::read_off(*mesh_path);
        if (mesh->dropped_faces > 0) fmt::print("dropped {} zero-area faces\n", mesh->dropped_faces);
    }
    const auto report = metrics::evaluate(pred, gt, mesh ? &mesh->mesh : nullptr);
    fmt::print("cd {:.9g}\nhd {:.9g}\n", report.cd, report.hd);
    if (report.p2f) fmt::print("p2f {:.9g}\n", *report.p2f);
    if (out) io::write_metrics_csv(*out, {{fs::path(pred_path).filename().string(), report}});
    return kOk;
}

int cmd_compare(const TrainFlags& flags, const std::optional<std::string>& preset,
                const std::optional<std::string>& seeds, const std::optional<std::size_t>& jobs,
                const std::string& out) {
    KeyValueConfig cfg = flags.overrides();
    pipeline::CompareOptions options;
    std::vector<pipeline::CompareRun> runs;
    if (preset) {
        KeyValueConfig base;
        for (const auto& [k, v] : cfg.entries()) {
            if (k.starts_with("run.")) throw ConfigError(fmt::format("'{}' cannot be combined with --preset", k));
            if (!k.starts_with("compare.")) base.set(k, v);
        }
        const auto train = pipeline::TrainConfig::from_config(base);
        if (*preset == "units") runs = pipeline::units_preset(train);
        else if (*preset == "ablation") runs = pipeline::ablation_preset(train);
        else throw ConfigError(fmt::format("unknown preset '{}' (units | ablation)", *preset));
        pipeline::apply_compare_options(cfg, options);
    } else {
        runs = pipeline::runs_from_config(cfg, options);
    }
    if (seeds) {
        options.seeds.clear();
        for (const auto& s : split_list(*seeds)) {
            KeyValueConfig one;
            one.set("s", s);
            options.seeds.push_back(one.get_u64("s", 0));
        }
    }
    if (jobs) options.jobs = *jobs;

    KeyValueConfig shown;
    std::string labels, seed_list;
    for (const auto& run : runs) {
        labels += (labels.empty() ? "" : ",") + run.label;
        const KeyValueConfig run_cfg = run.config.to_config();
        for (const auto& [k, v] : run_cfg.entries()) shown.set("run." + run.label + "." + k, v);
    }
    for (auto s : options.seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
    shown.set("compare.runs", labels);
    shown.set("compare.seeds", seed_list);
    shown.set("compare.jobs", std::to_string(options.jobs));
    shown.set("compare.eval_seed_offset", std::to_string(options.eval_seed_offset));
    shown.set("out", out);
    print_resolved("compare", shown);

    const auto rows = pipeline::compare_units(runs, options);
    io::write_comparison_csv(std::cout, rows);
    io::write_comparison_csv(fs::path(out), rows);
    return kOk;
}

int report_suite(const std::string& name, const verification::SuiteResult& result,
                 const std::optional<std::string>& replay_out) {
    for (const auto& f : result.failures) fmt::print("FAIL {} {}: {}\n", name, f.case_name, f.detail);
    fmt::print("{}: {} cases, {} checks, {} failures\n", name, result.cases, result.checks, result.failures.size());
    if (result.ok()) return kOk;
    const std::string replay = result.failures.front().replay;
    if (replay_out) {
        std::ofstream(*replay_out, std::ios::binary) << replay;
        fmt::print("replay case written to {}\n", *replay_out);
    } else {
        fmt::print("# replay\n{}", replay);
    }
    return kPropertyFailure;
}

int run(int argc, char** argv) {
    CLI::App app{"Point-cloud feature-expansion units: training, upsampling, evaluation and checks", "puxp"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    std::string train_out = "run";
    auto* train = app.add_subcommand("train", "train one model on synthetic shapes");
    train_flags.attach(*train);
    train->add_option("--out", train_out, "output directory for model.puxp and loss.csv");

    std::string model_path, input_path, upsample_out;
    auto* upsample = app.add_subcommand("upsample", "upsample an xyz cloud with a checkpoint");
    upsample->add_option("--model", model_path, "checkpoint")->required();
    upsample->add_option("--input", input_path, "input xyz")->required();
    upsample->add_option("--out", upsample_out, "output xyz")->required();

    std::string pred_path, gt_path;
    std::optional<std::string> mesh_path, eval_out;
    auto* eval = app.add_subcommand("eval", "CD, HD and optional P2F between two clouds");
    eval->add_option("--pred", pred_path, "predicted xyz")->required();
    eval->add_option("--gt", gt_path, "ground-truth xyz")->required();
    eval->add_option("--mesh", mesh_path, "OFF mesh for P2F");
    eval->add_option("--out", eval_out, "metrics CSV");

    TrainFlags compare_flags;
    std::optional<std::string> preset, seeds;
    std::optional<std::size_t> jobs;
    std::string compare_out = "comparison.csv";
    auto* compare = app.add_subcommand("compare", "train and evaluate a matrix of runs under matched budgets");
    compare_flags.attach(*compare);
    compare->add_option("--preset", preset, "units | ablation");
    compare->add_option("--seeds", seeds, "comma-separated seeds averaged per row");
    compare->add_option("--jobs", jobs, "parallel training runs");
    compare->add_option("--out", compare_out, "comparison CSV");

    verification::GradcheckOptions grad_options;
    std::optional<std::string> grad_replay;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op and unit");
    gradcheck->add_option("--seed", grad_options.seed, "case seed");
    gradcheck->add_option("--case", grad_options.only, "run one case by name");
    gradcheck->add_option("--step", grad_options.step, "central-difference step");
    gradcheck->add_option("--tolerance", grad_options.tolerance, "relative tolerance");
    gradcheck->add_option("--replay-out", grad_replay, "write the first failing case here");

    verification::KnncheckOptions knn_options;
    std::optional<std::string> knn_replay;
    auto* knncheck = app.add_subcommand("knncheck", "accelerated KNN against brute force on seeded clouds");
    knncheck->add_option("--seed", knn_options.seed, "cloud seed");
    knncheck->add_option("--clouds", knn_options.clouds, "number of clouds");
    knncheck->add_option("--max-points", knn_options.max_points, "largest cloud");
    knncheck->add_option("--cloud", knn_options.only, "run one cloud index");
    knncheck->add_option("--replay-out", knn_replay, "write the first failing case here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    if (*train) return cmd_train(train_flags, train_out);
    if (*upsample) return cmd_upsample(model_path, input_path, upsample_out);
    if (*eval) return cmd_eval(pred_path, gt_path, mesh_path, eval_out);
    if (*compare) return cmd_compare(compare_flags, preset, seeds, jobs, compare_out);
    if (*gradcheck) {
        KeyValueConfig shown;
        shown.set("seed", std::to_string(grad_options.seed));
        shown.set("step", fmt::format("{}", grad_options.step));
        shown.set("tolerance", fmt::format("{}", grad_options.tolerance));
        shown.set("floor", fmt::format("{}", grad_options.floor));
        shown.set("min_margin", fmt::format("{}", grad_options.min_margin));
        shown.set("case", grad_options.only.value_or("all"));
        print_resolved("gradcheck", shown);
        return report_suite("gradcheck", verification::run_gradcheck(grad_options), grad_replay);
    }
    if (*knncheck) {
        KeyValueConfig shown;
        shown.set("seed", std::to_string(knn_options.seed));
        shown.set("clouds", std::to_string(knn_options.clouds));
        shown.set("max_points", std::to_string(knn_options.max_points));
        shown.set("ks", "4,8,16");
        shown.set("cloud", knn_options.only ? std::to_string(*knn_options.only) : "all");
        print_resolved("knncheck", shown);
        return report_suite("knncheck", verification::run_knncheck(knn_options), knn_replay);
    }
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    try {
        return run(argc, argv);
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical error: {}\n", e.what());
        return kNumerical;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    }
}
