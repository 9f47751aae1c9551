// Release gate. Prints one PASS/FAIL line per criterion and exits nonzero if
// any criterion fails. Criteria 9 and 10 drive the installed CLI binary.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "finite_diff.hpp"
#include "puxp/allocator.hpp"
#include "puxp/geometry.hpp"
#include "puxp/metrics.hpp"
#include "puxp/ops.hpp"
#include "puxp/pipeline.hpp"
#include "puxp/units.hpp"
#include "puxp/verification.hpp"

namespace fs = std::filesystem;
using namespace puxp;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

PointCloud random_cloud(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1)};
    return PointCloud(std::move(pts));
}

Tensor random_features(std::size_t n, std::size_t c, Rng& rng) {
    std::vector<double> v(n * c);
    for (double& x : v) x = rng.uniform(-1, 1);
    return Tensor::from({n, c}, std::move(v));
}

std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    return perm;
}

units::ExpansionSpec unit_spec(units::UnitKind kind, std::size_t ratio, std::size_t channels, std::size_t k) {
    auto spec = units::ExpansionSpec::for_kind(kind);
    spec.ratio = ratio;
    spec.channels = channels;
    spec.k = k;
    return spec;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
    const auto start = Clock::now();
    constexpr double kStep = 1e-4, kTolerance = 1e-4;
    std::size_t cases = 0, checks = 0;
    std::set<std::string> names;
    for (std::uint64_t seed : {1, 2, 3}) {
        for (auto& c : verification::gradient_cases(seed)) {
            // Leading dimensions are points or input channels; weights may be C x rC wide.
            for (const Tensor& leaf : c.leaves) {
                if (leaf.rank() >= 2 && leaf.dim(0) > 8)
                    return {false, fmt::format("case {} has a leaf of shape {}", c.name, leaf.shape().str())};
            }
            const auto cmp = testkit::compare_gradients(c.leaves, c.loss, kStep);
            ++cases;
            checks += cmp.checked;
            names.insert(c.name);
            if (!(cmp.max_relative_error <= kTolerance)) {
                return {false, fmt::format("seed {} case {}: relative error {:.3g} at {}", seed, c.name,
                                           cmp.max_relative_error, cmp.worst)};
            }
        }
    }
    for (auto kind : units::kAllUnits) {
        const std::string name = fmt::format("units.{}", units::to_string(kind));
        if (!names.contains(name)) return {false, "no gradient case for " + name};
    }
    for (const char* op : {"ops.matmul", "ops.relu", "ops.concat_last", "ops.gather_rows", "ops.max_over_k",
                           "ops.gather_max", "ops.shuffle_expand", "metrics.chamfer_loss", "nn.edgeconv.depth1"}) {
        if (!names.contains(op)) return {false, fmt::format("no gradient case for {}", op)};
    }
    const double secs = seconds_since(start);
    return {secs < 30.0, fmt::format("{} cases over 3 seeds, {} element checks, h=1e-4, tol=1e-4, {:.1f}s", cases,
                                     checks, secs)};
}

Verdict knn_oracle() {
    const auto start = Clock::now();
    const std::size_t ks[] = {4, 8, 16};
    for (std::size_t i = 0; i < 200; ++i) {
        Rng rng(Rng::mix(0x6b6e6e + i));
        const std::size_t k = ks[i % 3];
        const std::size_t n = k + 1 + rng.below(512 - k);
        std::vector<Vec3> pts(n);
        for (auto& p : pts) {
            p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            if (i % 2 == 1) p = {std::round(p.x * 2) / 2, std::round(p.y * 2) / 2, std::round(p.z * 2) / 2};
        }
        const PointCloud cloud(std::move(pts));
        if (!(geometry::knn_accelerated(cloud, k) == geometry::knn_bruteforce(cloud, k)))
            return {false, fmt::format("cloud {} (n={}, k={}) differs from brute force", i, n, k)};
    }
    const double secs = seconds_since(start);
    return {secs < 30.0, fmt::format("200 clouds, N<=512, K in {{4,8,16}}, half on a coarse grid, {:.1f}s", secs)};
}

Verdict index_expansion() {
    for (std::size_t g = 0; g < 100; ++g) {
        Rng rng(Rng::mix(0xe1 + g));
        const std::size_t n = 2 + rng.below(63);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(16, n - 1));
        const IndexMatrix base = geometry::knn_bruteforce(random_cloud(n, rng), k);
        const IndexMatrix out = geometry::expand_index(base);
        if (out.rows() != 2 * n || out.k() != k) return {false, fmt::format("graph {}: rows not doubled", g)};
        for (std::size_t i = 0; i < 2 * n; ++i) {
            for (std::size_t s = 0; s < k; ++s) {
                const auto v = out(i, s);
                if (v % 2 != 0) return {false, fmt::format("graph {}: odd entry at ({}, {})", g, i, s)};
                if (v >= 2 * n) return {false, fmt::format("graph {}: entry out of bounds at ({}, {})", g, i, s)};
                if (v != 2 * base(i / 2, s))
                    return {false, fmt::format("graph {}: row {} does not carry its parent's mapped neighbors", g, i)};
            }
        }
    }
    return {true, "100 graphs: row doubling, even entries, bounds, shared mapped neighbors"};
}

Verdict permutation_equivariance() {
    constexpr std::size_t n = 16, c = 4, k = 4, r = 4;
    double worst = 0.0;
    for (std::size_t pair = 0; pair < 50; ++pair) {
        Rng rng(Rng::mix(0xe9 + pair));
        const PointCloud cloud = random_cloud(n, rng);
        const Tensor x = random_features(n, c, rng);
        const auto perm = random_permutation(n, rng);  // new row i holds old row perm[i]
        std::vector<Vec3> moved;
        for (auto p : perm) moved.push_back(cloud[p]);
        const Tensor xp = ops::reshape(ops::gather_rows(x, IndexMatrix(n, 1, perm)), {n, c});
        const IndexMatrix g = geometry::knn_bruteforce(cloud, k);
        const IndexMatrix gp = geometry::knn_bruteforce(PointCloud(moved), k);
        for (auto kind : units::kAllUnits) {
            ParameterStore store;
            Rng init(Rng::mix(pair * 31 + static_cast<std::uint64_t>(kind)));
            const auto unit = units::make_unit(unit_spec(kind, r, c, k), store, init);
            const Tensor a = unit->expand({x, &g}).features;
            const Tensor b = unit->expand({xp, &gp}).features;
            const std::size_t w = a.dim(1);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t s = 0; s < r; ++s)
                    for (std::size_t ch = 0; ch < w; ++ch)
                        worst = std::max(worst, std::abs(b.at(r * i + s, ch) - a.at(r * perm[i] + s, ch)));
            if (!(worst <= 1e-9))
                return {false, fmt::format("pair {} unit {}: deviation {:.3g}", pair, units::to_string(kind), worst)};
        }
    }
    return {true, fmt::format("50 pairs x 7 units, max deviation {:.3g}", worst)};
}

// Every point of every trial is perturbed in turn. Local units must leave all
// other points' children bitwise unchanged for each perturbation. Graph units
// must propagate at least one perturbation per trial to a point that lists
// the perturbed point as a neighbor. Max aggregation ignores a neighbor that
// is never an active argmax, so not every single perturbation propagates; the
// rate is reported.
Verdict isolation_dichotomy() {
    constexpr std::size_t n = 16, c = 4, k = 4, r = 4;
    std::map<units::UnitKind, std::pair<std::size_t, std::size_t>> propagated;  // graph units: (changed, tried)
    for (std::size_t trial = 0; trial < 10; ++trial) {
        Rng rng(Rng::mix(0x150 + trial));
        const PointCloud cloud = random_cloud(n, rng);
        const Tensor x = random_features(n, c, rng);
        const IndexMatrix g = geometry::knn_bruteforce(cloud, k);

        for (auto kind : units::kAllUnits) {
            ParameterStore store;
            Rng init(Rng::mix(trial * 17 + static_cast<std::uint64_t>(kind)));
            const auto unit = units::make_unit(unit_spec(kind, r, c, k), store, init);
            const Tensor a = unit->expand({x, &g}).features;
            const std::size_t w = a.dim(1);
            bool trial_propagated = false;
            for (std::size_t p = 0; p < n; ++p) {
                std::vector<double> bumped(x.data().begin(), x.data().end());
                for (std::size_t ch = 0; ch < c; ++ch) bumped[p * c + ch] += 1e-2;
                const Tensor b = unit->expand({Tensor::from({n, c}, std::move(bumped)), &g}).features;
                auto children_equal = [&](std::size_t i) {
                    for (std::size_t s = r * i * w; s < r * (i + 1) * w; ++s)
                        if (a.data()[s] != b.data()[s]) return false;
                    return true;
                };
                if (!units::is_graph_unit(kind)) {
                    for (std::size_t i = 0; i < n; ++i) {
                        if (i != p && !children_equal(i))
                            return {false, fmt::format("trial {} {}: point {} changed when only point {} moved",
                                                       trial, units::to_string(kind), i, p)};
                    }
                    continue;
                }
                bool referred = false, changed = false;
                for (std::size_t j = 0; j < n; ++j) {
                    const auto row = g.row(j);
                    if (std::find(row.begin(), row.end(), p) == row.end()) continue;
                    referred = true;
                    changed = changed || !children_equal(j);
                }
                if (!referred) continue;
                auto& [hit, tried] = propagated[kind];
                ++tried;
                hit += changed;
                trial_propagated = trial_propagated || changed;
            }
            if (units::is_graph_unit(kind) && !trial_propagated)
                return {false, fmt::format("trial {} {}: no perturbation reached a neighbor's children", trial,
                                           units::to_string(kind))};
        }
    }
    std::string rates;
    for (const auto& [kind, counts] : propagated)
        rates += fmt::format(", {} {}/{}", units::to_string(kind), counts.first, counts.second);
    return {true, fmt::format("10 trials x 16 points; 5 local units bitwise isolated; perturbations reaching a "
                              "neighbor's children{}", rates)};
}

double p2f_oracle(const PointCloud& pred, const TriangleMesh& mesh) {
    double total = 0.0;
    for (const Vec3& q : pred) {
        double best = INFINITY;
        for (std::size_t f = 0; f < mesh.faces().size(); ++f)
            best = std::min(best, geometry::point_triangle_distance(q, mesh.triangle(f)));
        total += best;
    }
    return total / static_cast<double>(pred.size());
}

Verdict metric_goldens() {
    const double cd = metrics::chamfer(PointCloud({{0, 0, 0}}), PointCloud({{3, 4, 0}}));
    const double hd = metrics::hausdorff(PointCloud({{0, 0, 0}}), PointCloud({{3, 4, 0}}));
    const TriangleMesh tri({{0, 0, 0}, {2, 0, 0}, {0, 2, 0}}, {{0, 1, 2}});
    const double pf = metrics::point_to_face(PointCloud({{0, 0, 1}}), tri);
    if (std::abs(cd - 50.0) > 1e-12 || std::abs(hd - 5.0) > 1e-12 || std::abs(pf - 1.0) > 1e-12)
        return {false, fmt::format("hand examples gave cd {} hd {} p2f {}", cd, hd, pf)};

    const auto mesh = shapes::SyntheticShape::standard(shapes::ShapeKind::torus).mesh(16);
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(Rng::mix(0x60 + i));
        const PointCloud p = random_cloud(1 + rng.below(300), rng), q = random_cloud(1 + rng.below(300), rng, 1.3);
        if (metrics::chamfer(p, q) != metrics::reference::chamfer(p, q) ||
            metrics::hausdorff(p, q) != metrics::reference::hausdorff(p, q))
            return {false, fmt::format("pair {}: accelerated metric differs from brute force", i)};
        if (i < 10 && metrics::point_to_face(p, mesh) != p2f_oracle(p, mesh))
            return {false, fmt::format("pair {}: point_to_face differs from brute force", i)};
    }
    return {true, "hand examples 50 / 5 / 1.0 to 1e-12; 50 random pairs equal the brute-force oracle bitwise"};
}

Verdict overfit() {
    const auto start = Clock::now();
    std::string detail;
    bool pass = true;
    for (auto kind : units::kAllUnits) {
        pipeline::TrainConfig cfg;
        cfg.model.unit = units::ExpansionSpec::for_kind(kind);
        cfg.model.unit.ratio = 4;
        cfg.model.unit.channels = cfg.model.backbone.width;
        cfg.steps = 500;
        cfg.seed = 1;
        cfg.data.shapes = {shapes::ShapeKind::sphere};
        cfg.data.samples_per_shape = 1;
        cfg.data.n = 64;
        const auto data = pipeline::make_dataset(cfg.data, cfg.model.unit.ratio, cfg.model.unit.k);
        const auto result = pipeline::train(cfg, data);
        const double initial = result.losses.front();
        const double final_cd = metrics::chamfer(result.model.upsample(data[0].pair.input), data[0].pair.gt);
        const double ratio = final_cd / initial;
        pass = pass && ratio < 0.1;
        detail += fmt::format("{}{} {:.4f}", detail.empty() ? "" : ", ", units::to_string(kind), ratio);
    }
    const double secs = seconds_since(start);
    return {pass && secs < 300.0, fmt::format("final/initial CD: {} ({:.0f}s)", detail, secs)};
}

// Matched-budget protocol for the trend check. Pinned from pilot runs; see
// the decisions ledger for the numbers behind it.
pipeline::TrainConfig trend_config() {
    pipeline::TrainConfig cfg;
    cfg.model.backbone.kind = BackboneKind::edgeconv_stack;
    cfg.steps = 6000;
    cfg.lr_schedule = pipeline::LrSchedule::cosine;
    cfg.data.samples_per_shape = 32;
    return cfg;
}

Verdict trend() {
    const auto start = Clock::now();
    const pipeline::TrainConfig base = trend_config();
    std::vector<pipeline::CompareRun> runs;
    for (const auto& run : pipeline::units_preset(base)) {
        if (run.label == "branch" || run.label == "proedgeshuffle") runs.push_back(run);
    }
    std::string detail;
    for (std::vector<std::uint64_t> seeds : {std::vector<std::uint64_t>{1, 2, 3}, {1, 2, 3, 4, 5}}) {
        pipeline::CompareOptions options;
        options.seeds = seeds;
        options.jobs = std::max(1u, std::thread::hardware_concurrency());
        const auto rows = pipeline::compare_units(runs, options);
        const double branch = rows[0].cd, pes = rows[1].cd;
        detail += fmt::format("{}{} seeds: proedgeshuffle {:.5f} vs branch {:.5f} (ratio {:.3f})",
                              detail.empty() ? "" : "; ", seeds.size(), pes, branch, pes / branch);
        if (pes <= 1.1 * branch) return {true, fmt::format("{} ({:.0f}s)", detail, seconds_since(start))};
    }
    return {false, fmt::format("{}; gap persists at 5 seeds ({:.0f}s)", detail, seconds_since(start))};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = fmt::format("'{}' {} > '{}' 2>&1", PUXP_CLI_PATH, args, log.string());
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism(const fs::path& scratch) {
    fs::create_directories(scratch);
    const std::string flags = "train --unit proedgeshuffle --ratio 4 --k 16 --steps 200 --seed 1";
    for (const char* run : {"a", "b"}) {
        const int code = run_cli(fmt::format("{} --out '{}'", flags, (scratch / run).string()), scratch / "train.log");
        if (code != 0) return {false, fmt::format("train exited {}: {}", code, slurp(scratch / "train.log"))};
    }
    for (const char* file : {"model.puxp", "loss.csv"}) {
        const std::string a = slurp(scratch / "a" / file), b = slurp(scratch / "b" / file);
        if (a.empty() || a != b) return {false, fmt::format("{} differs between identical runs", file)};
    }
    const std::string loss = slurp(scratch / "a" / "loss.csv");
    return {true, fmt::format("model.puxp ({} bytes) and loss.csv ({} lines) byte-identical across two runs",
                              slurp(scratch / "a" / "model.puxp").size(), std::count(loss.begin(), loss.end(), '\n'))};
}

Verdict ablation_matrix(const fs::path& scratch) {
    const fs::path csv = scratch / "ablation.csv";
    const int code = run_cli(fmt::format("compare --preset ablation --steps 60 --n 64 --k 8 --width 16 --head-hidden 16 "
                                         "--shapes sphere,torus --seeds 1,2 --out '{}'",
                                         csv.string()),
                             scratch / "compare.log");
    if (code != 0) return {false, fmt::format("compare exited {}: {}", code, slurp(scratch / "compare.log"))};
    std::istringstream in(slurp(csv));
    std::vector<std::string> header;
    std::set<std::pair<std::string, std::string>> cells;
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
        if (header.empty()) {
            header = fields;
            continue;
        }
        if (fields.size() != header.size()) return {false, fmt::format("row has {} of {} cells", fields.size(), header.size())};
        ++rows;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].empty()) return {false, fmt::format("empty {} cell in row {}", header[i], fields[0])};
            if (header[i] == "cd" || header[i] == "hd" || header[i] == "p2f") {
                char* end = nullptr;
                const double v = std::strtod(fields[i].c_str(), &end);
                if (*end != '\0' || !std::isfinite(v))
                    return {false, fmt::format("{} in row {} is not finite: {}", header[i], fields[0], fields[i])};
            }
        }
        cells.insert({fields[3], fields[4]});
    }
    if (rows != 6 || cells.size() != 6) return {false, fmt::format("expected the 2 x 3 matrix, got {} rows", rows)};
    return {true, "index_mode {feature_knn, expand} x regression_mode {direct, edgeconv_after, edgeconv_before}, "
                  "6 rows, all cells finite"};
}

}  // namespace

// With arguments, runs only the listed criterion ids, e.g. `puxp_acceptance 1 7`.
int main(int argc, char** argv) {
    configure_allocator();
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const fs::path scratch = fs::temp_directory_path() / "puxp_acceptance";
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    struct Criterion {
        int id;
        const char* title;
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient suite", gradient_suite},
        {2, "knn oracle", knn_oracle},
        {3, "index expansion laws", index_expansion},
        {4, "permutation equivariance", permutation_equivariance},
        {5, "isolation dichotomy", isolation_dichotomy},
        {6, "metric goldens", metric_goldens},
        {7, "overfit one patch", overfit},
        {8, "trend check", trend},
        {9, "cli determinism", [&] { return determinism(scratch / "determinism"); }},
        {10, "ablation harness", [&] { return ablation_matrix(scratch); }},
    };

    int failures = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        ++ran;
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, fmt::format("threw: {}", e.what())};
        }
        if (!v.pass) ++failures;
        fmt::print("{} criterion {}: {} ({})\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
