#include <benchmark/benchmark.h>

#include "puxp/allocator.hpp"
#include "puxp/geometry.hpp"
#include "puxp/metrics.hpp"
#include "puxp/model.hpp"
#include "puxp/nn.hpp"
#include "puxp/ops.hpp"
#include "puxp/units.hpp"

using namespace puxp;

namespace {

PointCloud cloud_of(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return PointCloud(std::move(pts));
}

Tensor features_of(std::size_t n, std::size_t c, std::uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<double> v(n * c);
    for (double& x : v) x = rng.uniform(-1, 1);
    return Tensor::from({n, c}, std::move(v), requires_grad);
}

void BM_KnnBruteforce(benchmark::State& state) {
    const PointCloud cloud = cloud_of(state.range(0), 1);
    for (auto _ : state) benchmark::DoNotOptimize(geometry::knn_bruteforce(cloud, 16));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnBruteforce)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);

void BM_KnnKdTree(benchmark::State& state) {
    const PointCloud cloud = cloud_of(state.range(0), 1);
    for (auto _ : state) benchmark::DoNotOptimize(geometry::knn_accelerated(cloud, 16));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnKdTree)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
    const std::size_t m = state.range(0);
    const Tensor a = features_of(m, 32, 2), b = features_of(32, 32, 3);
    for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * m * 32 * 32);
}
BENCHMARK(BM_Matmul)->Arg(256)->Arg(1024)->Arg(4096);

// Forward plus backward of one EdgeConv layer on a 1024-point graph.
void BM_EdgeConvStep(benchmark::State& state) {
    const std::size_t depth = state.range(0);
    ParameterStore store;
    Rng rng(4);
    const nn::EdgeConvLayer layer("ec", 32, 32, store, rng, nn::EdgeConvOptions{.depth = depth});
    const IndexMatrix graph = geometry::knn_accelerated(cloud_of(1024, 5), 16);
    const Tensor x = features_of(1024, 32, 6, true);
    for (auto _ : state) {
        store.zero_grad();
        backward(ops::sum(layer.apply(x, graph)));
    }
}
BENCHMARK(BM_EdgeConvStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_ExpansionUnit(benchmark::State& state) {
    const auto kind = units::kAllUnits[state.range(0)];
    auto spec = units::ExpansionSpec::for_kind(kind);
    ParameterStore store;
    Rng rng(7);
    const auto unit = units::make_unit(spec, store, rng);
    const IndexMatrix graph = geometry::knn_accelerated(cloud_of(256, 8), spec.k);
    const Tensor x = features_of(256, spec.channels, 9);
    for (auto _ : state) benchmark::DoNotOptimize(unit->expand({x, &graph}).features);
    state.SetLabel(std::string(units::to_string(kind)));
}
BENCHMARK(BM_ExpansionUnit)->DenseRange(0, 6)->Unit(benchmark::kMicrosecond);

void BM_Chamfer(benchmark::State& state) {
    const PointCloud a = cloud_of(state.range(0), 10), b = cloud_of(state.range(0), 11);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::chamfer(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_ChamferReference(benchmark::State& state) {
    const PointCloud a = cloud_of(state.range(0), 10), b = cloud_of(state.range(0), 11);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::reference::chamfer(a, b));
}
BENCHMARK(BM_ChamferReference)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_ChamferLossBackward(benchmark::State& state) {
    Tensor pred = features_of(1024, 3, 12, true);
    const PointCloud gt = cloud_of(1024, 13);
    for (auto _ : state) {
        pred.zero_grad();
        backward(metrics::chamfer_loss(pred, gt));
    }
}
BENCHMARK(BM_ChamferLossBackward)->Unit(benchmark::kMillisecond);

// One full training step of the default model on a 256-point patch.
void BM_ModelStep(benchmark::State& state) {
    ModelSpec spec;
    UpsamplingModel model(spec, 14);
    const PointCloud input = cloud_of(256, 15);
    const PointCloud gt = cloud_of(1024, 16);
    const IndexMatrix graph = geometry::knn_accelerated(input, spec.unit.k);
    for (auto _ : state) {
        model.params().zero_grad();
        backward(metrics::chamfer_loss(model.forward(input, &graph), gt));
    }
}
BENCHMARK(BM_ModelStep)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
