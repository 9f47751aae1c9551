#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puxp/tensor.hpp"

namespace puxp::verification {

/// A scalar function of some leaf tensors. `loss()` recomputes from the
/// current leaf values, so perturbing a leaf in place and calling it again
/// gives the perturbed value.
struct GradCase {
    std::string name;
    std::vector<Tensor> leaves;
    std::function<Tensor()> loss;
    std::shared_ptr<void> owner;  // keeps parameter stores and modules alive
};

/// Every differentiable op, module and expansion unit at toy size
/// (at most 8 points, 4 channels), seeded by `seed`. Each case is redrawn
/// until ops::MarginProbe reports at least `min_margin` of clearance from
/// every non-differentiable point, so central differences are meaningful.
std::vector<GradCase> gradient_cases(std::uint64_t seed, double min_margin = 1e-3);

struct Failure {
    std::string case_name;
    std::string detail;
    std::string replay;  // key=value text that reruns exactly this case
};

struct SuiteResult {
    std::size_t cases = 0;
    std::size_t checks = 0;
    std::vector<Failure> failures;
    bool ok() const { return failures.empty(); }
};

struct GradcheckOptions {
    std::uint64_t seed = 1;
    double step = 1e-4;
    double tolerance = 1e-4;
    /// Floor on the relative-error denominator so exact zeros compare sanely.
    double floor = 1e-6;
    /// Clearance from kinks required of every evaluation point.
    double min_margin = 1e-3;
    std::optional<std::string> only;  // run a single case by name
};

/// Central differences against backward() for every case.
SuiteResult run_gradcheck(const GradcheckOptions& options);

struct KnncheckOptions {
    std::uint64_t seed = 1;
    std::size_t clouds = 200;
    std::size_t max_points = 512;
    std::vector<std::size_t> ks{4, 8, 16};
    std::optional<std::size_t> only;  // run a single cloud index
};

/// The accelerated KNN must equal brute force entry for entry. Every
/// other cloud is snapped to a coarse grid so distance ties are common.
SuiteResult run_knncheck(const KnncheckOptions& options);

}  // namespace puxp::verification
