#pragma once

#include <cstdint>
#include <vector>

#include "puxp/parameter.hpp"

namespace puxp {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter in store order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static AdamState for_store(const ParameterStore& store);
};

/// One bias-corrected Adam update using the gradients accumulated on the
/// store's tensors. All gradients are checked first: a non-finite entry
/// throws NumericalError naming the parameter and leaves everything untouched.
void adam_step(const ParameterStore& store, AdamState& state, const AdamConfig& config);

}  // namespace puxp
