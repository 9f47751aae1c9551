#include "puxp/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp {

AdamState AdamState::for_store(const ParameterStore& store) {
    AdamState s;
    for (const auto& p : store) {
        s.m.emplace_back(p.tensor.numel(), 0.0);
        s.v.emplace_back(p.tensor.numel(), 0.0);
    }
    return s;
}

void adam_step(const ParameterStore& store, AdamState& state, const AdamConfig& config) {
    const auto& params = store.params();
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError(fmt::format("optimizer state tracks {} parameters, store has {}",
                                         state.m.size(), params.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        const std::size_t n = params[p].tensor.numel();
        if (state.m[p].size() != n || state.v[p].size() != n) {
            throw DimensionError(fmt::format("optimizer state for '{}' has the wrong size", params[p].name));
        }
        for (double g : params[p].tensor.node()->grad) {
            if (!std::isfinite(g)) {
                throw NumericalError(fmt::format("non-finite gradient in parameter '{}'", params[p].name));
            }
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor tensor = params[p].tensor;
        const auto& grad = tensor.node()->grad;
        if (grad.empty()) continue;  // no gradient reached this parameter
        auto values = tensor.mutable_data();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

}  // namespace puxp
