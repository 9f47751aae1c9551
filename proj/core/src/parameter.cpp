#include "puxp/parameter.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp {

Tensor ParameterStore::add(std::string name, Shape shape) {
    if (find(name)) throw ConfigError(fmt::format("duplicate parameter name '{}'", name));
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    params_.push_back({std::move(name), t});
    return t;
}

Tensor ParameterStore::add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor t = add(std::move(name), Shape{fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
    return t;
}

const Parameter* ParameterStore::find(std::string_view name) const {
    auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
}

const Parameter& ParameterStore::get(std::string_view name) const {
    if (const Parameter* p = find(name)) return *p;
    throw ConfigError(fmt::format("unknown parameter '{}'", name));
}

std::size_t ParameterStore::scalar_count(std::string_view prefix) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (std::string_view(p.name).starts_with(prefix)) n += p.tensor.numel();
    }
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
}

}  // namespace puxp
