#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "puxp/random.hpp"
#include "puxp/tensor.hpp"

namespace puxp {

/// A named trainable tensor.
struct Parameter {
    std::string name;
    Tensor tensor;
};

/// Ordered, name-unique collection of parameters. Insertion order is the
/// serialization and update order.
class ParameterStore {
public:
    /// Zero-initialized parameter. Throws ConfigError on a duplicate name.
    Tensor add(std::string name, Shape shape);

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
    Tensor add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);

    const Parameter* find(std::string_view name) const;
    const Parameter& get(std::string_view name) const;

    std::size_t size() const { return params_.size(); }
    const std::vector<Parameter>& params() const { return params_; }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// Total scalar count over parameters whose name starts with `prefix`.
    std::size_t scalar_count(std::string_view prefix = {}) const;

    void zero_grad();

private:
    std::vector<Parameter> params_;
};

}  // namespace puxp
