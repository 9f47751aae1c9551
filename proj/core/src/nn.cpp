#include "puxp/nn.hpp"

#include <cmath>

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/ops.hpp"

namespace puxp::nn {

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias, ParameterStore& store,
               Rng& rng) {
    weight = store.add_glorot(name + ".weight", in, out, rng);
    if (with_bias) bias = store.add(name + ".bias", Shape{out});
}

Tensor Linear::apply(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_width()) {
        throw DimensionError(
            fmt::format("linear layer expects width {}, got input {}", in_width(), x.shape().str()));
    }
    Tensor y = ops::matmul(x, weight);
    return bias.defined() ? ops::add_bias(y, bias) : y;
}

SharedMLP::SharedMLP(const std::string& name, std::vector<std::size_t> widths, ParameterStore& store, Rng& rng,
                     MlpOptions options)
    : options_(options) {
    if (widths.size() < 2) throw ConfigError(fmt::format("MLP '{}' needs at least input and output widths", name));
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers_.emplace_back(fmt::format("{}.{}", name, i), widths[i], widths[i + 1], options.bias, store, rng);
    }
}

Tensor SharedMLP::apply(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].apply(h);
        if (i + 1 < layers_.size() || options_.relu_output) h = ops::relu(h);
    }
    return h;
}

EdgeConvLayer::EdgeConvLayer(const std::string& name, std::size_t c_in, std::size_t c_out, ParameterStore& store,
                             Rng& rng, EdgeConvOptions options)
    : options_(options) {
    if (options.depth == 0) throw ConfigError(fmt::format("edgeconv '{}' needs at least one layer", name));
    // Glorot bounds use the fan-in of the full [2C x h] first layer.
    w_center_ = store.add(name + ".w_center", Shape{c_in, c_out});
    w_edge_ = store.add(name + ".w_edge", Shape{c_in, c_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(2 * c_in + c_out));
    for (double& v : w_center_.mutable_data()) v = rng.uniform(-bound, bound);
    for (double& v : w_edge_.mutable_data()) v = rng.uniform(-bound, bound);
    if (options.bias) bias_ = store.add(name + ".bias", Shape{c_out});
    if (options.depth > 1) {
        std::vector<std::size_t> widths(options.depth, c_out);
        tail_.emplace_back(name + ".tail", std::move(widths), store, rng,
                           MlpOptions{.bias = options.bias, .relu_output = options.relu_output});
    }
}

std::size_t EdgeConvLayer::out_width() const { return w_center_.dim(1); }

Tensor EdgeConvLayer::apply(const Tensor& x, const IndexMatrix& idx) const {
    if (x.rank() != 2 || x.dim(1) != in_width()) {
        throw DimensionError(fmt::format("edgeconv expects [M x {}] features, got {}", in_width(), x.shape().str()));
    }
    const std::size_t m = x.dim(0), k = idx.k(), h = out_width();
    if (idx.rows() != m) {
        throw DimensionError(fmt::format("edgeconv graph has {} rows for {} feature rows", idx.rows(), m));
    }
    if (k == 0) throw DimensionError("edgeconv graph has no neighbors");

    const Tensor center = ops::matmul(x, w_center_);
    const Tensor edge = ops::matmul(x, w_edge_);
    Tensor per_point = ops::sub(center, edge);
    if (bias_.defined()) per_point = ops::add_bias(per_point, bias_);
    if (tail_.empty()) {
        // The per-point term is constant over neighbors and ReLU is monotone,
        // so both move outside the max and nothing of size M*K is built.
        Tensor out = ops::add(per_point, ops::gather_max(edge, idx));
        return options_.relu_output ? ops::relu(out) : out;
    }
    Tensor pre = ops::add_per_row(ops::gather_rows(edge, idx), per_point);  // [M x K x h]
    Tensor flat = tail_.front().apply(ops::reshape(ops::relu(pre), Shape{m * k, h}));
    return ops::max_over_k(ops::reshape(flat, Shape{m, k, flat.dim(1)}));
}

Tensor duplicate_with_code(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError(fmt::format("duplicate_with_code expects [N x C], got {}", x.shape().str()));
    const std::size_t n = x.dim(0);
    std::vector<double> codes(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        codes[2 * i] = 1.0;
        codes[2 * i + 1] = -1.0;
    }
    return ops::concat_last(ops::repeat_rows(x, 2), Tensor::from(Shape{2 * n, 1}, std::move(codes)));
}

Tensor regress(const SharedMLP& head, const Tensor& x) {
    if (head.out_width() != 3) {
        throw ConfigError(fmt::format("regression head must output 3 channels, has {}", head.out_width()));
    }
    return head.apply(x);
}

PointCloud regress_coords(const SharedMLP& head, const Tensor& x) {
    return PointCloud::from_tensor(regress(head, x));
}

}  // namespace puxp::nn
