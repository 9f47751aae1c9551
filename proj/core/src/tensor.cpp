#include "puxp/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "puxp/error.hpp"

namespace puxp {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
    if (dims.empty() || dims.size() > kMaxRank) {
        throw DimensionError(fmt::format("tensor rank must be 1..3, got {}", dims.size()));
    }
    rank_ = dims.size();
    std::copy(dims.begin(), dims.end(), dims_.begin());
}

std::size_t Shape::numel() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return rank_ == 0 ? 0 : n;
}

bool Shape::operator==(const Shape& other) const {
    return rank_ == other.rank_ && std::equal(dims_.begin(), dims_.begin() + rank_, other.dims_.begin());
}

std::string Shape::str() const { return fmt::format("[{}]", fmt::join(dims(), "x")); }

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from(shape, std::vector<double>(shape.numel(), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
    return from(shape, std::vector<double>(shape.numel(), value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.numel() != values.size()) {
        throw DimensionError(
            fmt::format("shape {} holds {} values, got {}", shape.str(), shape.numel(), values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = shape;
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::make_result(Shape shape,
                           std::vector<double> values,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
    Tensor out = from(shape, std::move(values));
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
        out.node_->requires_grad = true;
        out.node_->inputs.reserve(inputs.size());
        for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
        out.node_->backward = std::move(backward);
    }
    return out;
}

std::span<double> Tensor::mutable_data() {
    if (node_->backward) throw Error("mutable_data() on a non-leaf tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError(fmt::format("item() on tensor of shape {}", shape().str()));
    return node_->data[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->data); }

Tape Tape::record(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError(fmt::format("backward needs a scalar loss, got {}", loss.shape().str()));
    }
    Tape tape;
    tape.loss_ = loss;
    // Iterative post-order DFS: inputs always precede their consumers.
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::backward() {
    if (!loss_.requires_grad()) return;
    loss_.node()->ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(); }

}  // namespace puxp
