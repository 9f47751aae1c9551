#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace puxp {

/// Dimension sizes of a tensor. Rank is between 1 and 3.
class Shape {
public:
    static constexpr std::size_t kMaxRank = 3;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::span<const std::size_t> dims);

    std::size_t rank() const { return rank_; }
    std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
    std::size_t back() const { return dims_[rank_ - 1]; }
    std::size_t numel() const;
    std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

    bool operator==(const Shape& other) const;

    std::string str() const;

private:
    std::array<std::size_t, kMaxRank> dims_{};
    std::size_t rank_ = 0;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs[i]->grad.
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles, a handle onto a node of the
/// differentiation graph. Copies share the node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor full(Shape shape, double value);

    /// Result of a differentiable op. The node records `inputs` and the
    /// backward rule only if some input requires a gradient.
    static Tensor make_result(Shape shape,
                              std::vector<double> values,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.rank(); }
    std::size_t dim(std::size_t axis) const { return node_->shape[axis]; }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    /// Mutable access for leaf tensors (parameters, optimizer updates).
    std::span<double> mutable_data();

    double item() const;
    double at(std::size_t i) const { return node_->data[i]; }
    double at(std::size_t i, std::size_t j) const { return node_->data[i * dim(1) + j]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return node_->data[(i * dim(1) + j) * dim(2) + k];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; all zeros if nothing was accumulated.
    std::vector<double> grad() const;
    void zero_grad() { node_->grad.clear(); }

    /// New leaf with the same values and no history.
    Tensor detach() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

/// Recorded operations reachable from a scalar loss, in forward order.
class Tape {
public:
    static Tape record(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse
    /// recorded order, accumulating into leaf gradients.
    void backward();

private:
    std::vector<detail::Node*> nodes_;
    Tensor loss_;
};

/// Shorthand for Tape::record(loss).backward().
void backward(const Tensor& loss);

}  // namespace puxp
