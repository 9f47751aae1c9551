#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "puxp/geometry.hpp"
#include "puxp/index_matrix.hpp"
#include "puxp/parameter.hpp"
#include "puxp/tensor.hpp"

namespace puxp::nn {

/// Per-row affine map [M x in] -> [M x out].
struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out], undefined when bias-free

    Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias, ParameterStore& store, Rng& rng);

    std::size_t in_width() const { return weight.dim(0); }
    std::size_t out_width() const { return weight.dim(1); }
    Tensor apply(const Tensor& x) const;
};

struct MlpOptions {
    bool bias = true;
    /// ReLU after the last layer as well as the hidden ones.
    bool relu_output = false;
};

/// MLP applied independently, with the same weights, to every row.
class SharedMLP {
public:
    /// widths = [C_in, h_1, ..., C_out]; parameters are registered as
    /// "<name>.<layer>.weight" / ".bias".
    SharedMLP(const std::string& name, std::vector<std::size_t> widths, ParameterStore& store, Rng& rng,
              MlpOptions options = {});

    std::size_t in_width() const { return layers_.front().in_width(); }
    std::size_t out_width() const { return layers_.back().out_width(); }
    std::size_t depth() const { return layers_.size(); }
    const Linear& layer(std::size_t i) const { return layers_[i]; }

    Tensor apply(const Tensor& x) const;

private:
    std::vector<Linear> layers_;
    MlpOptions options_;
};

struct EdgeConvOptions {
    /// Number of linear layers inside h_theta.
    std::size_t depth = 1;
    bool bias = true;
    /// ReLU after the last layer of h_theta, before the max.
    bool relu_output = true;
};

/// Graph convolution over a fixed neighbor table:
///   out[i] = max_k h( concat(x[i], x[idx(i,k)] - x[i]) ).
///
/// The first layer of h is stored as two [C x h] halves, `w_center` acting on
/// x[i] and `w_edge` acting on the neighbor difference, which is the same map
/// as one [2C x h] weight on the concatenation. It is evaluated per point
/// (x W_center - x W_edge + b) and per neighbor (x W_edge gathered), so the
/// cost of the first layer does not scale with K.
class EdgeConvLayer {
public:
    EdgeConvLayer(const std::string& name, std::size_t c_in, std::size_t c_out, ParameterStore& store, Rng& rng,
                  EdgeConvOptions options = {});

    std::size_t in_width() const { return w_center_.dim(0); }
    std::size_t out_width() const;

    const Tensor& w_center() const { return w_center_; }
    const Tensor& w_edge() const { return w_edge_; }
    const Tensor& bias() const { return bias_; }

    /// [M x C] features with an M-row graph -> [M x C_out].
    Tensor apply(const Tensor& x, const IndexMatrix& idx) const;

private:
    Tensor w_center_, w_edge_, bias_;
    std::vector<SharedMLP> tail_;  // layers 2..depth, at most one MLP
    EdgeConvOptions options_;
};

/// [N x C] -> [2N x (C + 1)]; rows 2i and 2i + 1 are x[i] with code +1 and -1.
Tensor duplicate_with_code(const Tensor& x);

/// Applies a head with output width 3 and returns [M x 3] coordinates.
Tensor regress(const SharedMLP& head, const Tensor& x);

/// regress() followed by conversion; throws NumericalError naming the first
/// non-finite row.
PointCloud regress_coords(const SharedMLP& head, const Tensor& x);

}  // namespace puxp::nn
