#pragma once

#include <cstddef>

#include "puxp/index_matrix.hpp"
#include "puxp/tensor.hpp"

// Differentiable tensor operations. Every op validates shapes up front and
// throws DimensionError / IndexError with both shapes or the offending value.
namespace puxp::ops {

/// While alive on the current thread, records how close evaluated ops came to
/// a point where they are not differentiable: relu inputs near zero, near-ties
/// between the two largest entries of max_over_k, and near-ties in the
/// nearest-neighbor choices of feature KNN and the chamfer loss. Exact ties
/// between identical values are ignored since both sides agree. Finite
/// differences are only meaningful at points whose margin exceeds the step.
class MarginProbe {
public:
    MarginProbe();
    ~MarginProbe();
    MarginProbe(const MarginProbe&) = delete;
    MarginProbe& operator=(const MarginProbe&) = delete;

    double margin() const { return margin_; }

    static bool active();
    static void record(double distance);

private:
    double margin_;
    MarginProbe* previous_;
};

/// [M x K] . [K x P] -> [M x P]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Adds a length-C bias to every C-wide row of a rank 2 or 3 tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// [M x K x C] + [M x C]: row i of `rows` is added to every x[i][k].
Tensor add_per_row(const Tensor& x, const Tensor& rows);

Tensor relu(const Tensor& x);

/// [N x C1] (+) [N x C2] -> [N x (C1 + C2)]
Tensor concat_last(const Tensor& a, const Tensor& b);

/// out[m][k] = x[idx(m, k)]; [N x C] -> [M x K x C]. Backward scatter-adds.
Tensor gather_rows(const Tensor& x, const IndexMatrix& idx);

/// Maximum over the middle axis; [N x K x C] -> [N x C]. The gradient goes to
/// the first maximal entry.
Tensor max_over_k(const Tensor& x);

/// max_over_k(gather_rows(x, idx)) without the [M x K x C] intermediate;
/// [N x C] -> [M x C]. Ties resolve to the first neighbor slot, as in
/// max_over_k.
Tensor gather_max(const Tensor& x, const IndexMatrix& idx);

/// Reinterprets the data under a new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);

/// [N x rC] -> [rN x C]. Output row r*i + s holds channels [sC, (s+1)C) of
/// input row i, so the r children of a point are contiguous.
Tensor shuffle_expand(const Tensor& x, std::size_t ratio);

/// Inverse of shuffle_expand: [rN x C] -> [N x rC].
Tensor shuffle_collapse(const Tensor& x, std::size_t ratio);

/// [N x C] -> [rN x C]; output rows r*i .. r*i + r - 1 copy row i.
Tensor repeat_rows(const Tensor& x, std::size_t ratio);

/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace puxp::ops
