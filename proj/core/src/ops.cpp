#include "puxp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp::ops {
namespace {

thread_local MarginProbe* active_probe = nullptr;

using detail::Node;

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(fmt::format("{}: expected rank {}, got shape {}", op, rank, x.shape().str()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!(a.shape() == b.shape())) {
        throw DimensionError(fmt::format("{}: shapes {} and {} differ", op, a.shape().str(), b.shape().str()));
    }
}

// Accumulate `scale * src` into `dst` when dst takes part in differentiation.
void accumulate(Node& dst, const std::vector<double>& src, double factor = 1.0) {
    if (!dst.requires_grad) return;
    auto& g = dst.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * src[i];
}

// Kernels shared by matmul forward and backward. Each output element is
// accumulated in the same order whatever the vector width, and no fused
// multiply-add is enabled, so the wide clone gives bit-identical results.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define PUXP_WIDE_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define PUXP_WIDE_CLONES
#endif

// out[m x p] += a[m x k] . b[k x p]
PUXP_WIDE_CLONES void gemm_accumulate(const double* __restrict a, const double* __restrict b, double* __restrict out,
                                      std::size_t m, std::size_t k, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out + i * p;
        for (std::size_t j = 0; j < k; ++j) {
            const double aij = a[i * k + j];
            const double* brow = b + j * p;
            for (std::size_t c = 0; c < p; ++c) orow[c] += aij * brow[c];
        }
    }
}

// out[k x p] += a[m x k]^T . g[m x p]
PUXP_WIDE_CLONES void gemm_at_accumulate(const double* __restrict a, const double* __restrict g,
                                         double* __restrict out, std::size_t m, std::size_t k, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double aij = a[i * k + j];
            double* orow = out + j * p;
            for (std::size_t c = 0; c < p; ++c) orow[c] += aij * g[i * p + c];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError(
            fmt::format("matmul: inner dimensions disagree for {} x {}", a.shape().str(), b.shape().str()));
    }
    std::vector<double> out(m * p, 0.0);
    gemm_accumulate(a.data().data(), b.data().data(), out.data(), m, k, p);
    return Tensor::make_result(Shape{m, p}, std::move(out), {a, b}, [m, k, p](Node& self) {
        Node& an = *self.inputs[0];
        Node& bn = *self.inputs[1];
        const auto& g = self.grad;
        if (an.requires_grad) {
            // dA = G . B^T, with B transposed first so the kernel runs on rows.
            std::vector<double> bt(p * k);
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t c = 0; c < p; ++c) bt[c * k + j] = bn.data[j * p + c];
            gemm_accumulate(g.data(), bt.data(), an.ensure_grad().data(), m, p, k);
        }
        if (bn.requires_grad) {
            // dB = A^T . G
            gemm_at_accumulate(an.data.data(), g.data(), bn.ensure_grad().data(), m, k, p);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        accumulate(*self.inputs[1], self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        accumulate(*self.inputs[1], self.grad, -1.0);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& an = *self.inputs[0];
        Node& bn = *self.inputs[1];
        if (an.requires_grad) {
            auto& g = an.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
        }
        if (bn.requires_grad) {
            auto& g = bn.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v *= factor;
    return Tensor::make_result(x.shape(), std::move(out), {x},
                               [factor](Node& self) { accumulate(*self.inputs[0], self.grad, factor); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank(bias, 1, "add_bias");
    const std::size_t c = x.shape().back();
    if (x.rank() < 2 || bias.dim(0) != c) {
        throw DimensionError(
            fmt::format("add_bias: bias {} does not match tensor {}", bias.shape().str(), x.shape().str()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto bd = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % c];
    return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [c](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        Node& bn = *self.inputs[1];
        if (bn.requires_grad) {
            auto& g = bn.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
        }
    });
}

Tensor add_per_row(const Tensor& x, const Tensor& rows) {
    require_rank(x, 3, "add_per_row");
    require_rank(rows, 2, "add_per_row");
    const std::size_t m = x.dim(0), k = x.dim(1), c = x.dim(2);
    if (rows.dim(0) != m || rows.dim(1) != c) {
        throw DimensionError(
            fmt::format("add_per_row: {} does not broadcast over {}", rows.shape().str(), x.shape().str()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto rd = rows.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double* o = out.data() + (i * k + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) o[ch] += rd[i * c + ch];
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x, rows}, [m, k, c](Node& self) {
        accumulate(*self.inputs[0], self.grad);
        Node& rn = *self.inputs[1];
        if (rn.requires_grad) {
            auto& g = rn.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double* src = self.grad.data() + (i * k + j) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) g[i * c + ch] += src[ch];
                }
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    if (MarginProbe::active()) {
        for (double v : out) MarginProbe::record(std::abs(v));
    }
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        Node& xn = *self.inputs[0];
        auto& g = xn.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xn.data[i] > 0.0) g[i] += self.grad[i];
        }
    });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_last");
    require_rank(b, 2, "concat_last");
    if (a.dim(0) != b.dim(0)) {
        throw DimensionError(fmt::format("concat_last: leading dimensions of {} and {} differ",
                                         a.shape().str(), b.shape().str()));
    }
    const std::size_t n = a.dim(0), c1 = a.dim(1), c2 = b.dim(1), w = c1 + c2;
    std::vector<double> out(n * w);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(ad.data() + i * c1, c1, out.data() + i * w);
        std::copy_n(bd.data() + i * c2, c2, out.data() + i * w + c1);
    }
    return Tensor::make_result(Shape{n, w}, std::move(out), {a, b}, [n, c1, c2, w](Node& self) {
        Node& an = *self.inputs[0];
        Node& bn = *self.inputs[1];
        if (an.requires_grad) {
            auto& g = an.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c1; ++j) g[i * c1 + j] += self.grad[i * w + j];
        }
        if (bn.requires_grad) {
            auto& g = bn.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c2; ++j) g[i * c2 + j] += self.grad[i * w + c1 + j];
        }
    });
}

Tensor gather_rows(const Tensor& x, const IndexMatrix& idx) {
    require_rank(x, 2, "gather_rows");
    const std::size_t n = x.dim(0), c = x.dim(1), m = idx.rows(), k = idx.k();
    idx.validate_bounds(n);
    std::vector<double> out(m * k * c);
    auto xd = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            std::copy_n(xd.data() + static_cast<std::size_t>(idx(i, j)) * c, c, out.data() + (i * k + j) * c);
        }
    }
    return Tensor::make_result(Shape{m, k, c}, std::move(out), {x}, [idx, m, k, c](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const double* src = self.grad.data() + (i * k + j) * c;
                double* dst = g.data() + static_cast<std::size_t>(idx(i, j)) * c;
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
        }
    });
}

Tensor max_over_k(const Tensor& x) {
    require_rank(x, 3, "max_over_k");
    const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
    if (k == 0) throw DimensionError("max_over_k: K must be at least 1");
    std::vector<double> out(n * c);
    std::vector<std::uint32_t> argmax(n * c, 0);
    auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::size_t best = 0;
            double value = xd[i * k * c + ch];
            for (std::size_t j = 1; j < k; ++j) {
                const double v = xd[(i * k + j) * c + ch];
                if (v > value) {
                    value = v;
                    best = j;
                }
            }
            out[i * c + ch] = value;
            argmax[i * c + ch] = static_cast<std::uint32_t>(best);
            if (active_probe) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double v = xd[(i * k + j) * c + ch];
                    if (j != best && v != value) MarginProbe::record(value - v);
                }
            }
        }
    }
    return Tensor::make_result(Shape{n, c}, std::move(out), {x},
                               [argmax = std::move(argmax), n, k, c](Node& self) {
                                   auto& g = self.inputs[0]->ensure_grad();
                                   for (std::size_t i = 0; i < n; ++i) {
                                       for (std::size_t ch = 0; ch < c; ++ch) {
                                           g[(i * k + argmax[i * c + ch]) * c + ch] += self.grad[i * c + ch];
                                       }
                                   }
                               });
}

Tensor gather_max(const Tensor& x, const IndexMatrix& idx) {
    require_rank(x, 2, "gather_max");
    const std::size_t n = idx.rows(), k = idx.k(), c = x.dim(1);
    if (k == 0) throw DimensionError("gather_max: K must be at least 1");
    idx.validate_bounds(x.dim(0));
    std::vector<double> out(n * c);
    std::vector<std::uint32_t> source(n * c);
    auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = idx.row(i);
        double* o = out.data() + i * c;
        std::uint32_t* s = source.data() + i * c;
        const double* first = xd.data() + std::size_t{row[0]} * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
            o[ch] = first[ch];
            s[ch] = row[0];
        }
        for (std::size_t j = 1; j < k; ++j) {
            const double* xr = xd.data() + std::size_t{row[j]} * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                if (xr[ch] > o[ch]) {
                    o[ch] = xr[ch];
                    s[ch] = row[j];
                }
            }
        }
        if (active_probe) {
            for (std::size_t j = 0; j < k; ++j) {
                const double* xr = xd.data() + std::size_t{row[j]} * c;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    if (xr[ch] != o[ch]) MarginProbe::record(o[ch] - xr[ch]);
                }
            }
        }
    }
    return Tensor::make_result(Shape{n, c}, std::move(out), {x}, [source = std::move(source), n, c](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < n * c; ++i) g[std::size_t{source[i]} * c + i % c] += self.grad[i];
    });
}

MarginProbe::MarginProbe() : margin_(std::numeric_limits<double>::infinity()), previous_(active_probe) {
    active_probe = this;
}

MarginProbe::~MarginProbe() { active_probe = previous_; }

bool MarginProbe::active() { return active_probe != nullptr; }

void MarginProbe::record(double distance) {
    for (MarginProbe* p = active_probe; p; p = p->previous_) p->margin_ = std::min(p->margin_, distance);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape.numel() != x.numel()) {
        throw DimensionError(fmt::format("reshape: cannot view {} as {}", x.shape().str(), shape.str()));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_result(shape, std::move(out), {x},
                               [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor shuffle_expand(const Tensor& x, std::size_t ratio) {
    require_rank(x, 2, "shuffle_expand");
    if (ratio == 0 || x.dim(1) % ratio != 0) {
        throw DimensionError(
            fmt::format("shuffle_expand: channel count {} is not divisible by ratio {}", x.dim(1), ratio));
    }
    // Row-major [N x rC] already stores child s of row i at r*i + s.
    return reshape(x, Shape{x.dim(0) * ratio, x.dim(1) / ratio});
}

Tensor shuffle_collapse(const Tensor& x, std::size_t ratio) {
    require_rank(x, 2, "shuffle_collapse");
    if (ratio == 0 || x.dim(0) % ratio != 0) {
        throw DimensionError(
            fmt::format("shuffle_collapse: row count {} is not divisible by ratio {}", x.dim(0), ratio));
    }
    return reshape(x, Shape{x.dim(0) / ratio, x.dim(1) * ratio});
}

Tensor repeat_rows(const Tensor& x, std::size_t ratio) {
    require_rank(x, 2, "repeat_rows");
    if (ratio == 0) throw DimensionError("repeat_rows: ratio must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1);
    std::vector<double> out(n * ratio * c);
    auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < ratio; ++s) std::copy_n(xd.data() + i * c, c, out.data() + (i * ratio + s) * c);
    return Tensor::make_result(Shape{n * ratio, c}, std::move(out), {x}, [n, c, ratio](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < ratio; ++s)
                for (std::size_t ch = 0; ch < c; ++ch) g[i * c + ch] += self.grad[(i * ratio + s) * c + ch];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_result(Shape{1}, {total}, {x}, [](Node& self) {
        auto& g = self.inputs[0]->ensure_grad();
        for (double& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace puxp::ops
