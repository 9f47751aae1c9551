#include "puxp/units.hpp"

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/geometry.hpp"
#include "puxp/ops.hpp"

namespace puxp::units {
namespace {

constexpr std::string_view kUnitNames[] = {"branch",          "duplicate",   "single_mlp",    "multilayer_mlp",
                                           "progressive_mlp", "nodeshuffle", "proedgeshuffle"};
constexpr std::string_view kIndexNames[] = {"expand", "feature_knn"};
constexpr std::string_view kRegressionNames[] = {"direct", "edgeconv_after", "edgeconv_before"};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::string_view (&names)[N], const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == text) return static_cast<Enum>(i);
    }
    throw ConfigError(fmt::format("unknown {} '{}'", what, text));
}

std::size_t log2_exact(std::size_t n) {
    std::size_t rounds = 0;
    while ((std::size_t{1} << rounds) < n) ++rounds;
    return rounds;
}

nn::EdgeConvOptions edge_options(const ExpansionSpec& spec) {
    return {.depth = spec.edge_depth, .bias = spec.bias, .relu_output = true};
}

const IndexMatrix& require_graph(const ExpansionContext& ctx, std::string_view unit) {
    if (!ctx.base_graph) throw ConfigError(fmt::format("{} unit needs a base neighbor graph", unit));
    return *ctx.base_graph;
}

void check_input(const ExpansionContext& ctx, const ExpansionSpec& spec) {
    const Tensor& f = ctx.features;
    if (!f.defined() || f.rank() != 2 || f.dim(1) != spec.channels) {
        throw DimensionError(fmt::format("expansion unit expects [N x {}] features, got {}", spec.channels,
                                         f.defined() ? f.shape().str() : "nothing"));
    }
    if (ctx.base_graph && ctx.base_graph->rows() != f.dim(0)) {
        throw DimensionError(fmt::format("base graph has {} rows for {} feature rows", ctx.base_graph->rows(),
                                         f.dim(0)));
    }
}

// r branches of two per-point linear maps C -> C1 -> C2 with independent
// weights; branch s becomes child s of every point.
class BranchUnit final : public ExpansionUnit {
public:
    BranchUnit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix)
        : ExpansionUnit(spec) {
        const std::size_t c1 = spec.branch_c1 ? spec.branch_c1 : spec.channels;
        const std::size_t c2 = spec.out_width();
        for (std::size_t b = 0; b < spec.ratio; ++b) {
            branches_.emplace_back(fmt::format("{}.branch{}", prefix, b),
                                   std::vector<std::size_t>{spec.channels, c1, c2}, store, rng,
                                   nn::MlpOptions{.bias = spec.bias});
        }
    }

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        Tensor merged = branches_.front().apply(ctx.features);
        for (std::size_t b = 1; b < branches_.size(); ++b) {
            merged = ops::concat_last(merged, branches_[b].apply(ctx.features));
        }
        const std::size_t n = ctx.features.dim(0);
        return {ops::shuffle_expand(merged, spec_.ratio), std::nullopt, {n, n * spec_.ratio}};
    }

private:
    std::vector<nn::SharedMLP> branches_;
};

// log2(r) rounds of [duplicate with +-1 code, shared (C+1) -> C layer].
class DuplicateUnit final : public ExpansionUnit {
public:
    DuplicateUnit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix)
        : ExpansionUnit(spec) {
        for (std::size_t r = 0; r < log2_exact(spec.ratio); ++r) {
            rounds_.emplace_back(fmt::format("{}.round{}", prefix, r),
                                 std::vector<std::size_t>{spec.channels + 1, spec.channels}, store, rng,
                                 nn::MlpOptions{.bias = spec.bias, .relu_output = true});
        }
    }

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        ExpansionResult out{ctx.features, std::nullopt, {ctx.features.dim(0)}};
        for (const auto& mlp : rounds_) {
            out.features = mlp.apply(nn::duplicate_with_code(out.features));
            out.row_trace.push_back(out.features.dim(0));
        }
        return out;
    }

private:
    std::vector<nn::SharedMLP> rounds_;
};

// Optional shared C -> C stack, then one C -> rC layer and a shuffle.
class MlpShuffleUnit final : public ExpansionUnit {
public:
    MlpShuffleUnit(const ExpansionSpec& spec, std::size_t hidden_layers, ParameterStore& store, Rng& rng,
                   const std::string& prefix)
        : ExpansionUnit(spec) {
        if (hidden_layers > 0) {
            extract_.emplace(prefix + ".extract", std::vector<std::size_t>(hidden_layers + 1, spec.channels), store,
                             rng, nn::MlpOptions{.bias = spec.bias, .relu_output = true});
        }
        expand_.emplace_back(prefix + ".expand", spec.channels, spec.ratio * spec.channels, spec.bias, store, rng);
    }

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        Tensor h = extract_ ? extract_->apply(ctx.features) : ctx.features;
        const std::size_t n = ctx.features.dim(0);
        return {ops::shuffle_expand(expand_.front().apply(h), spec_.ratio), std::nullopt, {n, n * spec_.ratio}};
    }

private:
    std::optional<nn::SharedMLP> extract_;
    std::vector<nn::Linear> expand_;
};

// One shared C -> C extraction layer, then [C -> 2C, shuffle] until rN rows.
class ProgressiveMlpUnit final : public ExpansionUnit {
public:
    ProgressiveMlpUnit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix)
        : ExpansionUnit(spec),
          extract_(prefix + ".extract", {spec.channels, spec.channels}, store, rng,
                   nn::MlpOptions{.bias = spec.bias, .relu_output = true}) {
        for (std::size_t r = 0; r < log2_exact(spec.ratio); ++r) {
            rounds_.emplace_back(fmt::format("{}.round{}", prefix, r), spec.channels, 2 * spec.channels, spec.bias,
                                 store, rng);
        }
    }

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        ExpansionResult out{extract_.apply(ctx.features), std::nullopt, {ctx.features.dim(0)}};
        for (std::size_t r = 0; r < rounds_.size(); ++r) {
            Tensor h = ops::shuffle_expand(rounds_[r].apply(out.features), 2);
            out.features = r + 1 < rounds_.size() ? ops::relu(h) : h;
            out.row_trace.push_back(out.features.dim(0));
        }
        return out;
    }

private:
    nn::SharedMLP extract_;
    std::vector<nn::Linear> rounds_;
};

// EdgeConv C -> rC on the base graph, then shuffle.
class NodeShuffleUnit final : public ExpansionUnit {
public:
    NodeShuffleUnit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix)
        : ExpansionUnit(spec),
          conv_(prefix + ".edge", spec.channels, spec.ratio * spec.channels, store, rng, edge_options(spec)) {}

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        const IndexMatrix& graph = require_graph(ctx, "nodeshuffle");
        const std::size_t n = ctx.features.dim(0);
        return {ops::shuffle_expand(conv_.apply(ctx.features, graph), spec_.ratio), std::nullopt,
                {n, n * spec_.ratio}};
    }

private:
    nn::EdgeConvLayer conv_;
};

// log2(r) rounds of [EdgeConv C -> 2C on the current graph, shuffle to double
// the rows, derive the graph of the doubled set].
class ProEdgeShuffleUnit final : public ExpansionUnit {
public:
    ProEdgeShuffleUnit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix)
        : ExpansionUnit(spec) {
        for (std::size_t r = 0; r < log2_exact(spec.ratio); ++r) {
            rounds_.emplace_back(fmt::format("{}.round{}", prefix, r), spec.channels, 2 * spec.channels, store, rng,
                                 edge_options(spec));
        }
    }

    ExpansionResult expand(const ExpansionContext& ctx) const override {
        check_input(ctx, spec_);
        ExpansionResult out{ctx.features, require_graph(ctx, "proedgeshuffle"), {ctx.features.dim(0)}};
        for (const auto& conv : rounds_) {
            out.features = ops::shuffle_expand(conv.apply(out.features, *out.graph), 2);
            out.graph = spec_.index_mode == IndexMode::expand
                            ? geometry::expand_index(*out.graph)
                            : geometry::knn_features(out.features, out.graph->k());
            out.row_trace.push_back(out.features.dim(0));
        }
        return out;
    }

private:
    std::vector<nn::EdgeConvLayer> rounds_;
};

}  // namespace

std::string_view to_string(UnitKind kind) { return kUnitNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(IndexMode mode) { return kIndexNames[static_cast<std::size_t>(mode)]; }
std::string_view to_string(RegressionMode mode) { return kRegressionNames[static_cast<std::size_t>(mode)]; }
UnitKind parse_unit_kind(std::string_view text) { return parse_enum<UnitKind>(text, kUnitNames, "unit kind"); }
IndexMode parse_index_mode(std::string_view text) { return parse_enum<IndexMode>(text, kIndexNames, "index mode"); }
RegressionMode parse_regression_mode(std::string_view text) {
    return parse_enum<RegressionMode>(text, kRegressionNames, "regression mode");
}

bool is_graph_unit(UnitKind kind) { return kind == UnitKind::nodeshuffle || kind == UnitKind::proedgeshuffle; }

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

ExpansionSpec ExpansionSpec::for_kind(UnitKind kind) {
    ExpansionSpec spec;
    spec.kind = kind;
    spec.regression_mode = kind == UnitKind::proedgeshuffle ? RegressionMode::edgeconv_before : RegressionMode::direct;
    return spec;
}

void ExpansionSpec::validate() const {
    if (ratio == 0) throw ConfigError("ratio must be positive");
    if (channels == 0) throw ConfigError("feature width must be positive");
    if (edge_depth == 0) throw ConfigError("edgeconv depth must be at least 1");
    const bool needs_pow2 =
        kind == UnitKind::duplicate || kind == UnitKind::progressive_mlp || kind == UnitKind::proedgeshuffle;
    if (needs_pow2 && !is_power_of_two(ratio)) throw ConfigError("ratio must be a power of 2");
    if (kind == UnitKind::proedgeshuffle && (ratio < 2 || ratio > 16)) {
        throw ConfigError(fmt::format("proedgeshuffle supports ratio 2, 4, 8 or 16, got {}", ratio));
    }
    const bool needs_graph = is_graph_unit(kind) || regression_mode != RegressionMode::direct;
    if (needs_graph && k == 0) throw ConfigError("neighbor count k must be positive for graph operations");
    if (regression_mode != RegressionMode::direct && !is_graph_unit(kind) &&
        index_mode == IndexMode::expand && !is_power_of_two(ratio)) {
        throw ConfigError("edgeconv regression with index expansion needs a power-of-2 ratio");
    }
}

std::size_t ExpansionSpec::out_width() const {
    if (kind == UnitKind::branch && branch_c2) return branch_c2;
    return channels;
}

std::unique_ptr<ExpansionUnit> make_unit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng,
                                         const std::string& prefix) {
    spec.validate();
    switch (spec.kind) {
        case UnitKind::branch:
            return std::make_unique<BranchUnit>(spec, store, rng, prefix);
        case UnitKind::duplicate:
            return std::make_unique<DuplicateUnit>(spec, store, rng, prefix);
        case UnitKind::single_mlp:
            return std::make_unique<MlpShuffleUnit>(spec, 0, store, rng, prefix);
        case UnitKind::multilayer_mlp:
            return std::make_unique<MlpShuffleUnit>(spec, 5, store, rng, prefix);
        case UnitKind::progressive_mlp:
            return std::make_unique<ProgressiveMlpUnit>(spec, store, rng, prefix);
        case UnitKind::nodeshuffle:
            return std::make_unique<NodeShuffleUnit>(spec, store, rng, prefix);
        case UnitKind::proedgeshuffle:
            return std::make_unique<ProEdgeShuffleUnit>(spec, store, rng, prefix);
    }
    throw ConfigError("unhandled unit kind");
}

RegressionStage::RegressionStage(const ExpansionSpec& spec, ParameterStore& store, Rng& rng,
                                 const std::string& prefix)
    : mode_(spec.regression_mode) {
    const std::size_t c = spec.out_width();
    if (mode_ == RegressionMode::edgeconv_before) {
        fuse_.emplace(prefix + ".fuse", c, c, store, rng, edge_options(spec));
    }
    std::vector<std::size_t> widths{c};
    if (spec.head_hidden) widths.push_back(spec.head_hidden);
    widths.push_back(3);
    head_.emplace(prefix + ".mlp", std::move(widths), store, rng, nn::MlpOptions{.bias = spec.bias});
    if (mode_ == RegressionMode::edgeconv_after) {
        fuse_.emplace(prefix + ".fuse", 3, 3, store, rng,
                      nn::EdgeConvOptions{.depth = 1, .bias = spec.bias, .relu_output = false});
    }
}

Tensor RegressionStage::apply(const Tensor& features, const GraphProvider& graph) const {
    switch (mode_) {
        case RegressionMode::direct:
            return nn::regress(*head_, features);
        case RegressionMode::edgeconv_before:
            return nn::regress(*head_, fuse_->apply(features, graph()));
        case RegressionMode::edgeconv_after:
            return fuse_->apply(nn::regress(*head_, features), graph());
    }
    throw ConfigError("unhandled regression mode");
}

IndexMatrix high_power_graph(const ExpansionSpec& spec, const ExpansionResult& result, const IndexMatrix* base) {
    if (result.graph) return *result.graph;
    if (!base) throw ConfigError("edgeconv regression needs an rN-row graph but no base graph was given");
    if (spec.index_mode == IndexMode::feature_knn) return geometry::knn_features(result.features, base->k());
    if (!is_power_of_two(spec.ratio)) throw ConfigError("index expansion needs a power-of-2 ratio");
    IndexMatrix g = *base;
    for (std::size_t n = 1; n < spec.ratio; n *= 2) g = geometry::expand_index(g);
    return g;
}

}  // namespace puxp::units
