#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "puxp/index_matrix.hpp"
#include "puxp/nn.hpp"
#include "puxp/parameter.hpp"
#include "puxp/tensor.hpp"

namespace puxp::units {

enum class UnitKind {
    branch,
    duplicate,
    single_mlp,
    multilayer_mlp,
    progressive_mlp,
    nodeshuffle,
    proedgeshuffle,
};

/// How graph units obtain neighbor tables for the doubled point sets.
enum class IndexMode { expand, feature_knn };

/// What happens between the rN x C features and the rN output points.
enum class RegressionMode { direct, edgeconv_after, edgeconv_before };

inline constexpr UnitKind kAllUnits[] = {
    UnitKind::branch,          UnitKind::duplicate,   UnitKind::single_mlp,     UnitKind::multilayer_mlp,
    UnitKind::progressive_mlp, UnitKind::nodeshuffle, UnitKind::proedgeshuffle,
};

std::string_view to_string(UnitKind kind);
std::string_view to_string(IndexMode mode);
std::string_view to_string(RegressionMode mode);
UnitKind parse_unit_kind(std::string_view text);
IndexMode parse_index_mode(std::string_view text);
RegressionMode parse_regression_mode(std::string_view text);

bool is_graph_unit(UnitKind kind);
bool is_power_of_two(std::size_t n);

struct ExpansionSpec {
    UnitKind kind = UnitKind::proedgeshuffle;
    std::size_t ratio = 4;
    std::size_t channels = 32;
    std::size_t k = 16;
    IndexMode index_mode = IndexMode::expand;
    RegressionMode regression_mode = RegressionMode::edgeconv_before;
    /// Branch widths; 0 means "same as channels".
    std::size_t branch_c1 = 0;
    std::size_t branch_c2 = 0;
    /// Layers inside every h_theta.
    std::size_t edge_depth = 1;
    /// Hidden width of the coordinate head; 0 means a single C -> 3 layer.
    std::size_t head_hidden = 32;
    bool bias = true;

    /// Defaults for a kind: proedgeshuffle fuses once more before
    /// regression, every other unit regresses directly.
    static ExpansionSpec for_kind(UnitKind kind);

    /// Throws ConfigError on an inconsistent combination.
    void validate() const;

    /// Width of the features the unit hands to regression.
    std::size_t out_width() const;
};

struct ExpansionContext {
    Tensor features;                            // [N x C]
    const IndexMatrix* base_graph = nullptr;    // KNN over the raw cloud
};

struct ExpansionResult {
    Tensor features;                  // [rN x C']
    std::optional<IndexMatrix> graph; // rN-row graph, when the unit built one
    std::vector<std::size_t> row_trace;
};

/// A configured feature-expansion operator N x C -> rN x C'. Children of
/// input point i occupy output rows r*i .. r*i + r - 1 for every kind.
class ExpansionUnit {
public:
    virtual ~ExpansionUnit() = default;
    virtual ExpansionResult expand(const ExpansionContext& ctx) const = 0;
    const ExpansionSpec& spec() const { return spec_; }

protected:
    explicit ExpansionUnit(ExpansionSpec spec) : spec_(std::move(spec)) {}
    ExpansionSpec spec_;
};

/// Builds the unit and registers its parameters under "<prefix>.".
std::unique_ptr<ExpansionUnit> make_unit(const ExpansionSpec& spec, ParameterStore& store, Rng& rng,
                                         const std::string& prefix = "unit");

/// Supplies the rN-row graph on demand; direct regression never calls it.
using GraphProvider = std::function<const IndexMatrix&()>;

/// Final stage: rN x C features -> rN x 3 coordinates.
class RegressionStage {
public:
    RegressionStage(const ExpansionSpec& spec, ParameterStore& store, Rng& rng, const std::string& prefix = "head");

    /// direct: head only. edgeconv_before: edgeconv C -> C on the rN graph,
    /// then head. edgeconv_after: head, then edgeconv 3 -> 3 on the rN graph
    /// with the coordinates as features.
    Tensor apply(const Tensor& features, const GraphProvider& graph) const;

    const nn::SharedMLP& head() const { return *head_; }

private:
    RegressionMode mode_;
    std::optional<nn::SharedMLP> head_;
    std::optional<nn::EdgeConvLayer> fuse_;
};

/// rN-row graph for the features a unit produced: the unit's own graph if it
/// built one, otherwise derived from the base graph per spec.index_mode.
IndexMatrix high_power_graph(const ExpansionSpec& spec, const ExpansionResult& result, const IndexMatrix* base);

}  // namespace puxp::units
