#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "puxp/config.hpp"
#include "puxp/geometry.hpp"
#include "puxp/nn.hpp"
#include "puxp/parameter.hpp"
#include "puxp/units.hpp"

namespace puxp {

enum class BackboneKind { mlp_stack, edgeconv_stack };

std::string_view to_string(BackboneKind kind);
BackboneKind parse_backbone_kind(std::string_view text);

/// Feature extractor N x 3 -> N x C standing in for a full upsampling network.
struct BackboneSpec {
    BackboneKind kind = BackboneKind::edgeconv_stack;
    std::size_t depth = 2;
    std::size_t width = 32;
};

/// Everything needed to rebuild a model's parameter layout.
struct ModelSpec {
    BackboneSpec backbone;
    units::ExpansionSpec unit;  // unit.channels always equals backbone.width

    void validate() const;
    bool needs_base_graph() const;

    /// `backbone.*` and `unit.*` keys.
    KeyValueConfig to_config() const;
    /// Reads `backbone.*` / `unit.*` keys, ignoring all other sections and
    /// rejecting unknown keys inside these two. Missing keys take the
    /// defaults of ExpansionSpec::for_kind(unit.kind).
    static ModelSpec from_config(const KeyValueConfig& cfg);

    bool operator==(const ModelSpec& other) const { return to_config() == other.to_config(); }
};

class Backbone {
public:
    Backbone(const BackboneSpec& spec, ParameterStore& store, Rng& rng);
    Tensor apply(const Tensor& coords, const IndexMatrix* graph) const;

private:
    BackboneSpec spec_;
    std::optional<nn::SharedMLP> mlp_;
    std::vector<nn::EdgeConvLayer> convs_;
};

/// Backbone, expansion unit and regression stage with one parameter store.
/// Parameter names are prefixed "backbone.", "unit." and "head.".
class UpsamplingModel {
public:
    UpsamplingModel(const ModelSpec& spec, std::uint64_t init_seed);

    UpsamplingModel(const UpsamplingModel&) = delete;
    UpsamplingModel& operator=(const UpsamplingModel&) = delete;
    UpsamplingModel(UpsamplingModel&&) noexcept = default;
    UpsamplingModel& operator=(UpsamplingModel&&) noexcept = default;

    const ModelSpec& spec() const { return spec_; }
    const ParameterStore& params() const { return *store_; }
    ParameterStore& params() { return *store_; }

    /// Graph the model expects for `input` (KNN in 3D), if it needs one.
    std::optional<IndexMatrix> base_graph(const PointCloud& input) const;

    /// [rN x 3] predicted coordinates, differentiable w.r.t. parameters.
    Tensor forward(const PointCloud& input, const IndexMatrix* base_graph) const;

    /// Convenience: base graph + forward + conversion.
    PointCloud upsample(const PointCloud& input) const;

    std::size_t backbone_params() const { return store_->scalar_count("backbone."); }
    std::size_t unit_params() const { return store_->scalar_count("unit."); }
    std::size_t head_params() const { return store_->scalar_count("head."); }

private:
    ModelSpec spec_;
    std::unique_ptr<ParameterStore> store_;
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<units::ExpansionUnit> unit_;
    std::unique_ptr<units::RegressionStage> regression_;
};

}  // namespace puxp
