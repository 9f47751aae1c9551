#include "puxp/model.hpp"

#include <fmt/format.h>

#include "puxp/error.hpp"
#include "puxp/geometry.hpp"

namespace puxp {

std::string_view to_string(BackboneKind kind) {
    return kind == BackboneKind::mlp_stack ? "mlp_stack" : "edgeconv_stack";
}

BackboneKind parse_backbone_kind(std::string_view text) {
    if (text == "mlp_stack") return BackboneKind::mlp_stack;
    if (text == "edgeconv_stack") return BackboneKind::edgeconv_stack;
    throw ConfigError(fmt::format("unknown backbone '{}'", text));
}

void ModelSpec::validate() const {
    if (backbone.depth == 0) throw ConfigError("backbone depth must be at least 1");
    if (backbone.width == 0) throw ConfigError("backbone width must be positive");
    if (unit.channels != backbone.width) {
        throw ConfigError(fmt::format("unit width {} differs from backbone width {}", unit.channels, backbone.width));
    }
    if (backbone.kind == BackboneKind::edgeconv_stack && unit.k == 0) {
        throw ConfigError("edgeconv backbone needs k > 0");
    }
    unit.validate();
}

bool ModelSpec::needs_base_graph() const {
    return backbone.kind == BackboneKind::edgeconv_stack || units::is_graph_unit(unit.kind) ||
           unit.regression_mode != units::RegressionMode::direct;
}

KeyValueConfig ModelSpec::to_config() const {
    KeyValueConfig c;
    c.set("backbone.kind", std::string(to_string(backbone.kind)));
    c.set("backbone.depth", std::to_string(backbone.depth));
    c.set("backbone.width", std::to_string(backbone.width));
    c.set("unit.kind", std::string(units::to_string(unit.kind)));
    c.set("unit.ratio", std::to_string(unit.ratio));
    c.set("unit.k", std::to_string(unit.k));
    c.set("unit.index_mode", std::string(units::to_string(unit.index_mode)));
    c.set("unit.regression_mode", std::string(units::to_string(unit.regression_mode)));
    c.set("unit.branch_c1", std::to_string(unit.branch_c1));
    c.set("unit.branch_c2", std::to_string(unit.branch_c2));
    c.set("unit.edge_depth", std::to_string(unit.edge_depth));
    c.set("unit.head_hidden", std::to_string(unit.head_hidden));
    c.set("unit.bias", unit.bias ? "true" : "false");
    return c;
}

ModelSpec ModelSpec::from_config(const KeyValueConfig& cfg) {
    cfg.section("backbone").reject_unknown({"kind", "depth", "width"});
    cfg.section("unit").reject_unknown({"kind", "ratio", "k", "index_mode", "regression_mode", "branch_c1",
                                        "branch_c2", "edge_depth", "head_hidden", "bias"});
    ModelSpec spec;
    spec.backbone.kind = parse_backbone_kind(cfg.get_string("backbone.kind", "edgeconv_stack"));
    spec.backbone.depth = cfg.get_size("backbone.depth", spec.backbone.depth);
    spec.backbone.width = cfg.get_size("backbone.width", spec.backbone.width);

    units::ExpansionSpec u = units::ExpansionSpec::for_kind(units::parse_unit_kind(cfg.get_string("unit.kind", "proedgeshuffle")));
    u.channels = spec.backbone.width;
    u.ratio = cfg.get_size("unit.ratio", u.ratio);
    u.k = cfg.get_size("unit.k", u.k);
    if (auto v = cfg.get("unit.index_mode")) u.index_mode = units::parse_index_mode(*v);
    if (auto v = cfg.get("unit.regression_mode")) u.regression_mode = units::parse_regression_mode(*v);
    u.branch_c1 = cfg.get_size("unit.branch_c1", u.branch_c1);
    u.branch_c2 = cfg.get_size("unit.branch_c2", u.branch_c2);
    u.edge_depth = cfg.get_size("unit.edge_depth", u.edge_depth);
    u.head_hidden = cfg.get_size("unit.head_hidden", u.head_hidden);
    u.bias = cfg.get_bool("unit.bias", u.bias);
    spec.unit = u;
    spec.validate();
    return spec;
}

Backbone::Backbone(const BackboneSpec& spec, ParameterStore& store, Rng& rng) : spec_(spec) {
    if (spec.kind == BackboneKind::mlp_stack) {
        std::vector<std::size_t> widths{3};
        widths.insert(widths.end(), spec.depth, spec.width);
        mlp_.emplace("backbone.mlp", std::move(widths), store, rng, nn::MlpOptions{.relu_output = true});
    } else {
        for (std::size_t i = 0; i < spec.depth; ++i) {
            convs_.emplace_back(fmt::format("backbone.edge{}", i), i == 0 ? 3 : spec.width, spec.width, store, rng);
        }
    }
}

Tensor Backbone::apply(const Tensor& coords, const IndexMatrix* graph) const {
    if (mlp_) return mlp_->apply(coords);
    if (!graph) throw ConfigError("edgeconv backbone needs a base neighbor graph");
    Tensor h = coords;
    for (const auto& conv : convs_) h = conv.apply(h, *graph);
    return h;
}

UpsamplingModel::UpsamplingModel(const ModelSpec& spec, std::uint64_t init_seed)
    : spec_(spec), store_(std::make_unique<ParameterStore>()) {
    spec_.validate();
    Rng rng(init_seed);
    backbone_ = std::make_unique<Backbone>(spec_.backbone, *store_, rng);
    unit_ = units::make_unit(spec_.unit, *store_, rng, "unit");
    regression_ = std::make_unique<units::RegressionStage>(spec_.unit, *store_, rng, "head");
}

std::optional<IndexMatrix> UpsamplingModel::base_graph(const PointCloud& input) const {
    if (!spec_.needs_base_graph()) return std::nullopt;
    return geometry::knn_accelerated(input, spec_.unit.k);
}

Tensor UpsamplingModel::forward(const PointCloud& input, const IndexMatrix* base_graph) const {
    if (spec_.needs_base_graph() && !base_graph) throw ConfigError("model needs a base neighbor graph");
    const Tensor features = backbone_->apply(input.to_tensor(), base_graph);
    const units::ExpansionResult expanded = unit_->expand({features, base_graph});
    std::optional<IndexMatrix> high_power;
    return regression_->apply(expanded.features, [&]() -> const IndexMatrix& {
        if (!high_power) high_power = units::high_power_graph(spec_.unit, expanded, base_graph);
        return *high_power;
    });
}

PointCloud UpsamplingModel::upsample(const PointCloud& input) const {
    const auto graph = base_graph(input);
    return PointCloud::from_tensor(forward(input, graph ? &*graph : nullptr));
}

}  // namespace puxp
