#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "puxp/geometry.hpp"
#include "puxp/random.hpp"

namespace puxp::shapes {

enum class ShapeKind { sphere, torus, cylinder, box_surface };

inline constexpr ShapeKind kAllShapes[] = {ShapeKind::sphere, ShapeKind::torus, ShapeKind::cylinder,
                                           ShapeKind::box_surface};

std::string_view to_string(ShapeKind kind);
ShapeKind parse_shape_kind(std::string_view text);

/// Parametric closed surface used as a stand-in for scanned models.
///
///   sphere      radius = a
///   torus       major radius = a, tube radius = b (b < a)
///   cylinder    radius = a, height = b, centered, capped
///   box_surface half extents a, b, c
struct SyntheticShape {
    ShapeKind kind = ShapeKind::sphere;
    double a = 1.0, b = 0.0, c = 0.0;

    /// Unit-scale default parameters for each kind.
    static SyntheticShape standard(ShapeKind kind);

    /// Throws ConfigError on non-positive or inconsistent parameters.
    void validate() const;

    double area() const;

    /// One point drawn uniformly with respect to surface area.
    Vec3 sample(Rng& rng) const;

    /// Signed-free residual of the implicit surface equation; ~0 on the surface.
    double surface_residual(Vec3 p) const;

    /// Triangulation. Curved shapes are tessellated with `resolution`
    /// segments around; planar faces are exact.
    TriangleMesh mesh(std::size_t resolution = 48) const;

    /// Largest distance between the curved surface and its tessellation at
    /// `resolution`; zero for box_surface.
    double tessellation_error(std::size_t resolution = 48) const;
};

struct SamplePair {
    PointCloud input;  // n points
    PointCloud gt;     // r * n points
    TriangleMesh mesh;
};

/// Ground truth: r*n uniform surface samples. Input: n points drawn without
/// replacement from an independent uniform draw of r*n points.
SamplePair sample_pair(const SyntheticShape& shape, std::size_t n, std::size_t ratio, std::uint64_t seed,
                       std::size_t mesh_resolution = 48);

}  // namespace puxp::shapes
