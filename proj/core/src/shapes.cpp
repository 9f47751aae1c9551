#include "puxp/shapes.hpp"

#include <algorithm>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp::shapes {
namespace {

constexpr std::string_view kShapeNames[] = {"sphere", "torus", "cylinder", "box_surface"};
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 sample_sphere(double radius, Rng& rng) {
    for (;;) {
        const Vec3 g{rng.normal(), rng.normal(), rng.normal()};
        const double len = norm(g);
        if (len > 1e-12) return (radius / len) * g;
    }
}

Vec3 sample_torus(double major, double minor, Rng& rng) {
    // Tube angle density is proportional to the local circumference.
    for (;;) {
        const double u = rng.uniform(0.0, kTwoPi);
        const double v = rng.uniform(0.0, kTwoPi);
        if (rng.uniform() * (major + minor) <= major + minor * std::cos(v)) {
            const double ring = major + minor * std::cos(v);
            return {ring * std::cos(u), ring * std::sin(u), minor * std::sin(v)};
        }
    }
}

Vec3 sample_cylinder(double radius, double height, Rng& rng) {
    const double lateral = kTwoPi * radius * height;
    const double cap = std::numbers::pi * radius * radius;
    const double pick = rng.uniform() * (lateral + 2.0 * cap);
    const double theta = rng.uniform(0.0, kTwoPi);
    if (pick < lateral) {
        return {radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-0.5 * height, 0.5 * height)};
    }
    const double rho = radius * std::sqrt(rng.uniform());
    const double z = pick < lateral + cap ? -0.5 * height : 0.5 * height;
    return {rho * std::cos(theta), rho * std::sin(theta), z};
}

Vec3 sample_box(double hx, double hy, double hz, Rng& rng) {
    const double ax = hy * hz, ay = hx * hz, az = hx * hy;  // face areas / 4
    const double pick = rng.uniform() * 2.0 * (ax + ay + az);
    const double s = rng.uniform(-1.0, 1.0), t = rng.uniform(-1.0, 1.0);
    double face = pick;
    auto side = [&](double area) { return face < area ? -1.0 : 1.0; };
    if (face < 2.0 * ax) return {side(ax) * hx, s * hy, t * hz};
    face -= 2.0 * ax;
    if (face < 2.0 * ay) return {s * hx, side(ay) * hy, t * hz};
    face -= 2.0 * ay;
    return {s * hx, t * hy, side(az) * hz};
}

std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

TriangleMesh sphere_mesh(double radius, std::size_t res) {
    const std::size_t rings = std::max<std::size_t>(res / 2, 2), segs = std::max<std::size_t>(res, 3);
    std::vector<Vec3> v;
    std::vector<Face> f;
    v.push_back({0.0, 0.0, radius});
    for (std::size_t i = 1; i < rings; ++i) {
        const double phi = std::numbers::pi * static_cast<double>(i) / static_cast<double>(rings);
        for (std::size_t j = 0; j < segs; ++j) {
            const double th = kTwoPi * static_cast<double>(j) / static_cast<double>(segs);
            v.push_back({radius * std::sin(phi) * std::cos(th), radius * std::sin(phi) * std::sin(th),
                         radius * std::cos(phi)});
        }
    }
    v.push_back({0.0, 0.0, -radius});
    const std::size_t south = v.size() - 1;
    auto at = [&](std::size_t ring, std::size_t seg) { return u32(1 + (ring - 1) * segs + seg % segs); };
    for (std::size_t j = 0; j < segs; ++j) {
        f.push_back({0, at(1, j), at(1, j + 1)});
        f.push_back({u32(south), at(rings - 1, j + 1), at(rings - 1, j)});
    }
    for (std::size_t i = 1; i + 1 < rings; ++i) {
        for (std::size_t j = 0; j < segs; ++j) {
            f.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            f.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh torus_mesh(double major, double minor, std::size_t res) {
    const std::size_t nu = std::max<std::size_t>(res, 3), nv = std::max<std::size_t>(res / 2, 3);
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (std::size_t i = 0; i < nu; ++i) {
        const double u = kTwoPi * static_cast<double>(i) / static_cast<double>(nu);
        for (std::size_t j = 0; j < nv; ++j) {
            const double w = kTwoPi * static_cast<double>(j) / static_cast<double>(nv);
            const double ring = major + minor * std::cos(w);
            v.push_back({ring * std::cos(u), ring * std::sin(u), minor * std::sin(w)});
        }
    }
    auto at = [&](std::size_t i, std::size_t j) { return u32((i % nu) * nv + j % nv); };
    for (std::size_t i = 0; i < nu; ++i) {
        for (std::size_t j = 0; j < nv; ++j) {
            f.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            f.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh cylinder_mesh(double radius, double height, std::size_t res) {
    const std::size_t segs = std::max<std::size_t>(res, 3);
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (double z : {-0.5 * height, 0.5 * height}) {
        for (std::size_t j = 0; j < segs; ++j) {
            const double th = kTwoPi * static_cast<double>(j) / static_cast<double>(segs);
            v.push_back({radius * std::cos(th), radius * std::sin(th), z});
        }
    }
    const std::size_t bottom = v.size();
    v.push_back({0.0, 0.0, -0.5 * height});
    v.push_back({0.0, 0.0, 0.5 * height});
    for (std::size_t j = 0; j < segs; ++j) {
        const auto b0 = u32(j), b1 = u32((j + 1) % segs), t0 = u32(segs + j), t1 = u32(segs + (j + 1) % segs);
        f.push_back({b0, b1, t1});
        f.push_back({b0, t1, t0});
        f.push_back({u32(bottom), b1, b0});
        f.push_back({u32(bottom + 1), t0, t1});
    }
    return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh box_mesh(double hx, double hy, double hz) {
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i) v.push_back({(i & 1) ? hx : -hx, (i & 2) ? hy : -hy, (i & 4) ? hz : -hz});
    const std::vector<Face> f = {
        {0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6},  // z faces
        {0, 1, 5}, {0, 5, 4}, {2, 6, 7}, {2, 7, 3},  // y faces
        {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5},  // x faces
    };
    return TriangleMesh(std::move(v), f);
}

}  // namespace

std::string_view to_string(ShapeKind kind) { return kShapeNames[static_cast<std::size_t>(kind)]; }

ShapeKind parse_shape_kind(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kShapeNames); ++i) {
        if (kShapeNames[i] == text) return static_cast<ShapeKind>(i);
    }
    throw ConfigError(fmt::format("unknown shape '{}'", text));
}

SyntheticShape SyntheticShape::standard(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::sphere:
            return {kind, 1.0, 0.0, 0.0};
        case ShapeKind::torus:
            return {kind, 0.7, 0.3, 0.0};
        case ShapeKind::cylinder:
            return {kind, 0.6, 1.6, 0.0};
        case ShapeKind::box_surface:
            return {kind, 0.8, 0.6, 0.4};
    }
    throw ConfigError("unhandled shape kind");
}

void SyntheticShape::validate() const {
    const bool ok = [&] {
        switch (kind) {
            case ShapeKind::sphere:
                return a > 0.0;
            case ShapeKind::torus:
                return a > 0.0 && b > 0.0 && b < a;
            case ShapeKind::cylinder:
                return a > 0.0 && b > 0.0;
            case ShapeKind::box_surface:
                return a > 0.0 && b > 0.0 && c > 0.0;
        }
        return false;
    }();
    if (!ok || !std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) {
        throw ConfigError(fmt::format("invalid {} parameters ({}, {}, {})", to_string(kind), a, b, c));
    }
}

double SyntheticShape::area() const {
    switch (kind) {
        case ShapeKind::sphere:
            return 4.0 * std::numbers::pi * a * a;
        case ShapeKind::torus:
            return 4.0 * std::numbers::pi * std::numbers::pi * a * b;
        case ShapeKind::cylinder:
            return kTwoPi * a * b + 2.0 * std::numbers::pi * a * a;
        case ShapeKind::box_surface:
            return 8.0 * (a * b + b * c + a * c);
    }
    return 0.0;
}

Vec3 SyntheticShape::sample(Rng& rng) const {
    switch (kind) {
        case ShapeKind::sphere:
            return sample_sphere(a, rng);
        case ShapeKind::torus:
            return sample_torus(a, b, rng);
        case ShapeKind::cylinder:
            return sample_cylinder(a, b, rng);
        case ShapeKind::box_surface:
            return sample_box(a, b, c, rng);
    }
    throw ConfigError("unhandled shape kind");
}

double SyntheticShape::surface_residual(Vec3 p) const {
    const double rho = std::hypot(p.x, p.y);
    switch (kind) {
        case ShapeKind::sphere:
            return std::abs(norm(p) - a);
        case ShapeKind::torus:
            return std::abs(std::hypot(rho - a, p.z) - b);
        case ShapeKind::cylinder: {
            const double side = std::abs(p.z) <= 0.5 * b ? std::abs(rho - a) : INFINITY;
            const double cap = rho <= a ? std::abs(std::abs(p.z) - 0.5 * b) : INFINITY;
            return std::min(side, cap);
        }
        case ShapeKind::box_surface:
            return std::abs(std::max({std::abs(p.x) - a, std::abs(p.y) - b, std::abs(p.z) - c}));
    }
    return INFINITY;
}

TriangleMesh SyntheticShape::mesh(std::size_t resolution) const {
    validate();
    switch (kind) {
        case ShapeKind::sphere:
            return sphere_mesh(a, resolution);
        case ShapeKind::torus:
            return torus_mesh(a, b, resolution);
        case ShapeKind::cylinder:
            return cylinder_mesh(a, b, resolution);
        case ShapeKind::box_surface:
            return box_mesh(a, b, c);
    }
    throw ConfigError("unhandled shape kind");
}

double SyntheticShape::tessellation_error(std::size_t resolution) const {
    const double step = kTwoPi / static_cast<double>(std::max<std::size_t>(resolution, 3));
    switch (kind) {
        case ShapeKind::sphere:
            return a * (1.0 - std::cos(step));
        case ShapeKind::torus:
            return (a + b) * (1.0 - std::cos(step)) + b * (1.0 - std::cos(2.0 * step));
        case ShapeKind::cylinder:
            return a * (1.0 - std::cos(step));
        case ShapeKind::box_surface:
            return 0.0;
    }
    return 0.0;
}

SamplePair sample_pair(const SyntheticShape& shape, std::size_t n, std::size_t ratio, std::uint64_t seed,
                       std::size_t mesh_resolution) {
    shape.validate();
    if (n < 8) throw ConfigError(fmt::format("sample_pair needs at least 8 input points, got {}", n));
    if (ratio == 0) throw ConfigError("ratio must be positive");
    Rng root(seed);
    Rng gt_rng = root.fork(1);
    Rng input_rng = root.fork(2);

    std::vector<Vec3> gt(n * ratio);
    for (Vec3& p : gt) p = shape.sample(gt_rng);

    std::vector<Vec3> pool(n * ratio);
    for (Vec3& p : pool) p = shape.sample(input_rng);
    for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + input_rng.below(pool.size() - i)]);
    pool.resize(n);

    return {PointCloud(std::move(pool)), PointCloud(std::move(gt)), shape.mesh(mesh_resolution)};
}

}  // namespace puxp::shapes
