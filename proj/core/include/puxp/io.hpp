#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "puxp/geometry.hpp"
#include "puxp/model.hpp"
#include "puxp/pipeline.hpp"

namespace puxp::io {

/// One point per line, three whitespace-separated decimals. Blank lines and
/// '#' comments are skipped. Errors carry the 1-based line number.
PointCloud parse_xyz(std::string_view text);
PointCloud read_xyz(const std::filesystem::path& path);
/// Nine significant digits per coordinate.
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

struct OffMesh {
    TriangleMesh mesh;
    std::size_t dropped_faces = 0;  // zero-area triangles removed on read
};

/// OFF with polygon faces fan-triangulated.
OffMesh parse_off(std::string_view text);
OffMesh read_off(const std::filesystem::path& path);

/// PUXP1 layout, all integers little-endian u32:
///   "PUXP1" | spec length | spec text (ModelSpec key=value lines)
///   | parameter count | per parameter: name length, name, rank, dims..., f32 values
std::vector<unsigned char> encode_checkpoint(const UpsamplingModel& model);
/// Rebuilds the model from the embedded configuration and fills in the stored values.
/// Throws FormatError on bad magic, truncation or a layout that does not
/// match that configuration. Never returns a partially filled model.
UpsamplingModel decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, const UpsamplingModel& model);
UpsamplingModel load_checkpoint(const std::filesystem::path& path);

/// Header comment naming the metric conventions, shared by all reports.
void write_convention_header(std::ostream& out);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<pipeline::EvalRow>& rows);
void write_comparison_csv(std::ostream& out, const std::vector<pipeline::ComparisonRow>& rows);
void write_comparison_csv(const std::filesystem::path& path, const std::vector<pipeline::ComparisonRow>& rows);

}  // namespace puxp::io
