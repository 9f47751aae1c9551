#include "puxp/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "puxp/error.hpp"

namespace puxp::io {
namespace {

constexpr std::string_view kMagic = "PUXP1";

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path.string()));
}

struct Line {
    std::size_t number;
    std::vector<std::string_view> tokens;
};

// Non-empty lines with '#' comments stripped, split on whitespace.
std::vector<Line> tokenize(std::string_view text) {
    std::vector<Line> lines;
    std::size_t number = 0;
    while (!text.empty()) {
        ++number;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        Line parsed{number, {}};
        std::size_t pos = 0;
        while (true) {
            pos = line.find_first_not_of(" \t\r", pos);
            if (pos == std::string_view::npos) break;
            const auto end = line.find_first_of(" \t\r", pos);
            parsed.tokens.push_back(line.substr(pos, end - pos));
            if (end == std::string_view::npos) break;
            pos = end;
        }
        if (!parsed.tokens.empty()) lines.push_back(std::move(parsed));
    }
    return lines;
}

double parse_double(std::string_view token, std::size_t line, std::string_view what) {
    const std::string text(token);
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw FormatError(fmt::format("{} line {}: cannot parse '{}' as a number", what, line, token));
    }
    if (!std::isfinite(value)) throw FormatError(fmt::format("{} line {}: non-finite value '{}'", what, line, token));
    return value;
}

std::size_t parse_count(std::string_view token, std::size_t line, std::string_view what) {
    const std::string text(token);
    char* end = nullptr;
    const unsigned long long value = std::strtoull(text.c_str(), &end, 10);
    if (text.empty() || text[0] == '-' || end != text.c_str() + text.size()) {
        throw FormatError(fmt::format("{} line {}: expected a non-negative integer, got '{}'", what, line, token));
    }
    return static_cast<std::size_t>(value);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_bytes(std::vector<unsigned char>& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::span<const unsigned char> take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(fmt::format("checkpoint truncated: needed {} bytes at offset {}, file has {}", n, pos_,
                                          bytes_.size()));
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t u32() {
        const auto s = take(4);
        return std::uint32_t(s[0]) | std::uint32_t(s[1]) << 8 | std::uint32_t(s[2]) << 16 | std::uint32_t(s[3]) << 24;
    }

    std::string text() {
        const auto s = take(u32());
        return {s.begin(), s.end()};
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t offset() const { return pos_; }

private:
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

PointCloud parse_xyz(std::string_view text) {
    std::vector<Vec3> points;
    for (const Line& line : tokenize(text)) {
        if (line.tokens.size() != 3) {
            throw FormatError(
                fmt::format("xyz line {}: expected 3 coordinates, found {}", line.number, line.tokens.size()));
        }
        points.push_back({parse_double(line.tokens[0], line.number, "xyz"),
                          parse_double(line.tokens[1], line.number, "xyz"),
                          parse_double(line.tokens[2], line.number, "xyz")});
    }
    if (points.empty()) throw ConfigError("xyz input contains no points");
    return PointCloud(std::move(points));
}

PointCloud read_xyz(const std::filesystem::path& path) { return parse_xyz(slurp(path)); }

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
    auto out = open_out(path);
    for (const Vec3& p : cloud.points()) fmt::print(out, "{:.9g} {:.9g} {:.9g}\n", p.x, p.y, p.z);
    finish(out, path);
}

OffMesh parse_off(std::string_view text) {
    const std::vector<Line> lines = tokenize(text);
    if (lines.empty() || lines[0].tokens[0] != "OFF") throw FormatError("off: missing 'OFF' header");

    // Counts may share the header line or follow it.
    std::vector<std::string_view> counts(lines[0].tokens.begin() + 1, lines[0].tokens.end());
    std::size_t next = 1;
    if (counts.empty()) {
        if (lines.size() < 2) throw FormatError("off: missing vertex/face counts");
        counts = lines[1].tokens;
        next = 2;
    }
    const std::size_t counts_line = next == 1 ? lines[0].number : lines[1].number;
    if (counts.size() < 2) throw FormatError(fmt::format("off line {}: expected vertex and face counts", counts_line));
    const std::size_t nv = parse_count(counts[0], counts_line, "off");
    const std::size_t nf = parse_count(counts[1], counts_line, "off");
    if (lines.size() < next + nv + nf) {
        throw FormatError(fmt::format("off: expected {} vertices and {} faces, file ends early", nv, nf));
    }

    std::vector<Vec3> vertices;
    vertices.reserve(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const Line& line = lines[next + v];
        if (line.tokens.size() < 3) throw FormatError(fmt::format("off line {}: vertex needs 3 coordinates", line.number));
        vertices.push_back({parse_double(line.tokens[0], line.number, "off"),
                            parse_double(line.tokens[1], line.number, "off"),
                            parse_double(line.tokens[2], line.number, "off")});
    }

    std::vector<Face> faces;
    for (std::size_t f = 0; f < nf; ++f) {
        const Line& line = lines[next + nv + f];
        const std::size_t degree = parse_count(line.tokens[0], line.number, "off");
        if (degree < 3 || line.tokens.size() < degree + 1) {
            throw FormatError(fmt::format("off line {}: face {} needs at least 3 vertex indices", line.number, f));
        }
        std::vector<std::uint32_t> ids;
        for (std::size_t i = 0; i < degree; ++i) {
            const std::size_t id = parse_count(line.tokens[1 + i], line.number, "off");
            if (id >= nv) {
                throw IndexError(fmt::format("off face {} (line {}) references vertex {} but the mesh has {} vertices",
                                             f, line.number, id, nv));
            }
            ids.push_back(static_cast<std::uint32_t>(id));
        }
        for (std::size_t i = 1; i + 1 < degree; ++i) faces.push_back({ids[0], ids[i], ids[i + 1]});
    }

    OffMesh result{TriangleMesh(std::move(vertices), std::move(faces)), 0};
    result.dropped_faces = result.mesh.drop_degenerate_faces();
    return result;
}

OffMesh read_off(const std::filesystem::path& path) { return parse_off(slurp(path)); }

std::vector<unsigned char> encode_checkpoint(const UpsamplingModel& model) {
    std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
    put_bytes(out, model.spec().to_config().str());
    put_u32(out, static_cast<std::uint32_t>(model.params().size()));
    for (const Parameter& p : model.params()) {
        put_bytes(out, p.name);
        const Shape& shape = p.tensor.shape();
        put_u32(out, static_cast<std::uint32_t>(shape.rank()));
        for (std::size_t d = 0; d < shape.rank(); ++d) put_u32(out, static_cast<std::uint32_t>(shape[d]));
        for (double v : p.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

UpsamplingModel decode_checkpoint(std::span<const unsigned char> bytes) {
    Reader in(bytes);
    if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        const auto n = std::min<std::size_t>(bytes.size(), kMagic.size());
        std::string found;
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned char c = bytes[i];
            found += (c >= 0x20 && c < 0x7f) ? static_cast<char>(c) : '?';
        }
        throw FormatError(fmt::format("unsupported checkpoint version: expected magic '{}', found '{}'", kMagic, found));
    }
    in.take(kMagic.size());

    ModelSpec spec;
    try {
        spec = ModelSpec::from_config(KeyValueConfig::parse(in.text()));
    } catch (const ConfigError& e) {
        throw FormatError(fmt::format("checkpoint spec block is invalid: {}", e.what()));
    }
    UpsamplingModel model(spec, 0);
    const auto& params = model.params().params();

    const std::uint32_t count = in.u32();
    if (count != params.size()) {
        throw FormatError(fmt::format("checkpoint stores {} parameters, spec declares {}", count, params.size()));
    }
    std::vector<std::vector<double>> staged(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = in.text();
        if (name != params[i].name) {
            throw FormatError(fmt::format("checkpoint parameter {} is '{}', spec expects '{}'", i, name, params[i].name));
        }
        const Shape& expected = params[i].tensor.shape();
        const std::uint32_t rank = in.u32();
        std::vector<std::size_t> dims;
        for (std::uint32_t d = 0; d < rank && d < 4; ++d) dims.push_back(in.u32());
        if (rank != expected.rank() || !std::equal(dims.begin(), dims.end(), expected.dims().begin())) {
            std::string got;
            for (auto d : dims) got += (got.empty() ? "" : "x") + std::to_string(d);
            throw FormatError(fmt::format("checkpoint parameter '{}' has shape [{}], spec expects {}", name, got,
                                          expected.str()));
        }
        staged[i].reserve(expected.numel());
        for (std::size_t k = 0; k < expected.numel(); ++k) {
            staged[i].push_back(static_cast<double>(std::bit_cast<float>(in.u32())));
        }
    }
    if (!in.done()) throw FormatError(fmt::format("checkpoint has trailing bytes after offset {}", in.offset()));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto dst = t.mutable_data();
        std::copy(staged[i].begin(), staged[i].end(), dst.begin());
    }
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const UpsamplingModel& model) {
    const auto bytes = encode_checkpoint(model);
    auto out = open_out(path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    finish(out, path);
}

UpsamplingModel load_checkpoint(const std::filesystem::path& path) {
    const std::string raw = slurp(path);
    return decode_checkpoint(std::span(reinterpret_cast<const unsigned char*>(raw.data()), raw.size()));
}

void write_convention_header(std::ostream& out) {
    out << "# cd: chamfer distance, sum of both directed means of squared nearest-neighbor distances\n"
           "# hd: hausdorff distance, larger directed maximum of unsquared distances\n"
           "# p2f: mean unsquared distance from each predicted point to the mesh, predicted -> mesh only\n"
           "# values are raw (not scaled by 1e3)\n";
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
    auto out = open_out(path);
    out << "# loss: chamfer distance (squared convention), batch mean, measured before each step's update\n";
    out << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) fmt::print(out, "{},{}\n", i, fmt_double(losses[i]));
    finish(out, path);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<pipeline::EvalRow>& rows) {
    auto out = open_out(path);
    write_convention_header(out);
    out << "name,cd,hd,p2f,pred_points,gt_points\n";
    for (const auto& row : rows) {
        fmt::print(out, "{},{},{},{},{},{}\n", row.name, fmt_double(row.report.cd), fmt_double(row.report.hd),
                   row.report.p2f ? fmt_double(*row.report.p2f) : std::string(), row.report.pred_points,
                   row.report.gt_points);
    }
    finish(out, path);
}

void write_comparison_csv(std::ostream& out, const std::vector<pipeline::ComparisonRow>& rows) {
    write_convention_header(out);
    out << "# each row averages the held-out aggregate over its seeds\n";
    out << "label,backbone,unit,index_mode,regression_mode,seeds,steps,backbone_params,unit_params,head_params,cd,hd,"
           "p2f\n";
    for (const auto& r : rows) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.label, r.backbone, r.unit, r.index_mode,
                   r.regression_mode, r.seeds, r.steps, r.backbone_params, r.unit_params, r.head_params,
                   fmt_double(r.cd), fmt_double(r.hd), fmt_double(r.p2f));
    }
    out << "# reference at full training scale (PU1K, x1e-3 CD, not reproduced here): "
           "PU-GCN 0.657, PU-GCN with ProEdgeShuffle 0.597\n";
}

void write_comparison_csv(const std::filesystem::path& path, const std::vector<pipeline::ComparisonRow>& rows) {
    auto out = open_out(path);
    write_comparison_csv(out, rows);
    finish(out, path);
}

}  // namespace puxp::io
