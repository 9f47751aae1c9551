#include "puxp/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(fmt::format("config key '{}': cannot parse '{}' as a number", key, text));
    }
    return value;
}

}  // namespace

std::vector<std::string> split_list(std::string_view text, char sep) {
    std::vector<std::string> out;
    while (!text.empty()) {
        const auto pos = text.find(sep);
        const auto item = trim(text.substr(0, pos));
        if (!item.empty()) out.emplace_back(item);
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + 1);
    }
    return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("config line {}: expected key=value, got '{}'", line_no, line));
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", line_no));
        if (cfg.has(key)) throw ConfigError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        cfg.entries_.emplace(std::string(key), std::string(trim(line.substr(eq + 1))));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
}

std::size_t KeyValueConfig::get_size(std::string_view key, std::size_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    // from_chars for double is missing from older libstdc++; strtod is locale-free for "C".
    char* end = nullptr;
    const double value = std::strtod(v->c_str(), &end);
    if (v->empty() || end != v->c_str() + v->size()) {
        throw ConfigError(fmt::format("config key '{}': cannot parse '{}' as a number", key, *v));
    }
    return value;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError(fmt::format("config key '{}': expected true/false, got '{}'", key, *v));
}

std::vector<std::string> KeyValueConfig::get_list(std::string_view key, std::vector<std::string> fallback) const {
    auto v = get(key);
    return v ? split_list(*v) : std::move(fallback);
}

KeyValueConfig KeyValueConfig::section(std::string_view prefix) const {
    KeyValueConfig out;
    const std::string lead = std::string(prefix) + ".";
    for (const auto& [k, v] : entries_) {
        if (k.starts_with(lead)) out.entries_.emplace(k.substr(lead.size()), v);
    }
    return out;
}

std::vector<std::string> KeyValueConfig::children(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : section(prefix).entries_) {
        std::string head = k.substr(0, k.find('.'));
        if (out.empty() || out.back() != head) out.push_back(std::move(head));
    }
    return out;
}

void KeyValueConfig::reject_unknown(const std::set<std::string, std::less<>>& known) const {
    for (const auto& [k, v] : entries_) {
        if (!known.contains(k)) throw ConfigError(fmt::format("unknown config key '{}'", k));
    }
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValueConfig::str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += fmt::format("{}={}\n", k, v);
    return out;
}

}  // namespace puxp
