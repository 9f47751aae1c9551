#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace puxp {

/// Flat `section.key=value` text configuration.
///
/// One entry per line; blank lines and lines starting with '#' are ignored;
/// whitespace around keys and values is trimmed. Keys are unique.
/// Serialization is sorted by key, so equal configs print identically.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(std::string key, std::string value);
    bool has(std::string_view key) const;
    std::optional<std::string> get(std::string_view key) const;

    std::string get_string(std::string_view key, std::string fallback) const;
    std::size_t get_size(std::string_view key, std::size_t fallback) const;
    std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
    double get_double(std::string_view key, double fallback) const;
    bool get_bool(std::string_view key, bool fallback) const;
    std::vector<std::string> get_list(std::string_view key, std::vector<std::string> fallback) const;

    /// Entries under `prefix.`, with the prefix stripped.
    KeyValueConfig section(std::string_view prefix) const;
    /// Distinct first path components of keys under `prefix.`.
    std::vector<std::string> children(std::string_view prefix) const;

    /// Throws ConfigError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string, std::less<>>& known) const;

    /// Values from `other` replace or extend this config.
    void merge(const KeyValueConfig& other);

    const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
    std::string str() const;

    bool operator==(const KeyValueConfig&) const = default;

private:
    std::map<std::string, std::string, std::less<>> entries_;
};

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace puxp
