#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace puxp {

/// M x K table of neighbor indices into a point set of M rows.
///
/// A graph built by KNN never lists a row's own index and never repeats an
/// entry within a row; validate_graph() checks both. gather_rows only needs
/// bounds, so arbitrary tables (e.g. all zeros) are representable too.
class IndexMatrix {
public:
    using Index = std::uint32_t;

    IndexMatrix() = default;
    IndexMatrix(std::size_t rows, std::size_t k);
    IndexMatrix(std::size_t rows, std::size_t k, std::vector<Index> entries);

    std::size_t rows() const { return rows_; }
    std::size_t k() const { return k_; }

    std::span<const Index> row(std::size_t i) const { return {entries_.data() + i * k_, k_}; }
    std::span<Index> row(std::size_t i) { return {entries_.data() + i * k_, k_}; }
    Index operator()(std::size_t i, std::size_t j) const { return entries_[i * k_ + j]; }
    std::span<const Index> entries() const { return entries_; }

    /// Throws IndexError unless every entry is < bound.
    void validate_bounds(std::size_t bound) const;

    /// Throws IndexError unless this is a valid KNN graph over its own rows:
    /// in range, self excluded, entries distinct within each row.
    void validate_graph() const;

    bool operator==(const IndexMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t k_ = 0;
    std::vector<Index> entries_;
};

}  // namespace puxp
