#include "puxp/index_matrix.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "puxp/error.hpp"

namespace puxp {

IndexMatrix::IndexMatrix(std::size_t rows, std::size_t k) : rows_(rows), k_(k), entries_(rows * k, 0) {}

IndexMatrix::IndexMatrix(std::size_t rows, std::size_t k, std::vector<Index> entries)
    : rows_(rows), k_(k), entries_(std::move(entries)) {
    if (entries_.size() != rows * k) {
        throw DimensionError(
            fmt::format("index matrix {}x{} needs {} entries, got {}", rows, k, rows * k, entries_.size()));
    }
}

void IndexMatrix::validate_bounds(std::size_t bound) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i] >= bound) {
            throw IndexError(fmt::format("neighbor index {} at row {} is out of range (size {})",
                                         entries_[i], k_ ? i / k_ : 0, bound));
        }
    }
}

void IndexMatrix::validate_graph() const {
    validate_bounds(rows_);
    std::vector<Index> scratch(k_);
    for (std::size_t i = 0; i < rows_; ++i) {
        auto r = row(i);
        if (std::find(r.begin(), r.end(), static_cast<Index>(i)) != r.end()) {
            throw IndexError(fmt::format("row {} lists itself as a neighbor", i));
        }
        std::copy(r.begin(), r.end(), scratch.begin());
        std::sort(scratch.begin(), scratch.end());
        if (std::adjacent_find(scratch.begin(), scratch.end()) != scratch.end()) {
            throw IndexError(fmt::format("row {} repeats a neighbor", i));
        }
    }
}

}  // namespace puxp
