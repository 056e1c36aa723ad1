#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "pgx/tensor.hpp"

namespace pgx {

/// Compressed sparse row matrix. Column indices are sorted within each row.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> val;

    std::size_t nnz() const noexcept { return col.size(); }
    std::size_t row_begin(std::size_t r) const { return row_ptr[r]; }
    std::size_t row_end(std::size_t r) const { return row_ptr[r + 1]; }

    /// Index of entry (r, c) in col/val, if stored.
    std::optional<std::size_t> find(std::size_t r, std::size_t c) const;
    double at(std::size_t r, std::size_t c) const;

    /// Build from (row, col, value) triplets; duplicate coordinates are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::pair<std::size_t, std::size_t>> coords,
                                   std::vector<double> values);

    Tensor to_dense() const;
    CsrMatrix transposed() const;

    friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;
};

/// y = S * x.
Tensor spmm(const CsrMatrix& s, const Tensor& x);
/// y = S^T * x.
Tensor spmm_t(const CsrMatrix& s, const Tensor& x);

std::vector<double> row_sums(const CsrMatrix& s);

} // namespace pgx
