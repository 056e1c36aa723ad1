#include "pgx/sparse.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace pgx {

std::optional<std::size_t> CsrMatrix::find(std::size_t r, std::size_t c) const {
    const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
    const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
    const auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - col.begin());
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
    const auto idx = find(r, c);
    return idx ? val[*idx] : 0.0;
}

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::pair<std::size_t, std::size_t>> coords,
                                   std::vector<double> values) {
    if (coords.size() != values.size()) {
        throw ShapeError("from_triplets: coordinate and value counts differ");
    }
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });

    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    const std::pair<std::size_t, std::size_t>* prev = nullptr;
    for (std::size_t k : order) {
        const auto [r, c] = coords[k];
        if (r >= rows || c >= cols) {
            throw ShapeError("from_triplets: coordinate (" + std::to_string(r) + "," +
                             std::to_string(c) + ") outside " + std::to_string(rows) + "x" +
                             std::to_string(cols));
        }
        if (prev != nullptr && *prev == coords[k]) {
            m.val.back() += values[k];
            continue;
        }
        prev = &coords[k];
        m.col.push_back(c);
        m.val.push_back(values[k]);
        ++m.row_ptr[r + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) {
        m.row_ptr[r + 1] += m.row_ptr[r];
    }
    return m;
}

Tensor CsrMatrix::to_dense() const {
    Tensor d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
            d(r, col[e]) += val[e];
        }
    }
    return d;
}

CsrMatrix CsrMatrix::transposed() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_ptr.assign(cols + 1, 0);
    for (std::size_t c : col) {
        ++t.row_ptr[c + 1];
    }
    for (std::size_t r = 0; r < cols; ++r) {
        t.row_ptr[r + 1] += t.row_ptr[r];
    }
    t.col.resize(nnz());
    t.val.resize(nnz());
    std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
            const std::size_t dst = cursor[col[e]]++;
            t.col[dst] = r;
            t.val[dst] = val[e];
        }
    }
    return t;
}

Tensor spmm(const CsrMatrix& s, const Tensor& x) {
    if (s.cols != x.rows()) {
        throw ShapeError("spmm: sparse cols " + std::to_string(s.cols) + " vs dense rows " +
                         std::to_string(x.rows()));
    }
    Tensor y(s.rows, x.cols());
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < s.rows; ++r) {
        double* out = y.data().data() + r * n;
        for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
            const double w = s.val[e];
            const double* in = x.data().data() + s.col[e] * n;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += w * in[j];
            }
        }
    }
    return y;
}

Tensor spmm_t(const CsrMatrix& s, const Tensor& x) {
    if (s.rows != x.rows()) {
        throw ShapeError("spmm_t: sparse rows " + std::to_string(s.rows) + " vs dense rows " +
                         std::to_string(x.rows()));
    }
    Tensor y(s.cols, x.cols());
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < s.rows; ++r) {
        const double* in = x.data().data() + r * n;
        for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
            const double w = s.val[e];
            double* out = y.data().data() + s.col[e] * n;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += w * in[j];
            }
        }
    }
    return y;
}

std::vector<double> row_sums(const CsrMatrix& s) {
    std::vector<double> out(s.rows, 0.0);
    for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
            out[r] += s.val[e];
        }
    }
    return out;
}

} // namespace pgx
