#include "pgx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pgx {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer for tensor");
        }
        std::size_t j = 0;
        for (double v : row) {
            t(i, j++) = v;
        }
        ++i;
    }
    return t;
}

Tensor Tensor::column(std::span<const double> values) {
    return Tensor(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() requires a 1x1 tensor, got " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
    return data_[0];
}

void Tensor::fill(double v) {
    for (double& x : data_) {
        x = v;
    }
}

bool Tensor::all_finite() const noexcept {
    for (double x : data_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
    }
    Tensor c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.data().data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.data().data() + k * n;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ");
    }
    Tensor c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* brow = b.data().data() + k * n;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) {
                continue;
            }
            double* out = c.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += aki * brow[j];
            }
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column counts differ");
    }
    Tensor c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += arow[k] * brow[k];
            }
            c(i, j) = s;
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

std::vector<std::size_t> argmax_rows(const Tensor& a) {
    std::vector<std::size_t> out(a.rows(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < r.size(); ++j) {
            if (r[j] > r[best]) {
                best = j;
            }
        }
        out[i] = best;
    }
    return out;
}

Tensor select_columns(const Tensor& a, std::span<const std::size_t> columns) {
    Tensor out(a.rows(), columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j] >= a.cols()) {
            throw ShapeError("select_columns: column " + std::to_string(columns[j]) +
                             " out of range");
        }
    }
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            out(i, j) = a(i, columns[j]);
        }
    }
    return out;
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
    Tensor out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw ShapeError("select_rows: row " + std::to_string(rows[i]) + " out of range");
        }
        const auto src = a.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

} // namespace pgx
