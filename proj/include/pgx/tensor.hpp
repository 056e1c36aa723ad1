#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "pgx/error.hpp"

namespace pgx {

/// Dense row-major matrix of doubles. Scalars are 1x1, vectors are Nx1 or 1xN.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double item() const;
    void fill(double v);
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// C = A * B. Zero entries of A are skipped, which keeps sparse bag-of-words inputs cheap.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = A^T * B.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// C = A * B^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise argmax; ties resolve to the lowest column.
std::vector<std::size_t> argmax_rows(const Tensor& a);

/// Keep only the listed columns, in the listed order.
Tensor select_columns(const Tensor& a, std::span<const std::size_t> columns);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);

} // namespace pgx
