#pragma once

#include <cstddef>
#include <vector>

#include "coe/rng.hpp"

namespace coe {

// Dense row-major matrix of doubles. The numeric substrate for V (N x D_v),
// Q (L x D_l), the evidence queries, attention weights, grounded evidence
// and every learnable parameter block.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);
    static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Standard product with deterministic left-to-right accumulation.
// Throws DimensionError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction; each output row sums to 1
// within 1e-12 for finite input.
Matrix softmax_rows(const Matrix& m);

// Backward through softmax_rows: given the forward output `soft` and the
// upstream gradient dL/d(soft), returns dL/d(logits).
Matrix softmax_rows_backward(const Matrix& soft, const Matrix& grad_out);

// Numerically stable logistic function; sigmoid(-x) == 1 - sigmoid(x).
double sigmoid(double x);

// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x);

double dot(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace coe
