#include "coe/matrix.hpp"

#include <cmath>
#include <string>

#include "coe/errors.hpp"

namespace coe {

namespace {
std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}
}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols())
            throw DimensionError("from_rows: ragged row " + std::to_string(r));
        for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) = rows[r][c];
    }
    return m;
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data_) v = rng.gauss() * stddev;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t.at(c, r) = at(r, c);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (!same_shape(o)) throw DimensionError("add: " + shape_str(*this) + " vs " + shape_str(o));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (!same_shape(o)) throw DimensionError("sub: " + shape_str(*this) + " vs " + shape_str(o));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: incompatible shapes " + shape_str(a) + " x " + shape_str(b));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* in = m.row_ptr(r);
        double* o = out.row_ptr(r);
        double mx = in[0];
        for (std::size_t c = 1; c < m.cols(); ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (std::size_t c = 0; c < m.cols(); ++c) o[c] /= sum;
    }
    return out;
}

Matrix softmax_rows_backward(const Matrix& soft, const Matrix& grad_out) {
    if (!soft.same_shape(grad_out))
        throw DimensionError("softmax_rows_backward: " + shape_str(soft) + " vs " + shape_str(grad_out));
    Matrix grad_in(soft.rows(), soft.cols());
    for (std::size_t r = 0; r < soft.rows(); ++r) {
        const double* p = soft.row_ptr(r);
        const double* g = grad_out.row_ptr(r);
        double dotpg = 0.0;
        for (std::size_t c = 0; c < soft.cols(); ++c) dotpg += p[c] * g[c];
        double* o = grad_in.row_ptr(r);
        for (std::size_t c = 0; c < soft.cols(); ++c) o[c] = p[c] * (g[c] - dotpg);
    }
    return grad_in;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    // log(1/(1+exp(-x))) = -log1p(exp(-x)) for x >= 0, x - log1p(exp(x)) else
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace coe
