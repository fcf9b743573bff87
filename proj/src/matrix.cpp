#include "leocvae/matrix.hpp"

#include <cmath>
#include <utility>

#include "leocvae/errors.hpp"

namespace leocvae {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match " + shape_str());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ > 0 ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw DimensionError("Matrix: ragged initializer rows");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    for (double& v : m.data_) v = value;
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_external(std::size_t rows, std::size_t cols, std::vector<double> data) {
    Matrix m(rows, cols, std::move(data));
    if (!m.all_finite()) {
        throw NumericError("Matrix: non-finite entry in external input of shape " + m.shape_str());
    }
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix Matrix::take_rows(const std::vector<std::size_t>& indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = data_.data() + indices[i] * cols_;
        double* dst = out.data_.data() + i * cols_;
        for (std::size_t j = 0; j < cols_; ++j) dst[j] = src[j];
    }
    return out;
}

Matrix Matrix::row(std::size_t r) const {
    Matrix out(1, cols_);
    for (std::size_t j = 0; j < cols_; ++j) out(0, j) = (*this)(r, j);
    return out;
}

void Matrix::set_row(std::size_t r, const Matrix& values) {
    if (values.rows() != 1 || values.cols() != cols_) {
        throw DimensionError("set_row: expected 1x" + std::to_string(cols_) + ", got " +
                             values.shape_str());
    }
    for (std::size_t j = 0; j < cols_; ++j) (*this)(r, j) = values(0, j);
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

Matrix& Matrix::operator+=(const Matrix& other) {
    check_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    check_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * m;
            double* crow = pc + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_transpose_b: shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c(i, j) = acc;
        }
    }
    return c;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_transpose_a: shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    Matrix c(n, m);
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data() + p * n;
        const double* brow = b.data() + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            double* crow = c.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix c = a;
    c += b;
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix c = a;
    c -= b;
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] *= b.values()[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    c *= s;
    return c;
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw DimensionError("add_row_broadcast: shape mismatch " + a.shape_str() + " vs " +
                             row.shape_str());
    }
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) += row(0, j);
    }
    return c;
}

Matrix column_sums(const Matrix& a) {
    Matrix s(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) s(0, j) += a(i, j);
    }
    return s;
}

Matrix row_sums(const Matrix& a) {
    Matrix s(a.rows(), 1);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j);
        s(i, 0) = acc;
    }
    return s;
}

double sum_all(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return acc;
}

double squared_frobenius(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v * v;
    return acc;
}

CorrelationResult pearson_correlation(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "pearson_correlation");
    const std::size_t n = a.size();
    if (n == 0) return {0.0, true};
    double mean_a = sum_all(a) / static_cast<double>(n);
    double mean_b = sum_all(b) / static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.values()[i] - mean_a;
        const double db = b.values()[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0) return {0.0, true};
    return {cov / std::sqrt(var_a * var_b), false};
}

}  // namespace leocvae
