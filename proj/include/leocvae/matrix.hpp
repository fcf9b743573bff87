#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace leocvae {

// Dense row-major f64 matrix. The only tensor type in the project; batches
// are rows, features are columns, scalars are 1x1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix constant(std::size_t rows, std::size_t cols, double value);
    static Matrix identity(std::size_t n);
    // Validates every entry is finite; used at external input boundaries.
    static Matrix from_external(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    bool all_finite() const;

    // Rows of this matrix selected by index, in the given order.
    Matrix take_rows(const std::vector<std::size_t>& indices) const;
    Matrix row(std::size_t r) const;
    void set_row(std::size_t r, const Matrix& values);

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Shape-checked arithmetic; all throw DimensionError naming both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// Broadcast a 1xM row across all rows of a BxM matrix.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);
// Column sums as a 1xM row.
Matrix column_sums(const Matrix& a);
// Row sums as a Bx1 column.
Matrix row_sums(const Matrix& a);

double sum_all(const Matrix& a);
double squared_frobenius(const Matrix& a);

// Pearson correlation of the flattened entries. degenerate is set when
// either side has zero variance, in which case the value is 0.
struct CorrelationResult {
    double value = 0.0;
    bool degenerate = false;
};
CorrelationResult pearson_correlation(const Matrix& a, const Matrix& b);

void check_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace leocvae
