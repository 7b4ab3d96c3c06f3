#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

class RngStream;

/// Dense row-major matrix of doubles. Public operations keep values finite.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols, 0.0}; }
    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix m);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
bool all_finite(const Matrix& m);

/// Copies the listed rows of m into a new matrix, in the given order.
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& indices);

struct RowNormalizeResult {
    Matrix normalized;
    std::vector<double> norms;             // pre-normalization row norms
    std::vector<std::uint8_t> degenerate;  // 1 where input norm <= eps (row zeroed)
    std::size_t degenerate_count = 0;
};

/// Scales each row to unit Euclidean norm. Rows with norm <= eps are zeroed
/// and flagged rather than treated as errors.
RowNormalizeResult l2_normalize_rows(const Matrix& m, double eps = 1e-12);

enum class InitScheme { uniform_fan_in };

/// Draws entries uniform in +-sqrt(1/fan_in) with fan_in = rows.
Matrix init_params(std::size_t rows, std::size_t cols, InitScheme scheme, RngStream& rng);

}  // namespace fedsim
