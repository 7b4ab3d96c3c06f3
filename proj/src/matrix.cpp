#include "fedsim/matrix.hpp"

#include <cmath>
#include <string>

#include "fedsim/rng.hpp"

namespace fedsim {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("from_rows: ragged row lengths");
        }
        std::size_t j = 0;
        for (double v : row) {
            m(i, j++) = v;
        }
        ++i;
    }
    return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("matrix +=: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("matrix -=: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (auto& v : data_) {
        v *= s;
    }
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) {
    a += b;
    return a;
}

Matrix operator-(Matrix a, const Matrix& b) {
    a -= b;
    return a;
}

Matrix operator*(double s, Matrix m) {
    m *= s;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols(), 0.0);
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    if (!all_finite(out)) {
        throw NumericError("matmul: non-finite result");
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

bool all_finite(const Matrix& m) {
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(p[i])) {
            return false;
        }
    }
    return true;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) {
            throw ShapeError("take_rows: index out of range");
        }
        const double* src = m.row(indices[i]);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            dst[j] = src[j];
        }
    }
    return out;
}

RowNormalizeResult l2_normalize_rows(const Matrix& m, double eps) {
    if (m.empty()) {
        throw ShapeError("l2_normalize_rows: empty matrix");
    }
    RowNormalizeResult res;
    res.normalized = Matrix(m.rows(), m.cols());
    res.norms.resize(m.rows());
    res.degenerate.assign(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            sq += src[j] * src[j];
        }
        const double norm = std::sqrt(sq);
        res.norms[i] = norm;
        double* dst = res.normalized.row(i);
        if (norm <= eps) {
            res.degenerate[i] = 1;
            ++res.degenerate_count;
            continue;  // row stays zero
        }
        const double inv = 1.0 / norm;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            dst[j] = src[j] * inv;
        }
    }
    return res;
}

Matrix init_params(std::size_t rows, std::size_t cols, InitScheme scheme, RngStream& rng) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("init_params: zero dimension");
    }
    (void)scheme;  // uniform_fan_in is the only scheme
    const double bound = std::sqrt(1.0 / static_cast<double>(rows));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
    return m;
}

}  // namespace fedsim
