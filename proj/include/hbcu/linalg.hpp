#pragma once

#include <cstddef>
#include <vector>

namespace hbcu {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& entries() const { return data_; }

    Matrix transposed() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Basic arithmetic.
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
// y = A^T x
Vector matvec_t(const Matrix& a, const Vector& x);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);

// Vector helpers.
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
void axpy(double c, const Vector& x, Vector& y);  // y += c*x
Vector vsub(const Vector& a, const Vector& b);
Vector vadd(const Vector& a, const Vector& b);
Vector vscale(const Vector& a, double c);

double frobenius_norm(const Matrix& a);

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending,
/// eigenvectors in the columns of `vectors`.
struct SymEigResult {
    Vector values;
    Matrix vectors;
};

/// Thin SVD; `u` is rows x k, `v` is cols x k with k = min(rows, cols),
/// singular values nonnegative and sorted descending.
struct SvdResult {
    Matrix u;
    Vector singular_values;
    Matrix v;
};

/// Cyclic Jacobi eigendecomposition. Input must be square and symmetric to
/// 1e-12 relative; it is symmetrized internally within that tolerance.
SymEigResult sym_eig(const Matrix& m);

/// One-sided Jacobi SVD.
SvdResult svd(const Matrix& m);

/// Largest singular value via power iteration on M^T M, deterministic start.
double spectral_norm(const Matrix& m);

/// Max |eigenvalue| of a general square matrix, valid for complex spectra.
/// Gelfand's formula with repeated squaring and per-step normalization.
double spectral_radius(const Matrix& m);

/// Solve A x = b for general square A by partially pivoted LU.
Vector lu_solve(const Matrix& a, const Vector& b);
Matrix lu_solve(const Matrix& a, const Matrix& b);

/// Solve A x = b for symmetric positive definite A by Cholesky.
Vector cholesky_solve(const Matrix& a, const Vector& b);

}  // namespace hbcu
