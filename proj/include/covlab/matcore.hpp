#pragma once

// Dense symmetric-matrix kernel: storage, Cholesky, cyclic Jacobi
// eigendecomposition, spectral matrix functions, norms and log-determinant.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace covlab {

/// Dense row-major matrix. General-purpose container for data matrices and
/// intermediate products; symmetric quantities live in SymmetricMatrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t p);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> values() const noexcept { return data_; }

  Matrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);

/// p×p symmetric matrix with finite entries. Construction averages the input
/// with its transpose after checking the asymmetry is at rounding level.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(const Matrix& m);
  SymmetricMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static SymmetricMatrix zero(std::size_t p);
  static SymmetricMatrix identity(std::size_t p, double scale = 1.0);
  static SymmetricMatrix diagonal(std::span<const double> d);
  /// M·Mᵀ with the upper triangle mirrored, so the result is exactly symmetric.
  static SymmetricMatrix outer_product(const Matrix& m);
  /// Mᵀ·M, exactly symmetric.
  static SymmetricMatrix gram(const Matrix& m);

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
  const Matrix& matrix() const noexcept { return m_; }

  double trace() const noexcept;
  bool is_zero() const noexcept;

  SymmetricMatrix& operator+=(const SymmetricMatrix& other);
  SymmetricMatrix& operator-=(const SymmetricMatrix& other);
  SymmetricMatrix& operator*=(double s) noexcept;

 private:
  struct Trusted {};
  SymmetricMatrix(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;
};

SymmetricMatrix operator+(SymmetricMatrix a, const SymmetricMatrix& b);
SymmetricMatrix operator-(SymmetricMatrix a, const SymmetricMatrix& b);
SymmetricMatrix operator*(double s, SymmetricMatrix a);

/// Symmetric positive-definite matrix, certified by a successful Cholesky
/// factorization; the lower factor is kept.
class SpdMatrix {
 public:
  explicit SpdMatrix(SymmetricMatrix a);

  std::size_t dim() const noexcept { return a_.dim(); }
  const SymmetricMatrix& sym() const noexcept { return a_; }
  /// Lower-triangular L with A = L·Lᵀ and positive diagonal.
  const Matrix& chol() const noexcept { return l_; }

  /// A⁻¹ via triangular solves on the stored factor.
  SymmetricMatrix inverse() const;

 private:
  SymmetricMatrix a_;
  Matrix l_;
};

struct EigenDecomp {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]

  SymmetricMatrix reconstruct() const;
};

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius mass drops below
/// 1e-13·‖A‖_F; throws EigenNotConverged after 100 sweeps. Each eigenvector's
/// first non-negligible component is made positive.
EigenDecomp eigh(const SymmetricMatrix& a);
/// Eigenvalues only (ascending); same iteration, no vector accumulation.
std::vector<double> eigvalsh(const SymmetricMatrix& a);

/// Lower Cholesky factor; NotPositiveDefinite on a non-positive pivot.
Matrix cholesky(const SymmetricMatrix& a);

double spectral_norm(const SymmetricMatrix& a);
double frobenius_norm(const SymmetricMatrix& a) noexcept;
double frobenius_norm(const Matrix& a) noexcept;

/// 2·Σ log L_ii.
double log_det(const SpdMatrix& a) noexcept;

/// V·diag(f(λ))·Vᵀ. DomainError when f is non-finite at some eigenvalue.
SymmetricMatrix matrix_function(const SymmetricMatrix& a, const std::function<double(double)>& f);

SymmetricMatrix matrix_log(const SymmetricMatrix& a);
SymmetricMatrix matrix_exp(const SymmetricMatrix& a);
SymmetricMatrix matrix_sqrt(const SymmetricMatrix& a);
SymmetricMatrix matrix_inverse(const SymmetricMatrix& a);

/// Solves L·X = B in place for lower-triangular L.
void solve_lower_in_place(const Matrix& l, Matrix& b);

}  // namespace covlab
