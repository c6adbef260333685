#include "covlab/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "covlab/error.hpp"

namespace covlab {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kJacobiTol = 1e-13;
constexpr int kJacobiMaxSweeps = 100;

void require_same_dim(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

double off_diagonal_mass(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  }
  return std::sqrt(2.0 * s);
}

// Works on a private copy; `v` is accumulated only when non-null.
std::vector<double> jacobi(Matrix a, Matrix* v) {
  const std::size_t p = a.rows();
  const double tol = kJacobiTol * frobenius_norm(a);

  int sweep = 0;
  for (; sweep < kJacobiMaxSweeps; ++sweep) {
    if (off_diagonal_mass(a) <= tol) break;
    for (std::size_t ip = 0; ip + 1 < p; ++ip) {
      for (std::size_t iq = ip + 1; iq < p; ++iq) {
        const double apq = a(ip, iq);
        if (apq == 0.0) continue;
        const double theta = (a(iq, iq) - a(ip, ip)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(ip, ip) -= t * apq;
        a(iq, iq) += t * apq;
        a(ip, iq) = 0.0;
        a(iq, ip) = 0.0;
        for (std::size_t r = 0; r < p; ++r) {
          if (r == ip || r == iq) continue;
          const double g = a(r, ip);
          const double h = a(r, iq);
          const double nrp = g - s * (h + g * tau);
          const double nrq = h + s * (g - h * tau);
          a(r, ip) = a(ip, r) = nrp;
          a(r, iq) = a(iq, r) = nrq;
        }
        if (v != nullptr) {
          for (std::size_t r = 0; r < p; ++r) {
            const double g = (*v)(r, ip);
            const double h = (*v)(r, iq);
            (*v)(r, ip) = g - s * (h + g * tau);
            (*v)(r, iq) = h + s * (g - h * tau);
          }
        }
      }
    }
  }
  if (sweep == kJacobiMaxSweeps && off_diagonal_mass(a) > tol) {
    throw Error(ErrorKind::EigenNotConverged,
                "Jacobi did not converge in " + std::to_string(kJacobiMaxSweeps) + " sweeps");
  }

  std::vector<double> d(p);
  for (std::size_t i = 0; i < p; ++i) d[i] = a(i, i);
  return d;
}

}  // namespace

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t p) {
  Matrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matrix product");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

// ------------------------------------------------------- SymmetricMatrix

SymmetricMatrix::SymmetricMatrix(const Matrix& m) : m_(m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "symmetric matrix must be square");
  }
  if (m.rows() == 0) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
  const std::size_t p = m.rows();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i; j < p; ++j) {
      const double aij = m(i, j);
      const double aji = m(j, i);
      if (!std::isfinite(aij) || !std::isfinite(aji)) {
        throw Error(ErrorKind::NonFinite, "entry (" + std::to_string(i) + "," +
                                              std::to_string(j) + ") is not finite");
      }
      const double scale = std::max({1.0, std::abs(aij), std::abs(aji)});
      if (std::abs(aij - aji) > kSymmetryTol * scale) {
        throw Error(ErrorKind::NotSymmetric, "entries (" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") differ");
      }
      const double avg = 0.5 * (aij + aji);
      m_(i, j) = avg;
      m_(j, i) = avg;
    }
  }
}

SymmetricMatrix::SymmetricMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymmetricMatrix(Matrix(rows)) {}

SymmetricMatrix SymmetricMatrix::zero(std::size_t p) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
  return SymmetricMatrix(Matrix(p, p), Trusted{});
}

SymmetricMatrix SymmetricMatrix::identity(std::size_t p, double scale) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
  Matrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) m(i, i) = scale;
  return SymmetricMatrix(m);
}

SymmetricMatrix SymmetricMatrix::diagonal(std::span<const double> d) {
  if (d.empty()) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return SymmetricMatrix(m);
}

SymmetricMatrix SymmetricMatrix::outer_product(const Matrix& m) {
  const std::size_t p = m.rows();
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const auto ri = m.row(i);
    for (std::size_t j = i; j < p; ++j) {
      const auto rj = m.row(j);
      const double s = std::inner_product(ri.begin(), ri.end(), rj.begin(), 0.0);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return SymmetricMatrix(out);
}

SymmetricMatrix SymmetricMatrix::gram(const Matrix& m) {
  const std::size_t p = m.cols();
  Matrix out(p, p);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto x = m.row(r);
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t j = i; j < p; ++j) out(i, j) += xi * x[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < i; ++j) out(i, j) = out(j, i);
  }
  return SymmetricMatrix(out);
}

double SymmetricMatrix::trace() const noexcept {
  double t = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) t += m_(i, i);
  return t;
}

bool SymmetricMatrix::is_zero() const noexcept {
  const auto v = m_.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

SymmetricMatrix& SymmetricMatrix::operator+=(const SymmetricMatrix& other) {
  require_same_dim(*this, other);
  for (std::size_t i = 0; i < dim(); ++i) {
    for (std::size_t j = 0; j < dim(); ++j) m_(i, j) += other(i, j);
  }
  return *this;
}

SymmetricMatrix& SymmetricMatrix::operator-=(const SymmetricMatrix& other) {
  require_same_dim(*this, other);
  for (std::size_t i = 0; i < dim(); ++i) {
    for (std::size_t j = 0; j < dim(); ++j) m_(i, j) -= other(i, j);
  }
  return *this;
}

SymmetricMatrix& SymmetricMatrix::operator*=(double s) noexcept {
  for (std::size_t i = 0; i < dim(); ++i) {
    for (std::size_t j = 0; j < dim(); ++j) m_(i, j) *= s;
  }
  return *this;
}

SymmetricMatrix operator+(SymmetricMatrix a, const SymmetricMatrix& b) { return a += b; }
SymmetricMatrix operator-(SymmetricMatrix a, const SymmetricMatrix& b) { return a -= b; }
SymmetricMatrix operator*(double s, SymmetricMatrix a) { return a *= s; }

// -------------------------------------------------------------- SpdMatrix

SpdMatrix::SpdMatrix(SymmetricMatrix a) : a_(std::move(a)), l_(cholesky(a_)) {}

SymmetricMatrix SpdMatrix::inverse() const {
  const std::size_t p = dim();
  // A⁻¹ = L⁻ᵀ L⁻¹ = (L⁻¹)ᵀ (L⁻¹)
  Matrix linv = Matrix::identity(p);
  solve_lower_in_place(l_, linv);
  return SymmetricMatrix::gram(linv);
}

// ------------------------------------------------------------ factorizations

Matrix cholesky(const SymmetricMatrix& a) {
  const std::size_t p = a.dim();
  Matrix l(p, p);
  for (std::size_t j = 0; j < p; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw Error(ErrorKind::NotPositiveDefinite,
                  "pivot " + std::to_string(j) + " is " + std::to_string(d));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

void solve_lower_in_place(const Matrix& l, Matrix& b) {
  const std::size_t p = l.rows();
  if (b.rows() != p) throw Error(ErrorKind::DimensionMismatch, "triangular solve");
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < p; ++i) {
      double s = b(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b(k, c);
      b(i, c) = s / l(i, i);
    }
  }
}

SymmetricMatrix EigenDecomp::reconstruct() const {
  const std::size_t p = values.size();
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += vectors(i, k) * values[k] * vectors(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return SymmetricMatrix(out);
}

EigenDecomp eigh(const SymmetricMatrix& a) {
  const std::size_t p = a.dim();
  Matrix v = Matrix::identity(p);
  std::vector<double> d = jacobi(a.matrix(), &v);

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });

  EigenDecomp out{std::vector<double>(p), Matrix(p, p)};
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t src = order[k];
    out.values[k] = d[src];
    double sign = 1.0;
    for (std::size_t r = 0; r < p; ++r) {
      if (std::abs(v(r, src)) > 1e-10) {
        sign = v(r, src) < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t r = 0; r < p; ++r) out.vectors(r, k) = sign * v(r, src);
  }
  return out;
}

std::vector<double> eigvalsh(const SymmetricMatrix& a) {
  std::vector<double> d = jacobi(a.matrix(), nullptr);
  std::sort(d.begin(), d.end());
  return d;
}

// ------------------------------------------------------------------ norms

double spectral_norm(const SymmetricMatrix& a) {
  const auto d = eigvalsh(a);
  return std::max(std::abs(d.front()), std::abs(d.back()));
}

double frobenius_norm(const Matrix& a) noexcept {
  double s = 0.0;
  for (double x : a.values()) s += x * x;
  return std::sqrt(s);
}

double frobenius_norm(const SymmetricMatrix& a) noexcept { return frobenius_norm(a.matrix()); }

double log_det(const SpdMatrix& a) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += std::log(a.chol()(i, i));
  return 2.0 * s;
}

// ------------------------------------------------------- matrix functions

SymmetricMatrix matrix_function(const SymmetricMatrix& a,
                                const std::function<double(double)>& f) {
  EigenDecomp e = eigh(a);
  for (double& lam : e.values) {
    const double y = f(lam);
    if (!std::isfinite(y)) {
      throw Error(ErrorKind::DomainError,
                  "function not finite at eigenvalue " + std::to_string(lam));
    }
    lam = y;
  }
  return e.reconstruct();
}

SymmetricMatrix matrix_log(const SymmetricMatrix& a) {
  return matrix_function(a, [](double x) {
    return x > 0.0 ? std::log(x) : std::numeric_limits<double>::quiet_NaN();
  });
}

SymmetricMatrix matrix_exp(const SymmetricMatrix& a) {
  return matrix_function(a, [](double x) { return std::exp(x); });
}

SymmetricMatrix matrix_sqrt(const SymmetricMatrix& a) {
  return matrix_function(a, [](double x) {
    return x >= 0.0 ? std::sqrt(x) : std::numeric_limits<double>::quiet_NaN();
  });
}

SymmetricMatrix matrix_inverse(const SymmetricMatrix& a) {
  return matrix_function(a, [](double x) { return 1.0 / x; });
}

}  // namespace covlab
