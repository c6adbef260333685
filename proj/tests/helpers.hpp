#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "covlab/matcore.hpp"
#include "covlab/randmat.hpp"

namespace covlab::test {

inline Matrix random_gaussian(SeedStream& s, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) m(i, j) = s.normal();
  }
  return m;
}

inline SymmetricMatrix random_symmetric(SeedStream& s, std::size_t p) {
  Matrix m(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = m(j, i) = s.normal();
  }
  return SymmetricMatrix(m);
}

// G·Gᵀ/p + shift·I, comfortably positive-definite.
inline SpdMatrix random_spd(SeedStream& s, std::size_t p, double shift = 0.5) {
  const Matrix g = random_gaussian(s, p, p);
  SymmetricMatrix a = (1.0 / static_cast<double>(p)) * SymmetricMatrix::outer_product(g);
  a += SymmetricMatrix::identity(p, shift);
  return SpdMatrix(a);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b(i, j)));
  }
  return d;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace covlab::test
