#include "covlab/randmat.hpp"

#include <cmath>
#include <string>

#include "covlab/error.hpp"

namespace covlab {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

void require_wishart_df(double df, std::size_t p) {
  if (!(df > static_cast<double>(p) - 1.0) || !std::isfinite(df)) {
    throw Error(ErrorKind::InvalidDf, "df " + std::to_string(df) + " must exceed p-1 = " +
                                          std::to_string(static_cast<double>(p) - 1.0));
  }
}

// Lower-triangular Bartlett factor T: T_ii² ~ χ²_{df-i}, T_ij ~ N(0,1) for i > j.
Matrix bartlett_factor(SeedStream& stream, double df, std::size_t p) {
  Matrix t(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    t(i, i) = std::sqrt(stream.chi_square(df - static_cast<double>(i)));
    for (std::size_t j = 0; j < i; ++j) t(i, j) = stream.normal();
  }
  return t;
}

bool eigenvalues_within(const SymmetricMatrix& a, double k1, double k2) {
  const auto d = eigvalsh(a);
  return d.front() >= k1 && d.back() <= k2;
}

}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SeedStream SeedStream::derive(std::uint64_t base_seed, std::uint64_t scenario_tag,
                              std::uint64_t replicate_index) noexcept {
  const std::uint64_t root = mix64(base_seed ^ mix64(scenario_tag));
  return SeedStream(mix64(root + replicate_index * kGolden),
                    StreamOrigin{base_seed, scenario_tag, replicate_index});
}

std::uint64_t SeedStream::next_u64() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double SeedStream::uniform() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double SeedStream::normal() noexcept {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  return u * f;
}

double SeedStream::gamma(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw Error(ErrorKind::DomainError, "gamma shape must be positive");
  }
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double SeedStream::chi_square(double df) { return 2.0 * gamma(0.5 * df); }

bool IwParams::proper() const {
  if (!(df > static_cast<double>(dim()) - 1.0)) return false;
  try {
    (void)cholesky(scale);
  } catch (const Error&) {
    return false;
  }
  return true;
}

Matrix sample_mvn(SeedStream& stream, const SpdMatrix& sigma, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "n must be at least 1");
  const std::size_t p = sigma.dim();
  const Matrix& l = sigma.chol();
  Matrix x(n, p);
  std::vector<double> z(p);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& zi : z) zi = stream.normal();
    for (std::size_t i = 0; i < p; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k <= i; ++k) s += l(i, k) * z[k];
      x(r, i) = s;
    }
  }
  return x;
}

SpdMatrix sample_wishart(SeedStream& stream, const WishartParams& params) {
  const std::size_t p = params.scale.dim();
  require_wishart_df(params.df, p);
  const Matrix t = bartlett_factor(stream, params.df, p);
  return SpdMatrix(SymmetricMatrix::outer_product(params.scale.chol() * t));
}

SpdMatrix sample_inverse_wishart(SeedStream& stream, const IwParams& params) {
  if (!params.proper()) {
    throw Error(ErrorKind::ImproperPrior,
                "inverse-Wishart with df " + std::to_string(params.df) +
                    " and the given scale is not a proper distribution");
  }
  return sample_inverse_wishart(stream, params.df, SpdMatrix(params.scale));
}

SpdMatrix sample_inverse_wishart(SeedStream& stream, double df, const SpdMatrix& scale) {
  const std::size_t p = scale.dim();
  if (!(df > static_cast<double>(p) - 1.0)) {
    throw Error(ErrorKind::ImproperPrior, "df " + std::to_string(df) + " must exceed p-1");
  }
  // With scale = L·Lᵀ, W = L⁻ᵀ·T·Tᵀ·L⁻¹ ~ W_p(df, scale⁻¹), hence
  // Σ = W⁻¹ = (L·T⁻ᵀ)(L·T⁻ᵀ)ᵀ. M = L·T⁻ᵀ solves M·Tᵀ = L row by row.
  const Matrix t = bartlett_factor(stream, df, p);
  const Matrix& l = scale.chol();
  Matrix m(p, p);
  for (std::size_t r = 0; r < p; ++r) {
    // Row r of M: m_r · Tᵀ = l_r  ⇔  T · m_rᵀ = l_rᵀ (forward substitution).
    for (std::size_t i = 0; i < p; ++i) {
      double s = l(r, i);
      for (std::size_t k = 0; k < i; ++k) s -= t(i, k) * m(r, k);
      m(r, i) = s / t(i, i);
    }
  }
  return SpdMatrix(SymmetricMatrix::outer_product(m));
}

SpdMatrix sample_truncated_iw(SeedStream& stream, const TruncIwParams& params,
                              std::size_t max_attempts) {
  if (!params.base.proper()) {
    throw Error(ErrorKind::ImproperPrior, "truncated inverse-Wishart needs a proper base law");
  }
  return sample_truncated_iw(stream, params.base.df, SpdMatrix(params.base.scale), params.k1,
                             params.k2, max_attempts);
}

SpdMatrix sample_truncated_iw(SeedStream& stream, double df, const SpdMatrix& scale, double k1,
                              double k2, std::size_t max_attempts) {
  if (!(k1 > 0.0) || !(k1 < k2)) {
    throw Error(ErrorKind::InvalidArgument, "truncation window requires 0 < k1 < k2");
  }
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    SpdMatrix draw = sample_inverse_wishart(stream, df, scale);
    if (eigenvalues_within(draw.sym(), k1, k2)) return draw;
  }
  throw Error(ErrorKind::TruncationExhausted,
              "no draw with eigenvalues in [" + std::to_string(k1) + ", " + std::to_string(k2) +
                  "] after " + std::to_string(max_attempts) +
                  " attempts (observed acceptance rate 0)");
}

SymmetricMatrix sample_covariance(const Matrix& data) {
  if (data.rows() == 0) throw Error(ErrorKind::InvalidArgument, "no observations");
  SymmetricMatrix s = SymmetricMatrix::gram(data);
  s *= 1.0 / static_cast<double>(data.rows());
  return s;
}

SpdMatrix gen_truth(SeedStream& stream, const TruthSpec& spec, std::size_t p) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "p must be at least 1");
  if (const auto* d = std::get_if<DiagonalTruth>(&spec)) {
    if (!(d->lo >= 0.0) || !(d->lo < d->hi)) {
      throw Error(ErrorKind::InvalidArgument, "diagonal truth needs 0 <= lo < hi");
    }
    std::vector<double> diag(p);
    for (auto& x : diag) x = d->lo + (d->hi - d->lo) * stream.uniform();
    return SpdMatrix(SymmetricMatrix::diagonal(diag));
  }
  if (const auto* f = std::get_if<FullTruth>(&spec)) {
    if (!(f->scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "full truth scale must be > 0");
    const double sd = std::sqrt(f->scale / static_cast<double>(p));
    for (int attempt = 0; attempt < 2; ++attempt) {
      Matrix v(p, p);
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) v(i, j) = sd * stream.normal();
      }
      try {
        return SpdMatrix(SymmetricMatrix::gram(v));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
      }
    }
    throw Error(ErrorKind::SingularTruth, "generated VᵀV failed the SPD check twice");
  }
  const auto& fixed = std::get<FixedTruth>(spec);
  if (fixed.matrix.dim() != p) {
    throw Error(ErrorKind::DimensionMismatch, "fixed truth has the wrong dimension");
  }
  try {
    return SpdMatrix(fixed.matrix);
  } catch (const Error& e) {
    throw Error(ErrorKind::SingularTruth, std::string("fixed truth: ") + e.what());
  }
}

}  // namespace covlab
