#include "covlab/estimators.hpp"

#include <cmath>
#include <sstream>

#include "covlab/error.hpp"
#include "covlab/specialfn.hpp"

namespace covlab {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

double NuRule::resolve(std::size_t n, std::size_t p) const {
  const double dn = static_cast<double>(n);
  const double dp = static_cast<double>(p);
  switch (kind) {
    case Kind::Const: return value;
    case Kind::SqrtNOverP: return std::sqrt(dn / dp);
    case Kind::P: return dp;
    case Kind::N: return dn;
    case Kind::PPlusOne: return dp + 1.0;
    case Kind::Zero: return 0.0;
  }
  return value;
}

std::string NuRule::label() const {
  switch (kind) {
    case Kind::Const: return fmt(value);
    case Kind::SqrtNOverP: return "sqrt(n/p)";
    case Kind::P: return "p";
    case Kind::N: return "n";
    case Kind::PPlusOne: return "p+1";
    case Kind::Zero: return "0";
  }
  return "?";
}

SymmetricMatrix iw_mean(const IwParams& params) {
  const double denom = params.df - static_cast<double>(params.dim()) - 1.0;
  if (!(denom > 0.0)) {
    throw Error(ErrorKind::MomentUndefined, "IW mean needs nu - p - 1 > 0, got " + fmt(denom));
  }
  return (1.0 / denom) * params.scale;
}

PosteriorIw iw_posterior(const IwParams& prior, std::size_t n, const SymmetricMatrix& s) {
  if (prior.dim() != s.dim()) throw Error(ErrorKind::DimensionMismatch, "prior vs data");
  const double df = prior.df + static_cast<double>(n);
  SymmetricMatrix b = prior.scale + static_cast<double>(n) * s;
  if (!(df > static_cast<double>(s.dim()) - 1.0)) {
    throw Error(ErrorKind::SingularPosterior, "posterior df " + fmt(df) + " must exceed p-1");
  }
  try {
    SpdMatrix spd(b);
    return PosteriorIw{IwParams{df, std::move(b)}, std::move(spd), n};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
    throw Error(ErrorKind::SingularPosterior, "nS + A is not positive definite");
  }
}

SymmetricMatrix posterior_mean(const PosteriorIw& post) {
  const double denom = post.m() - 1.0;
  if (!(denom > 0.0)) {
    throw Error(ErrorKind::MomentUndefined,
                "posterior mean needs n + nu - p - 1 > 0, got " + fmt(denom));
  }
  return (1.0 / denom) * post.params.scale;
}

ElementMoments posterior_element_moments(const PosteriorIw& post) {
  const double m = post.m();
  if (!(m > 3.0)) {
    throw Error(ErrorKind::MomentUndefined,
                "element variances need n + nu - p > 3, got " + fmt(m));
  }
  const SymmetricMatrix& b = post.params.scale;
  const std::size_t p = b.dim();
  const double denom = m * (m - 1.0) * (m - 1.0) * (m - 3.0);
  Matrix var(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      var(i, j) = ((m + 1.0) * b(i, j) * b(i, j) + (m - 1.0) * b(i, i) * b(j, j)) / denom;
    }
  }
  return {(1.0 / (m - 1.0)) * b, SymmetricMatrix(var)};
}

PosteriorMixture mixture_posterior(const IwParams& prior, double gamma, std::size_t n,
                                   std::size_t p, const SymmetricMatrix& s) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "mixture threshold gamma must lie in (0,1)");
  }
  if (static_cast<double>(p) > gamma * static_cast<double>(n)) {
    return {PointMass{SymmetricMatrix::identity(p)}, gamma};
  }
  return {iw_posterior(prior, n, s), gamma};
}

double taper_weight(std::size_t d, std::size_t k) noexcept {
  const double dd = static_cast<double>(d);
  const double dk = static_cast<double>(k);
  if (2 * d <= k) return 1.0;
  if (d < k) return 2.0 - 2.0 * dd / dk;
  return 0.0;
}

std::size_t default_taper_k(std::size_t n) noexcept {
  const double half = std::sqrt(static_cast<double>(n)) / 2.0;
  const auto k = static_cast<std::size_t>(2.0 * std::round(half));
  return k < 2 ? 2 : k;
}

SymmetricMatrix tapering_estimator(const SymmetricMatrix& s, std::size_t k) {
  if (k < 2 || k % 2 != 0) {
    throw Error(ErrorKind::OddK, "tapering bandwidth must be even and >= 2, got " +
                                     std::to_string(k));
  }
  const std::size_t p = s.dim();
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::size_t d = i > j ? i - j : j - i;
      out(i, j) = d == 0 ? s(i, j) : taper_weight(d, k) * s(i, j);
    }
  }
  return SymmetricMatrix(out);
}

LogDetMoments logdet_posterior_moments(const PosteriorIw& post) {
  const std::size_t p = post.dim();
  const double df = post.params.df;
  double mean = log_det(post.scale);
  double var = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double half = 0.5 * (df - static_cast<double>(k));
    mean -= specialfn::digamma(half) + kLn2;
    var += specialfn::trigamma(half);
  }
  return {mean, var};
}

double logdet_point_estimate(const LogDetEstimator& kind, const SymmetricMatrix& s,
                             std::size_t n) {
  const std::size_t p = s.dim();
  if (const auto* bayes = std::get_if<LogDetBayesIw>(&kind)) {
    return logdet_posterior_moments(iw_posterior(bayes->prior, n, s)).mean;
  }
  if (n < p) {
    throw Error(ErrorKind::NotPositiveDefinite,
                "sample covariance is singular when n < p (n=" + std::to_string(n) +
                    ", p=" + std::to_string(p) + ")");
  }
  const double ld = log_det(SpdMatrix(s));
  if (std::holds_alternative<LogDetMle>(kind)) return ld;
  double correction = static_cast<double>(p) * std::log(0.5 * static_cast<double>(n));
  for (std::size_t j = 0; j < p; ++j) {
    correction -= specialfn::digamma(0.5 * static_cast<double>(n - j));
  }
  return ld + correction;
}

McMatrixEstimate truncated_posterior_mean_mc(const TruncIwParams& posterior, std::size_t draws,
                                             SeedStream& stream, std::size_t max_attempts) {
  if (draws == 0) throw Error(ErrorKind::InvalidArgument, "draws must be at least 1");
  if (!posterior.base.proper()) {
    throw Error(ErrorKind::ImproperPrior, "truncated posterior needs a proper base law");
  }
  const SpdMatrix scale(posterior.base.scale);
  const std::size_t p = scale.dim();
  Matrix sum(p, p);
  Matrix sum_sq(p, p);
  for (std::size_t d = 0; d < draws; ++d) {
    const SpdMatrix x = sample_truncated_iw(stream, posterior.base.df, scale, posterior.k1,
                                            posterior.k2, max_attempts);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double v = x.sym()(i, j);
        sum(i, j) += v;
        sum_sq(i, j) += v * v;
      }
    }
  }
  const double r = static_cast<double>(draws);
  Matrix mean(p, p);
  std::vector<double> se;
  if (draws >= 2) se.resize(p * p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      mean(i, j) = sum(i, j) / r;
      if (draws >= 2) {
        const double var = std::max(0.0, (sum_sq(i, j) - r * mean(i, j) * mean(i, j)) / (r - 1.0));
        se[i * p + j] = std::sqrt(var / r);
      }
    }
  }
  return {SymmetricMatrix(mean), std::move(se)};
}

}  // namespace covlab
