#include "covlab/bounds.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <tuple>
#include <vector>

#include "covlab/error.hpp"
#include "covlab/specialfn.hpp"

namespace covlab {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

double log_binomial(std::size_t p, std::size_t b) {
  return specialfn::lgamma(static_cast<double>(p) + 1.0) -
         specialfn::lgamma(static_cast<double>(b) + 1.0) -
         specialfn::lgamma(static_cast<double>(p - b) + 1.0);
}

double log_sum_exp(const std::vector<double>& terms) {
  const double hi = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

// Determinant of a general square matrix by LU with partial pivoting.
double determinant(Matrix a) {
  const std::size_t p = a.rows();
  double det = 1.0;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    }
    if (a(piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t j = 0; j < p; ++j) std::swap(a(piv, j), a(c, j));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < p; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < p; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return det;
}

void require_same_dim(const SpdMatrix& a, const SpdMatrix& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(a.dim()) + " vs " +
                                                  std::to_string(b.dim()));
  }
}

// Σ₁⁻¹ + Σ₂⁻¹ − Σ₀⁻¹ certified SPD.
SpdMatrix affinity_precision(const SpdMatrix& s0, const SpdMatrix& s1, const SpdMatrix& s2) {
  require_same_dim(s0, s1);
  require_same_dim(s0, s2);
  SymmetricMatrix m = s1.inverse() + s2.inverse() - s0.inverse();
  try {
    return SpdMatrix(std::move(m));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
    throw Error(ErrorKind::ConditionViolated,
                "Sigma1^-1 + Sigma2^-1 - Sigma0^-1 is not positive-definite");
  }
}

TailCheck tail_check(double threshold, std::size_t hits, std::size_t draws, double bound) {
  TailCheck t;
  t.threshold = threshold;
  t.hits = hits;
  t.frequency = static_cast<double>(hits) / static_cast<double>(draws);
  std::tie(t.ci_low, t.ci_high) = wilson_interval(hits, draws);
  t.bound = bound;
  t.pass = t.frequency <= bound;
  t.warn = t.ci_high > bound;
  return t;
}

}  // namespace

double xi_exact(std::size_t p, double n, double eps) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "p must be positive");
  if (!(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "n must be positive");
  if (!(eps > 0.0 && eps < 1.0)) {
    throw Error(ErrorKind::DomainError, "xi_exact needs 0 < eps < 1");
  }
  const double dp = static_cast<double>(p);
  const double e2 = eps * eps;
  std::vector<double> terms(p + 1);
  for (std::size_t b = 0; b <= p; ++b) {
    const double x = 2.0 * static_cast<double>(b) / dp - 1.0;
    terms[b] = log_binomial(p, b) - dp * kLn2 - 0.5 * n * std::log1p(-e2 * x * x);
  }
  return std::exp(log_sum_exp(terms));
}

double xi_bruteforce(std::size_t p, double n, double eps) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "p must be positive");
  if (p > 12) throw Error(ErrorKind::TooLarge, "xi_bruteforce enumerates 4^p pairs; p <= 12");
  if (!(eps > 0.0 && eps < 1.0)) {
    throw Error(ErrorKind::DomainError, "xi_bruteforce needs 0 < eps < 1");
  }
  const std::uint32_t count = 1u << p;
  const double dp = static_cast<double>(p);
  double total = 0.0;
  for (std::uint32_t u = 0; u < count; ++u) {
    double row = 0.0;
    for (std::uint32_t v = 0; v < count; ++v) {
      // Coordinates are ±1/√p, so ⟨u,v⟩ = (agreements − disagreements)/p.
      const double disagree = static_cast<double>(std::popcount(u ^ v));
      const double inner = (dp - 2.0 * disagree) / dp;
      row += std::pow(1.0 - eps * eps * inner * inner, -0.5 * n);
    }
    total += row;
  }
  return total / (static_cast<double>(count) * static_cast<double>(count));
}

double xi_exponent_form(std::size_t p, double coef) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "p must be positive");
  const double dp = static_cast<double>(p);
  std::vector<double> terms(p + 1);
  for (std::size_t b = 0; b <= p; ++b) {
    const double x = 2.0 * static_cast<double>(b) / dp - 1.0;
    terms[b] = log_binomial(p, b) - dp * kLn2 + coef * dp * x * x;
  }
  return std::exp(log_sum_exp(terms));
}

double lecam_two_point(double theta0, double theta1, double xi) noexcept {
  const double d = theta1 - theta0;
  const double denom = 1.0 + std::sqrt(xi);
  return d * d / (denom * denom);
}

double spectral_lower_bound(std::size_t p, std::size_t n, double tau1, double tau2, double c) {
  if (p == 0 || n == 0) throw Error(ErrorKind::InvalidArgument, "p and n must be positive");
  if (!(tau1 > 0.0 && tau1 < tau2)) {
    throw Error(ErrorKind::InvalidArgument, "need 0 < tau1 < tau2");
  }
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "c must be positive");
  const std::size_t p_eff = std::min(p, n);
  const double root = std::sqrt(static_cast<double>(p_eff) / static_cast<double>(n));
  const double eps = c * root;
  const double eps_cap = std::min(1.0, tau2 / tau1 - 1.0);
  if (eps >= 1.0 || eps > tau2 / tau1 - 1.0) {
    std::ostringstream os;
    os << "eps = " << eps << " violates eps < 1 and eps <= tau2/tau1 - 1; c must be "
       << (eps_cap >= 1.0 ? "below " : "at most ") << eps_cap / root;
    throw Error(ErrorKind::ConstraintViolated, os.str());
  }
  const double xi = xi_exact(p_eff, static_cast<double>(n), eps);
  const double root_xi = 1.0 + std::sqrt(xi);
  return tau2 * tau2 * eps * eps / (4.0 * root_xi * root_xi);
}

double gaussian_kl(const SpdMatrix& sigma_prime, const SpdMatrix& sigma, double n) {
  require_same_dim(sigma_prime, sigma);
  // tr(Σ′Σ⁻¹) via the Cholesky factor of Σ: tr(L⁻¹Σ′L⁻ᵀ).
  Matrix x = sigma_prime.sym().matrix();
  solve_lower_in_place(sigma.chol(), x);
  Matrix y = x.transpose();
  solve_lower_in_place(sigma.chol(), y);
  double tr = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) tr += y(i, i);
  const double logdet = log_det(sigma_prime) - log_det(sigma);
  const double value = 0.5 * n * (tr - logdet - static_cast<double>(sigma.dim()));
  return std::max(0.0, value);
}

std::size_t HypercubeSpec::k() const noexcept {
  const auto root = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  return std::min(p, root);
}

double assouad_frobenius_bound(const HypercubeSpec& spec) {
  if (spec.p == 0 || spec.n == 0) {
    throw Error(ErrorKind::InvalidArgument, "p and n must be positive");
  }
  if (!(spec.tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be positive");
  if (!(spec.c1 > 0.0 && spec.c1 <= 1.0 / 3.0)) {
    throw Error(ErrorKind::ConstraintViolated, "c1 must lie in (0, 1/3]");
  }
  const std::size_t k = spec.k();
  if (k < 2) return 0.0;
  const double n = static_cast<double>(spec.n);
  const double p = static_cast<double>(spec.p);
  const double kk = static_cast<double>(k);
  const double c2 = spec.tau / (1.0 + spec.c1);
  const double separation = 2.0 * spec.c1 * spec.c1 * c2 * c2 / n;
  const double pairs = (2.0 * p - kk) * (kk - 1.0) / 4.0;
  const double kl = -0.5 * n * std::log1p(-spec.c1 * spec.c1 / n);
  const double affinity = std::max(0.0, 1.0 - std::sqrt(kl / 2.0));
  return 0.25 * separation * pairs * affinity;
}

double chi_affinity(const SpdMatrix& sigma0, const SpdMatrix& sigma1, const SpdMatrix& sigma2) {
  const SpdMatrix m = affinity_precision(sigma0, sigma1, sigma2);
  const double log_value =
      0.5 * log_det(sigma0) - 0.5 * (log_det(sigma1) + log_det(sigma2) + log_det(m));
  return std::exp(log_value);
}

double chi_affinity_lemma_form(const SpdMatrix& sigma0, const SpdMatrix& sigma1,
                               const SpdMatrix& sigma2) {
  affinity_precision(sigma0, sigma1, sigma2);
  const std::size_t p = sigma0.dim();
  const Matrix inv0 = sigma0.inverse().matrix();
  const Matrix d1 = (sigma1.sym() - sigma0.sym()).matrix();
  const Matrix d2 = (sigma2.sym() - sigma0.sym()).matrix();
  Matrix m = inv0 * inv0 * d1 * d2;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) m(i, j) = (i == j ? 1.0 : 0.0) - m(i, j);
  }
  const double det = determinant(std::move(m));
  if (!(det > 0.0)) {
    throw Error(ErrorKind::ConditionViolated, "determinant in the affinity is not positive");
  }
  return 1.0 / std::sqrt(det);
}

LogDetRemainder logdet_remainder(const SymmetricMatrix& b) {
  const std::size_t p = b.dim();
  [[maybe_unused]] const SpdMatrix half(SymmetricMatrix::identity(p) + 0.5 * b);
  const SpdMatrix full(SymmetricMatrix::identity(p) + b);
  const double frob = frobenius_norm(b);
  return {b.trace() - log_det(full), frob * frob};
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "Wilson interval needs n > 0");
  const double dn = static_cast<double>(n);
  const double ph = static_cast<double>(k) / dn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / dn;
  const double centre = (ph + z2 / (2.0 * dn)) / denom;
  const double half = z * std::sqrt(ph * (1.0 - ph) / dn + z2 / (4.0 * dn * dn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

WishartTailReport wishart_tail_report(std::size_t p, double nu, std::size_t draws,
                                      SeedStream& stream) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "p must be positive");
  if (draws == 0) throw Error(ErrorKind::InvalidArgument, "draws must be positive");
  if (!(nu >= static_cast<double>(p))) {
    throw Error(ErrorKind::InvalidDf, "wishart_tail_report needs nu >= p");
  }
  const double ratio = std::sqrt(static_cast<double>(p) / nu);
  const double upper = (2.0 + ratio) * (2.0 + ratio);
  const double lower = (1.0 - ratio) * (1.0 - ratio) / 4.0;
  const WishartParams params{nu, SpdMatrix(SymmetricMatrix::identity(p, 1.0 / nu))};
  std::size_t hits_max = 0;
  std::size_t hits_min = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    const std::vector<double> ev = eigvalsh(sample_wishart(stream, params).sym());
    if (ev.back() >= upper) ++hits_max;
    if (ev.front() <= lower) ++hits_min;
  }
  WishartTailReport report;
  report.p = p;
  report.nu = nu;
  report.draws = draws;
  report.lambda_max = tail_check(upper, hits_max, draws, 2.0 * std::exp(-nu / 2.0));
  report.lambda_min =
      tail_check(lower, hits_min, draws, 2.0 * std::exp(-nu * (1.0 - ratio) * (1.0 - ratio) / 8.0));
  return report;
}

std::string WishartTailReport::to_text() const {
  std::ostringstream os;
  const auto line = [&](const char* name, const TailCheck& t) {
    os << name << ": threshold " << t.threshold << ", frequency " << t.frequency << " ["
       << t.ci_low << ", " << t.ci_high << "], bound " << t.bound << " -> "
       << (t.pass ? "ok" : "FAIL") << (t.warn ? " (upper CI exceeds bound)" : "") << '\n';
  };
  os << "Wishart tails p=" << p << " nu=" << nu << " draws=" << draws << '\n';
  line("lambda_max", lambda_max);
  line("lambda_min", lambda_min);
  return os.str();
}

}  // namespace covlab
