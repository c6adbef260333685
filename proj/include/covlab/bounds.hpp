#pragma once

// Finite-n lower-bound calculators (Le Cam two-point, Assouad) and the
// numeric checks behind them: the ξ mixture statistic, Gaussian KL,
// χ²-affinity, the log-det Taylor remainder and Wishart eigenvalue tails.

#include <cstddef>
#include <string>
#include <utility>

#include "covlab/matcore.hpp"
#include "covlab/randmat.hpp"

namespace covlab {

/// ξ = Σ_b C(p,b)2^{-p}(1 − eps²(2b/p − 1)²)^{-n/2}, summed in log space.
/// DomainError unless 0 < eps < 1.
double xi_exact(std::size_t p, double n, double eps);
/// The same average by enumerating all 4^p sign-vector pairs; TooLarge for p > 12.
double xi_bruteforce(std::size_t p, double n, double eps);
/// Σ_b C(p,b)2^{-p}·exp(coef·p·(2b/p − 1)²): the exponential surrogate of the
/// ξ summand with the exponent coefficient made explicit.
double xi_exponent_form(std::size_t p, double coef);

/// (θ₁ − θ₀)²/(1 + √ξ)².
double lecam_two_point(double theta0, double theta1, double xi) noexcept;

/// Two-point spectral bound τ₂²ε²/(4(1+√ξ)²) with ε = c·√(min(p,n)/n).
/// ConstraintViolated when ε ≥ 1 or ε > τ₂/τ₁ − 1.
double spectral_lower_bound(std::size_t p, std::size_t n, double tau1, double tau2, double c);

/// (n/2)[tr(Σ′Σ⁻¹) − log det(Σ′Σ⁻¹) − p].
double gaussian_kl(const SpdMatrix& sigma_prime, const SpdMatrix& sigma, double n);

struct HypercubeSpec {
  std::size_t p = 1;
  std::size_t n = 1;
  double tau = 1.0;
  double c1 = 1.0 / 3.0;

  /// Band width min(p, ⌊√n⌋).
  std::size_t k() const noexcept;
};

/// (1/4)(2c₁²c₂²/n)((2p−k)(k−1)/4)·max(0, 1 − √(K/2)) with c₂ = τ/(1+c₁) and
/// K = −(n/2)ln(1 − c₁²/n). Returns 0 when k < 2; ConstraintViolated unless
/// 0 < c₁ ≤ 1/3.
double assouad_frobenius_bound(const HypercubeSpec& spec);

/// ∫ f₁f₂/f₀ for zero-mean Gaussians, evaluated exactly as
/// det(Σ₀)^{1/2}·[det Σ₁·det Σ₂·det(Σ₁⁻¹ + Σ₂⁻¹ − Σ₀⁻¹)]^{-1/2}.
/// ConditionViolated when Σ₁⁻¹ + Σ₂⁻¹ − Σ₀⁻¹ is not positive-definite.
double chi_affinity(const SpdMatrix& sigma0, const SpdMatrix& sigma1, const SpdMatrix& sigma2);
/// det(I − Σ₀⁻²(Σ₁ − Σ₀)(Σ₂ − Σ₀))^{-1/2}; agrees with chi_affinity when the
/// three matrices commute. Same precondition.
double chi_affinity_lemma_form(const SpdMatrix& sigma0, const SpdMatrix& sigma1,
                               const SpdMatrix& sigma2);

struct LogDetRemainder {
  double r;      // tr B − log det(I + B)
  double frob2;  // ‖B‖_F²
};

/// NotPositiveDefinite unless I + tB is SPD at t = 0, ½, 1.
LogDetRemainder logdet_remainder(const SymmetricMatrix& b);

struct TailCheck {
  double threshold = 0.0;
  std::size_t hits = 0;
  double frequency = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;
  bool pass = false;  // frequency ≤ bound
  bool warn = false;  // upper Wilson limit exceeds the bound
};

struct WishartTailReport {
  std::size_t p = 0;
  double nu = 0.0;
  std::size_t draws = 0;
  TailCheck lambda_max;  // P(λmax ≥ (2 + √(p/ν))²) vs 2e^{-ν/2}
  TailCheck lambda_min;  // P(λmin ≤ (1 − √(p/ν))²/4) vs 2e^{-ν(1−√(p/ν))²/8}

  bool pass() const noexcept { return lambda_max.pass && lambda_min.pass; }
  std::string to_text() const;
};

/// Eigenvalue tails of W ~ W_p(ν, ν⁻¹I). InvalidDf when ν < p.
WishartTailReport wishart_tail_report(std::size_t p, double nu, std::size_t draws,
                                      SeedStream& stream);

/// Wilson score interval for k successes out of n trials.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.96);

}  // namespace covlab
