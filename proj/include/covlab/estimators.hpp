#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "covlab/matcore.hpp"
#include "covlab/randmat.hpp"

namespace covlab {

/// Inverse-Wishart posterior IW_p(ν + n, A + nS) under the mean-zero normal
/// model. The scale is certified SPD at construction.
struct PosteriorIw {
  IwParams params;
  SpdMatrix scale;
  std::size_t n;

  std::size_t dim() const noexcept { return scale.dim(); }
  /// m = df − p, the quantity governing moment existence.
  double m() const noexcept { return params.df - static_cast<double>(dim()); }
};

/// Degenerate posterior concentrated at one matrix.
struct PointMass {
  SymmetricMatrix at;
};

/// Either the IW branch or δ_{I_p}, chosen by p > γ·n.
struct PosteriorMixture {
  std::variant<PosteriorIw, PointMass> branch;
  double gamma;

  bool is_point_mass() const noexcept { return std::holds_alternative<PointMass>(branch); }
};

/// Prior degrees-of-freedom rule resolved against (n, p).
struct NuRule {
  enum class Kind { Const, SqrtNOverP, P, N, PPlusOne, Zero };
  Kind kind = Kind::P;
  double value = 0.0;  // Const only

  static NuRule constant(double c) { return {Kind::Const, c}; }
  double resolve(std::size_t n, std::size_t p) const;
  std::string label() const;
};

/// A/(ν − p − 1); MomentUndefined unless ν > p + 1 (so never for the
/// improper priors with ν ≤ p − 1).
SymmetricMatrix iw_mean(const IwParams& params);

PosteriorIw iw_posterior(const IwParams& prior, std::size_t n, const SymmetricMatrix& s);

/// (nS + A)/(n + ν − p − 1); MomentUndefined unless m > 1.
SymmetricMatrix posterior_mean(const PosteriorIw& post);

struct ElementMoments {
  SymmetricMatrix mean;
  SymmetricMatrix variance;
};

/// Entrywise posterior mean and variance; MomentUndefined unless m > 3.
/// Var(σ_ij) = [(m+1)b_ij² + (m−1)b_ii b_jj] / [m(m−1)²(m−3)].
ElementMoments posterior_element_moments(const PosteriorIw& post);

inline constexpr double kDefaultMixtureGamma = 0.5;

PosteriorMixture mixture_posterior(const IwParams& prior, double gamma, std::size_t n,
                                   std::size_t p, const SymmetricMatrix& s);

/// Taper weight for band distance d: 1 up to k/2, linear to 0 at k.
double taper_weight(std::size_t d, std::size_t k) noexcept;
/// Bandwidth for a given n: nearest even integer to √n, at least 2.
std::size_t default_taper_k(std::size_t n) noexcept;
SymmetricMatrix tapering_estimator(const SymmetricMatrix& s, std::size_t k);

struct LogDetMoments {
  double mean;
  double variance;
};

/// Posterior mean and variance of log det Σ:
/// log det Σ = log det(nS + A) − Σ_k log χ²_{n+ν−k}.
LogDetMoments logdet_posterior_moments(const PosteriorIw& post);

struct LogDetMle {};
struct LogDetUmvue {};
struct LogDetBayesIw {
  IwParams prior;
};
using LogDetEstimator = std::variant<LogDetMle, LogDetUmvue, LogDetBayesIw>;

double logdet_point_estimate(const LogDetEstimator& kind, const SymmetricMatrix& s,
                             std::size_t n);

struct McMatrixEstimate {
  SymmetricMatrix mean;
  /// Per-entry standard errors; empty when draws < 2 (undefined).
  std::vector<double> se;
  bool se_defined() const noexcept { return !se.empty(); }
};

/// Average of `draws` truncated-IW posterior draws.
McMatrixEstimate truncated_posterior_mean_mc(const TruncIwParams& posterior, std::size_t draws,
                                             SeedStream& stream,
                                             std::size_t max_attempts = kDefaultTruncationAttempts);

}  // namespace covlab
