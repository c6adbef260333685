#pragma once

// P-loss (posterior expected loss), P-risk (its expectation over data),
// frequentist risk of point estimators, exact risk oracles and rate fits.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "covlab/estimators.hpp"
#include "covlab/losses.hpp"
#include "covlab/randmat.hpp"

namespace covlab {

struct PriorSpec {
  enum class Kind { InverseWishart, Mixture, TruncatedIw };
  Kind kind = Kind::InverseWishart;
  NuRule nu;
  double scale_multiple = 0.0;  // A = scale_multiple·I_p; 0 gives O_p
  double gamma = kDefaultMixtureGamma;
  double k1 = 0.0;
  double k2 = 0.0;

  IwParams resolve(std::size_t n, std::size_t p) const;
  std::string kind_label() const;
};

enum class EstimatorKind {
  PosteriorLaw,      // P-risk: loss averaged over the posterior
  PosteriorMean,     // frequentist risk of the Bayes point estimate
  SampleCovariance,
  Tapering,
  LogDetMle,
  LogDetUmvue,
};

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::PosteriorLaw;
  PriorSpec prior;
  std::size_t taper_k = 0;  // 0 selects default_taper_k(n)

  bool uses_prior() const noexcept {
    return kind == EstimatorKind::PosteriorLaw || kind == EstimatorKind::PosteriorMean;
  }
  std::string label() const;
};

struct Scenario {
  std::size_t p = 1;
  std::size_t n = 1;
  TruthSpec truth = DiagonalTruth{};
  bool truth_per_replicate = false;
  EstimatorSpec estimator;
  LossSpec loss;
  std::size_t replicates = 100;
  std::size_t posterior_draws = 200;
  std::uint64_t base_seed = 0;
  std::uint64_t tag = 0;
};

enum class InnerMethod { ClosedForm, MonteCarlo, PointMass, PlugIn };
std::string to_string(InnerMethod method);

struct RiskEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t replicates = 0;
  std::size_t inner_draws = 0;
  InnerMethod method = InnerMethod::PlugIn;
};

struct RunOptions {
  std::size_t threads = 1;
};

/// Posterior law restricted to eigenvalues in [k1, k2].
struct TruncatedPosterior {
  PosteriorIw base;
  double k1;
  double k2;
};
using PosteriorLaw = std::variant<PosteriorIw, PointMass, TruncatedPosterior>;

struct McValue {
  double estimate;
  double se;
};

/// Every existence condition is checked here, before any sampling.
void validate_scenario(const Scenario& scenario);
/// The inner evaluation method a valid scenario will use.
InnerMethod planned_inner_method(const Scenario& scenario);

/// SqFrobenius: scale·[Σ Var(σ_ij|X) + ‖E(Σ|X) − Σ0‖_F²].
/// SqLogDet:    scale·[(E(log det Σ|X) − log det Σ0)² + Var(log det Σ|X)].
double ploss_closed_form(const PosteriorIw& post, const SpdMatrix& truth, const LossSpec& loss);

/// Monte Carlo P-loss; a point-mass posterior returns the exact loss, se 0.
McValue ploss_mc(const PosteriorLaw& law, const SpdMatrix& truth, const LossSpec& loss,
                 std::size_t draws, SeedStream& stream);

/// Exact expectation over data of the closed-form P-loss under an IW prior.
/// Frobenius uses the Gaussian fourth-moment identities for b = nS + A;
/// log-det requires A = O_p and is free of Σ0.
double exact_prisk(const LossSpec& loss, const SpdMatrix& truth, std::size_t n,
                   const IwParams& prior);

RiskEstimate prisk_mc(const Scenario& scenario, const RunOptions& options = {});
RiskEstimate frequentist_risk_mc(const Scenario& scenario, const RunOptions& options = {});
/// Dispatches on the estimator kind.
RiskEstimate evaluate_scenario(const Scenario& scenario, const RunOptions& options = {});

/// The truth matrix a scenario uses when truth is shared across replicates.
SpdMatrix scenario_truth(const Scenario& scenario, std::size_t replicate = 0);

/// Runs fn(r) for r in [0, count) on `threads` workers and returns results in
/// index order. The first failing index (lowest r) is rethrown with its index.
std::vector<double> run_indexed(std::size_t count, std::size_t threads,
                                const std::function<double(std::size_t)>& fn);

struct MeanSe {
  double mean;
  double se;
};
/// Kahan-compensated mean and sample-SD/√n, summed in index order.
MeanSe mean_and_se(std::span<const double> values);

struct RateFit {
  double slope;
  double intercept;
  double r2;
  std::vector<std::pair<double, double>> points;
};

/// OLS of ln(risk) on ln(n); DegenerateFit with < 3 points, nonpositive
/// values or a single distinct n.
RateFit rate_fit(std::span<const std::pair<double, double>> points);

}  // namespace covlab
