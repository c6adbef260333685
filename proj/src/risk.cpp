#include "covlab/risk.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <sstream>
#include <string_view>
#include <thread>

#include "covlab/error.hpp"
#include "covlab/specialfn.hpp"

namespace covlab {

namespace {

constexpr std::uint64_t kTruthSalt = 0x7472757468ULL;  // "truth"
constexpr std::uint64_t kDataSalt = 0x64617461ULL;     // "data"
constexpr std::uint64_t kDrawSalt = 0x64726177ULL;     // "draw"
constexpr double kLn2 = 0.69314718055994530942;

std::uint64_t truth_tag(const Scenario& sc) { return mix64(sc.tag ^ kTruthSalt); }
// Data depend on (tag, n) but not on the estimator or loss, so estimators
// compared within one scenario group see the same data sets.
std::uint64_t data_tag(const Scenario& sc) {
  return mix64(sc.tag ^ kDataSalt) ^ mix64(static_cast<std::uint64_t>(sc.n));
}
std::uint64_t draw_tag(const Scenario& sc) { return mix64(data_tag(sc) ^ kDrawSalt); }

std::string num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

bool is_matrix_power_loss(const LossSpec& loss) {
  return loss.family == LossFamily::SqSpectral || loss.family == LossFamily::SqFrobenius;
}

bool closed_form_ploss(const LossSpec& loss) {
  return (loss.family == LossFamily::SqFrobenius && loss.power == 2) ||
         loss.family == LossFamily::SqLogDet;
}

bool mixture_point_mass(const Scenario& sc) {
  return sc.estimator.prior.kind == PriorSpec::Kind::Mixture &&
         static_cast<double>(sc.p) > sc.estimator.prior.gamma * static_cast<double>(sc.n);
}

class KahanSum {
 public:
  void add(double x) noexcept {
    const double y = x - c_;
    const double t = sum_ + y;
    c_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const noexcept { return sum_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

PosteriorLaw build_posterior(const Scenario& sc, const SymmetricMatrix& s) {
  const PriorSpec& prior = sc.estimator.prior;
  const IwParams params = prior.resolve(sc.n, sc.p);
  switch (prior.kind) {
    case PriorSpec::Kind::InverseWishart:
      return iw_posterior(params, sc.n, s);
    case PriorSpec::Kind::Mixture: {
      PosteriorMixture mix = mixture_posterior(params, prior.gamma, sc.n, sc.p, s);
      if (auto* pm = std::get_if<PointMass>(&mix.branch)) return *pm;
      return std::get<PosteriorIw>(std::move(mix.branch));
    }
    case PriorSpec::Kind::TruncatedIw:
      return TruncatedPosterior{iw_posterior(params, sc.n, s), prior.k1, prior.k2};
  }
  throw Error(ErrorKind::UnsupportedPrior, "unknown prior kind");
}

double scalar_logdet_loss(const LossSpec& loss, double estimate, const SpdMatrix& truth) {
  const double d = estimate - log_det(truth);
  return loss.scale * d * d;
}

double posterior_law_loss(const Scenario& sc, const SymmetricMatrix& s, const SpdMatrix& truth,
                          SeedStream& draws) {
  PosteriorLaw law = build_posterior(sc, s);
  if (const auto* iw = std::get_if<PosteriorIw>(&law); iw && closed_form_ploss(sc.loss)) {
    return ploss_closed_form(*iw, truth, sc.loss);
  }
  return ploss_mc(law, truth, sc.loss, sc.posterior_draws, draws).estimate;
}

double posterior_mean_loss(const Scenario& sc, const SymmetricMatrix& s, const SpdMatrix& truth,
                           SeedStream& draws) {
  PosteriorLaw law = build_posterior(sc, s);
  const bool logdet = sc.loss.family == LossFamily::SqLogDet;
  if (const auto* pm = std::get_if<PointMass>(&law)) {
    return evaluate_loss(sc.loss, pm->at, truth);
  }
  if (const auto* iw = std::get_if<PosteriorIw>(&law)) {
    if (logdet) return scalar_logdet_loss(sc.loss, logdet_posterior_moments(*iw).mean, truth);
    return evaluate_loss(sc.loss, posterior_mean(*iw), truth);
  }
  const auto& tr = std::get<TruncatedPosterior>(law);
  if (logdet) {
    KahanSum acc;
    for (std::size_t d = 0; d < sc.posterior_draws; ++d) {
      acc.add(log_det(sample_truncated_iw(draws, tr.base.params.df, tr.base.scale, tr.k1, tr.k2)));
    }
    return scalar_logdet_loss(sc.loss, acc.value() / static_cast<double>(sc.posterior_draws),
                              truth);
  }
  const TruncIwParams params{tr.base.params, tr.k1, tr.k2};
  return evaluate_loss(sc.loss, truncated_posterior_mean_mc(params, sc.posterior_draws, draws).mean,
                       truth);
}

double point_estimator_loss(const Scenario& sc, const SymmetricMatrix& s, const SpdMatrix& truth) {
  const bool logdet = sc.loss.family == LossFamily::SqLogDet;
  switch (sc.estimator.kind) {
    case EstimatorKind::SampleCovariance:
      if (logdet) return scalar_logdet_loss(sc.loss, logdet_point_estimate(LogDetMle{}, s, sc.n), truth);
      return evaluate_loss(sc.loss, s, truth);
    case EstimatorKind::Tapering: {
      const std::size_t k = sc.estimator.taper_k == 0 ? default_taper_k(sc.n) : sc.estimator.taper_k;
      const SymmetricMatrix est = tapering_estimator(s, k);
      if (logdet) return scalar_logdet_loss(sc.loss, log_det(SpdMatrix(est)), truth);
      return evaluate_loss(sc.loss, est, truth);
    }
    case EstimatorKind::LogDetMle:
      return scalar_logdet_loss(sc.loss, logdet_point_estimate(LogDetMle{}, s, sc.n), truth);
    case EstimatorKind::LogDetUmvue:
      return scalar_logdet_loss(sc.loss, logdet_point_estimate(LogDetUmvue{}, s, sc.n), truth);
    default:
      break;
  }
  throw Error(ErrorKind::InvalidArgument, "not a point estimator");
}

double replicate_loss(const Scenario& sc, std::size_t r, const SpdMatrix* shared_truth) {
  const SpdMatrix truth = shared_truth != nullptr ? *shared_truth : scenario_truth(sc, r);
  SeedStream data_stream = SeedStream::derive(sc.base_seed, data_tag(sc), r);
  const SymmetricMatrix s = sample_covariance(sample_mvn(data_stream, truth, sc.n));
  SeedStream draw_stream = SeedStream::derive(sc.base_seed, draw_tag(sc), r);
  switch (sc.estimator.kind) {
    case EstimatorKind::PosteriorLaw:
      return posterior_law_loss(sc, s, truth, draw_stream);
    case EstimatorKind::PosteriorMean:
      return posterior_mean_loss(sc, s, truth, draw_stream);
    default:
      return point_estimator_loss(sc, s, truth);
  }
}

RiskEstimate run_scenario(const Scenario& sc, const RunOptions& options) {
  validate_scenario(sc);
  std::optional<SpdMatrix> shared;
  if (!sc.truth_per_replicate) shared.emplace(scenario_truth(sc, 0));
  const SpdMatrix* truth = shared ? &*shared : nullptr;
  const std::vector<double> losses = run_indexed(
      sc.replicates, options.threads, [&](std::size_t r) { return replicate_loss(sc, r, truth); });
  const MeanSe agg = mean_and_se(losses);
  const InnerMethod method = planned_inner_method(sc);
  return RiskEstimate{agg.mean, agg.se, sc.replicates,
                      method == InnerMethod::MonteCarlo ? sc.posterior_draws : 0, method};
}

}  // namespace

// ------------------------------------------------------------ spec types

IwParams PriorSpec::resolve(std::size_t n, std::size_t p) const {
  return IwParams{nu.resolve(n, p), SymmetricMatrix::identity(p, scale_multiple)};
}

std::string PriorSpec::kind_label() const {
  switch (kind) {
    case Kind::InverseWishart: return "iw";
    case Kind::Mixture: return "mixture";
    case Kind::TruncatedIw: return "truncated_iw";
  }
  return "?";
}

std::string EstimatorSpec::label() const {
  switch (kind) {
    case EstimatorKind::PosteriorLaw: return "posterior";
    case EstimatorKind::PosteriorMean: return "posterior_mean";
    case EstimatorKind::SampleCovariance: return "sample_covariance";
    case EstimatorKind::Tapering: return "tapering";
    case EstimatorKind::LogDetMle: return "logdet_mle";
    case EstimatorKind::LogDetUmvue: return "logdet_umvue";
  }
  return "?";
}

std::string to_string(InnerMethod method) {
  switch (method) {
    case InnerMethod::ClosedForm: return "closed_form";
    case InnerMethod::MonteCarlo: return "mc";
    case InnerMethod::PointMass: return "point_mass";
    case InnerMethod::PlugIn: return "plug_in";
  }
  return "?";
}

// ------------------------------------------------------------- validation

void validate_scenario(const Scenario& sc) {
  const auto fail = [](ErrorKind kind, const std::string& msg) { throw Error(kind, msg); };
  if (sc.p == 0 || sc.n == 0) fail(ErrorKind::InvalidArgument, "p and n must be positive");
  if (sc.replicates < 2) fail(ErrorKind::InvalidArgument, "replicates must be at least 2");
  if (sc.loss.power != 1 && sc.loss.power != 2) {
    fail(ErrorKind::InvalidArgument, "loss power must be 1 or 2");
  }
  if (!(sc.loss.scale > 0.0)) fail(ErrorKind::InvalidArgument, "loss scale must be positive");
  if (const auto* fixed = std::get_if<FixedTruth>(&sc.truth); fixed && fixed->matrix.dim() != sc.p) {
    fail(ErrorKind::DimensionMismatch, "fixed truth dimension differs from p");
  }

  const double n = static_cast<double>(sc.n);
  const double p = static_cast<double>(sc.p);
  const LossSpec& loss = sc.loss;
  const EstimatorSpec& est = sc.estimator;
  const bool logdet = loss.family == LossFamily::SqLogDet;

  switch (est.kind) {
    case EstimatorKind::LogDetMle:
    case EstimatorKind::LogDetUmvue:
      if (!logdet) fail(ErrorKind::UnsupportedLoss, est.label() + " only supports the logdet loss");
      if (sc.n < sc.p) fail(ErrorKind::NotPositiveDefinite, "log-det estimators need n >= p");
      return;
    case EstimatorKind::SampleCovariance:
    case EstimatorKind::Tapering:
      if (est.kind == EstimatorKind::Tapering && est.taper_k != 0 &&
          (est.taper_k < 2 || est.taper_k % 2 != 0)) {
        fail(ErrorKind::OddK, "tapering bandwidth must be even and >= 2");
      }
      if (loss.needs_spd() && sc.n < sc.p) {
        fail(ErrorKind::NotPositiveDefinite, "sample covariance is singular when n < p");
      }
      return;
    case EstimatorKind::PosteriorLaw:
    case EstimatorKind::PosteriorMean:
      break;
  }

  const PriorSpec& prior = est.prior;
  if (!(prior.scale_multiple >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "prior scale multiple must be >= 0");
  }
  if (prior.kind == PriorSpec::Kind::Mixture) {
    if (!(prior.gamma > 0.0 && prior.gamma < 1.0)) {
      fail(ErrorKind::InvalidArgument, "mixture gamma must lie in (0,1)");
    }
    if (mixture_point_mass(sc)) return;
  }
  const double nu = prior.nu.resolve(sc.n, sc.p);
  if (!std::isfinite(nu)) fail(ErrorKind::InvalidArgument, "nu must be finite");
  if (prior.scale_multiple == 0.0 && sc.n < sc.p) {
    fail(ErrorKind::SingularPosterior, "A = O with n < p leaves nS + A singular");
  }
  const double df = n + nu;
  if (!(df > p - 1.0)) fail(ErrorKind::SingularPosterior, "posterior df must exceed p-1");
  const double m = df - p;

  if (prior.kind == PriorSpec::Kind::TruncatedIw) {
    if (!(prior.k1 > 0.0 && prior.k1 < prior.k2)) {
      fail(ErrorKind::InvalidArgument, "truncation window needs 0 < k1 < k2");
    }
    if (est.kind == EstimatorKind::PosteriorLaw && sc.posterior_draws < 2) {
      fail(ErrorKind::InvalidArgument, "Monte Carlo P-loss needs posterior_draws >= 2");
    }
    if (sc.posterior_draws < 1) fail(ErrorKind::InvalidArgument, "posterior_draws must be >= 1");
    return;
  }

  if (est.kind == EstimatorKind::PosteriorMean) {
    if (!logdet && !(m > 1.0)) {
      fail(ErrorKind::MomentUndefined, "posterior mean needs n + nu - p - 1 > 0, got " + num(m - 1.0));
    }
    return;
  }

  // PosteriorLaw with an inverse-Wishart posterior.
  if (is_matrix_power_loss(loss)) {
    const double need = loss.power == 2 ? 3.0 : 1.0;
    if (!(m > need)) {
      fail(ErrorKind::MomentUndefined, "P-loss under " + to_string(loss.family) +
                                           " power " + std::to_string(loss.power) +
                                           " needs n + nu - p > " + num(need));
    }
  } else if (loss.family == LossFamily::Bregman && !(m > 1.0)) {
    fail(ErrorKind::MomentUndefined, "Bregman P-loss needs n + nu - p > 1");
  }
  if (!closed_form_ploss(loss) && sc.posterior_draws < 2) {
    fail(ErrorKind::InvalidArgument, "Monte Carlo P-loss needs posterior_draws >= 2");
  }
}

InnerMethod planned_inner_method(const Scenario& sc) {
  const EstimatorSpec& est = sc.estimator;
  if (!est.uses_prior()) return InnerMethod::PlugIn;
  if (mixture_point_mass(sc)) return InnerMethod::PointMass;
  if (est.prior.kind == PriorSpec::Kind::TruncatedIw) return InnerMethod::MonteCarlo;
  if (est.kind == EstimatorKind::PosteriorMean) return InnerMethod::ClosedForm;
  return closed_form_ploss(sc.loss) ? InnerMethod::ClosedForm : InnerMethod::MonteCarlo;
}

// ---------------------------------------------------------------- P-loss

double ploss_closed_form(const PosteriorIw& post, const SpdMatrix& truth, const LossSpec& loss) {
  if (post.dim() != truth.dim()) throw Error(ErrorKind::DimensionMismatch, "posterior vs truth");
  if (loss.family == LossFamily::SqFrobenius && loss.power == 2) {
    const ElementMoments mom = posterior_element_moments(post);
    double var = 0.0;
    for (std::size_t i = 0; i < post.dim(); ++i) {
      for (std::size_t j = 0; j < post.dim(); ++j) var += mom.variance(i, j);
    }
    return loss.scale * (var + sq_frobenius_loss(mom.mean, truth.sym()));
  }
  if (loss.family == LossFamily::SqLogDet) {
    const LogDetMoments mom = logdet_posterior_moments(post);
    const double bias = mom.mean - log_det(truth);
    return loss.scale * (bias * bias + mom.variance);
  }
  throw Error(ErrorKind::UnsupportedLoss,
              "no closed-form P-loss for " + to_string(loss.family) + " power " +
                  std::to_string(loss.power));
}

McValue ploss_mc(const PosteriorLaw& law, const SpdMatrix& truth, const LossSpec& loss,
                 std::size_t draws, SeedStream& stream) {
  if (const auto* pm = std::get_if<PointMass>(&law)) {
    return {evaluate_loss(loss, pm->at, truth), 0.0};
  }
  if (draws < 2) throw Error(ErrorKind::InvalidArgument, "Monte Carlo P-loss needs draws >= 2");
  std::vector<double> values(draws);
  if (const auto* iw = std::get_if<PosteriorIw>(&law)) {
    for (auto& v : values) {
      v = evaluate_loss(loss, sample_inverse_wishart(stream, iw->params.df, iw->scale).sym(), truth);
    }
  } else {
    const auto& tr = std::get<TruncatedPosterior>(law);
    for (auto& v : values) {
      v = evaluate_loss(
          loss, sample_truncated_iw(stream, tr.base.params.df, tr.base.scale, tr.k1, tr.k2).sym(),
          truth);
    }
  }
  const MeanSe agg = mean_and_se(values);
  return {agg.mean, agg.se};
}

// ------------------------------------------------------------ exact risks

double exact_prisk(const LossSpec& loss, const SpdMatrix& truth, std::size_t n,
                   const IwParams& prior) {
  const std::size_t p = truth.dim();
  if (prior.dim() != p) throw Error(ErrorKind::DimensionMismatch, "prior vs truth");
  const double dn = static_cast<double>(n);
  const double m = dn + prior.df - static_cast<double>(p);
  const bool zero_scale = prior.scale.is_zero();
  if (zero_scale && n < p) {
    throw Error(ErrorKind::SingularPosterior, "A = O with n < p leaves nS + A singular");
  }

  if (loss.family == LossFamily::SqFrobenius && loss.power == 2) {
    if (!(m > 3.0)) {
      throw Error(ErrorKind::MomentUndefined, "exact Frobenius P-risk needs n + nu - p > 3");
    }
    const SymmetricMatrix& sigma = truth.sym();
    const SymmetricMatrix& a = prior.scale;
    const double d1 = m * (m - 1.0) * (m - 1.0) * (m - 3.0);
    const double d2 = (m - 1.0) * (m - 1.0);
    KahanSum t1, t2;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double sij = sigma(i, j);
        const double mu_ij = dn * sij + a(i, j);
        const double mu_ii = dn * sigma(i, i) + a(i, i);
        const double mu_jj = dn * sigma(j, j) + a(j, j);
        const double var_ij = dn * (sij * sij + sigma(i, i) * sigma(j, j));
        const double e_b2 = var_ij + mu_ij * mu_ij;               // E b_ij²
        const double e_bb = 2.0 * dn * sij * sij + mu_ii * mu_jj;  // E b_ii b_jj
        t1.add(((m + 1.0) * e_b2 + (m - 1.0) * e_bb) / d1);
        const double bias = mu_ij / (m - 1.0) - sij;
        t2.add(var_ij / d2 + bias * bias);
      }
    }
    return loss.scale * (t1.value() + t2.value());
  }

  if (loss.family == LossFamily::SqLogDet) {
    if (!zero_scale) {
      throw Error(ErrorKind::UnsupportedPrior, "exact log-det P-risk requires A = O_p");
    }
    if (!(dn + prior.df > static_cast<double>(p) - 1.0)) {
      throw Error(ErrorKind::MomentUndefined, "posterior df must exceed p-1");
    }
    double data_var = 0.0;
    double bias = 0.0;
    double post_var = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const double data_half = 0.5 * (dn - static_cast<double>(k));
      const double post_half = 0.5 * (dn + prior.df - static_cast<double>(k));
      data_var += specialfn::trigamma(data_half);
      bias += specialfn::digamma(data_half) - specialfn::digamma(post_half);
      post_var += specialfn::trigamma(post_half);
    }
    return loss.scale * (data_var + bias * bias + post_var);
  }

  throw Error(ErrorKind::UnsupportedLoss, "exact P-risk only for frobenius and logdet");
}

// ------------------------------------------------------------- drivers

SpdMatrix scenario_truth(const Scenario& sc, std::size_t replicate) {
  SeedStream stream = SeedStream::derive(sc.base_seed, truth_tag(sc),
                                         sc.truth_per_replicate ? replicate : 0);
  return gen_truth(stream, sc.truth, sc.p);
}

RiskEstimate prisk_mc(const Scenario& scenario, const RunOptions& options) {
  if (scenario.estimator.kind != EstimatorKind::PosteriorLaw) {
    throw Error(ErrorKind::InvalidArgument, "prisk_mc needs a posterior-law estimator");
  }
  return run_scenario(scenario, options);
}

RiskEstimate frequentist_risk_mc(const Scenario& scenario, const RunOptions& options) {
  if (scenario.estimator.kind == EstimatorKind::PosteriorLaw) {
    throw Error(ErrorKind::InvalidArgument, "frequentist_risk_mc needs a point estimator");
  }
  return run_scenario(scenario, options);
}

RiskEstimate evaluate_scenario(const Scenario& scenario, const RunOptions& options) {
  return run_scenario(scenario, options);
}

std::vector<double> run_indexed(std::size_t count, std::size_t threads,
                                const std::function<double(std::size_t)>& fn) {
  std::vector<double> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t r = next.fetch_add(1); r < count; r = next.fetch_add(1)) {
      try {
        out[r] = fn(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(threads, count));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t r = 0; r < count; ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const Error& e) {
      std::string_view msg = e.what();
      const std::string prefix = std::string(to_string(e.kind())) + ": ";
      if (msg.starts_with(prefix)) msg.remove_prefix(prefix.size());
      throw Error(e.kind(), "replicate " + std::to_string(r) + ": " + std::string(msg));
    }
  }
  return out;
}

MeanSe mean_and_se(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "no values to aggregate");
  KahanSum sum;
  for (double v : values) sum.add(v);
  const double count = static_cast<double>(values.size());
  const double mean = sum.value() / count;
  if (values.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  KahanSum sq;
  for (double v : values) sq.add((v - mean) * (v - mean));
  return {mean, std::sqrt(sq.value() / (count - 1.0) / count)};
}

RateFit rate_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) {
    throw Error(ErrorKind::DegenerateFit, "rate fit needs at least 3 points, got " +
                                              std::to_string(points.size()));
  }
  double sx = 0.0, sy = 0.0;
  for (const auto& [n, risk] : points) {
    if (!(n > 0.0) || !(risk > 0.0) || !std::isfinite(risk)) {
      throw Error(ErrorKind::DegenerateFit, "rate fit needs positive n and risk");
    }
    sx += std::log(n);
    sy += std::log(risk);
  }
  const double k = static_cast<double>(points.size());
  const double mx = sx / k;
  const double my = sy / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [n, risk] : points) {
    const double dx = std::log(n) - mx;
    const double dy = std::log(risk) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw Error(ErrorKind::DegenerateFit, "rate fit needs distinct n values");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double r2 = 1.0;
  if (syy > 0.0) {
    double ss_res = 0.0;
    for (const auto& [n, risk] : points) {
      const double e = std::log(risk) - (intercept + slope * std::log(n));
      ss_res += e * e;
    }
    r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return {slope, intercept, r2, {points.begin(), points.end()}};
}

}  // namespace covlab
