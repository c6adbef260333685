#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "covlab/error.hpp"
#include "covlab/risk.hpp"
#include "helpers.hpp"

using namespace covlab;
using covlab::test::random_spd;

namespace {

template <class Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::InvalidArgument;
}

Scenario base_scenario() {
  Scenario s;
  s.p = 3;
  s.n = 30;
  s.truth = DiagonalTruth{0.5, 2.0};
  s.estimator.kind = EstimatorKind::PosteriorLaw;
  s.estimator.prior.nu = NuRule{NuRule::Kind::P, 0};
  s.loss = LossSpec::spectral();
  s.replicates = 20;
  s.posterior_draws = 30;
  s.base_seed = 11;
  s.tag = 99;
  return s;
}

// ψ(d/2) + ln 2 and ψ′(d/2) are the mean and variance of ln χ²_d.
double logdet_exact_oracle(std::size_t p, std::size_t n, double nu) {
  double bias = 0.0, var = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double d = static_cast<double>(n - k);
    bias += boost::math::digamma(d / 2.0) - boost::math::digamma((d + nu) / 2.0);
    var += boost::math::trigamma(d / 2.0) + boost::math::trigamma((d + nu) / 2.0);
  }
  return bias * bias + var;
}

}  // namespace

TEST_CASE("closed-form P-loss matches posterior sampling") {
  SeedStream s(21);
  const SpdMatrix truth = random_spd(s, 3);
  const SymmetricMatrix sn = sample_covariance(sample_mvn(s, truth, 25));
  const PosteriorIw post = iw_posterior(IwParams{3.0, SymmetricMatrix::identity(3, 0.5)}, 25, sn);
  for (const LossSpec& loss : {LossSpec::frobenius(), LossSpec::frobenius(1.0 / 3.0), LossSpec::logdet()}) {
    const double exact = ploss_closed_form(post, truth, loss);
    const McValue mc = ploss_mc(PosteriorLaw{post}, truth, loss, 40000, s);
    CHECK(std::abs(mc.estimate - exact) <= 4.0 * mc.se);
  }
}

TEST_CASE("point-mass posterior gives the deterministic loss") {
  SeedStream s(22);
  const SpdMatrix truth = random_spd(s, 4);
  const SymmetricMatrix i4 = SymmetricMatrix::identity(4);
  const McValue v = ploss_mc(PosteriorLaw{PointMass{i4}}, truth, LossSpec::frobenius(), 10, s);
  const double direct = std::pow(frobenius_norm(i4 - truth.sym()), 2);
  CHECK(v.estimate == doctest::Approx(direct).epsilon(1e-14));
  CHECK(v.se == 0.0);

  Scenario sc = base_scenario();
  sc.p = 4;
  sc.n = 6;
  sc.truth = FixedTruth{truth.sym()};
  sc.loss = LossSpec::frobenius();
  sc.estimator.prior.kind = PriorSpec::Kind::Mixture;
  sc.estimator.prior.scale_multiple = 1.0;
  CHECK(planned_inner_method(sc) == InnerMethod::PointMass);
  const RiskEstimate r = evaluate_scenario(sc);
  CHECK(r.mean == doctest::Approx(direct).epsilon(1e-14));
  CHECK(r.se == 0.0);
  CHECK(r.method == InnerMethod::PointMass);
}

TEST_CASE("exact log-det P-risk") {
  for (std::size_t p : {1u, 3u, 10u}) {
    for (std::size_t n : {p + 2, 4 * p + 10, 200 * p}) {
      const double exact = exact_prisk(LossSpec::logdet(), SpdMatrix(SymmetricMatrix::identity(p)), n,
                                       IwParams{static_cast<double>(p), SymmetricMatrix::zero(p)});
      CHECK(exact == doctest::Approx(logdet_exact_oracle(p, n, static_cast<double>(p))).epsilon(1e-12));
    }
  }
  // Free of Σ0.
  SeedStream s(23);
  const IwParams prior{4.0, SymmetricMatrix::zero(4)};
  const double at_identity = exact_prisk(LossSpec::logdet(), SpdMatrix(SymmetricMatrix::identity(4)), 50, prior);
  for (int t = 0; t < 5; ++t) {
    CHECK(exact_prisk(LossSpec::logdet(), random_spd(s, 4), 50, prior) == at_identity);
  }
  CHECK(kind_of([&] {
          exact_prisk(LossSpec::logdet(), SpdMatrix(SymmetricMatrix::identity(4)), 50,
                      IwParams{4.0, SymmetricMatrix::identity(4)});
        }) == ErrorKind::UnsupportedPrior);
}

TEST_CASE("exact Frobenius P-risk against data simulation") {
  SeedStream s(24);
  const SpdMatrix truth = random_spd(s, 3);
  const LossSpec loss = LossSpec::frobenius();
  for (const IwParams& prior : {IwParams{3.0, SymmetricMatrix::zero(3)}, IwParams{5.0, SymmetricMatrix::identity(3, 2.0)}}) {
    const std::size_t n = 20;
    const double exact = exact_prisk(loss, truth, n, prior);
    const int reps = 40000;
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const SymmetricMatrix sn = sample_covariance(sample_mvn(s, truth, n));
      const double v = ploss_closed_form(iw_posterior(prior, n, sn), truth, loss);
      sum += v;
      sq += v * v;
    }
    const double m = sum / reps;
    const double se = std::sqrt((sq / reps - m * m) / (reps - 1));
    CHECK(std::abs(m - exact) <= 4.0 * se);
  }
}

TEST_CASE("P-risk Monte Carlo agrees with the exact value") {
  Scenario sc = base_scenario();
  sc.loss = LossSpec::frobenius();
  sc.replicates = 3000;
  sc.n = 40;
  CHECK(planned_inner_method(sc) == InnerMethod::ClosedForm);
  const RiskEstimate r = evaluate_scenario(sc);
  const double exact = exact_prisk(sc.loss, scenario_truth(sc), sc.n, sc.estimator.prior.resolve(sc.n, sc.p));
  CHECK(std::abs(r.mean - exact) <= 4.0 * r.se);
  CHECK(r.replicates == 3000);
}

TEST_CASE("results are independent of thread count") {
  for (EstimatorKind kind : {EstimatorKind::PosteriorLaw, EstimatorKind::PosteriorMean, EstimatorKind::Tapering}) {
    Scenario sc = base_scenario();
    sc.estimator.kind = kind;
    const RiskEstimate one = evaluate_scenario(sc, RunOptions{1});
    const RiskEstimate four = evaluate_scenario(sc, RunOptions{4});
    CHECK(one.mean == four.mean);
    CHECK(one.se == four.se);
  }
  // Per-replicate truth too.
  Scenario sc = base_scenario();
  sc.truth_per_replicate = true;
  CHECK(evaluate_scenario(sc, RunOptions{1}).mean == evaluate_scenario(sc, RunOptions{3}).mean);
}

TEST_CASE("estimators compared on one scenario share data") {
  Scenario a = base_scenario();
  a.estimator.kind = EstimatorKind::SampleCovariance;
  Scenario b = a;
  b.estimator.kind = EstimatorKind::Tapering;
  b.estimator.taper_k = 100;  // no tapering at p = 3
  CHECK(evaluate_scenario(a).mean == evaluate_scenario(b).mean);
  Scenario c = a;
  c.base_seed = 12;
  CHECK(evaluate_scenario(a).mean != evaluate_scenario(c).mean);
}

TEST_CASE("validation before sampling") {
  Scenario sc = base_scenario();
  sc.replicates = 1;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::InvalidArgument);

  sc = base_scenario();
  sc.estimator.kind = EstimatorKind::LogDetUmvue;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::UnsupportedLoss);
  sc.loss = LossSpec::logdet();
  validate_scenario(sc);
  CHECK(planned_inner_method(sc) == InnerMethod::PlugIn);
  sc.n = 2;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::NotPositiveDefinite);

  sc = base_scenario();
  sc.estimator.kind = EstimatorKind::Tapering;
  sc.estimator.taper_k = 3;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::OddK);

  sc = base_scenario();
  sc.n = 2;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::SingularPosterior);

  // m = n + ν − p = 3 leaves the squared spectral P-risk undefined.
  sc = base_scenario();
  sc.n = 3;
  sc.estimator.prior.scale_multiple = 1.0;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::MomentUndefined);
  sc.loss = LossSpec::spectral(1);
  validate_scenario(sc);

  sc = base_scenario();
  sc.loss.power = 3;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::InvalidArgument);

  sc = base_scenario();
  sc.estimator.prior.kind = PriorSpec::Kind::TruncatedIw;
  sc.estimator.prior.k1 = 2.0;
  sc.estimator.prior.k2 = 1.0;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::InvalidArgument);
  sc.estimator.prior.k1 = 0.1;
  sc.estimator.prior.k2 = 10.0;
  validate_scenario(sc);
  CHECK(planned_inner_method(sc) == InnerMethod::MonteCarlo);
  sc.posterior_draws = 1;
  CHECK(kind_of([&] { validate_scenario(sc); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("inner method selection") {
  Scenario sc = base_scenario();
  CHECK(planned_inner_method(sc) == InnerMethod::MonteCarlo);
  sc.loss = LossSpec::frobenius();
  CHECK(planned_inner_method(sc) == InnerMethod::ClosedForm);
  sc.loss = LossSpec::logdet();
  CHECK(planned_inner_method(sc) == InnerMethod::ClosedForm);
  sc.estimator.kind = EstimatorKind::PosteriorMean;
  CHECK(planned_inner_method(sc) == InnerMethod::ClosedForm);
  sc.estimator.kind = EstimatorKind::SampleCovariance;
  CHECK(planned_inner_method(sc) == InnerMethod::PlugIn);
  CHECK(to_string(InnerMethod::ClosedForm) == "closed_form");
  CHECK(to_string(InnerMethod::MonteCarlo) == "mc");
}

TEST_CASE("run_indexed reports the lowest failing replicate") {
  const auto out = run_indexed(50, 4, [](std::size_t r) { return static_cast<double>(r * r); });
  for (std::size_t r = 0; r < 50; ++r) CHECK(out[r] == static_cast<double>(r * r));
  try {
    run_indexed(50, 4, [](std::size_t r) -> double {
      if (r == 17 || r == 33) throw Error(ErrorKind::NotPositiveDefinite, "bad " + std::to_string(r));
      return 0.0;
    });
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
    const std::string what = e.what();
    CHECK(what.find("replicate 17") != std::string::npos);
    CHECK(what.find("bad 17") != std::string::npos);
  }
}

TEST_CASE("mean and standard error") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const MeanSe ms = mean_and_se(v);
  CHECK(ms.mean == 2.5);
  CHECK(ms.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  // Compensated summation keeps small terms next to a large one.
  std::vector<double> w(1001, 1e-16);
  w[0] = 1.0;
  CHECK(mean_and_se(w).mean == doctest::Approx((1.0 + 1000e-16) / 1001.0).epsilon(1e-15));
}

TEST_CASE("rate fit") {
  std::vector<std::pair<double, double>> pts;
  for (double n : {100.0, 400.0, 1600.0, 6400.0}) pts.emplace_back(n, 7.0 / n);
  RateFit f = rate_fit(pts);
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0));

  pts.clear();
  for (double n : {10.0, 20.0, 40.0}) pts.emplace_back(n, std::pow(n, -0.5) * (n == 20.0 ? 1.1 : 1.0));
  f = rate_fit(pts);
  CHECK(f.slope < -0.4);
  CHECK(f.slope > -0.6);
  CHECK(f.r2 < 1.0);

  const std::vector<std::pair<double, double>> two{{1.0, 1.0}, {2.0, 0.5}};
  CHECK(kind_of([&] { rate_fit(two); }) == ErrorKind::DegenerateFit);
  const std::vector<std::pair<double, double>> nonpos{{1.0, 1.0}, {2.0, 0.0}, {3.0, 0.2}};
  CHECK(kind_of([&] { rate_fit(nonpos); }) == ErrorKind::DegenerateFit);
  const std::vector<std::pair<double, double>> same{{5.0, 1.0}, {5.0, 2.0}, {5.0, 3.0}};
  CHECK(kind_of([&] { rate_fit(same); }) == ErrorKind::DegenerateFit);
}

TEST_CASE("closed form and Monte Carlo agree on a battery of posteriors") {
  SeedStream s(25);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = 2 + static_cast<std::size_t>(t % 4);
    const std::size_t n = 3 * p + static_cast<std::size_t>(t);
    const SpdMatrix truth = random_spd(s, p);
    const SymmetricMatrix sn = sample_covariance(sample_mvn(s, truth, n));
    const PosteriorIw post = iw_posterior(IwParams{static_cast<double>(p + t % 3), SymmetricMatrix::identity(p, 0.2 * (t % 2))}, n, sn);
    for (const LossSpec& loss : {LossSpec::frobenius(), LossSpec::logdet()}) {
      const McValue mc = ploss_mc(PosteriorLaw{post}, truth, loss, 20000, s);
      CHECK(std::abs(mc.estimate - ploss_closed_form(post, truth, loss)) <= 4.0 * mc.se);
    }
  }
}

TEST_CASE("posterior mean risk does not exceed the P-risk") {
  for (auto truth : {TruthSpec{DiagonalTruth{}}, TruthSpec{FullTruth{}}}) {
    Scenario law = base_scenario();
    law.p = 5;
    law.n = 30;
    law.truth = truth;
    law.loss = LossSpec::frobenius();
    law.replicates = 400;
    Scenario mean = law;
    mean.estimator.kind = EstimatorKind::PosteriorMean;
    const RiskEstimate a = evaluate_scenario(mean);
    const RiskEstimate b = evaluate_scenario(law);
    CHECK(a.mean <= b.mean + 2.0 * std::hypot(a.se, b.se));
  }
}

TEST_CASE("reruns are bit-identical") {
  for (EstimatorKind kind : {EstimatorKind::PosteriorLaw, EstimatorKind::SampleCovariance}) {
    Scenario sc = base_scenario();
    sc.estimator.kind = kind;
    const RiskEstimate a = evaluate_scenario(sc);
    const RiskEstimate b = evaluate_scenario(sc);
    CHECK(a.mean == b.mean);
    CHECK(a.se == b.se);
  }
}
