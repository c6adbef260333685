#include "covlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "covlab/bounds.hpp"
#include "covlab/error.hpp"
#include "covlab/estimators.hpp"
#include "covlab/risk.hpp"

namespace covlab {

namespace {

std::string describe(std::initializer_list<std::pair<const char*, double>> fields) {
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [key, value] : fields) {
    if (!first) os << ", ";
    os << key << '=' << value;
    first = false;
  }
  return os.str();
}

double uniform_in(SeedStream& s, double lo, double hi) { return lo + (hi - lo) * s.uniform(); }

double relative_gap(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min());
}

std::uint64_t suite_seed(std::uint64_t base, const char* name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* c = name; *c != '\0'; ++c) h = (h ^ static_cast<unsigned char>(*c)) * 0x100000001b3ULL;
  return mix64(base ^ h);
}

// ----------------------------------------------------------------- suites

SuiteResult suite_xi(const VerifyOptions&) {
  SuiteResult out{"xi", {}};
  const std::vector<std::pair<double, double>> grid = {
      {1.0, 0.3}, {7.0, 0.5}, {10.0, 0.2}, {50.0, 0.1}, {100.0, 0.05}};
  double worst = 0.0;
  for (std::size_t p = 1; p <= 10; ++p) {
    for (const auto& [n, eps] : grid) {
      worst = std::max(worst, relative_gap(xi_exact(p, n, eps), xi_bruteforce(p, n, eps)));
    }
  }
  out.checks.push_back({"exact_matches_enumeration_p_le_10", worst <= 1e-12,
                        describe({{"max_rel_error", worst}, {"tolerance", 1e-12}})});

  const double a = 0.1;
  const double limit = 1.0 / std::sqrt(1.0 - 2.0 * a);
  const double n = 1e6;
  std::vector<double> gaps;
  for (double p : {1e2, 1e3, 1e4}) {
    const double eps = std::sqrt(2.0 * a * p / n);
    gaps.push_back(std::abs(xi_exact(static_cast<std::size_t>(p), n, eps) - limit));
  }
  const bool decreasing = gaps[0] > gaps[1] && gaps[1] > gaps[2];
  out.checks.push_back({"limit_chi_square_mgf", decreasing && gaps[2] < 0.01,
                        describe({{"gap_p100", gaps[0]}, {"gap_p1000", gaps[1]},
                                  {"gap_p10000", gaps[2]}})});

  bool monotone = true;
  for (std::size_t p : {3u, 20u, 200u}) {
    double prev_n = 1.0;
    for (double nn : {1.0, 5.0, 25.0, 125.0}) {
      const double v = xi_exact(p, nn, 0.2);
      monotone = monotone && v >= prev_n && v >= 1.0;
      prev_n = v;
    }
    double prev_e = 1.0;
    for (double eps : {0.05, 0.1, 0.2, 0.4}) {
      const double v = xi_exact(p, 20.0, eps);
      monotone = monotone && v >= prev_e;
      prev_e = v;
    }
  }
  out.checks.push_back({"at_least_one_and_monotone", monotone, ""});
  return out;
}

SuiteResult suite_wishart_tails(const VerifyOptions& opt) {
  SuiteResult out{"wishart_tails", {}};
  SeedStream stream = SeedStream::derive(suite_seed(opt.seed, "wishart_tails"), 0, 0);
  const WishartTailReport r = wishart_tail_report(10, 100.0, 100000, stream);
  out.checks.push_back({"lambda_max_tail", r.lambda_max.pass,
                        describe({{"frequency", r.lambda_max.frequency},
                                  {"ci_high", r.lambda_max.ci_high},
                                  {"bound", r.lambda_max.bound}})});
  out.checks.push_back({"lambda_min_tail", r.lambda_min.pass,
                        describe({{"frequency", r.lambda_min.frequency},
                                  {"ci_high", r.lambda_min.ci_high},
                                  {"bound", r.lambda_min.bound}})});
  return out;
}

SuiteResult suite_bregman(const VerifyOptions& opt) {
  SuiteResult out{"bregman", {}};
  const std::uint64_t seed = suite_seed(opt.seed, "bregman");
  for (const PhiSpec& phi : {PhiSpec::von_neumann(), PhiSpec::stein()}) {
    const SandwichResult r = bregman_sandwich_battery(phi, 500, seed);
    const bool bounded = r.min_ratio > 0.0 && r.min_ratio <= r.max_ratio && std::isfinite(r.max_ratio);
    out.checks.push_back({"sandwich_" + phi.name(), bounded,
                          describe({{"m", r.min_ratio}, {"M", r.max_ratio}})});
    out.checks.push_back({"generic_matches_closed_form_" + phi.name(),
                          r.max_closed_form_rel_dev <= 1e-9,
                          describe({{"max_rel_dev", r.max_closed_form_rel_dev}})});
  }
  const SandwichResult sq = bregman_sandwich_battery(PhiSpec::squared_euclid(), 500, seed);
  out.checks.push_back({"generic_matches_closed_form_squared_euclid",
                        sq.max_closed_form_rel_dev <= 1e-9,
                        describe({{"max_rel_dev", sq.max_closed_form_rel_dev}})});
  return out;
}

SuiteResult suite_logdet_remainder(const VerifyOptions& opt) {
  SuiteResult out{"logdet_remainder", {}};
  const RemainderResult r = logdet_remainder_battery(1000, suite_seed(opt.seed, "logdet_remainder"));
  out.checks.push_back({"remainder_between_zero_and_frobenius", r.violations == 0,
                        describe({{"count", static_cast<double>(r.count)},
                                  {"violations", static_cast<double>(r.violations)},
                                  {"min_R", r.min_r},
                                  {"max_R_over_frob2", r.max_ratio}})});
  return out;
}

SuiteResult suite_chi_affinity(const VerifyOptions& opt) {
  SuiteResult out{"chi_affinity", {}};
  const std::uint64_t seed = suite_seed(opt.seed, "chi_affinity");
  const AffinityQuadratureResult q = chi_affinity_quadrature_battery(50, seed);
  out.checks.push_back({"quadrature_p1", q.max_abs_error <= 1e-8,
                        describe({{"triples", static_cast<double>(q.triples)},
                                  {"max_abs_error", q.max_abs_error}})});

  SeedStream stream = SeedStream::derive(seed, 1, 0);
  double sym_gap = 0.0;
  double lemma_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    const SpdMatrix s0(random_symmetric_with_spectrum(stream, 3, 1.0, 2.0));
    const SpdMatrix s1(random_symmetric_with_spectrum(stream, 3, 1.0, 2.0));
    const SpdMatrix s2(random_symmetric_with_spectrum(stream, 3, 1.0, 2.0));
    sym_gap = std::max(sym_gap, relative_gap(chi_affinity(s0, s1, s2), chi_affinity(s0, s2, s1)));

    // Diagonal triples commute, where the lemma's determinant is exact.
    std::vector<double> d0(3), d1(3), d2(3);
    for (std::size_t i = 0; i < 3; ++i) {
      d0[i] = uniform_in(stream, 1.0, 2.0);
      d1[i] = uniform_in(stream, 1.0, 2.0);
      d2[i] = uniform_in(stream, 1.0, 2.0);
    }
    const SpdMatrix c0(SymmetricMatrix::diagonal(d0));
    const SpdMatrix c1(SymmetricMatrix::diagonal(d1));
    const SpdMatrix c2(SymmetricMatrix::diagonal(d2));
    lemma_gap = std::max(lemma_gap,
                         relative_gap(chi_affinity_lemma_form(c0, c1, c2), chi_affinity(c0, c1, c2)));
  }
  out.checks.push_back({"symmetric_in_sigma1_sigma2", sym_gap <= 1e-12,
                        describe({{"max_rel_gap", sym_gap}})});
  out.checks.push_back({"lemma_form_on_commuting_triples", lemma_gap <= 1e-12,
                        describe({{"max_rel_gap", lemma_gap}})});
  return out;
}

SuiteResult suite_closed_form_mc(const VerifyOptions& opt) {
  SuiteResult out{"closed_form_mc", {}};
  const std::uint64_t seed = suite_seed(opt.seed, "closed_form_mc");

  // Inner P-loss: closed form against posterior draws for one fixed data set.
  {
    const std::size_t p = 4;
    const std::size_t n = 30;
    const SpdMatrix truth(SymmetricMatrix{{2.0, 0.5, 0.0, 0.0},
                                          {0.5, 1.5, 0.3, 0.0},
                                          {0.0, 0.3, 1.0, 0.2},
                                          {0.0, 0.0, 0.2, 3.0}});
    SeedStream data = SeedStream::derive(seed, 1, 0);
    const SymmetricMatrix s = sample_covariance(sample_mvn(data, truth, n));
    const PosteriorIw post = iw_posterior(IwParams{4.0, SymmetricMatrix::identity(p)}, n, s);
    for (const LossSpec& loss : {LossSpec::frobenius(), LossSpec::logdet()}) {
      SeedStream draws = SeedStream::derive(seed, 2, loss.family == LossFamily::SqLogDet ? 1 : 0);
      const double exact = ploss_closed_form(post, truth, loss);
      const McValue mc = ploss_mc(post, truth, loss, 40000, draws);
      const double z = std::abs(mc.estimate - exact) / mc.se;
      out.checks.push_back({"ploss_" + to_string(loss.family), z <= 4.0,
                            describe({{"closed_form", exact}, {"mc", mc.estimate}, {"z", z}})});
    }
  }

  // Outer P-risk: exact expectation over data against replicated data sets.
  for (const LossSpec& loss : {LossSpec::frobenius(), LossSpec::logdet()}) {
    Scenario sc;
    sc.p = 3;
    sc.n = 40;
    sc.truth = FixedTruth{SymmetricMatrix{{1.0, 0.2, 0.1}, {0.2, 2.0, -0.3}, {0.1, -0.3, 1.5}}};
    sc.estimator.kind = EstimatorKind::PosteriorLaw;
    sc.estimator.prior.nu =
        loss.family == LossFamily::SqLogDet ? NuRule{NuRule::Kind::Zero, 0.0} : NuRule{};
    sc.loss = loss;
    sc.replicates = 2000;
    sc.base_seed = seed;
    sc.tag = loss.family == LossFamily::SqLogDet ? 11 : 10;
    const RiskEstimate mc = prisk_mc(sc);
    const double exact = exact_prisk(loss, scenario_truth(sc), sc.n, sc.estimator.prior.resolve(sc.n, sc.p));
    const double z = std::abs(mc.mean - exact) / mc.se;
    out.checks.push_back({"prisk_" + to_string(loss.family), z <= 4.0,
                          describe({{"exact", exact}, {"mc", mc.mean}, {"z", z}})});
  }
  return out;
}

SuiteResult suite_umvue(const VerifyOptions& opt) {
  SuiteResult out{"umvue", {}};
  // 4·10⁵ replicates resolve a bias of 10⁻³ per digamma term at about 7 SE.
  const UmvueBias b = umvue_bias(5, 50, 400000, suite_seed(opt.seed, "umvue"));
  const double z = std::abs(b.mean_error) / b.se;
  out.checks.push_back({"umvue_unbiased", z <= 4.0,
                        describe({{"mean_error", b.mean_error}, {"se", b.se}, {"z", z}})});
  return out;
}

using SuiteFn = std::function<SuiteResult(const VerifyOptions&)>;

const std::vector<std::pair<std::string, SuiteFn>>& suite_table() {
  static const std::vector<std::pair<std::string, SuiteFn>> table = {
      {"xi", suite_xi},
      {"wishart_tails", suite_wishart_tails},
      {"bregman", suite_bregman},
      {"logdet_remainder", suite_logdet_remainder},
      {"chi_affinity", suite_chi_affinity},
      {"closed_form_mc", suite_closed_form_mc},
      {"umvue", suite_umvue},
  };
  return table;
}

}  // namespace

SymmetricMatrix random_symmetric_with_spectrum(SeedStream& stream, std::size_t p, double lo,
                                               double hi) {
  Matrix g(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) g(i, j) = g(j, i) = stream.normal();
  }
  const EigenDecomp basis = eigh(SymmetricMatrix(g));
  std::vector<double> lambda(p);
  for (double& l : lambda) l = uniform_in(stream, lo, hi);
  return EigenDecomp{lambda, basis.vectors}.reconstruct();
}

SandwichResult bregman_sandwich_battery(const PhiSpec& phi, std::size_t pairs, std::uint64_t seed) {
  SandwichResult r;
  r.pairs = pairs;
  r.min_ratio = std::numeric_limits<double>::infinity();
  r.max_ratio = 0.0;
  SeedStream stream = SeedStream::derive(seed, 0xB5E6, 0);
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto p = static_cast<std::size_t>(2 + stream.next_u64() % 5);
    const SpdMatrix x(random_symmetric_with_spectrum(stream, p, 0.5, 4.0));
    const SpdMatrix y(random_symmetric_with_spectrum(stream, p, 0.5, 4.0));
    const double d = bregman_divergence(phi, x, y);
    const double f = sq_frobenius_loss(x.sym(), y.sym());
    r.min_ratio = std::min(r.min_ratio, d / f);
    r.max_ratio = std::max(r.max_ratio, d / f);
    double closed = d;
    switch (phi.kind()) {
      case PhiKind::SquaredEuclid: closed = f; break;
      case PhiKind::VonNeumann: closed = von_neumann_divergence(x, y); break;
      case PhiKind::Stein: closed = stein_loss(x, y); break;
      case PhiKind::Custom: break;
    }
    r.max_closed_form_rel_dev = std::max(r.max_closed_form_rel_dev, relative_gap(d, closed));
  }
  return r;
}

RemainderResult logdet_remainder_battery(std::size_t count, std::uint64_t seed) {
  RemainderResult r;
  r.count = count;
  r.min_r = std::numeric_limits<double>::infinity();
  SeedStream stream = SeedStream::derive(seed, 0x10D7, 0);
  for (std::size_t k = 0; k < count; ++k) {
    const auto p = static_cast<std::size_t>(1 + stream.next_u64() % 8);
    const SymmetricMatrix b = random_symmetric_with_spectrum(stream, p, -0.5, 0.5);
    const LogDetRemainder rem = logdet_remainder(b);
    // Eigenvalues are exactly in [−½, ½] up to rounding; allow rounding slack.
    const double slack = 1e-14 * std::max(1.0, rem.frob2);
    if (rem.r < -slack || rem.r > rem.frob2 + slack) ++r.violations;
    r.min_r = std::min(r.min_r, rem.r);
    if (rem.frob2 > 0.0) r.max_ratio = std::max(r.max_ratio, rem.r / rem.frob2);
  }
  return r;
}

AffinityQuadratureResult chi_affinity_quadrature_battery(std::size_t triples, std::uint64_t seed) {
  AffinityQuadratureResult r;
  r.triples = triples;
  SeedStream stream = SeedStream::derive(seed, 0xC41, 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < triples; ++t) {
    double v0 = 0.0, v1 = 0.0, v2 = 0.0, prec = 0.0;
    do {
      v0 = uniform_in(stream, 0.5, 2.0);
      v1 = uniform_in(stream, 0.5, 1.8) * v0;
      v2 = uniform_in(stream, 0.5, 1.8) * v0;
      prec = 1.0 / v1 + 1.0 / v2 - 1.0 / v0;
    } while (prec < 0.1 / v0);
    const double log_const = -0.5 * std::log(2.0 * std::numbers::pi) -
                             0.5 * (std::log(v1) + std::log(v2) - std::log(v0));
    const auto integrand = [&](double x) { return std::exp(log_const - 0.5 * prec * x * x); };
    const double quad =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-14);
    const double value = chi_affinity(SpdMatrix(SymmetricMatrix{{v0}}),
                                      SpdMatrix(SymmetricMatrix{{v1}}),
                                      SpdMatrix(SymmetricMatrix{{v2}}));
    r.max_abs_error = std::max(r.max_abs_error, std::abs(value - quad));
  }
  return r;
}

UmvueBias umvue_bias(std::size_t p, std::size_t n, std::size_t replicates, std::uint64_t seed) {
  SeedStream truth_stream = SeedStream::derive(seed, 0x7A, 0);
  const SpdMatrix truth = gen_truth(truth_stream, FullTruth{}, p);
  const double target = log_det(truth);
  const std::vector<double> errors = run_indexed(replicates, 1, [&](std::size_t r) {
    SeedStream data = SeedStream::derive(seed, 0xDA7A, r);
    const SymmetricMatrix s = sample_covariance(sample_mvn(data, truth, n));
    return logdet_point_estimate(LogDetUmvue{}, s, n) - target;
  });
  const MeanSe agg = mean_and_se(errors);
  return {agg.mean, agg.se};
}

std::size_t SuiteResult::failures() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const VerifyCheck& c) { return !c.pass; }));
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : suite_table()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

std::vector<SuiteResult> run_verify(const std::string& suite, const VerifyOptions& options) {
  std::vector<SuiteResult> out;
  for (const auto& [name, fn] : suite_table()) {
    if (suite == "all" || suite == name) out.push_back(fn(options));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "unknown verify suite '" + suite + "'");
  return out;
}

}  // namespace covlab
