// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "app.hpp"
#include "covlab/bounds.hpp"
#include "covlab/risk.hpp"
#include "covlab/verify.hpp"

using namespace covlab;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2017;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

Scenario benchmark_scenario(const TruthSpec& truth, std::uint64_t tag, std::size_t n, LossSpec loss) {
  Scenario s;
  s.p = 25;
  s.n = n;
  s.truth = truth;
  s.loss = std::move(loss);
  s.replicates = 100;
  s.base_seed = kSeed;
  s.tag = tag;
  return s;
}

Scenario with_prior_mean(Scenario s, NuRule nu) {
  s.estimator.kind = EstimatorKind::PosteriorMean;
  s.estimator.prior.nu = nu;
  return s;
}

Scenario with_kind(Scenario s, EstimatorKind kind) {
  s.estimator.kind = kind;
  return s;
}

// Separation of b above a in units of the conservative difference SE √(se_a² + se_b²).
double gap_in_se(const RiskEstimate& a, const RiskEstimate& b) {
  return (b.mean - a.mean) / std::hypot(a.se, b.se);
}

Outcome spectral_rate() {
  std::vector<std::pair<double, double>> pts;
  std::string detail;
  for (std::size_t n : {200u, 800u, 3200u}) {
    Scenario s;
    s.p = 10;
    s.n = n;
    s.truth = FixedTruth{SymmetricMatrix::identity(10)};
    s.estimator.kind = EstimatorKind::PosteriorLaw;
    s.estimator.prior.nu = NuRule{NuRule::Kind::P, 0};
    s.loss = LossSpec::spectral(2);
    s.replicates = 200;
    s.posterior_draws = 200;
    s.base_seed = kSeed;
    s.tag = 1;
    const RiskEstimate r = prisk_mc(s);
    pts.emplace_back(static_cast<double>(n), r.mean);
    detail += "n=" + std::to_string(n) + ":" + fmt(r.mean) + " ";
  }
  const RateFit f = rate_fit(pts);
  return {f.slope >= -1.2 && f.slope <= -0.8 && f.r2 >= 0.98,
          detail + "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2)};
}

Outcome frobenius_rate() {
  std::vector<std::pair<double, double>> pts;
  std::string detail;
  bool mc_ok = true;
  for (std::size_t p : {5u, 10u, 20u}) {
    const std::size_t n = 50 * p;
    const IwParams prior{static_cast<double>(p), SymmetricMatrix::zero(p)};
    const SpdMatrix truth(SymmetricMatrix::identity(p));
    const double exact = exact_prisk(LossSpec::frobenius(), truth, n, prior);
    pts.emplace_back(static_cast<double>(p), static_cast<double>(n) * exact);

    Scenario s;
    s.p = p;
    s.n = n;
    s.truth = FixedTruth{truth.sym()};
    s.estimator.kind = EstimatorKind::PosteriorLaw;
    s.estimator.prior.nu = NuRule{NuRule::Kind::P, 0};
    s.loss = LossSpec::frobenius();
    s.replicates = 100;
    s.base_seed = kSeed;
    s.tag = 2;
    const RiskEstimate mc = prisk_mc(s);
    const double z = std::abs(mc.mean - exact) / mc.se;
    mc_ok = mc_ok && z <= 3.0;
    detail += "p=" + std::to_string(p) + ":exact=" + fmt(exact) + ",mc_z=" + fmt(z) + " ";
  }
  // rate_fit regresses ln(y) on ln(x); here x = p and y = n·risk.
  const RateFit f = rate_fit(pts);
  return {mc_ok && f.slope >= 1.8 && f.slope <= 2.2, detail + "p_exponent=" + fmt(f.slope)};
}

Outcome logdet_rate() {
  std::vector<std::pair<double, double>> pts;
  bool invariant = true;
  SeedStream truths(kSeed);
  for (std::size_t n : {100u, 400u, 1600u}) {
    const IwParams prior{0.0, SymmetricMatrix::zero(10)};
    const double v = exact_prisk(LossSpec::logdet(), SpdMatrix(SymmetricMatrix::identity(10)), n, prior);
    for (int t = 0; t < 5; ++t) {
      const SpdMatrix sigma0 = gen_truth(truths, t % 2 ? TruthSpec{FullTruth{}} : TruthSpec{DiagonalTruth{0.1, 5.0}}, 10);
      invariant = invariant && exact_prisk(LossSpec::logdet(), sigma0, n, prior) == v;
    }
    pts.emplace_back(static_cast<double>(n), v);
  }
  const RateFit f = rate_fit(pts);
  return {invariant && f.slope >= -1.1 && f.slope <= -0.9,
          "slope=" + fmt(f.slope) + " sigma0_invariant=" + (invariant ? "yes" : "no")};
}

Outcome spectral_ordering() {
  const LossSpec loss = LossSpec::spectral(1);
  const NuRule nu_p{NuRule::Kind::P, 0};
  const NuRule nu_n{NuRule::Kind::N, 0};
  std::string detail;
  bool ok = true;

  const Scenario diag = benchmark_scenario(DiagonalTruth{}, 41, 625, loss);
  const RiskEstimate taper_d = evaluate_scenario(with_kind(diag, EstimatorKind::Tapering));
  const RiskEstimate sample_d = evaluate_scenario(with_kind(diag, EstimatorKind::SampleCovariance));
  const double g1 = gap_in_se(taper_d, sample_d);
  ok = ok && g1 >= 2.0;
  detail += "diag:taper<sample " + fmt(g1) + "SE; ";

  const Scenario full = benchmark_scenario(FullTruth{}, 42, 625, loss);
  const RiskEstimate taper_f = evaluate_scenario(with_kind(full, EstimatorKind::Tapering));
  const RiskEstimate iwp_f = evaluate_scenario(with_prior_mean(full, nu_p));
  const double g2 = gap_in_se(iwp_f, taper_f);
  ok = ok && g2 >= 2.0;
  detail += "full:taper>iw(p) " + fmt(g2) + "SE; ";

  for (const auto& [name, truth, tag] :
       {std::tuple{"diag", TruthSpec{DiagonalTruth{}}, 43u}, std::tuple{"full", TruthSpec{FullTruth{}}, 44u}}) {
    const Scenario s = benchmark_scenario(truth, tag, 125, loss);
    const double g = gap_in_se(evaluate_scenario(with_prior_mean(s, nu_p)), evaluate_scenario(with_prior_mean(s, nu_n)));
    ok = ok && g >= 2.0;
    detail += std::string(name) + "@n=125:iw(n)>iw(p) " + fmt(g) + "SE; ";
  }
  return {ok, detail};
}

Outcome logdet_ordering() {
  const LossSpec loss = LossSpec::logdet();
  std::string detail;
  bool ok = true;
  for (const auto& [name, truth, tag] :
       {std::tuple{"diag", TruthSpec{DiagonalTruth{}}, 51u}, std::tuple{"full", TruthSpec{FullTruth{}}, 52u}}) {
    const Scenario s = benchmark_scenario(truth, tag, 625, loss);
    const RiskEstimate umvue = evaluate_scenario(with_kind(s, EstimatorKind::LogDetUmvue));
    const RiskEstimate nu2 = evaluate_scenario(with_prior_mean(s, NuRule::constant(2.0)));
    const RiskEstimate nusq = evaluate_scenario(with_prior_mean(s, NuRule{NuRule::Kind::SqrtNOverP, 0}));
    const RiskEstimate nup = evaluate_scenario(with_prior_mean(s, NuRule{NuRule::Kind::P, 0}));
    const double se2 = std::hypot(umvue.se, nu2.se);
    const double sesq = std::hypot(umvue.se, nusq.se);
    const bool a = umvue.mean <= nu2.mean + 2.0 * se2;
    const bool b = umvue.mean <= nusq.mean + 2.0 * sesq;
    const double g = gap_in_se(umvue, nup);
    ok = ok && a && b && g >= 2.0;
    detail += std::string(name) + ":umvue=" + fmt(umvue.mean) + " nu2=" + fmt(nu2.mean) + " nusqrt=" +
              fmt(nusq.mean) + " nup=" + fmt(nup.mean) + " (nup-umvue " + fmt(g) + "SE); ";
  }
  return {ok, detail};
}

Outcome umvue_unbiased() {
  const UmvueBias b = umvue_bias(5, 50, 20000, kSeed);
  const double z = std::abs(b.mean_error) / b.se;
  return {z <= 4.0, "mean_error=" + fmt(b.mean_error) + " se=" + fmt(b.se) + " z=" + fmt(z)};
}

Outcome xi_machinery() {
  double worst = 0.0;
  const std::vector<std::pair<double, double>> grid{{1.0, 0.5}, {5.0, 0.3}, {20.0, 0.2}, {100.0, 0.1}, {1000.0, 0.03}};
  for (std::size_t p = 1; p <= 10; ++p) {
    for (const auto& [n, eps] : grid) {
      const double e = xi_exact(p, n, eps);
      worst = std::max(worst, std::abs(e - xi_bruteforce(p, n, eps)) / e);
    }
  }
  const double a = 0.1;
  const double n = 1e6;
  const double gap = std::abs(xi_exact(10000, n, std::sqrt(2.0 * a * 1e4 / n)) - 1.0 / std::sqrt(1.0 - 2.0 * a));
  return {worst <= 1e-12 && gap < 0.01, "max_rel_error=" + fmt(worst) + " limit_gap_p10000=" + fmt(gap)};
}

Outcome lemma_verifiers() {
  bool ok = true;
  std::string detail;
  for (const auto& [name, phi] : {std::pair{"von_neumann", PhiSpec::von_neumann()}, std::pair{"stein", PhiSpec::stein()}}) {
    const SandwichResult r = bregman_sandwich_battery(phi, 500, kSeed);
    ok = ok && r.min_ratio > 0.0 && std::isfinite(r.max_ratio);
    detail += std::string(name) + "=[" + fmt(r.min_ratio) + "," + fmt(r.max_ratio) + "] ";
  }
  const RemainderResult rem = logdet_remainder_battery(1000, kSeed);
  ok = ok && rem.violations == 0 && rem.count == 1000;
  detail += "remainder_violations=" + std::to_string(rem.violations) + " ";
  SeedStream stream(kSeed);
  const WishartTailReport tails = wishart_tail_report(10, 100.0, 100000, stream);
  ok = ok && tails.pass();
  detail += "tails_max=" + fmt(tails.lambda_max.frequency) + " tails_min=" + fmt(tails.lambda_min.frequency) + " ";
  const AffinityQuadratureResult chi = chi_affinity_quadrature_battery(50, kSeed);
  ok = ok && chi.max_abs_error <= 1e-8;
  detail += "chi_quadrature_err=" + fmt(chi.max_abs_error);
  return {ok, detail};
}

std::string strip_wall_ms(const std::string& csv) {
  const auto& cols = app::csv_columns();
  const auto idx = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "wall_ms") - cols.begin());
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    auto fields = app::csv_split(line);
    fields.erase(fields.begin() + static_cast<std::ptrdiff_t>(idx));
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + app::csv_escape(fields[i]);
    out += '\n';
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("covlab_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string config = (dir / "grid.json").string();
  std::ofstream(config) << R"json({
  "format_version": 1,
  "output_path": "grid.csv",
  "scenarios": [
    {
      "id": "benchmark-grid",
      "p": 10,
      "n": [20, "p^2"],
      "truth": {"kind": "diagonal"},
      "estimators": [
        {"kind": "posterior_mean", "prior": {"type": "iw", "nu": 2}},
        {"kind": "posterior_mean", "prior": {"type": "iw", "nu": "sqrt(n/p)"}},
        {"kind": "posterior_mean", "prior": {"type": "iw", "nu": "p"}},
        {"kind": "posterior_mean", "prior": {"type": "iw", "nu": "n"}},
        {"kind": "posterior", "prior": {"type": "iw", "nu": "p"}},
        {"kind": "sample_covariance"},
        {"kind": "tapering"}
      ],
      "losses": [
        {"family": "spectral", "power": 1},
        {"family": "frobenius", "scale": "1/p"},
        {"family": "bregman", "phi": "stein"}
      ],
      "replicates": 20,
      "posterior_draws": 20,
      "base_seed": 2017
    }
  ]
}
)json";
  std::vector<std::string> outputs;
  std::vector<int> codes;
  for (const char* threads : {"1", "1", "4"}) {
    const std::string out = (dir / ("run" + std::to_string(outputs.size()) + ".csv")).string();
    const char* argv[] = {"covlab", "simulate", "--config", config.c_str(), "--out", out.c_str(), "--threads", threads};
    std::ostringstream o, e;
    codes.push_back(app::run_cli(8, argv, o, e));
    std::ifstream in(out, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    outputs.push_back(strip_wall_ms(ss.str()));
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  const std::size_t rows = static_cast<std::size_t>(std::count(outputs[0].begin(), outputs[0].end(), '\n')) - 1;
  const bool ok = codes[0] == codes[1] && codes[1] == codes[2] && rows == 42 && outputs[0] == outputs[1] &&
                  outputs[0] == outputs[2];
  return {ok, "rows=" + std::to_string(rows) + " exit=" + std::to_string(codes[0]) +
                  " rerun_identical=" + (outputs[0] == outputs[1] ? "yes" : "no") +
                  " threads4_identical=" + (outputs[0] == outputs[2] ? "yes" : "no")};
}

}  // namespace

// With a criterion number as the only argument, runs just that criterion.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"spectral P-risk rate", spectral_rate},
      {"Frobenius P-risk rate and exactness", frobenius_rate},
      {"log-det P-risk rate", logdet_rate},
      {"spectral-loss estimator ordering", spectral_ordering},
      {"log-det estimator ordering", logdet_ordering},
      {"UMVUE unbiasedness", umvue_unbiased},
      {"xi machinery", xi_machinery},
      {"lemma verifiers", lemma_verifiers},
      {"simulate determinism", cli_determinism},
  };
  std::size_t first = 0;
  std::size_t last = criteria.size();
  if (argc == 2) {
    const long k = std::strtol(argv[1], nullptr, 10);
    if (k < 1 || k > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "criterion must be 1..%zu\n", criteria.size());
      return 2;
    }
    first = static_cast<std::size_t>(k - 1);
    last = first + 1;
  }
  int failures = 0;
  for (std::size_t i = first; i < last; ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(last - first) - failures, last - first);
  return failures == 0 ? 0 : 1;
}
