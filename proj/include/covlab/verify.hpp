#pragma once

// Numeric verification batteries for the lemma machinery, grouped into named
// suites for the command-line runner.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "covlab/losses.hpp"
#include "covlab/matcore.hpp"
#include "covlab/randmat.hpp"

namespace covlab {

/// Q·diag(λ)·Qᵀ with Haar-like Q (eigenvectors of a Gaussian symmetric matrix)
/// and λ uniform on [lo, hi].
SymmetricMatrix random_symmetric_with_spectrum(SeedStream& stream, std::size_t p, double lo,
                                               double hi);

struct SandwichResult {
  double min_ratio = 0.0;  // min D_φ/‖X−Y‖_F²
  double max_ratio = 0.0;
  double max_closed_form_rel_dev = 0.0;  // generic spectral path vs closed form
  std::size_t pairs = 0;
};
/// Pairs of SPD matrices with eigenvalues in [0.5, 4] and p in [2, 6].
SandwichResult bregman_sandwich_battery(const PhiSpec& phi, std::size_t pairs,
                                        std::uint64_t seed);

struct RemainderResult {
  std::size_t count = 0;
  std::size_t violations = 0;  // R < 0 or R > ‖B‖_F²
  double min_r = 0.0;
  double max_ratio = 0.0;  // max R/‖B‖_F²
};
/// Symmetric B with spectral norm ≤ ½.
RemainderResult logdet_remainder_battery(std::size_t count, std::uint64_t seed);

struct AffinityQuadratureResult {
  std::size_t triples = 0;
  double max_abs_error = 0.0;
};
/// p = 1 triples satisfying the positivity condition; chi_affinity against
/// adaptive Gauss–Kronrod quadrature of ∫f₁f₂/f₀.
AffinityQuadratureResult chi_affinity_quadrature_battery(std::size_t triples, std::uint64_t seed);

struct UmvueBias {
  double mean_error = 0.0;  // mean(UMVUE − log det Σ0)
  double se = 0.0;
};
UmvueBias umvue_bias(std::size_t p, std::size_t n, std::size_t replicates, std::uint64_t seed);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<VerifyCheck> checks;

  std::size_t failures() const noexcept;
  bool pass() const noexcept { return failures() == 0; }
};

struct VerifyOptions {
  std::uint64_t seed = 0x5EED2017ULL;
};

/// Suite names accepted by run_verify, excluding "all".
const std::vector<std::string>& verify_suite_names();
/// Runs one suite, or every suite for "all". InvalidArgument on an unknown name.
std::vector<SuiteResult> run_verify(const std::string& suite, const VerifyOptions& options = {});

}  // namespace covlab
