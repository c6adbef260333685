#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>

#include "covlab/matcore.hpp"

namespace covlab {

struct StreamOrigin {
  std::uint64_t base_seed = 0;
  std::uint64_t scenario_tag = 0;
  std::uint64_t replicate_index = 0;
};

/// SplitMix64 generator with the scalar samplers used throughout. A stream
/// is owned by exactly one task; parallel work derives one stream per task.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t state, StreamOrigin origin = {}) noexcept
      : state_(state), origin_(origin) {}

  /// Pure function of the triple: mix(base ⊕ mix(tag)) advanced by
  /// index·golden-gamma, then finalized once more so streams of adjacent
  /// indices do not overlap.
  static SeedStream derive(std::uint64_t base_seed, std::uint64_t scenario_tag,
                           std::uint64_t replicate_index) noexcept;

  std::uint64_t state() const noexcept { return state_; }
  const StreamOrigin& origin() const noexcept { return origin_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal by the polar Box–Muller method.
  double normal() noexcept;
  /// Gamma(shape, 1) by Marsaglia–Tsang; shape < 1 uses the U^{1/a} boost.
  double gamma(double shape);
  double chi_square(double df);

 private:
  std::uint64_t state_;
  StreamOrigin origin_;
  std::optional<double> spare_normal_;
};

inline SeedStream derive_stream(std::uint64_t base_seed, std::uint64_t scenario_tag,
                                std::uint64_t replicate_index) noexcept {
  return SeedStream::derive(base_seed, scenario_tag, replicate_index);
}

std::uint64_t mix64(std::uint64_t z) noexcept;

/// W_p(df, scale) with mean df·scale.
struct WishartParams {
  double df;
  SpdMatrix scale;
};

/// Inverse-Wishart IW_p(df, scale): density ∝ det(Σ)^{-(df+p+1)/2}
/// exp(-tr(scale·Σ⁻¹)/2). Improper members (df ≤ p-1 or singular scale) are
/// representable; only sampling requires proper().
struct IwParams {
  double df;
  SymmetricMatrix scale;

  std::size_t dim() const noexcept { return scale.dim(); }
  bool proper() const;
};

/// Inverse-Wishart restricted to matrices whose eigenvalues lie in [k1, k2].
struct TruncIwParams {
  IwParams base;
  double k1;
  double k2;
};

inline constexpr std::size_t kDefaultTruncationAttempts = 1'000'000;

/// n×p matrix whose rows are i.i.d. N_p(0, sigma).
Matrix sample_mvn(SeedStream& stream, const SpdMatrix& sigma, std::size_t n);

/// Bartlett construction; accepts non-integer df > p-1.
SpdMatrix sample_wishart(SeedStream& stream, const WishartParams& params);

/// Σ = W⁻¹ with W ~ W_p(df, scale⁻¹), formed by inverting the Bartlett factor.
SpdMatrix sample_inverse_wishart(SeedStream& stream, const IwParams& params);
/// Same law with a pre-certified scale (hot path for posterior sampling).
SpdMatrix sample_inverse_wishart(SeedStream& stream, double df, const SpdMatrix& scale);

/// Rejection from the untruncated law; TruncationExhausted after max_attempts.
SpdMatrix sample_truncated_iw(SeedStream& stream, const TruncIwParams& params,
                              std::size_t max_attempts = kDefaultTruncationAttempts);
SpdMatrix sample_truncated_iw(SeedStream& stream, double df, const SpdMatrix& scale, double k1,
                              double k2, std::size_t max_attempts = kDefaultTruncationAttempts);

/// (1/n)·XᵀX (mean-zero model).
SymmetricMatrix sample_covariance(const Matrix& data);

struct DiagonalTruth {
  double lo = 0.0;
  double hi = 5.0;
};
struct FullTruth {
  double scale = 5.0;  // entries of V are N(0, scale/p); Σ0 = VᵀV
};
struct FixedTruth {
  SymmetricMatrix matrix;
};
using TruthSpec = std::variant<DiagonalTruth, FullTruth, FixedTruth>;

SpdMatrix gen_truth(SeedStream& stream, const TruthSpec& spec, std::size_t p);

}  // namespace covlab
