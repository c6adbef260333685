#pragma once

#include <functional>
#include <string>

#include "covlab/matcore.hpp"

namespace covlab {

enum class PhiKind { SquaredEuclid, VonNeumann, Stein, Custom };

/// Scalar convex generator φ of a spectral Bregman divergence
/// D_φ(A,B) = Σφ(λ(A)) − Σφ(λ(B)) − tr[∇φ(B)(A − B)].
class PhiSpec {
 public:
  static PhiSpec squared_euclid();  // φ(λ) = λ²
  static PhiSpec von_neumann();     // φ(λ) = λ log λ − λ
  static PhiSpec stein();           // φ(λ) = −log λ
  /// Eigenvalues must exceed `domain_lower`. Rejected unless φ′ matches a
  /// central difference of φ and is strictly increasing on a probe grid.
  static PhiSpec custom(std::function<double(double)> phi, std::function<double(double)> dphi,
                        double domain_lower, std::string name = "custom");

  PhiKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  double domain_lower() const noexcept { return lower_; }
  bool in_domain(double x) const noexcept { return x > lower_; }
  double phi(double x) const { return phi_(x); }
  double dphi(double x) const { return dphi_(x); }

 private:
  PhiSpec(PhiKind kind, std::string name, double lower, std::function<double(double)> phi,
          std::function<double(double)> dphi)
      : kind_(kind), name_(std::move(name)), lower_(lower), phi_(std::move(phi)),
        dphi_(std::move(dphi)) {}

  PhiKind kind_;
  std::string name_;
  double lower_;
  std::function<double(double)> phi_;
  std::function<double(double)> dphi_;
};

enum class LossFamily { SqSpectral, SqFrobenius, Bregman, SqLogDet, SqSpectralPrecision };

std::string to_string(LossFamily family);

/// power applies to the spectral/Frobenius families; scale multiplies every
/// family. power=1, scale=1 spectral is the unsquared operator-norm metric,
/// SqFrobenius with scale=1/p is the per-dimension Frobenius metric.
struct LossSpec {
  LossFamily family = LossFamily::SqFrobenius;
  int power = 2;
  double scale = 1.0;
  PhiSpec phi = PhiSpec::stein();

  static LossSpec spectral(int power = 2) { return {LossFamily::SqSpectral, power, 1.0}; }
  static LossSpec frobenius(double scale = 1.0) { return {LossFamily::SqFrobenius, 2, scale}; }
  static LossSpec bregman(PhiSpec phi) { return {LossFamily::Bregman, 1, 1.0, std::move(phi)}; }
  static LossSpec logdet() { return {LossFamily::SqLogDet, 2, 1.0}; }
  static LossSpec precision(int power = 2) {
    return {LossFamily::SqSpectralPrecision, power, 1.0};
  }

  /// Families that need both arguments positive-definite.
  bool needs_spd() const noexcept {
    return family == LossFamily::Bregman || family == LossFamily::SqLogDet ||
           family == LossFamily::SqSpectralPrecision;
  }
};

double sq_spectral_loss(const SymmetricMatrix& a, const SymmetricMatrix& b, int power = 2);
double sq_frobenius_loss(const SymmetricMatrix& a, const SymmetricMatrix& b, double scale = 1.0);

/// Σ φ(λᵢ(A)).
double phi_trace(const PhiSpec& phi, const SymmetricMatrix& a);
/// ∇φ(B) = V·diag(φ′(λ))·Vᵀ.
SymmetricMatrix phi_gradient(const PhiSpec& phi, const SymmetricMatrix& b);

/// Generic spectral route, valid for every PhiSpec.
double bregman_divergence(const PhiSpec& phi, const SpdMatrix& a, const SpdMatrix& b);

/// tr(A log A − A log B − A + B).
double von_neumann_divergence(const SpdMatrix& a, const SpdMatrix& b);
/// tr(AB⁻¹) − log det(AB⁻¹) − p, via Cholesky of B.
double stein_loss(const SpdMatrix& a, const SpdMatrix& b);
/// (log det A − log det B)².
double sq_logdet_loss(const SpdMatrix& a, const SpdMatrix& b);
/// ‖A⁻¹ − B⁻¹‖^power with inverses through matrix_function.
double sq_spectral_precision_loss(const SpdMatrix& a, const SpdMatrix& b, int power = 2);

/// d(estimate, truth) for the given spec. SPD-requiring families certify the
/// estimate (NotPositiveDefinite otherwise).
double evaluate_loss(const LossSpec& loss, const SymmetricMatrix& estimate,
                     const SpdMatrix& truth);

}  // namespace covlab
