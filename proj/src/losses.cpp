#include "covlab/losses.hpp"

#include <cmath>
#include <limits>

#include "covlab/error.hpp"

namespace covlab {

namespace {

void require_same_dim(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(a) + " vs " + std::to_string(b));
  }
}

double raise(double x, int power) {
  if (power == 1) return x;
  if (power == 2) return x * x;
  throw Error(ErrorKind::InvalidArgument, "loss power must be 1 or 2");
}

double trace_product(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = 0; j < a.dim(); ++j) s += a(i, j) * b(i, j);
  }
  return s;
}

}  // namespace

PhiSpec PhiSpec::squared_euclid() {
  return PhiSpec(
      PhiKind::SquaredEuclid, "squared_euclid", -std::numeric_limits<double>::infinity(),
      [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

PhiSpec PhiSpec::von_neumann() {
  return PhiSpec(
      PhiKind::VonNeumann, "von_neumann", 0.0, [](double x) { return x * std::log(x) - x; },
      [](double x) { return std::log(x); });
}

PhiSpec PhiSpec::stein() {
  return PhiSpec(
      PhiKind::Stein, "stein", 0.0, [](double x) { return -std::log(x); },
      [](double x) { return -1.0 / x; });
}

PhiSpec PhiSpec::custom(std::function<double(double)> phi, std::function<double(double)> dphi,
                        double domain_lower, std::string name) {
  if (!phi || !dphi) throw Error(ErrorKind::InvalidArgument, "custom phi needs phi and phi'");
  const double base = std::isfinite(domain_lower) ? domain_lower : 0.0;
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = -3; k <= 4; ++k) {
    const double x = base + std::ldexp(1.0, k);
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    const double fd = (phi(x + h) - phi(x - h)) / (2.0 * h);
    const double d = dphi(x);
    if (!std::isfinite(d) || std::abs(fd - d) > 1e-6 * std::max(1.0, std::abs(d))) {
      throw Error(ErrorKind::InvalidArgument,
                  "custom phi': derivative mismatch at " + std::to_string(x));
    }
    if (!(d > prev)) {
      throw Error(ErrorKind::InvalidArgument, "custom phi is not strictly convex on its domain");
    }
    prev = d;
  }
  return PhiSpec(PhiKind::Custom, std::move(name), domain_lower, std::move(phi),
                 std::move(dphi));
}

std::string to_string(LossFamily family) {
  switch (family) {
    case LossFamily::SqSpectral: return "spectral";
    case LossFamily::SqFrobenius: return "frobenius";
    case LossFamily::Bregman: return "bregman";
    case LossFamily::SqLogDet: return "logdet";
    case LossFamily::SqSpectralPrecision: return "precision";
  }
  return "unknown";
}

double sq_spectral_loss(const SymmetricMatrix& a, const SymmetricMatrix& b, int power) {
  require_same_dim(a.dim(), b.dim());
  return raise(spectral_norm(a - b), power);
}

double sq_frobenius_loss(const SymmetricMatrix& a, const SymmetricMatrix& b, double scale) {
  require_same_dim(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = 0; j < a.dim(); ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
    }
  }
  return scale * s;
}

double phi_trace(const PhiSpec& phi, const SymmetricMatrix& a) {
  double s = 0.0;
  for (double lam : eigvalsh(a)) {
    if (!phi.in_domain(lam)) {
      throw Error(ErrorKind::DomainError, "eigenvalue " + std::to_string(lam) +
                                              " outside the domain of " + phi.name());
    }
    s += phi.phi(lam);
  }
  return s;
}

SymmetricMatrix phi_gradient(const PhiSpec& phi, const SymmetricMatrix& b) {
  return matrix_function(b, [&phi](double lam) {
    return phi.in_domain(lam) ? phi.dphi(lam) : std::numeric_limits<double>::quiet_NaN();
  });
}

double bregman_divergence(const PhiSpec& phi, const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim());
  const SymmetricMatrix grad = phi_gradient(phi, b.sym());
  return phi_trace(phi, a.sym()) - phi_trace(phi, b.sym()) -
         trace_product(grad, a.sym() - b.sym());
}

double von_neumann_divergence(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim());
  const SymmetricMatrix log_a = matrix_log(a.sym());
  const SymmetricMatrix log_b = matrix_log(b.sym());
  return trace_product(a.sym(), log_a) - trace_product(a.sym(), log_b) - a.sym().trace() +
         b.sym().trace();
}

double stein_loss(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim());
  // tr(A·B⁻¹) = ‖L_B⁻¹·L_A‖_F².
  Matrix m = a.chol();
  solve_lower_in_place(b.chol(), m);
  const double fro = frobenius_norm(m);
  return fro * fro - (log_det(a) - log_det(b)) - static_cast<double>(a.dim());
}

double sq_logdet_loss(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a.dim(), b.dim());
  const double d = log_det(a) - log_det(b);
  return d * d;
}

double sq_spectral_precision_loss(const SpdMatrix& a, const SpdMatrix& b, int power) {
  require_same_dim(a.dim(), b.dim());
  return raise(spectral_norm(matrix_inverse(a.sym()) - matrix_inverse(b.sym())), power);
}

double evaluate_loss(const LossSpec& loss, const SymmetricMatrix& estimate,
                     const SpdMatrix& truth) {
  double value = 0.0;
  switch (loss.family) {
    case LossFamily::SqSpectral:
      value = sq_spectral_loss(estimate, truth.sym(), loss.power);
      break;
    case LossFamily::SqFrobenius:
      value = loss.power == 2 ? sq_frobenius_loss(estimate, truth.sym())
                              : std::sqrt(sq_frobenius_loss(estimate, truth.sym()));
      break;
    case LossFamily::Bregman:
      value = bregman_divergence(loss.phi, SpdMatrix(estimate), truth);
      break;
    case LossFamily::SqLogDet:
      value = sq_logdet_loss(SpdMatrix(estimate), truth);
      break;
    case LossFamily::SqSpectralPrecision:
      value = sq_spectral_precision_loss(SpdMatrix(estimate), truth, loss.power);
      break;
  }
  return loss.scale * value;
}

}  // namespace covlab
