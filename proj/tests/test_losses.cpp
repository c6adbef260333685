#include <doctest.h>

#include <cmath>
#include <numbers>

#include "covlab/error.hpp"
#include "covlab/losses.hpp"
#include "covlab/verify.hpp"
#include "helpers.hpp"

using namespace covlab;
using covlab::test::random_spd;
using covlab::test::rel;

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

SpdMatrix diag(std::initializer_list<double> d) {
  return SpdMatrix(SymmetricMatrix::diagonal(std::vector<double>(d)));
}

}  // namespace

TEST_CASE("spectral and Frobenius examples") {
  const SymmetricMatrix i3 = SymmetricMatrix::identity(3);
  CHECK(sq_spectral_loss(i3, i3) == 0.0);
  CHECK(sq_spectral_loss(SymmetricMatrix::identity(3, 2.0), i3, 2) == doctest::Approx(1.0));
  CHECK(sq_spectral_loss(diag({1, 5}).sym(), diag({2, 3}).sym(), 1) == doctest::Approx(2.0));
  CHECK(sq_frobenius_loss(i3, i3) == 0.0);
  CHECK(sq_frobenius_loss(SymmetricMatrix::identity(2), SymmetricMatrix::zero(2)) == 2.0);
  CHECK(sq_frobenius_loss(diag({3, 4}).sym(), SymmetricMatrix::zero(2), 0.5) == 12.5);
  CHECK(kind_of([&] { sq_frobenius_loss(i3, SymmetricMatrix::identity(2)); }) == ErrorKind::DimensionMismatch);
  CHECK(kind_of([&] { sq_spectral_loss(i3, i3, 3); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("Bregman examples") {
  SeedStream s(1);
  for (std::size_t p : {1u, 3u, 5u}) {
    const SpdMatrix a = random_spd(s, p);
    CHECK(std::abs(bregman_divergence(PhiSpec::stein(), a, a)) <= 1e-12);
    const double expected = static_cast<double>(p) * (1.0 - std::numbers::ln2);
    const SpdMatrix two(SymmetricMatrix::identity(p, 2.0));
    const SpdMatrix one(SymmetricMatrix::identity(p));
    CHECK(bregman_divergence(PhiSpec::stein(), two, one) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(stein_loss(two, one) == doctest::Approx(expected).epsilon(1e-12));
    const SpdMatrix b = random_spd(s, p);
    CHECK(rel(bregman_divergence(PhiSpec::squared_euclid(), a, b), sq_frobenius_loss(a.sym(), b.sym())) <= 1e-10);
  }
  const SpdMatrix i2(SymmetricMatrix::identity(2));
  CHECK(std::abs(von_neumann_divergence(i2, i2)) <= 1e-14);
  CHECK(von_neumann_divergence(diag({std::numbers::e, 1.0}), i2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log-det and precision examples") {
  const SpdMatrix i2(SymmetricMatrix::identity(2));
  CHECK(sq_logdet_loss(i2, i2) == 0.0);
  const double l = 2.0 * std::numbers::ln2;
  CHECK(sq_logdet_loss(diag({2, 2}), i2) == doctest::Approx(l * l));
  CHECK(sq_logdet_loss(diag({std::exp(3.0)}), diag({1.0})) == doctest::Approx(9.0));
  CHECK(sq_spectral_precision_loss(i2, i2) == 0.0);
  CHECK(sq_spectral_precision_loss(diag({2.0}), diag({1.0}), 2) == doctest::Approx(0.25));

  SeedStream s(2);
  for (int t = 0; t < 20; ++t) {
    const SpdMatrix a = random_spd(s, 4);
    const SpdMatrix b = random_spd(s, 4);
    const double via_inverses = sq_spectral_loss(a.inverse(), b.inverse(), 2);
    CHECK(rel(sq_spectral_precision_loss(a, b, 2), via_inverses) <= 1e-9);
  }
}

TEST_CASE("nonnegativity and identity of indiscernibles") {
  SeedStream s(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t p = 1 + static_cast<std::size_t>(t % 6);
    const SpdMatrix a = random_spd(s, p);
    const SpdMatrix b = random_spd(s, p);
    for (const PhiSpec& phi : {PhiSpec::stein(), PhiSpec::von_neumann(), PhiSpec::squared_euclid()}) {
      CHECK(bregman_divergence(phi, a, b) >= -1e-12);
      CHECK(std::abs(bregman_divergence(phi, a, a)) <= 1e-12 * std::max(1.0, std::abs(phi_trace(phi, a.sym()))));
    }
    CHECK(sq_spectral_loss(a.sym(), b.sym()) >= 0.0);
    CHECK(sq_logdet_loss(a, b) >= 0.0);
    CHECK(stein_loss(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(von_neumann_divergence(a, a)) <= 1e-12 * std::max(1.0, a.sym().trace()));
  }
}

TEST_CASE("generic Bregman path equals the closed forms") {
  SeedStream s(4);
  for (int t = 0; t < 100; ++t) {
    const std::size_t p = 2 + static_cast<std::size_t>(t % 5);
    const SpdMatrix a(random_symmetric_with_spectrum(s, p, 0.5, 4.0));
    const SpdMatrix b(random_symmetric_with_spectrum(s, p, 0.5, 4.0));
    CHECK(rel(bregman_divergence(PhiSpec::von_neumann(), a, b), von_neumann_divergence(a, b)) <= 1e-9);
    CHECK(rel(bregman_divergence(PhiSpec::stein(), a, b), stein_loss(a, b)) <= 1e-9);
    CHECK(rel(bregman_divergence(PhiSpec::squared_euclid(), a, b), sq_frobenius_loss(a.sym(), b.sym())) <= 1e-9);
  }
}

TEST_CASE("gradient matches a central difference") {
  SeedStream s(5);
  for (const PhiSpec& phi : {PhiSpec::stein(), PhiSpec::von_neumann(), PhiSpec::squared_euclid()}) {
    for (int t = 0; t < 20; ++t) {
      const SpdMatrix a(random_symmetric_with_spectrum(s, 4, 0.5, 4.0));
      const SpdMatrix b(random_symmetric_with_spectrum(s, 4, 0.5, 4.0));
      const SymmetricMatrix dir = a.sym() - b.sym();
      const SymmetricMatrix g = phi_gradient(phi, b.sym());
      double analytic = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) analytic += g(i, j) * dir(i, j);
      }
      const double h = 1e-6;
      const double fd = (phi_trace(phi, b.sym() + h * dir) - phi_trace(phi, b.sym() - h * dir)) / (2 * h);
      INFO(phi.name());
      CHECK(rel(analytic, fd) <= 1e-5);
    }
  }
}

TEST_CASE("Bregman-Frobenius sandwich on 500 pairs") {
  for (const PhiSpec& phi : {PhiSpec::von_neumann(), PhiSpec::stein()}) {
    const SandwichResult r = bregman_sandwich_battery(phi, 500, 2024);
    INFO(phi.name() << " m=" << r.min_ratio << " M=" << r.max_ratio);
    CHECK(r.min_ratio > 0.0);
    CHECK(r.min_ratio <= r.max_ratio);
    CHECK(std::isfinite(r.max_ratio));
    // φ″ on [0.5, 4] bounds the ratio by half its range.
    const double lo = phi.kind() == PhiKind::Stein ? 1.0 / 32.0 : 1.0 / 8.0;
    const double hi = phi.kind() == PhiKind::Stein ? 2.0 : 1.0;
    CHECK(r.min_ratio >= lo - 1e-12);
    CHECK(r.max_ratio <= hi + 1e-12);
  }
}

TEST_CASE("custom phi validation") {
  const PhiSpec cube = PhiSpec::custom([](double x) { return x * x * x; },
                                       [](double x) { return 3 * x * x; }, 0.0, "cube");
  CHECK(cube.kind() == PhiKind::Custom);
  const SpdMatrix a(SymmetricMatrix{{2.0, 0.3}, {0.3, 1.0}});
  const SpdMatrix b(SymmetricMatrix::identity(2));
  CHECK(bregman_divergence(cube, a, b) > 0.0);
  CHECK(kind_of([] {
          PhiSpec::custom([](double x) { return x * x; }, [](double x) { return x; }, 0.0);
        }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] {
          PhiSpec::custom([](double x) { return -std::log(x); }, [](double x) { return 1.0 / x; }, 0.0);
        }) == ErrorKind::InvalidArgument);
  const PhiSpec stein = PhiSpec::stein();
  CHECK(kind_of([&] { phi_trace(stein, SymmetricMatrix{{-1.0}}); }) == ErrorKind::DomainError);
}

TEST_CASE("evaluate_loss applies power and scale") {
  const SpdMatrix truth(SymmetricMatrix::identity(2));
  const SymmetricMatrix est{{3.0, 0.0}, {0.0, 1.0}};
  CHECK(evaluate_loss(LossSpec::spectral(1), est, truth) == doctest::Approx(2.0));
  CHECK(evaluate_loss(LossSpec::spectral(2), est, truth) == doctest::Approx(4.0));
  CHECK(evaluate_loss(LossSpec::frobenius(0.5), est, truth) == doctest::Approx(2.0));
  LossSpec f1 = LossSpec::frobenius();
  f1.power = 1;
  CHECK(evaluate_loss(f1, est, truth) == doctest::Approx(2.0));
  CHECK(evaluate_loss(LossSpec::logdet(), est, truth) == doctest::Approx(std::log(3.0) * std::log(3.0)));
  CHECK(evaluate_loss(LossSpec::bregman(PhiSpec::stein()), est, truth) == doctest::Approx(2.0 - std::log(3.0)));
  CHECK(kind_of([&] { evaluate_loss(LossSpec::logdet(), SymmetricMatrix{{1.0, 0.0}, {0.0, -1.0}}, truth); }) ==
        ErrorKind::NotPositiveDefinite);
}
