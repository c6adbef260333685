#include "covlab/specialfn.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "covlab/error.hpp"

namespace covlab::specialfn {

namespace {

constexpr double kShiftPast = 6.0;

// B_{2k} for k = 1..10.
constexpr double kBernoulli[] = {
    1.0 / 6.0,          -1.0 / 30.0,     1.0 / 42.0,         -1.0 / 30.0,
    5.0 / 66.0,         -691.0 / 2730.0, 7.0 / 6.0,          -3617.0 / 510.0,
    43867.0 / 798.0,    -174611.0 / 330.0,
};

std::atomic<double> g_digamma_offset{0.0};

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw Error(ErrorKind::DomainError, std::string(name) + " requires x > 0, got " +
                                            std::to_string(x));
  }
}

}  // namespace

double lgamma(double x) {
  require_positive(x, "lgamma");
  // log Γ(x) = log Γ(x+k) − log(x(x+1)...(x+k−1)); the product is kept in
  // log space in chunks to avoid overflow for tiny x.
  double shift_log = 0.0;
  double prod = 1.0;
  while (x < kShiftPast) {
    prod *= x;
    x += 1.0;
    if (prod > 1e250 || prod < 1e-250) {
      shift_log += std::log(prod);
      prod = 1.0;
    }
  }
  shift_log += std::log(prod);

  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = 0.0;
  double pw = inv;
  for (int k = 1; k <= 10; ++k) {
    series += kBernoulli[k - 1] / (2.0 * k * (2.0 * k - 1.0)) * pw;
    pw *= inv2;
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  return (x - 0.5) * std::log(x) - x + half_log_2pi + series - shift_log;
}

double digamma(double x) {
  require_positive(x, "digamma");
  double acc = 0.0;
  while (x < kShiftPast) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv2 = 1.0 / (x * x);
  double series = 0.0;
  double pw = inv2;
  for (int k = 1; k <= 10; ++k) {
    series += kBernoulli[k - 1] / (2.0 * k) * pw;
    pw *= inv2;
  }
  return acc + std::log(x) - 0.5 / x - series +
         g_digamma_offset.load(std::memory_order_relaxed);
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double acc = 0.0;
  while (x < kShiftPast) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = 0.0;
  double pw = inv2 * inv;
  for (int k = 1; k <= 10; ++k) {
    series += kBernoulli[k - 1] * pw;
    pw *= inv2;
  }
  return acc + inv + 0.5 * inv2 + series;
}

namespace testing {
void set_digamma_offset(double offset) noexcept {
  g_digamma_offset.store(offset, std::memory_order_relaxed);
}
double digamma_offset() noexcept { return g_digamma_offset.load(std::memory_order_relaxed); }
}  // namespace testing

}  // namespace covlab::specialfn
