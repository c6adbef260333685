#pragma once

// Log-gamma, digamma and trigamma on the positive half-line. Arguments are
// shifted upward past 6 with the recurrences, then evaluated with the
// Bernoulli-coefficient asymptotic series.

namespace covlab::specialfn {

double lgamma(double x);
double digamma(double x);
double trigamma(double x);

namespace testing {
/// Adds a constant to every digamma result. Fault-injection hook for the
/// verification harness; must stay 0 outside tests.
void set_digamma_offset(double offset) noexcept;
double digamma_offset() noexcept;
}  // namespace testing

}  // namespace covlab::specialfn
