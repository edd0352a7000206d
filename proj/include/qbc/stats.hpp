#pragma once

#include <optional>
#include <string>
#include <utility>

namespace qbc {

// log C(n,k) p^k (1-p)^(n-k)
double log_binom_pmf(long n, long k, double p);
double binom_pmf(long n, long k, double p);

// P(X <= k), X ~ Bin(n, p)
double binom_cdf(long n, long k, double p);

// Two-sided binomial test of H0: P(success) = p. Exact tail sum for
// n <= exact_limit, normal approximation beyond.
double binom_two_sided_pvalue(long successes, long n, double p,
                              long exact_limit = 10000);

double normal_cdf(double z);

// Standard error of a binomial proportion estimate.
double binomial_stderr(double p_hat, long trials);

// Small-denominator rational matching x to within tol, for report printing
// (e.g. 0.75 -> 3/4). Continued-fraction expansion, denominators <= max_den.
std::optional<std::pair<long long, long long>> as_rational(
    double x, long long max_den = 1 << 20, double tol = 1e-12);

// "3/4 (0.75)" when a small rational matches, else just the decimal.
std::string pretty_value(double x);

}  // namespace qbc
