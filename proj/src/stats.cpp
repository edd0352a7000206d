#include "qbc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qbc/canonical.hpp"

namespace qbc {

double log_binom_pmf(long n, long k, double p) {
  if (n < 0 || k < 0 || k > n) throw std::domain_error("log_binom_pmf: bad n/k");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("log_binom_pmf: bad p");
  if (p == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p == 1.0) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) +
         kk * std::log(p) + (nn - kk) * std::log1p(-p);
}

double binom_pmf(long n, long k, double p) {
  return std::exp(log_binom_pmf(n, k, p));
}

double binom_cdf(long n, long k, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  // Sum the smaller tail for accuracy.
  if (k <= n / 2) {
    double s = 0.0;
    for (long j = 0; j <= k; ++j) s += binom_pmf(n, j, p);
    return std::min(s, 1.0);
  }
  double s = 0.0;
  for (long j = k + 1; j <= n; ++j) s += binom_pmf(n, j, p);
  return std::max(0.0, 1.0 - s);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double binom_two_sided_pvalue(long successes, long n, double p,
                              long exact_limit) {
  if (n <= 0 || successes < 0 || successes > n)
    throw std::domain_error("binom_two_sided_pvalue: bad counts");
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("binom_two_sided_pvalue: p must lie in (0,1)");
  if (n <= exact_limit) {
    // Sum of all outcomes no more probable than the observed one.
    const double lobs = log_binom_pmf(n, successes, p) + 1e-9;
    double s = 0.0;
    for (long j = 0; j <= n; ++j)
      if (log_binom_pmf(n, j, p) <= lobs) s += binom_pmf(n, j, p);
    return std::min(s, 1.0);
  }
  const double mean = static_cast<double>(n) * p;
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  const double z = (static_cast<double>(successes) - mean) / sd;
  return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
}

double binomial_stderr(double p_hat, long trials) {
  if (trials <= 0) throw std::domain_error("binomial_stderr: trials must be > 0");
  return std::sqrt(std::max(p_hat * (1.0 - p_hat), 0.0) /
                   static_cast<double>(trials));
}

std::optional<std::pair<long long, long long>> as_rational(double x,
                                                           long long max_den,
                                                           double tol) {
  if (!std::isfinite(x)) return std::nullopt;
  const bool neg = x < 0;
  double v = std::abs(x);
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double frac = v;
  for (int it = 0; it < 64; ++it) {
    const double a = std::floor(frac);
    if (a > 1e18) break;
    const long long ai = static_cast<long long>(a);
    long long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > max_den) break;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    const double approx = static_cast<double>(p1) / static_cast<double>(q1);
    if (std::abs(approx - v) <= tol)
      return std::make_pair(neg ? -p1 : p1, q1);
    const double rem = frac - a;
    if (rem < 1e-15) break;
    frac = 1.0 / rem;
  }
  return std::nullopt;
}

std::string pretty_value(double x) {
  if (auto r = as_rational(x, 4096)) {
    if (r->second == 1) return std::to_string(r->first);
    return std::to_string(r->first) + "/" + std::to_string(r->second) + " (" +
           canonical_real(x) + ")";
  }
  return canonical_real(x);
}

}  // namespace qbc
