#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qbc/engine.hpp"
#include "qbc/stats.hpp"

namespace qbc {

inline constexpr int kEnumerationGuard = 20;

// Exact distribution over Alice's measured outcome histories. Bit i of the
// key is the outcome of qubit i.
struct OutcomeDistribution {
  int n = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;
  std::string context;

  double total() const;
  std::vector<int> decode(std::uint32_t key) const;
  // Total probability of histories satisfying the predicate.
  double mass_if(const std::function<bool(const std::vector<int>&)>& pred) const;
};

// Exact tree walk over Born probabilities: leaf probability is the product
// of per-index outcome probabilities with angles supplied by the policy.
// decohered = true replaces every outcome law with a fair coin (a deferring
// policy measuring past its deadlines).
OutcomeDistribution enumerate_outcomes(std::span<const StateVector> prep,
                                       const AlicePolicy& policy, int n,
                                       bool decohered = false);

// Exact probability that the verifier accepts when the reveal rule opens
// target_bit, averaged over Bob's preparation distribution and all
// measurement randomness. Requires noise-free params.
double alice_open_success(const ProtocolParams& params, const BobPolicy& bob,
                          const AlicePolicy& alice, int target_bit);

// P(last chain outcome = 0 | commitment b) for an honest committer against a
// per-index preparation distribution.
double weighted_last_outcome_p0(const PrepDistribution& dist, int b);

// Optimal pre-reveal guess success for Bob: exactly 1/2 in variants A and B
// (no pre-reveal signal exists), (1 + TVD)/2 over the broadcast bit in C.
double bob_guess_probability(const ProtocolParams& params, const BobPolicy& bob);

struct OptimizeResult {
  std::vector<double> angles;
  double value = 0.5;
};

// Maximizes bob_guess_probability over product pure preparations on a uniform
// angle grid: exhaustive for n <= 4, deterministic multi-start coordinate
// ascent beyond.
OptimizeResult optimize_bob_prep(const ProtocolParams& params,
                                 int grid_resolution);

// p^k: per-session cheat success compounded over k independent repeats.
double amplified_success(double p, long k);

enum class Metric { AliceOpenSuccess, BobGuess, HonestAccept, OverallSuccess };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

struct SecurityReport {
  std::string metric;
  std::optional<double> exact;
  double estimate = 0.0;
  double stderr_value = 0.0;
  long trials = 0;
  std::uint64_t seed = 0;
  json params;
  bool consistent = true;  // |exact - estimate| <= 4 stderr when exact known

  json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Mean and binomial standard error of the metric over independent seeded
// sessions; fills the exact column whenever the configuration is enumerable.
SecurityReport monte_carlo_estimate(const ProtocolParams& params,
                                    const AlicePolicy& alice,
                                    const BobPolicy& bob, Metric metric,
                                    long trials, std::uint64_t seed);

struct BiasTest {
  long pooled = 0;
  long matches = 0;
  double statistic = 0.0;  // z-score of the match count against p = 1/2
  double p_value = 1.0;
};

// Two-sided binomial test of H0: at positions where the preparation basis
// differs from the claimed basis, the claimed outcome equals the prepared
// bit with probability 1/2. Exact tail for pooled counts <= 10^4.
BiasTest basis_bias_test(long matches, long pooled);

// Pools uncheckable positions from the accepted reveals of a batch of
// sessions.
BiasTest basis_bias_test(std::span<const SessionResult> sessions,
                         const ProtocolParams& params);

// Deterministic per-trial master seed for Monte Carlo runs.
inline std::uint64_t trial_seed(std::uint64_t seed, long trial) {
  return mix64(seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(trial + 1));
}

}  // namespace qbc
