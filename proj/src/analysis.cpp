#include "qbc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qbc {

double OutcomeDistribution::total() const {
  double s = 0.0;
  for (const auto& [_, p] : entries) s += p;
  return s;
}

std::vector<int> OutcomeDistribution::decode(std::uint32_t key) const {
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = (key >> i) & 1u;
  return out;
}

double OutcomeDistribution::mass_if(
    const std::function<bool(const std::vector<int>&)>& pred) const {
  double s = 0.0;
  for (const auto& [key, p] : entries)
    if (pred(decode(key))) s += p;
  return s;
}

OutcomeDistribution enumerate_outcomes(std::span<const StateVector> prep,
                                       const AlicePolicy& policy, int n,
                                       bool decohered) {
  if (n < 1 || static_cast<size_t>(n) != prep.size())
    throw std::domain_error("enumerate_outcomes: n must match prep length");
  if (n > kEnumerationGuard)
    throw ResourceGuardError("enumerate_outcomes: n exceeds the 2^n leaf guard");

  OutcomeDistribution dist;
  dist.n = n;
  dist.entries.reserve(1u << n);
  dist.context = "policy=" + policy.name();

  std::vector<int> hist(static_cast<size_t>(n));
  std::function<void(int, double, std::uint32_t)> walk = [&](int i, double p,
                                                             std::uint32_t key) {
    if (p == 0.0) return;
    if (i == n) {
      dist.entries.emplace_back(key, p);
      return;
    }
    const std::span<const int> h(hist.data(), static_cast<size_t>(i));
    const double theta = policy.commit_angle(i, h);
    for (int o : {0, 1}) {
      const double w =
          decohered ? 0.5 : outcome_probability(prep[static_cast<size_t>(i)], theta, o);
      hist[static_cast<size_t>(i)] = o;
      walk(i + 1, p * w, key | (static_cast<std::uint32_t>(o) << i));
    }
  };
  walk(0, 1.0, 0);
  return dist;
}

double weighted_last_outcome_p0(const PrepDistribution& dist, int b) {
  if (dist.empty())
    throw std::domain_error("weighted_last_outcome_p0: empty preparation");
  if (b != 0 && b != 1)
    throw std::domain_error("weighted_last_outcome_p0: b must be 0 or 1");
  // Markov walk over the chain driver bit.
  std::array<double, 2> driver{0.0, 0.0};
  driver[static_cast<size_t>(b)] = 1.0;
  for (const auto& preps : dist) {
    std::array<double, 2> next{0.0, 0.0};
    for (int d : {0, 1}) {
      if (driver[static_cast<size_t>(d)] == 0.0) continue;
      const double theta = commit_basis_map(d);
      for (const auto& wp : preps)
        for (int o : {0, 1})
          next[static_cast<size_t>(o)] += driver[static_cast<size_t>(d)] *
                                          wp.weight *
                                          outcome_probability(wp.state, theta, o);
    }
    driver = next;
  }
  return driver[0];
}

namespace {

void require_noise_free(const ProtocolParams& params, const char* what) {
  if (params.noise.enabled())
    throw std::domain_error(std::string(what) +
                            ": exact analysis requires noise-free params");
}

}  // namespace

double alice_open_success(const ProtocolParams& params, const BobPolicy& bob,
                          const AlicePolicy& alice, int target_bit) {
  params.validate();
  require_noise_free(params, "alice_open_success");
  if (target_bit != 0 && target_bit != 1)
    throw std::domain_error("alice_open_success: target must be 0 or 1");
  const int n = params.n;
  if (n > kEnumerationGuard)
    throw ResourceGuardError("alice_open_success: n exceeds the 2^n leaf guard");

  AlicePolicy policy = alice;
  if (policy.kind == AliceKind::StoreLater) policy.open_target = target_bit;
  if (policy.claimed_bit(target_bit) != target_bit) return 0.0;

  const PrepDistribution dist = bob.prep_distribution(n);
  const bool truthful = policy.truthful_claims(target_bit);
  const bool decohered =
      policy.defers_measurement() && !params.granted.long_term_storage;

  // Variant C with untruthful claims: the claimed last outcome must still hit
  // the (truthfully broadcast) last measured outcome.
  double q0 = 0.5;
  bool broadcast_coupling = false;
  if (params.variant == Variant::C && !truthful) {
    broadcast_coupling = true;
    q0 = weighted_last_outcome_p0(dist, policy.commit_bit);
  }

  // Walk over claimed-outcome histories; the claimed basis chain is driven by
  // the previous claimed outcome. Acceptance factorizes per position.
  std::vector<int> hist(static_cast<size_t>(n));
  std::function<double(int)> walk = [&](int i) -> double {
    if (i == n) return 1.0;
    const int driver = i == 0 ? target_bit : hist[static_cast<size_t>(i - 1)];
    const BasisLabel claimed = commit_basis_label(driver);
    // StoreLater in variant C claims the broadcast coin at the last index.
    const bool uniform_claim =
        !truthful || (params.variant == Variant::C &&
                      policy.kind == AliceKind::StoreLater && i == n - 1);
    double theta = 0.0;
    if (!uniform_claim && !decohered)
      theta = policy.commit_angle(
          i, std::span<const int>(hist.data(), static_cast<size_t>(i)));

    double total = 0.0;
    for (int o : {0, 1}) {
      double factor = 0.0;
      for (const auto& wp : dist[static_cast<size_t>(i)]) {
        const double w = (uniform_claim || decohered)
                             ? 0.5
                             : outcome_probability(wp.state, theta, o);
        double acc = 1.0;
        if (wp.label != BasisLabel::None && wp.label == claimed)
          acc = o == wp.bit ? 1.0 : 0.0;
        factor += wp.weight * w * acc;
      }
      if (broadcast_coupling && i == n - 1) factor *= o == 0 ? q0 : 1.0 - q0;
      hist[static_cast<size_t>(i)] = o;
      total += factor * walk(i + 1);
    }
    return total;
  };
  return walk(0);
}

double bob_guess_probability(const ProtocolParams& params, const BobPolicy& bob) {
  params.validate();
  // Variants A and B: nothing crosses from Alice to Bob before the reveal,
  // so no guessing rule can beat a fair coin.
  if (params.variant != Variant::C) return 0.5;
  require_noise_free(params, "bob_guess_probability");
  const PrepDistribution dist = bob.prep_distribution(params.n);
  const double tvd =
      std::abs(weighted_last_outcome_p0(dist, 0) - weighted_last_outcome_p0(dist, 1));
  return 0.5 + 0.5 * tvd;
}

namespace {

double guess_objective(const ProtocolParams& params, const std::vector<double>& angles) {
  return bob_guess_probability(params, bob_custom_pure(angles));
}

}  // namespace

OptimizeResult optimize_bob_prep(const ProtocolParams& params,
                                 int grid_resolution) {
  params.validate();
  require_noise_free(params, "optimize_bob_prep");
  if (params.variant != Variant::C)
    throw std::domain_error("optimize_bob_prep: only variant C has a pre-reveal signal");
  if (grid_resolution < 1)
    throw std::domain_error("optimize_bob_prep: grid resolution must be >= 1");
  const int n = params.n;
  if (n > 8)
    throw ResourceGuardError("optimize_bob_prep: n > 8 exceeds the search guard");

  const int g = grid_resolution;
  std::vector<double> grid(static_cast<size_t>(g));
  for (int j = 0; j < g; ++j)
    grid[static_cast<size_t>(j)] = std::numbers::pi * j / g;

  OptimizeResult best;
  best.angles.assign(static_cast<size_t>(n), 0.0);
  best.value = guess_objective(params, best.angles);

  if (n <= 4) {
    // Exhaustive product grid.
    std::vector<int> idx(static_cast<size_t>(n), 0);
    std::vector<double> angles(static_cast<size_t>(n), grid[0]);
    while (true) {
      const double v = guess_objective(params, angles);
      if (v > best.value + 1e-15) {
        best.value = v;
        best.angles = angles;
      }
      int k = n - 1;
      while (k >= 0 && idx[static_cast<size_t>(k)] == g - 1) {
        idx[static_cast<size_t>(k)] = 0;
        angles[static_cast<size_t>(k)] = grid[0];
        --k;
      }
      if (k < 0) break;
      ++idx[static_cast<size_t>(k)];
      angles[static_cast<size_t>(k)] = grid[static_cast<size_t>(idx[static_cast<size_t>(k)])];
    }
    return best;
  }

  // Deterministic multi-start coordinate ascent on the same grid.
  // Start set: all-zero, the best uniform angle, and three scrambled points.
  std::vector<std::vector<double>> starts;
  starts.emplace_back(static_cast<size_t>(n), 0.0);
  {
    double bestu = -1.0;
    double bestu_angle = 0.0;
    for (double a : grid) {
      std::vector<double> uni(static_cast<size_t>(n), a);
      const double v = guess_objective(params, uni);
      if (v > bestu) {
        bestu = v;
        bestu_angle = a;
      }
    }
    starts.emplace_back(static_cast<size_t>(n), bestu_angle);
  }
  for (std::uint64_t s = 0; s < 3; ++s) {
    std::vector<double> pt(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      pt[static_cast<size_t>(i)] =
          grid[mix64(s * 1000 + static_cast<std::uint64_t>(i)) % static_cast<std::uint64_t>(g)];
    starts.push_back(std::move(pt));
  }

  for (auto& angles : starts) {
    double value = guess_objective(params, angles);
    for (int pass = 0; pass < 100; ++pass) {
      bool improved = false;
      for (int i = 0; i < n; ++i) {
        const double keep = angles[static_cast<size_t>(i)];
        double local_best = value;
        double local_angle = keep;
        for (double a : grid) {
          angles[static_cast<size_t>(i)] = a;
          const double v = guess_objective(params, angles);
          if (v > local_best + 1e-15) {
            local_best = v;
            local_angle = a;
          }
        }
        angles[static_cast<size_t>(i)] = local_angle;
        if (local_best > value + 1e-15) {
          value = local_best;
          improved = true;
        }
      }
      if (!improved) break;
    }
    if (value > best.value + 1e-15) {
      best.value = value;
      best.angles = angles;
    }
  }
  return best;
}

double amplified_success(double p, long k) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("amplified_success: p must lie in [0,1]");
  if (k < 0) throw std::domain_error("amplified_success: k must be >= 0");
  return std::pow(p, static_cast<double>(k));
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::AliceOpenSuccess: return "alice-open-success";
    case Metric::BobGuess: return "bob-guess";
    case Metric::HonestAccept: return "honest-accept";
    case Metric::OverallSuccess: return "overall-success";
  }
  throw std::logic_error("bad metric");
}

Metric metric_from_string(const std::string& s) {
  if (s == "alice-open-success") return Metric::AliceOpenSuccess;
  if (s == "bob-guess") return Metric::BobGuess;
  if (s == "honest-accept") return Metric::HonestAccept;
  if (s == "overall-success") return Metric::OverallSuccess;
  throw std::domain_error("unknown metric: " + s);
}

json SecurityReport::to_json() const {
  json j{{"consistent", consistent},
         {"estimate", canonical_real(estimate)},
         {"exact", exact ? json(canonical_real(*exact)) : json(nullptr)},
         {"metric", metric},
         {"params", params},
         {"seed", seed},
         {"stderr", canonical_real(stderr_value)},
         {"trials", trials}};
  return j;
}

std::string SecurityReport::csv_header() {
  return "metric,exact,estimate,stderr,trials,seed,params";
}

std::string SecurityReport::csv_row() const {
  std::ostringstream out;
  std::string params_text = canonical_dump(params);
  std::string quoted = "\"";
  for (char c : params_text) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += "\"";
  out << metric << ',' << (exact ? canonical_real(*exact) : "") << ','
      << canonical_real(estimate) << ',' << canonical_real(stderr_value) << ','
      << trials << ',' << seed << ',' << quoted;
  return out.str();
}

namespace {

std::optional<double> exact_for(const ProtocolParams& params,
                                const AlicePolicy& alice, const BobPolicy& bob,
                                Metric metric) {
  try {
    switch (metric) {
      case Metric::AliceOpenSuccess:
        return alice_open_success(params, bob, alice, alice.open_target);
      case Metric::BobGuess:
        return bob_guess_probability(params, bob);
      case Metric::HonestAccept:
        return params.noise.enabled() ? std::optional<double>() : 1.0;
      case Metric::OverallSuccess:
        return amplified_success(
            alice_open_success(params, bob, alice, alice.open_target),
            params.repetitions);
    }
  } catch (const ResourceGuardError&) {
    return std::nullopt;
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

SecurityReport monte_carlo_estimate(const ProtocolParams& params,
                                    const AlicePolicy& alice,
                                    const BobPolicy& bob, Metric metric,
                                    long trials, std::uint64_t seed) {
  if (trials < 1) throw std::domain_error("monte_carlo_estimate: trials must be >= 1");
  params.validate();

  Rng metric_rng = make_stream(seed, "metric");
  long successes = 0;
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t s = trial_seed(seed, t);
    switch (metric) {
      case Metric::AliceOpenSuccess: {
        SessionResult r = run_session(params, alice, bob, s);
        successes += r.verdict.accept && r.reveal.bit == alice.open_target;
        break;
      }
      case Metric::HonestAccept:
      case Metric::OverallSuccess:
        successes += repeated_overall_success(params, alice, bob, s);
        break;
      case Metric::BobGuess: {
        const int b = uniform_bit(metric_rng);
        SessionResult r = run_session(params, alice_honest(b), bob, s);
        const int guess = r.bob_guess ? *r.bob_guess : uniform_bit(metric_rng);
        successes += guess == b;
        break;
      }
    }
  }

  SecurityReport rep;
  rep.metric = to_string(metric);
  rep.trials = trials;
  rep.seed = seed;
  rep.estimate = static_cast<double>(successes) / static_cast<double>(trials);
  rep.stderr_value = binomial_stderr(rep.estimate, trials);
  rep.params = json{{"alice", alice.descriptor()},
                    {"bob", bob.descriptor()},
                    {"protocol", params_to_json(params)}};
  rep.exact = exact_for(params, alice, bob, metric);
  rep.consistent = !rep.exact || std::abs(*rep.exact - rep.estimate) <=
                                     4.0 * rep.stderr_value + 1e-15;
  return rep;
}

BiasTest basis_bias_test(long matches, long pooled) {
  if (pooled < 1)
    throw InsufficientDataError("basis_bias_test: no uncheckable positions pooled");
  if (matches < 0 || matches > pooled)
    throw std::domain_error("basis_bias_test: inconsistent counts");
  BiasTest t;
  t.pooled = pooled;
  t.matches = matches;
  t.statistic = (static_cast<double>(matches) - 0.5 * static_cast<double>(pooled)) /
                std::sqrt(0.25 * static_cast<double>(pooled));
  t.p_value = binom_two_sided_pvalue(matches, pooled, 0.5);
  return t;
}

BiasTest basis_bias_test(std::span<const SessionResult> sessions,
                         const ProtocolParams& params) {
  long pooled = 0, matches = 0;
  for (const auto& s : sessions) {
    if (!s.verdict.accept) continue;
    const auto n = static_cast<size_t>(params.n);
    if (s.reveal.outcomes.size() != n || s.prep.size() != n) continue;
    const auto chain = derive_basis_chain(
        s.reveal.bit, std::span<const int>(s.reveal.outcomes.data(), n - 1));
    for (size_t i = 0; i < n; ++i) {
      const int o = s.reveal.outcomes[i];
      if (o == -1) continue;
      if (s.prep[i].label == BasisLabel::None || s.prep[i].label == chain[i])
        continue;
      ++pooled;
      if (o == s.prep[i].bit) ++matches;
    }
  }
  return basis_bias_test(matches, pooled);
}

}  // namespace qbc
