#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qbc/analysis.hpp"

using namespace qbc;

namespace {

constexpr double pi = std::numbers::pi;

ProtocolParams make_params(Variant v, int n, int k = 1) {
  ProtocolParams p;
  p.variant = v;
  p.n = n;
  p.repetitions = k;
  return p;
}

// Independent oracle for the single-qubit open success of a fixed-angle
// measurement strategy that claims its outcomes verbatim: literal average
// over the four preparations and both outcomes, plain trigonometry.
double fixed_angle_open_oracle(double theta, int target) {
  struct Prep {
    int basis;  // 0 = Z, 1 = X
    int bit;
    double a0, a1;
  };
  const double s = 1.0 / std::sqrt(2.0);
  const Prep preps[4] = {
      {0, 0, 1, 0}, {0, 1, 0, 1}, {1, 0, s, s}, {1, 1, s, -s}};
  double total = 0.0;
  for (const Prep& p : preps) {
    for (int o : {0, 1}) {
      const double e0 = o == 0 ? std::cos(theta) : -std::sin(theta);
      const double e1 = o == 0 ? std::sin(theta) : std::cos(theta);
      const double amp = e0 * p.a0 + e1 * p.a1;
      const double prob = amp * amp;
      const bool checkable = p.basis == target;
      const double acc = checkable ? (o == p.bit ? 1.0 : 0.0) : 1.0;
      total += 0.25 * prob * acc;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("enumerate_outcomes: eigenstates, superpositions, guard") {
  {
    const std::vector<StateVector> prep{bb84_state(BasisLabel::Z, 0)};
    const auto d = enumerate_outcomes(prep, alice_honest(0), 1);
    REQUIRE(d.entries.size() <= 2);
    CHECK(d.mass_if([](const std::vector<int>& h) { return h[0] == 0; }) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    const std::vector<StateVector> prep{bb84_state(BasisLabel::X, 0)};
    const auto d = enumerate_outcomes(prep, alice_honest(0), 1);
    CHECK(d.mass_if([](const std::vector<int>& h) { return h[0] == 0; }) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    // all |0>, honest b=1, n=4: P(claimed basis at the last index is X) =
    // 2^-3 (absorbing-chain closed form)
    const std::vector<StateVector> prep(4, bb84_state(BasisLabel::Z, 0));
    const auto d = enumerate_outcomes(prep, alice_honest(1), 4);
    CHECK(std::abs(d.mass_if([](const std::vector<int>& h) {
            return h[2] == 1;
          }) - 0.125) < 1e-12);
  }
  {
    // distribution properties over random preparations
    Rng rng = make_stream(50, "enum");
    for (int rep = 0; rep < 20; ++rep) {
      const int n = 1 + static_cast<int>(rng() % 6);
      std::vector<StateVector> prep;
      for (int i = 0; i < n; ++i) prep.push_back(pure_state(uniform01(rng) * pi));
      const auto d =
          enumerate_outcomes(prep, alice_intermediate(uniform01(rng) * kThetaX), n);
      CHECK(d.entries.size() <= (1u << n));
      CHECK(std::abs(d.total() - 1.0) < 1e-12);
      for (const auto& [_, p] : d.entries) CHECK(p >= 0.0);
    }
  }
  const std::vector<StateVector> big(21, bb84_state(BasisLabel::Z, 0));
  CHECK_THROWS_AS(enumerate_outcomes(big, alice_honest(0), 21),
                  ResourceGuardError);
}

TEST_CASE("alice_open_success: the 75% value and completeness") {
  const ProtocolParams params = make_params(Variant::A, 1);
  const BobPolicy uniform = bob_honest_uniform();

  CHECK(std::abs(alice_open_success(params, uniform, alice_postpone_guess(0), 1) -
                 0.75) < 1e-12);
  CHECK(std::abs(alice_open_success(params, uniform, alice_postpone_guess(1), 0) -
                 0.75) < 1e-12);
  CHECK(alice_open_success(params, uniform, alice_honest(0), 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alice_open_success(params, uniform, alice_postpone_guess(0), 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // honest refuses to open the other bit
  CHECK(alice_open_success(params, uniform, alice_honest(0), 1) == 0.0);
}

TEST_CASE("alice_open_success: intermediate attack, both targets equal") {
  const ProtocolParams params = make_params(Variant::A, 1);
  const BobPolicy uniform = bob_honest_uniform();

  const double expected = (1.0 + std::cos(pi / 8) * std::cos(pi / 8)) / 2.0;
  const double s0 =
      alice_open_success(params, uniform, alice_intermediate(kThetaBreidbart), 0);
  const double s1 =
      alice_open_success(params, uniform, alice_intermediate(kThetaBreidbart), 1);
  CHECK(std::abs(s0 - expected) < 1e-12);
  CHECK(std::abs(s1 - expected) < 1e-12);
  CHECK(std::abs(s0 - s1) < 1e-12);
  CHECK(s0 > 0.75);

  // against the independent trigonometric oracle, across angles and targets
  for (double theta : {0.0, 0.1, kThetaBreidbart, 0.5, kThetaX}) {
    for (int target : {0, 1}) {
      const double got =
          alice_open_success(params, uniform, alice_intermediate(theta), target);
      CHECK(std::abs(got - fixed_angle_open_oracle(theta, target)) < 1e-12);
    }
  }

  // theta = 0 degenerates to the postpone-guess success profile
  CHECK(std::abs(alice_open_success(params, uniform, alice_intermediate(0.0), 0) -
                 1.0) < 1e-12);
  CHECK(std::abs(alice_open_success(params, uniform, alice_intermediate(0.0), 1) -
                 0.75) < 1e-12);
}

TEST_CASE("alice_open_success: store-later with and without granted storage") {
  ProtocolParams params = make_params(Variant::A, 1);
  const BobPolicy uniform = bob_honest_uniform();

  params.granted.long_term_storage = true;
  CHECK(alice_open_success(params, uniform, alice_store_later(1), 1) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alice_open_success(params, uniform, alice_store_later(0), 0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  params.granted.long_term_storage = false;
  CHECK(std::abs(alice_open_success(params, uniform, alice_store_later(1), 1) -
                 0.75) < 1e-12);

  // chains too: granted storage opens any bit surely
  ProtocolParams pb = make_params(Variant::B, 5);
  pb.granted.long_term_storage = true;
  CHECK(alice_open_success(pb, uniform, alice_store_later(0), 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bob_guess_probability: exact halves and chain-prime closed forms") {
  // variants A and B: exactly 1/2, no tolerance
  for (Variant v : {Variant::A, Variant::B}) {
    const ProtocolParams p = make_params(v, v == Variant::A ? 1 : 6);
    CHECK(bob_guess_probability(p, bob_honest_uniform()) == 0.5);
    CHECK(bob_guess_probability(p, bob_chain_prime()) == 0.5);
  }

  // variant C, chain-prime |0>: 1/2 + 2^-(n+1)
  CHECK(std::abs(bob_guess_probability(make_params(Variant::C, 1),
                                       bob_chain_prime()) -
                 0.75) < 1e-12);
  for (int n = 2; n <= 10; ++n) {
    const double expected = 0.5 + std::pow(2.0, -(n + 1));
    CHECK(std::abs(bob_guess_probability(make_params(Variant::C, n),
                                         bob_chain_prime()) -
                   expected) < 1e-12);
  }

  // TVD bounds: guess probability stays in [1/2, 1] for arbitrary products
  Rng rng = make_stream(60, "tvd");
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 6);
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(uniform01(rng) * pi);
    const double g = bob_guess_probability(make_params(Variant::C, n),
                                           bob_custom_pure(angles));
    CHECK(g >= 0.5);
    CHECK(g <= 1.0 + 1e-12);
  }
}

TEST_CASE("optimize_bob_prep: dense-grid oracle at n=1, basic properties") {
  const ProtocolParams params = make_params(Variant::C, 1);

  // independent 1-D oracle: max over a dense angle grid of
  // 1/2 + |cos^2(phi) - cos^2(phi - pi/4)| / 2
  double oracle = 0.5;
  for (int j = 0; j < 4096; ++j) {
    const double phi = pi * j / 4096;
    const double tvd =
        std::abs(std::cos(phi) * std::cos(phi) -
                 std::cos(phi - pi / 4) * std::cos(phi - pi / 4));
    oracle = std::max(oracle, 0.5 + tvd / 2);
  }
  CHECK(std::abs(oracle - (0.5 + std::numbers::sqrt2 / 4)) < 1e-6);

  const OptimizeResult r = optimize_bob_prep(params, 64);
  CHECK(std::abs(r.value - oracle) < 1e-3);
  CHECK(r.value >= 0.5);

  // a single-point grid degenerates to chain-prime(|0>)
  const OptimizeResult single = optimize_bob_prep(params, 1);
  CHECK(single.value ==
        doctest::Approx(bob_guess_probability(params, bob_chain_prime()))
            .epsilon(1e-12));

  CHECK_THROWS_AS(optimize_bob_prep(make_params(Variant::C, 9), 8),
                  ResourceGuardError);
  CHECK_THROWS_AS(optimize_bob_prep(make_params(Variant::B, 2), 8),
                  std::domain_error);
  CHECK_THROWS_AS(optimize_bob_prep(params, 0), std::domain_error);
}

TEST_CASE("amplified_success") {
  CHECK(amplified_success(0.75, 1) == 0.75);
  CHECK(amplified_success(0.3, 0) == 1.0);
  CHECK(amplified_success(1.0, 1000) == 1.0);

  // closed-form evaluation vs repeated multiplication
  double prod = 1.0;
  for (int i = 0; i < 50; ++i) prod *= 0.75;
  CHECK(amplified_success(0.75, 50) == doctest::Approx(prod).epsilon(1e-12));
  CHECK(std::abs(amplified_success(0.75, 50) - 5.663216564269841e-07) <
        1e-12 * 5.7e-7 + 1e-18);

  // monotone in k below 1
  for (int k = 0; k < 20; ++k)
    CHECK(amplified_success(0.9, k + 1) <= amplified_success(0.9, k));

  CHECK_THROWS_AS(amplified_success(1.5, 1), std::domain_error);
  CHECK_THROWS_AS(amplified_success(0.5, -1), std::domain_error);
}

TEST_CASE("monte_carlo_estimate: 75% claim, determinism, errors") {
  const ProtocolParams params = make_params(Variant::A, 1);
  const SecurityReport rep =
      monte_carlo_estimate(params, alice_postpone_guess(0), bob_honest_uniform(),
                           Metric::AliceOpenSuccess, 100000, 20240815);
  REQUIRE(rep.exact.has_value());
  CHECK(*rep.exact == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(rep.estimate - 0.75) < 4 * rep.stderr_value);
  CHECK(rep.consistent);

  const SecurityReport again =
      monte_carlo_estimate(params, alice_postpone_guess(0), bob_honest_uniform(),
                           Metric::AliceOpenSuccess, 100000, 20240815);
  CHECK(rep.to_json() == again.to_json());

  CHECK_THROWS_AS(
      monte_carlo_estimate(params, alice_honest(0), bob_honest_uniform(),
                           Metric::AliceOpenSuccess, 0, 1),
      std::domain_error);
}

TEST_CASE("monte carlo agrees with enumeration over random configurations") {
  Rng cfg = make_stream(424242, "configs");
  int checked = 0;
  for (int attempt = 0; checked < 50 && attempt < 200; ++attempt) {
    const Variant v = static_cast<Variant>(cfg() % 3);
    const int n = v == Variant::A ? 1 : 1 + static_cast<int>(cfg() % 4);
    const ProtocolParams params = make_params(v, n);

    AlicePolicy alice = alice_honest(0);
    switch (cfg() % 3) {
      case 0: alice = alice_honest(static_cast<int>(cfg() % 2)); break;
      case 1:
        alice = alice_postpone_guess(static_cast<int>(cfg() % 2),
                                     static_cast<int>(cfg() % 2));
        break;
      case 2:
        alice = alice_intermediate(uniform01(cfg) * kThetaX,
                                   static_cast<int>(cfg() % 2));
        break;
    }
    BobPolicy bob = bob_honest_uniform();
    switch (cfg() % 3) {
      case 0: bob = bob_honest_uniform(); break;
      case 1:
        bob = bob_chain_prime(bb84_state(cfg() % 2 ? BasisLabel::X : BasisLabel::Z,
                                         static_cast<int>(cfg() % 2)));
        break;
      case 2: {
        std::vector<double> angles;
        for (int i = 0; i < n; ++i) angles.push_back(uniform01(cfg) * pi);
        bob = bob_custom_pure(angles);
        break;
      }
    }

    const SecurityReport rep =
        monte_carlo_estimate(params, alice, bob, Metric::AliceOpenSuccess,
                             100000, mix64(1000 + static_cast<std::uint64_t>(attempt)));
    REQUIRE(rep.exact.has_value());
    CHECK(rep.consistent);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("basis bias test: attacker flagged, honest null, empty pool") {
  const ProtocolParams params = make_params(Variant::A, 1);

  // intermediate attacker over 1000 repeats: decisive p-value
  {
    std::vector<SessionResult> sessions;
    for (int r = 0; r < 1000; ++r)
      sessions.push_back(run_session(params, alice_intermediate(kThetaBreidbart, 0),
                                     bob_honest_uniform(), 777, r));
    const BiasTest t = basis_bias_test(sessions, params);
    CHECK(t.pooled > 300);
    CHECK(t.p_value < 1e-10);
  }
  // honest committer: a large p-value at this sample size (seeded)
  {
    std::vector<SessionResult> sessions;
    for (int r = 0; r < 1000; ++r)
      sessions.push_back(
          run_session(params, alice_honest(0), bob_honest_uniform(), 778, r));
    const BiasTest t = basis_bias_test(sessions, params);
    CHECK(t.p_value > 1e-4);
  }
  // all-checkable configuration: nothing to pool
  {
    std::vector<SessionResult> sessions;
    for (int r = 0; r < 10; ++r)
      sessions.push_back(
          run_session(params, alice_honest(0), bob_chain_prime(), 779, r));
    CHECK_THROWS_AS(basis_bias_test(sessions, params), InsufficientDataError);
  }

  CHECK_THROWS_AS(basis_bias_test(5, 4), std::domain_error);
  const BiasTest t = basis_bias_test(500, 1000);
  CHECK(t.p_value == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("security report serialization") {
  const ProtocolParams params = make_params(Variant::A, 1);
  const SecurityReport rep =
      monte_carlo_estimate(params, alice_postpone_guess(0), bob_honest_uniform(),
                           Metric::AliceOpenSuccess, 1000, 5);
  const std::string row = rep.csv_row();
  CHECK(row.find("alice-open-success") == 0);
  CHECK(SecurityReport::csv_header() ==
        "metric,exact,estimate,stderr,trials,seed,params");
  const json j = rep.to_json();
  CHECK(j.at("trials") == 1000);
  CHECK(j.at("exact").get<std::string>() == "0.75");
}
