#include <doctest.h>

#include <cmath>

#include "qbc/noise.hpp"
#include "qbc/stats.hpp"

using namespace qbc;

TEST_CASE("apply_loss edge cases and frequency") {
  Rng rng = make_stream(1, "loss");
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(apply_loss(rng, 0.0));
    CHECK(apply_loss(rng, 1.0));
  }
  long lost = 0;
  const long trials = 100000;
  for (long i = 0; i < trials; ++i) lost += apply_loss(rng, 0.1);
  const double se = std::sqrt(0.1 * 0.9 / trials);
  CHECK(std::abs(static_cast<double>(lost) / trials - 0.1) < 4 * se);
}

TEST_CASE("flip_outcome identity and frequency") {
  Rng rng = make_stream(2, "flip");
  for (int i = 0; i < 1000; ++i) {
    CHECK(flip_outcome(0, 0.0, rng) == 0);
    CHECK(flip_outcome(1, 0.0, rng) == 1);
  }
  const double eps = 0.02;
  long flips = 0;
  const long trials = 100000;
  for (long i = 0; i < trials; ++i) flips += flip_outcome(0, eps, rng);
  const double se = std::sqrt(eps * (1 - eps) / trials);
  CHECK(std::abs(static_cast<double>(flips) / trials - eps) < 4 * se);

  CHECK_THROWS_AS(flip_outcome(0, 0.5, rng), std::domain_error);
  CHECK_THROWS_AS(flip_outcome(2, 0.1, rng), std::domain_error);
}

TEST_CASE("noise configuration validation") {
  NoiseParams ok{0.05, 0.02, 0.10, 0.05};
  CHECK_NOTHROW(ok.validate());

  NoiseParams flip_half{0.0, 0.5, 0.0, 0.6};
  CHECK_THROWS_AS(flip_half.validate(), std::domain_error);

  NoiseParams tau_too_low{0.0, 0.02, 0.0, 0.02};
  CHECK_THROWS_AS(tau_too_low.validate(), std::domain_error);

  NoiseParams loss_max_low{0.10, 0.0, 0.05, 0.0};
  CHECK_THROWS_AS(loss_max_low.validate(), std::domain_error);

  // tau must be zero when noise is off
  NoiseParams stray_tau{0.0, 0.0, 0.0, 0.1};
  CHECK_THROWS_AS(stray_tau.validate(), std::domain_error);
}

TEST_CASE("verify_with_threshold arithmetic") {
  NoiseParams noise{0.0, 0.0, 0.0, 0.0};
  CHECK(verify_with_threshold({0, 0, 0, 1}, noise).accept);

  NoiseParams tau05{0.0, 0.02, 0.0, 0.05};
  CHECK_FALSE(verify_with_threshold({20, 3, 0, 20}, tau05).mismatch_ok);
  CHECK(verify_with_threshold({20, 1, 0, 20}, tau05).mismatch_ok);

  NoiseParams lossy{0.05, 0.0, 0.10, 0.0};
  CHECK(verify_with_threshold({0, 0, 1, 10}, lossy).loss_ok);
  CHECK_FALSE(verify_with_threshold({0, 0, 2, 10}, lossy).loss_ok);

  CHECK_THROWS_AS(verify_with_threshold({5, 6, 0, 10}, noise), std::domain_error);
  CHECK_THROWS_AS(verify_with_threshold({5, 0, 11, 10}, noise), std::domain_error);
  CHECK_THROWS_AS(verify_with_threshold({8, 0, 3, 10}, noise), std::domain_error);
}

TEST_CASE("honest acceptance under flips follows the binomial tail") {
  // 100 checkable eigenstate positions, eps = 0.02, tau = 0.05: accept iff
  // at most 5 flips. Simulated rate vs the directly summed tail.
  Rng rng = make_stream(3, "tail");
  const double eps = 0.02;
  NoiseParams noise{0.0, eps, 0.0, 0.05};
  const long trials = 100000;
  long accepted = 0;
  for (long t = 0; t < trials; ++t) {
    long mism = 0;
    for (int i = 0; i < 100; ++i) mism += flip_outcome(0, eps, rng);
    accepted += verify_with_threshold({100, mism, 0, 100}, noise).accept;
  }
  double expected = 0.0;  // P(Bin(100, 0.02) <= 5), summed term by term
  for (long j = 0; j <= 5; ++j) expected += binom_pmf(100, j, eps);
  const double rate = static_cast<double>(accepted) / trials;
  const double se = std::sqrt(expected * (1 - expected) / trials);
  CHECK(std::abs(rate - expected) < 4 * se);
}
