#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qbc/qubit.hpp"

using namespace qbc;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("bb84 states match their defining amplitudes") {
  const double s = 1.0 / std::sqrt(2.0);

  const StateVector z0 = bb84_state(BasisLabel::Z, 0);
  CHECK(z0[0] == Complex(1.0, 0.0));
  CHECK(z0[1] == Complex(0.0, 0.0));

  const StateVector x0 = bb84_state(BasisLabel::X, 0);
  CHECK(std::abs(x0[0].real() - s) < 1e-15);
  CHECK(std::abs(x0[1].real() - s) < 1e-15);

  const StateVector x1 = bb84_state(BasisLabel::X, 1);
  CHECK(std::abs(x1[0].real() - s) < 1e-15);
  CHECK(std::abs(x1[1].real() + s) < 1e-15);

  // pairwise distinct (no two are the same state up to phase)
  const StateVector all[] = {z0, bb84_state(BasisLabel::Z, 1), x0, x1};
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      CHECK(overlap2(all[i], all[j]) < 1.0 - 1e-12);

  // conjugate-basis overlaps are exactly 1/2
  CHECK(std::abs(overlap2(z0, x0) - 0.5) < 1e-12);
  CHECK(std::abs(overlap2(z0, x1) - 0.5) < 1e-12);
}

TEST_CASE("basis_vectors at the named angles") {
  auto [e0, e1] = basis_vectors(0.0);
  CHECK(same_state(e0, bb84_state(BasisLabel::Z, 0)));
  CHECK(same_state(e1, bb84_state(BasisLabel::Z, 1)));

  auto [p, m] = basis_vectors(kThetaX);
  CHECK(same_state(p, bb84_state(BasisLabel::X, 0)));
  CHECK(same_state(m, bb84_state(BasisLabel::X, 1)));

  auto [b0, b1] = basis_vectors(kThetaBreidbart);
  CHECK(std::abs(b0[0].real() - std::cos(pi / 8)) < 1e-15);
  CHECK(std::abs(b0[1].real() - std::sin(pi / 8)) < 1e-15);
  CHECK(std::abs(b1.dot(b0)) < 1e-12);

  CHECK_THROWS_AS(basis_vectors(-0.1), std::domain_error);
  CHECK_THROWS_AS(basis_vectors(pi), std::domain_error);
}

TEST_CASE("basis orthonormality over random angles") {
  Rng rng = make_stream(20240901, "basis-prop");
  for (int i = 0; i < 1000; ++i) {
    const double theta = uniform01(rng) * pi;
    auto [e0, e1] = basis_vectors(theta);
    CHECK(std::abs(e0.dot(e1)) < 1e-12);
    CHECK(std::abs(e0.squaredNorm() - 1.0) < 1e-12);
    CHECK(std::abs(e1.squaredNorm() - 1.0) < 1e-12);
  }
}

TEST_CASE("outcome_probability examples and normalization") {
  const StateVector z0 = bb84_state(BasisLabel::Z, 0);
  CHECK(outcome_probability(z0, 0.0, 0) == 1.0);
  CHECK(outcome_probability(bb84_state(BasisLabel::X, 0), 0.0, 0) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // |<e0(pi/8)|0>|^2 = cos^2(pi/8), evaluated independently
  const double expected = std::cos(pi / 8) * std::cos(pi / 8);
  CHECK(std::abs(outcome_probability(z0, kThetaBreidbart, 0) - expected) < 1e-12);

  Rng rng = make_stream(7, "born-prop");
  for (int i = 0; i < 500; ++i) {
    const double phi = uniform01(rng) * pi;
    const double theta = uniform01(rng) * pi;
    const StateVector psi = pure_state(phi);
    const double p0 = outcome_probability(psi, theta, 0);
    const double p1 = outcome_probability(psi, theta, 1);
    CHECK(p0 >= 0.0);
    CHECK(p0 <= 1.0);
    CHECK(std::abs(p0 + p1 - 1.0) < 1e-12);
  }

  CHECK_THROWS_AS(outcome_probability(StateVector(0.5, 0.5), 0.0, 0),
                  std::domain_error);
  CHECK_THROWS_AS(outcome_probability(z0, 0.0, 2), std::domain_error);
}

TEST_CASE("measure: eigenstates, single use, deadline decoherence") {
  Rng rng = make_stream(99, "measure");

  {
    QubitHandle h(1, bb84_state(BasisLabel::Z, 1), 10);
    const Outcome out = measure(h, 0.0, 0, rng);
    CHECK(out.bit == 1);
    CHECK(h.consumed());
    CHECK_THROWS_AS(measure(h, 0.0, 0, rng), SingleUseViolation);
  }
  {
    QubitHandle h(2, bb84_state(BasisLabel::X, 0), 10);
    CHECK(measure(h, kThetaX, 0, rng).bit == 0);
  }

  // repeatability: the post-state measured again at the same angle gives the
  // same bit with probability 1
  for (int i = 0; i < 200; ++i) {
    const double theta = uniform01(rng) * pi;
    const double phi = uniform01(rng) * pi;
    QubitHandle h(3, pure_state(phi), 10);
    const Outcome first = measure(h, theta, 0, rng);
    QubitHandle again(4, first.post_state, 10);
    CHECK(measure(again, theta, 0, rng).bit == first.bit);
  }

  // past the deadline the outcome is uniform even for an eigenstate
  long ones = 0;
  const long trials = 100000;
  for (long i = 0; i < trials; ++i) {
    QubitHandle h(5, bb84_state(BasisLabel::Z, 0), 10);
    ones += measure(h, 0.0, 11, rng).bit;
  }
  const double freq = static_cast<double>(ones) / trials;
  const double se = std::sqrt(0.25 / trials);
  CHECK(std::abs(freq - 0.5) < 4 * se);

  // at the deadline itself the state is still intact
  QubitHandle h(6, bb84_state(BasisLabel::Z, 0), 10);
  CHECK(measure(h, 0.0, 10, rng).bit == 0);
}

TEST_CASE("empirical frequencies match the Born rule for all BB84 states") {
  Rng rng = make_stream(123, "freq");
  const long trials = 100000;
  for (BasisLabel prep_basis : {BasisLabel::Z, BasisLabel::X}) {
    for (int bit : {0, 1}) {
      const StateVector psi = bb84_state(prep_basis, bit);
      for (double theta : {kThetaZ, kThetaX}) {
        const double p1 = outcome_probability(psi, theta, 1);
        long ones = 0;
        for (long t = 0; t < trials; ++t) {
          QubitHandle h(0, psi, 1);
          ones += measure(h, theta, 0, rng).bit;
        }
        const double freq = static_cast<double>(ones) / trials;
        const double se = std::sqrt(std::max(p1 * (1 - p1), 1e-12) / trials);
        CHECK(std::abs(freq - p1) <= 4 * se + 1e-9);
      }
    }
  }
}
