#pragma once

#include <stdexcept>

#include "qbc/rng.hpp"

namespace qbc {

// Channel and detector imperfections. tau is the verifier's mismatch
// threshold and also applies when noise is off (where it must be 0).
struct NoiseParams {
  double loss = 0.0;      // per-qubit transmission loss probability (lambda)
  double flip = 0.0;      // per-measurement outcome flip probability (epsilon)
  double loss_max = 0.0;  // allowed declared-loss fraction (lambda_max)
  double tau = 0.0;       // allowed mismatch fraction among checkable positions

  bool enabled() const { return loss > 0.0 || flip > 0.0; }

  // Range checks plus the honest-acceptance coupling: a configuration in
  // which honest parties are expected to fail is rejected up front.
  void validate() const {
    if (!(loss >= 0.0 && loss <= 1.0))
      throw std::domain_error("noise: loss must lie in [0,1]");
    if (!(flip >= 0.0 && flip < 0.5))
      throw std::domain_error("noise: flip must lie in [0, 1/2)");
    if (!(tau >= 0.0 && tau <= 1.0))
      throw std::domain_error("noise: tau must lie in [0,1]");
    if (!(loss_max >= 0.0 && loss_max <= 1.0))
      throw std::domain_error("noise: loss_max must lie in [0,1]");
    if (flip > 0.0 && !(tau > flip))
      throw std::domain_error("noise: honest acceptance requires tau > flip");
    if (loss > 0.0 && !(loss_max > loss))
      throw std::domain_error("noise: honest acceptance requires loss_max > loss");
    if (!enabled() && tau != 0.0)
      throw std::domain_error("noise: tau must be 0 when noise is disabled");
  }
};

// One Bernoulli(lambda) draw per qubit in transit.
inline bool apply_loss(Rng& rng, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::domain_error("apply_loss: lambda must lie in [0,1]");
  return uniform01(rng) < lambda;
}

// Detector error: flips the recorded outcome with probability eps.
inline int flip_outcome(int bit, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps < 0.5))
    throw std::domain_error("flip_outcome: eps must lie in [0, 1/2)");
  if (bit != 0 && bit != 1) throw std::domain_error("flip_outcome: bit must be 0 or 1");
  return uniform01(rng) < eps ? 1 - bit : bit;
}

struct ThresholdCounts {
  long checkable = 0;
  long mismatch = 0;
  long lost = 0;
  long total = 0;  // qubit positions covered by these counts
};

struct ThresholdVerdict {
  bool accept = false;
  bool mismatch_ok = false;
  bool loss_ok = false;
};

// Threshold rule: accept iff mismatches stay within tau of the checkable
// positions and declared losses within loss_max of all positions.
inline ThresholdVerdict verify_with_threshold(const ThresholdCounts& c,
                                              const NoiseParams& noise) {
  if (c.checkable < 0 || c.mismatch < 0 || c.lost < 0 || c.total < 0 ||
      c.mismatch > c.checkable || c.lost > c.total ||
      c.checkable + c.lost > c.total)
    throw std::domain_error("verify_with_threshold: inconsistent counts");
  // small slack so tau*checkable lands on the intended integer boundary
  ThresholdVerdict v;
  v.mismatch_ok =
      static_cast<double>(c.mismatch) <= noise.tau * static_cast<double>(c.checkable) + 1e-9;
  v.loss_ok =
      static_cast<double>(c.lost) <= noise.loss_max * static_cast<double>(c.total) + 1e-9;
  v.accept = v.mismatch_ok && v.loss_ok;
  return v;
}

}  // namespace qbc
