#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbc/canonical.hpp"
#include "qbc/protocol.hpp"

namespace qbc {

enum class AliceKind { Honest, PostponeGuess, Intermediate, StoreLater };

// Committer behavior: a deterministic decision rule from (qubit index,
// private outcome history) to a measurement, plus a reveal rule. Immutable
// after construction; randomness comes only from the stream handed in.
struct AlicePolicy {
  AliceKind kind = AliceKind::Honest;
  int commit_bit = 0;              // Honest: b. PostponeGuess: measure_as.
  double theta = kThetaBreidbart;  // Intermediate only
  int open_target = 0;             // bit the reveal rule will claim by default
  Capabilities declared;           // technology the strategy relies on

  std::string name() const;

  // Angle used on qubit `index` given the outcomes that drive the chain.
  // StoreLater reports its reveal-time chain for open_target.
  double commit_angle(int index, std::span<const int> history) const;

  bool defers_measurement() const { return kind == AliceKind::StoreLater; }

  // Whether the reveal rule reports the recorded outcomes verbatim when
  // opening `target` (as opposed to substituting uniform guesses).
  bool truthful_claims(int target) const;

  // The bit actually claimed when asked to open `target`. Honest policies
  // cannot claim anything but their commitment.
  int claimed_bit(int target) const;

  RevealMessage make_reveal(int target, const CommitRecord& record,
                            const std::optional<BroadcastMessage>& broadcast,
                            const ProtocolParams& params, Rng& rng) const;

  json descriptor() const;
  static AlicePolicy from_descriptor(const json& j);
};

AlicePolicy alice_honest(int b);
// Measures as if committed to measure_as; opening the other bit claims the
// flipped chain with uniformly guessed outcomes. open_as -1 = flipped.
AlicePolicy alice_postpone_guess(int measure_as, int open_as = -1);
// Measures every qubit at a fixed intermediate angle and maps its outcomes
// identically into either claimed chain.
AlicePolicy alice_intermediate(double theta = kThetaBreidbart, int open_as = 0);
// Defers all measurements to reveal time. Construction requires declaring
// long-term storage; whether the physics honors it is a session parameter.
AlicePolicy alice_store_later(int open_as = 1,
                              Capabilities declared = {true, false});

enum class BobKind { HonestUniform, ChainPrime, CustomPure };

struct WeightedPrep {
  StateVector state{1.0, 0.0};
  double weight = 1.0;
  BasisLabel label = BasisLabel::None;
  int bit = -1;
};
// Per-index product distribution over preparations.
using PrepDistribution = std::vector<std::vector<WeightedPrep>>;

// Verifier behavior: a preparation rule fixed before the commit phase starts
// and, for the broadcast variant, a guess rule over the broadcast bit.
struct BobPolicy {
  BobKind kind = BobKind::HonestUniform;
  StateVector prime_state{1.0, 0.0};  // ChainPrime
  std::vector<double> angles;         // CustomPure

  std::string name() const;
  PrepEntry prepare(int index, Tick send_tick, Rng& rng) const;
  PrepDistribution prep_distribution(int n) const;

  json descriptor() const;
  static BobPolicy from_descriptor(const json& j);
};

BobPolicy bob_honest_uniform();
BobPolicy bob_chain_prime(const StateVector& state = bb84_state(BasisLabel::Z, 0));
BobPolicy bob_custom_pure(std::vector<double> angles);

// BB84 label of a pure state, up to global phase; (None, -1) if it is none
// of the four.
std::pair<BasisLabel, int> bb84_label_of(const StateVector& s);

// P(last outcome = 0) when an honest committer with bit b measures the given
// fixed preparations down the chain. Used by the maximum-likelihood guess
// rule in the broadcast variant.
double honest_last_outcome_p0(std::span<const StateVector> prep, int b);

// CLI preset syntax: "name" or "name:key=value,key=value".
AlicePolicy alice_from_spec(const std::string& spec);
BobPolicy bob_from_spec(const std::string& spec);

}  // namespace qbc
