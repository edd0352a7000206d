#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbc/noise.hpp"
#include "qbc/qubit.hpp"

namespace qbc {

enum class Variant { A, B, C };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Technology assumptions. The baseline world grants neither; a strategy may
// *declare* that it relies on one, and the session params say whether the
// simulated physics actually honors it.
struct Capabilities {
  bool long_term_storage = false;
  bool qnd_detection = false;
};

struct ProtocolParams {
  Variant variant = Variant::A;
  int n = 1;                // qubits per session (variant A: exactly 1)
  Tick storage_window = 1;  // delta: ticks a qubit survives after send
  Tick pacing = 0;          // ticks between sends; 0 means use storage_window
  NoiseParams noise;
  int repetitions = 1;      // k-fold repetition wrapper
  Capabilities granted;     // what the simulated physics honors

  double mismatch_threshold() const { return noise.tau; }
  Tick effective_pacing() const { return pacing > 0 ? pacing : storage_window; }
  void validate() const;
};

// Commitment encoding: bit 0 measures in Z (theta 0), bit 1 in X (theta pi/4).
double commit_basis_map(int v);
BasisLabel commit_basis_label(int v);
BasisLabel label_of_angle(double theta);  // Z/X for the two protocol angles, else None

// One prepared qubit as Bob recorded it. label/bit are meaningful only for
// conjugate-basis preparations; arbitrary pure states carry None/-1 and are
// never checkable at verification.
struct PrepEntry {
  StateVector state{1.0, 0.0};
  BasisLabel label = BasisLabel::None;
  int bit = -1;
  Tick send_tick = 0;
};
using PrepRecord = std::vector<PrepEntry>;

// Alice's private record of the commit phase. outcome -1 marks a lost qubit;
// stored entries have measured == false until the deferred measurement runs.
struct CommitEntry {
  double theta = kThetaZ;
  int outcome = -1;
  Tick tick = 0;         // when the measurement actually happened
  Tick arrival_tick = 0;
  bool lost = false;
  bool measured = false;
  bool late = false;     // measured past the storage deadline
};
struct CommitRecord {
  int bit = 0;  // the bit the commit-phase bases encode
  std::vector<CommitEntry> entries;
};

struct BroadcastMessage {
  int bit = -1;  // -1: last qubit was declared lost
  Tick tick = 0;
};

struct RevealMessage {
  int bit = 0;
  std::vector<int> outcomes;  // -1 marks a declared-lost position
  std::vector<Tick> ticks;
};

enum class RejectReason {
  None,
  Mismatch,
  Timing,
  Broadcast,
  LossBound,
  Malformed,
  ProtocolViolation,
  BitDisagreement,  // k-fold wrapper: reveals disagree across repeats
  Aborted,
};

std::string to_string(RejectReason r);
RejectReason reject_reason_from_string(const std::string& s);

struct Verdict {
  bool accept = false;
  int checkable_count = 0;
  int mismatch_count = 0;
  int lost_count = 0;
  bool timing_ok = true;
  bool chain_ok = true;  // true by construction: bases are derived, not claimed
  bool broadcast_ok = true;
  bool loss_ok = true;
  RejectReason reject_reason = RejectReason::None;
};

// Basis chain: the first basis encodes b, each later basis encodes the
// previous outcome. Lost positions (-1) leave the driver unchanged, so the
// next basis derives from the most recent measured outcome.
std::vector<BasisLabel> derive_basis_chain(int b, std::span<const int> outcomes);

// Bob's check. Claimed bases are recomputed from (bit, outcomes); a position
// is checkable iff his preparation basis matches the claimed basis there.
Verdict verify_reveal(const PrepRecord& prep, const RevealMessage& reveal,
                      const std::optional<BroadcastMessage>& broadcast,
                      const ProtocolParams& params);

// Threshold counts of a single verdict, for pooling across repeats.
ThresholdCounts verdict_counts(const Verdict& v, int n);

}  // namespace qbc
