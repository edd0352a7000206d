#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qbc/strategies.hpp"
#include "qbc/transcript.hpp"

namespace qbc {

// The simulated physics of one repeat: holds hidden qubit states, draws
// channel loss, enforces single measurement and storage deadlines. Both the
// in-process engine and the networked broker run sessions through this class,
// which is what makes the two modes produce identical outcomes.
class PhysicsCore {
 public:
  PhysicsCore(const ProtocolParams& params, std::uint64_t seed, int repeat);

  struct Sent {
    std::uint64_t handle_id = 0;
    Tick deadline = 0;
    bool lost = false;
  };
  Sent send(int index, const StateVector& state, Tick send_tick);

  struct MeasureResult {
    int bit = -1;
    bool late = false;
    bool lost = false;
  };
  // Throws SingleUseViolation on a second measurement of the same handle and
  // ProtocolViolation on an unknown handle.
  MeasureResult measure(std::uint64_t handle_id, double theta, Tick tick);

  bool lost(std::uint64_t handle_id) const;

 private:
  struct Entry {
    Entry(std::uint64_t id, const StateVector& s, Tick deadline, bool lost)
        : handle(id, s, deadline), lost(lost) {}
    QubitHandle handle;
    bool lost;
    bool touched = false;
  };
  ProtocolParams params_;
  Rng physics_rng_;
  Rng noise_rng_;
  std::deque<Entry> entries_;
};

// Alice's side of a session, driving the configured policy.
class AliceSession {
 public:
  AliceSession(const ProtocolParams& params, AlicePolicy policy,
               std::uint64_t seed, int repeat);

  struct Decision {
    double theta = kThetaZ;
    Tick tick = 0;
    bool store = false;
  };
  Decision on_qubit(int index, Tick send_tick);

  void record_outcome(int index, int bit, Tick tick, bool late);
  void record_lost(int index, Tick tick);
  void record_stored(int index, Tick arrival);

  // Variant C: the bit told to Bob right after the last qubit. A deferring
  // policy has nothing to report yet and sends a coin flip.
  int broadcast_bit();

  struct Deferred {
    int index = 0;
    double theta = kThetaZ;
  };
  std::optional<Deferred> next_deferred() const;
  void record_deferred(int index, int bit, Tick tick, bool late);

  RevealMessage reveal(const std::optional<BroadcastMessage>& broadcast);

  const CommitRecord& record() const { return record_; }

 private:
  std::span<const int> history(int index) const {
    return {history_.data(), static_cast<size_t>(index)};
  }
  ProtocolParams params_;
  AlicePolicy policy_;
  Rng rng_;
  CommitRecord record_;
  std::vector<int> history_;
};

// Bob's side: non-adaptive preparation, optional broadcast guess, verdict.
class BobSession {
 public:
  BobSession(const ProtocolParams& params, BobPolicy policy,
             std::uint64_t seed, int repeat);

  PrepRecord draw_preparations();
  int guess(const BroadcastMessage& broadcast);
  Verdict verify(const PrepRecord& prep, const RevealMessage& reveal,
                 const std::optional<BroadcastMessage>& broadcast) const;

 private:
  ProtocolParams params_;
  BobPolicy policy_;
  Rng rng_;
};

struct SessionResult {
  Verdict verdict;
  RevealMessage reveal;
  std::optional<BroadcastMessage> broadcast;
  std::optional<int> bob_guess;
  CommitRecord commit;
  PrepRecord prep;
};

// Commit phase only: Bob's preparations flow through the physics into the
// policy's measurements. Returns Alice's record and the variant C broadcast.
std::pair<CommitRecord, std::optional<BroadcastMessage>> run_commit_phase(
    const ProtocolParams& params, const PrepRecord& prep,
    const AlicePolicy& alice, std::uint64_t seed, int repeat = 0,
    TranscriptBuilder* log = nullptr);

// One full session. Deterministic given (params, policies, seed, repeat).
// Pass a TranscriptBuilder to capture the logical message log.
SessionResult run_session(const ProtocolParams& params,
                          const AlicePolicy& alice, const BobPolicy& bob,
                          std::uint64_t seed, int repeat = 0,
                          TranscriptBuilder* log = nullptr);

// Overall verdict of the k-fold wrapper: reveals must be unanimous, every
// repeat's structural flags must hold, and the statistical thresholds apply
// to counts pooled across repeats (with noise off this is exactly "every
// repeat accepts").
Verdict combine_verdicts(const ProtocolParams& params,
                         std::span<const Verdict> verdicts,
                         std::span<const int> revealed_bits);

struct RepeatedResult {
  std::vector<SessionResult> repeats;
  Verdict overall;
};

RepeatedResult run_repeated(const ProtocolParams& params,
                            const AlicePolicy& alice, const BobPolicy& bob,
                            std::uint64_t seed, TranscriptBuilder* log = nullptr);

// Lean k-fold runner for Monte Carlo: short-circuits on the first definitive
// rejection and never builds transcripts.
bool repeated_overall_success(const ProtocolParams& params,
                              const AlicePolicy& alice, const BobPolicy& bob,
                              std::uint64_t seed);

// Convenience: run a session (k = 1) or repeated wrapper (k > 1) with
// transcript capture, returning the transcript and the final verdict.
struct RunOutput {
  Transcript transcript;
  Verdict verdict;
  RepeatedResult detail;
};
RunOutput run_with_transcript(const ProtocolParams& params,
                              const AlicePolicy& alice, const BobPolicy& bob,
                              std::uint64_t seed,
                              const std::string& session_id);

}  // namespace qbc
