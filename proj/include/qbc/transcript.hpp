#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbc/canonical.hpp"
#include "qbc/protocol.hpp"
#include "qbc/strategies.hpp"

namespace qbc {

inline constexpr int kSchemaVersion = 1;

enum class Role { Alice, Bob, Broker };

enum class MsgType {
  Prep,       // bob -> broker: escrowed preparation
  Qubit,      // broker -> alice: handle id only, never amplitudes
  Commit,     // alice -> broker: measurement (or store) for one index
  Loss,       // alice -> bob: declared lost position
  Broadcast,  // alice -> bob: last outcome (variant C)
  Guess,      // bob -> broker: instrumentation, bob's pre-reveal guess
  Reveal,     // alice -> bob
  Verdict,    // bob -> alice
  OverallVerdict,
  Violation,  // broker note: deadline or single-use breach
  Abort,
};

std::string to_string(Role r);
Role role_from_string(const std::string& s);
std::string to_string(MsgType t);
MsgType msg_type_from_string(const std::string& s);

struct LogMessage {
  MsgType type = MsgType::Prep;
  Role from = Role::Broker;
  Role to = Role::Broker;
  int repeat = 0;
  int seq = 0;
  json payload;
};

// Full replayable session log: one header line, then one message per line,
// canonical key-sorted JSON throughout.
struct Transcript {
  json header;
  std::vector<LogMessage> messages;

  std::string serialize() const;
  static Transcript parse(const std::string& text);

  std::vector<LogMessage> repeat_messages(int repeat) const;
};

class TranscriptBuilder {
 public:
  explicit TranscriptBuilder(json header) { t_.header = std::move(header); }

  void log(MsgType type, Role from, Role to, int repeat, json payload) {
    t_.messages.push_back(
        {type, from, to, repeat, next_seq_++, std::move(payload)});
  }

  const Transcript& peek() const { return t_; }
  Transcript take() { return std::move(t_); }

 private:
  Transcript t_;
  int next_seq_ = 0;
};

json params_to_json(const ProtocolParams& p);
ProtocolParams params_from_json(const json& j);

json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const json& j);

json make_header(const ProtocolParams& params, const AlicePolicy& alice,
                 const BobPolicy& bob, std::uint64_t seed,
                 const std::string& session_id);

// Payload builders shared by the in-process engine and the broker.
json prep_payload(int index, const PrepEntry& e);
json qubit_payload(int index, std::uint64_t handle, Tick send_tick);
json commit_measured_payload(int index, double theta, int outcome, Tick tick,
                             bool late);
json commit_lost_payload(int index, double theta, Tick tick);
json commit_stored_payload(int index, Tick tick);
json loss_payload(int index, Tick tick);
json broadcast_payload(const BroadcastMessage& b);
json guess_payload(int guess);
json reveal_payload(const RevealMessage& r);
json violation_payload(const std::string& kind, int index);
json abort_payload(const std::string& reason);

// Everything needed to re-verify (or fully re-run) a logged session.
struct ReplayData {
  ProtocolParams params;
  std::uint64_t seed = 0;
  std::string session_id;
  json alice_descriptor;
  json bob_descriptor;
  struct Repeat {
    PrepRecord prep;
    RevealMessage reveal;
    std::optional<BroadcastMessage> broadcast;
    std::optional<Verdict> logged_verdict;
  };
  std::vector<Repeat> repeats;
  std::optional<Verdict> logged_overall;
};

ReplayData extract_replay(const Transcript& t);

}  // namespace qbc
