#include "qbc/transcript.hpp"

#include <sstream>

namespace qbc {

std::string to_string(Role r) {
  switch (r) {
    case Role::Alice: return "alice";
    case Role::Bob: return "bob";
    case Role::Broker: return "broker";
  }
  throw std::logic_error("bad role");
}

Role role_from_string(const std::string& s) {
  if (s == "alice") return Role::Alice;
  if (s == "bob") return Role::Bob;
  if (s == "broker") return Role::Broker;
  throw ParseError("unknown role: " + s);
}

std::string to_string(MsgType t) {
  switch (t) {
    case MsgType::Prep: return "prep";
    case MsgType::Qubit: return "qubit";
    case MsgType::Commit: return "commit";
    case MsgType::Loss: return "loss";
    case MsgType::Broadcast: return "broadcast";
    case MsgType::Guess: return "guess";
    case MsgType::Reveal: return "reveal";
    case MsgType::Verdict: return "verdict";
    case MsgType::OverallVerdict: return "overall_verdict";
    case MsgType::Violation: return "violation";
    case MsgType::Abort: return "abort";
  }
  throw std::logic_error("bad msg type");
}

MsgType msg_type_from_string(const std::string& s) {
  if (s == "prep") return MsgType::Prep;
  if (s == "qubit") return MsgType::Qubit;
  if (s == "commit") return MsgType::Commit;
  if (s == "loss") return MsgType::Loss;
  if (s == "broadcast") return MsgType::Broadcast;
  if (s == "guess") return MsgType::Guess;
  if (s == "reveal") return MsgType::Reveal;
  if (s == "verdict") return MsgType::Verdict;
  if (s == "overall_verdict") return MsgType::OverallVerdict;
  if (s == "violation") return MsgType::Violation;
  if (s == "abort") return MsgType::Abort;
  throw ParseError("unknown message type: " + s);
}

std::string Transcript::serialize() const {
  std::string out = canonical_dump(header);
  out.push_back('\n');
  for (const auto& m : messages) {
    json line{{"from", to_string(m.from)}, {"payload", m.payload},
              {"repeat", m.repeat},        {"seq", m.seq},
              {"to", to_string(m.to)},     {"type", to_string(m.type)}};
    out += canonical_dump(line);
    out.push_back('\n');
  }
  return out;
}

Transcript Transcript::parse(const std::string& text) {
  Transcript t;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++lineno;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("transcript: bad JSON on line " + std::to_string(lineno) +
                           ": " + e.what(),
                       lineno);
    }
    try {
      if (lineno == 0) {
        if (!j.contains("schema_version") ||
            j.at("schema_version").get<int>() != kSchemaVersion)
          throw ParseError("transcript: unsupported schema version", lineno);
        t.header = std::move(j);
      } else {
        LogMessage m;
        m.type = msg_type_from_string(j.at("type").get<std::string>());
        m.from = role_from_string(j.at("from").get<std::string>());
        m.to = role_from_string(j.at("to").get<std::string>());
        m.repeat = j.at("repeat").get<int>();
        m.seq = j.at("seq").get<int>();
        m.payload = j.at("payload");
        t.messages.push_back(std::move(m));
      }
    } catch (const json::exception& e) {
      throw ParseError("transcript: malformed line " + std::to_string(lineno) +
                           ": " + e.what(),
                       lineno);
    }
    ++lineno;
  }
  if (t.header.is_null())
    throw ParseError("transcript: missing header line", 0);
  return t;
}

std::vector<LogMessage> Transcript::repeat_messages(int repeat) const {
  std::vector<LogMessage> out;
  for (const auto& m : messages)
    if (m.repeat == repeat) out.push_back(m);
  return out;
}

namespace {

std::string label_string(BasisLabel l) {
  switch (l) {
    case BasisLabel::Z: return "Z";
    case BasisLabel::X: return "X";
    case BasisLabel::None: return "none";
  }
  throw std::logic_error("bad label");
}

BasisLabel label_from_string(const std::string& s) {
  if (s == "Z") return BasisLabel::Z;
  if (s == "X") return BasisLabel::X;
  if (s == "none") return BasisLabel::None;
  throw ParseError("unknown basis label: " + s);
}

}  // namespace

json params_to_json(const ProtocolParams& p) {
  return json{
      {"granted",
       {{"long_term_storage", p.granted.long_term_storage},
        {"qnd_detection", p.granted.qnd_detection}}},
      {"n", p.n},
      {"noise",
       {{"flip", canonical_real(p.noise.flip)},
        {"loss", canonical_real(p.noise.loss)},
        {"loss_max", canonical_real(p.noise.loss_max)},
        {"tau", canonical_real(p.noise.tau)}}},
      {"pacing", p.pacing},
      {"repetitions", p.repetitions},
      {"storage_window", p.storage_window},
      {"variant", to_string(p.variant)},
  };
}

ProtocolParams params_from_json(const json& j) {
  ProtocolParams p;
  p.variant = variant_from_string(j.at("variant").get<std::string>());
  p.n = j.at("n").get<int>();
  p.storage_window = j.at("storage_window").get<Tick>();
  p.pacing = j.at("pacing").get<Tick>();
  p.repetitions = j.at("repetitions").get<int>();
  const json& noise = j.at("noise");
  p.noise.flip = parse_real(noise.at("flip"));
  p.noise.loss = parse_real(noise.at("loss"));
  p.noise.loss_max = parse_real(noise.at("loss_max"));
  p.noise.tau = parse_real(noise.at("tau"));
  const json& g = j.at("granted");
  p.granted.long_term_storage = g.at("long_term_storage").get<bool>();
  p.granted.qnd_detection = g.at("qnd_detection").get<bool>();
  p.validate();
  return p;
}

json verdict_to_json(const Verdict& v) {
  return json{
      {"accept", v.accept},
      {"broadcast_ok", v.broadcast_ok},
      {"chain_ok", v.chain_ok},
      {"checkable", v.checkable_count},
      {"loss_ok", v.loss_ok},
      {"lost", v.lost_count},
      {"mismatch", v.mismatch_count},
      {"reason", to_string(v.reject_reason)},
      {"timing_ok", v.timing_ok},
  };
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.accept = j.at("accept").get<bool>();
  v.broadcast_ok = j.at("broadcast_ok").get<bool>();
  v.chain_ok = j.at("chain_ok").get<bool>();
  v.checkable_count = j.at("checkable").get<int>();
  v.loss_ok = j.at("loss_ok").get<bool>();
  v.lost_count = j.at("lost").get<int>();
  v.mismatch_count = j.at("mismatch").get<int>();
  v.reject_reason = reject_reason_from_string(j.at("reason").get<std::string>());
  v.timing_ok = j.at("timing_ok").get<bool>();
  return v;
}

json make_header(const ProtocolParams& params, const AlicePolicy& alice,
                 const BobPolicy& bob, std::uint64_t seed,
                 const std::string& session_id) {
  return json{
      {"params", params_to_json(params)},
      {"schema_version", kSchemaVersion},
      {"seed", seed},
      {"session", session_id},
      {"strategies",
       {{"alice", alice.descriptor()}, {"bob", bob.descriptor()}}},
  };
}

json prep_payload(int index, const PrepEntry& e) {
  return json{{"bit", e.bit},
              {"index", index},
              {"label", label_string(e.label)},
              {"send_tick", e.send_tick},
              {"state", state_to_json(e.state)}};
}

json qubit_payload(int index, std::uint64_t handle, Tick send_tick) {
  return json{{"handle", handle}, {"index", index}, {"send_tick", send_tick}};
}

json commit_measured_payload(int index, double theta, int outcome, Tick tick,
                             bool late) {
  return json{{"index", index},
              {"late", late},
              {"outcome", outcome},
              {"theta", canonical_real(theta)},
              {"tick", tick}};
}

json commit_lost_payload(int index, double theta, Tick tick) {
  return json{{"index", index},
              {"lost", true},
              {"theta", canonical_real(theta)},
              {"tick", tick}};
}

json commit_stored_payload(int index, Tick tick) {
  return json{{"index", index}, {"stored", true}, {"tick", tick}};
}

json loss_payload(int index, Tick tick) {
  return json{{"index", index}, {"tick", tick}};
}

json broadcast_payload(const BroadcastMessage& b) {
  return json{{"bit", b.bit}, {"tick", b.tick}};
}

json guess_payload(int guess) { return json{{"guess", guess}}; }

json reveal_payload(const RevealMessage& r) {
  return json{
      {"bit", r.bit}, {"outcomes", r.outcomes}, {"ticks", r.ticks}};
}

json violation_payload(const std::string& kind, int index) {
  return json{{"index", index}, {"kind", kind}};
}

json abort_payload(const std::string& reason) {
  return json{{"reason", reason}};
}

ReplayData extract_replay(const Transcript& t) {
  ReplayData r;
  try {
    r.params = params_from_json(t.header.at("params"));
    r.seed = t.header.at("seed").get<std::uint64_t>();
    r.session_id = t.header.at("session").get<std::string>();
    r.alice_descriptor = t.header.at("strategies").at("alice");
    r.bob_descriptor = t.header.at("strategies").at("bob");
  } catch (const json::exception& e) {
    throw ParseError(std::string("transcript header: ") + e.what(), 0);
  }
  r.repeats.resize(static_cast<size_t>(r.params.repetitions));

  for (size_t mi = 0; mi < t.messages.size(); ++mi) {
    const auto& m = t.messages[mi];
    if (m.repeat < 0 || m.repeat >= r.params.repetitions)
      throw ParseError("transcript: repeat index out of range",
                       static_cast<long>(mi + 1));
    auto& rep = r.repeats[static_cast<size_t>(m.repeat)];
    try {
      switch (m.type) {
        case MsgType::Prep: {
          PrepEntry e;
          e.state = state_from_json(m.payload.at("state"));
          e.label = label_from_string(m.payload.at("label").get<std::string>());
          e.bit = m.payload.at("bit").get<int>();
          e.send_tick = m.payload.at("send_tick").get<Tick>();
          const int index = m.payload.at("index").get<int>();
          if (static_cast<size_t>(index) != rep.prep.size())
            throw ParseError("transcript: preparation out of order",
                             static_cast<long>(mi + 1));
          rep.prep.push_back(e);
          break;
        }
        case MsgType::Broadcast:
          rep.broadcast = BroadcastMessage{m.payload.at("bit").get<int>(),
                                           m.payload.at("tick").get<Tick>()};
          break;
        case MsgType::Reveal: {
          RevealMessage rv;
          rv.bit = m.payload.at("bit").get<int>();
          rv.outcomes = m.payload.at("outcomes").get<std::vector<int>>();
          rv.ticks = m.payload.at("ticks").get<std::vector<Tick>>();
          rep.reveal = std::move(rv);
          break;
        }
        case MsgType::Verdict:
          rep.logged_verdict = verdict_from_json(m.payload);
          break;
        case MsgType::OverallVerdict:
          r.logged_overall = verdict_from_json(m.payload);
          break;
        default:
          break;
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("transcript message: ") + e.what(),
                       static_cast<long>(mi + 1));
    }
  }
  return r;
}

}  // namespace qbc
