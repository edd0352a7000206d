#include "qbc/broker.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>

namespace qbc {

namespace {

json wrap(int repeat, json body) {
  return json{{"body", std::move(body)}, {"repeat", repeat}};
}

struct Expected {
  WireMessage msg;
  json body;
};

// One protocol session between a paired alice and bob connection. Runs in
// its own thread; all state is confined here.
class BrokerSession {
 public:
  BrokerSession(Channel alice, Channel bob, const WireMessage& hello_alice,
                const WireMessage& hello_bob, const BrokerOptions& opts)
      : alice_(std::move(alice)),
        bob_(std::move(bob)),
        opts_(opts),
        session_id_(hello_alice.session_id) {
    params_ = params_from_json(hello_alice.payload.at("params"));
    seed_ = hello_alice.payload.at("seed").get<std::uint64_t>();
    log_.emplace(make_header_from_hellos(hello_alice, hello_bob));
  }

  void run() {
    try {
      for (int r = 0; r < params_.repetitions; ++r) run_repeat(r);
      Expected ov = expect(bob_, "overall_verdict", params_.repetitions - 1);
      log_->log(MsgType::OverallVerdict, Role::Bob, Role::Alice,
                params_.repetitions - 1, ov.body);
      alice_.send("overall_verdict", wrap(params_.repetitions - 1, ov.body));
      write_transcript();
      alice_.send("close", json::object());
      bob_.send("close", json::object());
    } catch (const std::exception& e) {
      abort_session(e.what());
    }
  }

 private:
  json make_header_from_hellos(const WireMessage& ha, const WireMessage& hb) {
    return json{
        {"params", ha.payload.at("params")},
        {"schema_version", kSchemaVersion},
        {"seed", seed_},
        {"session", session_id_},
        {"strategies",
         {{"alice", ha.payload.at("strategy")}, {"bob", hb.payload.at("strategy")}}},
    };
  }

  Expected expect(Channel& ch, const std::string& type, int repeat) {
    auto m = ch.recv(opts_.timeout_ms);
    if (!m) throw ProtocolViolation("broker: peer closed the connection");
    if (m->session_id != session_id_)
      throw ProtocolViolation("broker: session id mismatch");
    if (m->type != type)
      throw ProtocolViolation("broker: expected " + type + ", got " + m->type);
    const json& p = m->payload;
    if (p.at("repeat").get<int>() != repeat)
      throw ProtocolViolation("broker: repeat index mismatch");
    return Expected{*m, p.at("body")};
  }

  // Handles one measure/store message from alice for the given phase.
  // Returns true if the message was a reveal (ending the repeat).
  bool handle_alice_commit_message(int repeat, PhysicsCore& physics,
                                   bool reveal_phase,
                                   RevealMessage* reveal_out) {
    auto m = alice_.recv(opts_.timeout_ms);
    if (!m) throw ProtocolViolation("broker: alice closed the connection");
    const json& body = m->payload.at("body");
    if (m->payload.at("repeat").get<int>() != repeat)
      throw ProtocolViolation("broker: repeat index mismatch");

    if (m->type == "store") {
      if (reveal_phase)
        throw PhaseViolation("broker: store after the commit phase");
      const int index = body.at("index").get<int>();
      log_->log(MsgType::Commit, Role::Alice, Role::Broker, repeat,
                commit_stored_payload(index, body.at("tick").get<Tick>()));
      alice_.send("store_ack", wrap(repeat, json::object()));
      return false;
    }
    if (m->type == "measure") {
      const auto handle = body.at("handle").get<std::uint64_t>();
      const int index = body.at("index").get<int>();
      const double theta = parse_real(body.at("theta"));
      const Tick tick = body.at("tick").get<Tick>();
      PhysicsCore::MeasureResult res;
      try {
        res = physics.measure(handle, theta, tick);
      } catch (const SingleUseViolation&) {
        log_->log(MsgType::Violation, Role::Broker, Role::Broker, repeat,
                  violation_payload("double_measurement", index));
        throw;
      }
      if (res.lost) {
        log_->log(MsgType::Commit, Role::Alice, Role::Broker, repeat,
                  commit_lost_payload(index, theta, tick));
        alice_.send("result",
                    wrap(repeat, json{{"late", false}, {"lost", true}, {"outcome", -1}}));
        Expected decl = expect(alice_, "loss_declare", repeat);
        log_->log(MsgType::Loss, Role::Alice, Role::Bob, repeat,
                  loss_payload(decl.body.at("index").get<int>(),
                               decl.body.at("tick").get<Tick>()));
        bob_.send("loss", wrap(repeat, decl.body));
        return false;
      }
      log_->log(MsgType::Commit, Role::Alice, Role::Broker, repeat,
                commit_measured_payload(index, theta, res.bit, tick, res.late));
      if (res.late)
        log_->log(MsgType::Violation, Role::Broker, Role::Broker, repeat,
                  violation_payload("late_measurement", index));
      alice_.send("result", wrap(repeat, json{{"late", res.late},
                                              {"lost", false},
                                              {"outcome", res.bit}}));
      return false;
    }
    if (m->type == "reveal") {
      if (!reveal_phase)
        throw PhaseViolation("broker: reveal before the commit phase finished");
      RevealMessage rv;
      rv.bit = body.at("bit").get<int>();
      rv.outcomes = body.at("outcomes").get<std::vector<int>>();
      rv.ticks = body.at("ticks").get<std::vector<Tick>>();
      *reveal_out = rv;
      log_->log(MsgType::Reveal, Role::Alice, Role::Bob, repeat,
                reveal_payload(rv));
      return true;
    }
    throw ProtocolViolation("broker: unexpected message from alice: " + m->type);
  }

  void run_repeat(int repeat) {
    PhysicsCore physics(params_, seed_, repeat);
    PrepRecord prep;

    for (int i = 0; i < params_.n; ++i) {
      Expected pm = expect(bob_, "prep", repeat);
      PrepEntry e;
      e.state = state_from_json(pm.body.at("state"));
      e.bit = pm.body.at("bit").get<int>();
      const std::string label = pm.body.at("label").get<std::string>();
      e.label = label == "Z"   ? BasisLabel::Z
                : label == "X" ? BasisLabel::X
                               : BasisLabel::None;
      e.send_tick = pm.body.at("send_tick").get<Tick>();
      if (pm.body.at("index").get<int>() != i)
        throw ProtocolViolation("broker: preparation out of order");
      prep.push_back(e);
      log_->log(MsgType::Prep, Role::Bob, Role::Broker, repeat,
                prep_payload(i, e));

      const auto sent = physics.send(i, e.state, e.send_tick);
      // Alice's copy carries the handle id only, never amplitudes.
      log_->log(MsgType::Qubit, Role::Broker, Role::Alice, repeat,
                qubit_payload(i, sent.handle_id, e.send_tick));
      alice_.send("qubit",
                  wrap(repeat, qubit_payload(i, sent.handle_id, e.send_tick)));

      handle_alice_commit_message(repeat, physics, false, nullptr);
      bob_.send("receipt", wrap(repeat, json{{"escrow_count", i + 1}, {"index", i}}));
    }

    std::optional<BroadcastMessage> broadcast;
    if (params_.variant == Variant::C) {
      Expected bm = expect(alice_, "broadcast", repeat);
      broadcast = BroadcastMessage{bm.body.at("bit").get<int>(),
                                   bm.body.at("tick").get<Tick>()};
      log_->log(MsgType::Broadcast, Role::Alice, Role::Bob, repeat,
                broadcast_payload(*broadcast));
      bob_.send("broadcast", wrap(repeat, bm.body));
      Expected gm = expect(bob_, "guess", repeat);
      log_->log(MsgType::Guess, Role::Bob, Role::Broker, repeat, gm.body);
    }

    // Reveal phase: deferred measurements arrive until the reveal message.
    RevealMessage reveal;
    while (!handle_alice_commit_message(repeat, physics, true, &reveal)) {
    }
    bob_.send("reveal", wrap(repeat, reveal_payload(reveal)));

    Expected er = expect(bob_, "escrow_request", repeat);
    (void)er;
    json entries = json::array();
    for (int i = 0; i < params_.n; ++i)
      entries.push_back(prep_payload(i, prep[static_cast<size_t>(i)]));
    bob_.send("escrow", wrap(repeat, json{{"entries", entries}}));

    Expected vm = expect(bob_, "verdict", repeat);
    log_->log(MsgType::Verdict, Role::Bob, Role::Alice, repeat, vm.body);
    alice_.send("verdict", wrap(repeat, vm.body));
  }

  void abort_session(const std::string& reason) {
    try {
      log_->log(MsgType::Abort, Role::Broker, Role::Broker, 0,
                abort_payload(reason));
      write_transcript();
    } catch (...) {
    }
    for (Channel* ch : {&alice_, &bob_}) {
      try {
        ch->send("abort", json{{"reason", reason}});
      } catch (...) {
      }
    }
  }

  void write_transcript() {
    if (opts_.out_dir.empty()) return;
    std::filesystem::create_directories(opts_.out_dir);
    const auto path =
        std::filesystem::path(opts_.out_dir) / (session_id_ + ".jsonl");
    std::ofstream out(path, std::ios::binary);
    out << log_->peek().serialize();
  }

  Channel alice_;
  Channel bob_;
  BrokerOptions opts_;
  std::string session_id_;
  ProtocolParams params_;
  std::uint64_t seed_ = 0;
  std::optional<TranscriptBuilder> log_;
};

}  // namespace

BrokerServer::BrokerServer(const BrokerOptions& opts) : opts_(opts) {
  listen_fd_ = tcp_listen(opts_.host, opts_.port);
  port_ = tcp_bound_port(listen_fd_);
}

BrokerServer::~BrokerServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

void BrokerServer::pair_or_park(int fd) {
  auto bytes = read_frame(fd, opts_.timeout_ms);
  if (!bytes) {
    ::close(fd);
    return;
  }
  WireMessage hello = decode(*bytes);
  if (hello.type != "hello" || hello.seq != 0 || hello.schema_version != 1) {
    ::close(fd);
    return;
  }
  const std::string role = hello.payload.at("role").get<std::string>();
  if (role != "alice" && role != "bob") {
    ::close(fd);
    return;
  }

  const std::string session_id = hello.session_id;
  std::lock_guard lock(mu_);
  auto it = waiting_.find(session_id);
  if (it == waiting_.end()) {
    waiting_.emplace(session_id, Pending{fd, std::move(hello)});
    return;
  }
  Pending first = std::move(it->second);
  waiting_.erase(it);

  const std::string first_role = first.hello.payload.at("role").get<std::string>();
  if (first_role == role ||
      canonical_dump(first.hello.payload.at("params")) !=
          canonical_dump(hello.payload.at("params")) ||
      first.hello.payload.at("seed") != hello.payload.at("seed")) {
    ::close(fd);
    ::close(first.fd);
    return;
  }

  Channel to_first(first.fd, "broker", hello.session_id);
  to_first.prime_recv(0);
  Channel to_second(fd, "broker", hello.session_id);
  to_second.prime_recv(0);
  Channel alice = first_role == "alice" ? std::move(to_first) : std::move(to_second);
  Channel bob = first_role == "alice" ? std::move(to_second) : std::move(to_first);
  WireMessage hello_alice = first_role == "alice" ? first.hello : hello;
  WireMessage hello_bob = first_role == "alice" ? hello : first.hello;

  threads_.emplace_back([this, alice = std::move(alice), bob = std::move(bob),
                         hello_alice = std::move(hello_alice),
                         hello_bob = std::move(hello_bob)]() mutable {
    try {
      BrokerSession session(std::move(alice), std::move(bob), hello_alice,
                            hello_bob, opts_);
      session.run();
    } catch (...) {
    }
    completed_.fetch_add(1);
  });
}

void BrokerServer::serve() {
  while (!stop_.load()) {
    if (opts_.max_sessions > 0 && completed_.load() >= opts_.max_sessions) break;
    const int fd = tcp_accept(listen_fd_, 100);
    if (fd < 0) continue;
    try {
      pair_or_park(fd);
    } catch (const std::exception&) {
      ::close(fd);
    }
  }
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

namespace {

json hello_payload(const ClientOptions& opts, const std::string& role,
                   json strategy) {
  return json{{"params", params_to_json(opts.params)},
              {"role", role},
              {"seed", opts.seed},
              {"strategy", std::move(strategy)}};
}

// Empty `type` accepts any message type.
Expected client_expect(Channel& ch, const std::string& type, int repeat,
                       int timeout_ms) {
  auto m = ch.recv(timeout_ms);
  if (!m) throw ProtocolViolation("client: broker closed the connection");
  if (m->type == "abort")
    throw ProtocolViolation("client: session aborted: " +
                            m->payload.at("reason").get<std::string>());
  if (!type.empty() && m->type != type)
    throw ProtocolViolation("client: expected " + type + ", got " + m->type);
  if (m->payload.contains("repeat") &&
      m->payload.at("repeat").get<int>() != repeat)
    throw ProtocolViolation("client: repeat index mismatch");
  return Expected{*m, m->payload.contains("body") ? m->payload.at("body")
                                                  : json::object()};
}

}  // namespace

ClientResult run_alice_client(const ClientOptions& opts,
                              const AlicePolicy& policy) {
  ClientResult result;
  try {
    opts.params.validate();
    Channel ch(tcp_connect(opts.host, opts.port, opts.timeout_ms), "alice",
               opts.session_id);
    ch.send("hello", hello_payload(opts, "alice", policy.descriptor()));

    const ProtocolParams& params = opts.params;
    for (int r = 0; r < params.repetitions; ++r) {
      AliceSession alice(params, policy, opts.seed, r);
      Tick last_send_tick = 0;
      std::vector<std::uint64_t> handles(static_cast<size_t>(params.n), 0);

      for (int i = 0; i < params.n; ++i) {
        Expected q = client_expect(ch, "qubit", r, opts.timeout_ms);
        const auto handle = q.body.at("handle").get<std::uint64_t>();
        const Tick send_tick = q.body.at("send_tick").get<Tick>();
        last_send_tick = send_tick;
        handles[static_cast<size_t>(i)] = handle;
        const auto d = alice.on_qubit(i, send_tick);
        if (d.store) {
          alice.record_stored(i, send_tick);
          ch.send("store", wrap(r, json{{"index", i}, {"tick", send_tick}}));
          client_expect(ch, "store_ack", r, opts.timeout_ms);
          continue;
        }
        ch.send("measure", wrap(r, json{{"handle", handle},
                                        {"index", i},
                                        {"theta", canonical_real(d.theta)},
                                        {"tick", d.tick}}));
        Expected res = client_expect(ch, "result", r, opts.timeout_ms);
        if (res.body.at("lost").get<bool>()) {
          alice.record_lost(i, d.tick);
          ch.send("loss_declare", wrap(r, json{{"index", i}, {"tick", d.tick}}));
        } else {
          alice.record_outcome(i, res.body.at("outcome").get<int>(), d.tick,
                               res.body.at("late").get<bool>());
        }
      }

      std::optional<BroadcastMessage> broadcast;
      if (params.variant == Variant::C) {
        broadcast = BroadcastMessage{alice.broadcast_bit(), last_send_tick};
        ch.send("broadcast",
                wrap(r, json{{"bit", broadcast->bit}, {"tick", broadcast->tick}}));
      }

      const Tick reveal_tick = static_cast<Tick>(params.n - 1) *
                                   params.effective_pacing() +
                               params.storage_window + 1;
      while (auto deferred = alice.next_deferred()) {
        ch.send("measure",
                wrap(r, json{{"handle", handles[static_cast<size_t>(deferred->index)]},
                             {"index", deferred->index},
                             {"theta", canonical_real(deferred->theta)},
                             {"tick", reveal_tick}}));
        Expected res = client_expect(ch, "result", r, opts.timeout_ms);
        if (res.body.at("lost").get<bool>()) {
          alice.record_lost(deferred->index, reveal_tick);
          ch.send("loss_declare",
                  wrap(r, json{{"index", deferred->index}, {"tick", reveal_tick}}));
        } else {
          alice.record_deferred(deferred->index, res.body.at("outcome").get<int>(),
                                reveal_tick, res.body.at("late").get<bool>());
        }
      }

      RevealMessage reveal = alice.reveal(broadcast);
      ch.send("reveal", wrap(r, reveal_payload(reveal)));
      client_expect(ch, "verdict", r, opts.timeout_ms);
    }

    Expected ov = client_expect(ch, "overall_verdict", params.repetitions - 1,
                                opts.timeout_ms);
    result.overall = verdict_from_json(ov.body);
    client_expect(ch, "close", -1, opts.timeout_ms);
    result.ok = true;
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

ClientResult run_bob_client(const ClientOptions& opts, const BobPolicy& policy) {
  ClientResult result;
  try {
    opts.params.validate();
    Channel ch(tcp_connect(opts.host, opts.port, opts.timeout_ms), "bob",
               opts.session_id);
    ch.send("hello", hello_payload(opts, "bob", policy.descriptor()));

    const ProtocolParams& params = opts.params;
    std::vector<Verdict> verdicts;
    std::vector<int> bits;

    // Receives the next broker message, letting loss declarations through.
    auto recv_skipping_loss = [&](const std::string& type, int repeat) {
      while (true) {
        Expected e = client_expect(ch, "", repeat, opts.timeout_ms);
        if (e.msg.type == "loss") continue;
        if (e.msg.type != type)
          throw ProtocolViolation("client: expected " + type + ", got " +
                                  e.msg.type);
        return e;
      }
    };

    for (int r = 0; r < params.repetitions; ++r) {
      BobSession bob(params, policy, opts.seed, r);
      PrepRecord prep = bob.draw_preparations();

      for (int i = 0; i < params.n; ++i) {
        ch.send("prep", wrap(r, prep_payload(i, prep[static_cast<size_t>(i)])));
        recv_skipping_loss("receipt", r);
      }

      std::optional<BroadcastMessage> broadcast;
      if (params.variant == Variant::C) {
        Expected bm = recv_skipping_loss("broadcast", r);
        broadcast = BroadcastMessage{bm.body.at("bit").get<int>(),
                                     bm.body.at("tick").get<Tick>()};
        ch.send("guess", wrap(r, guess_payload(bob.guess(*broadcast))));
      }

      Expected rm = recv_skipping_loss("reveal", r);
      RevealMessage reveal;
      reveal.bit = rm.body.at("bit").get<int>();
      reveal.outcomes = rm.body.at("outcomes").get<std::vector<int>>();
      reveal.ticks = rm.body.at("ticks").get<std::vector<Tick>>();

      ch.send("escrow_request", wrap(r, json::object()));
      Expected em = client_expect(ch, "escrow", r, opts.timeout_ms);
      PrepRecord escrow;
      for (const auto& entry : em.body.at("entries")) {
        PrepEntry e;
        e.state = state_from_json(entry.at("state"));
        e.bit = entry.at("bit").get<int>();
        const std::string label = entry.at("label").get<std::string>();
        e.label = label == "Z"   ? BasisLabel::Z
                  : label == "X" ? BasisLabel::X
                                 : BasisLabel::None;
        e.send_tick = entry.at("send_tick").get<Tick>();
        escrow.push_back(e);
      }

      const Verdict verdict = bob.verify(escrow, reveal, broadcast);
      ch.send("verdict", wrap(r, verdict_to_json(verdict)));
      verdicts.push_back(verdict);
      bits.push_back(reveal.bit);
    }

    result.overall = combine_verdicts(params, verdicts, bits);
    ch.send("overall_verdict",
            wrap(params.repetitions - 1, verdict_to_json(result.overall)));
    client_expect(ch, "close", -1, opts.timeout_ms);
    result.ok = true;
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

}  // namespace qbc
