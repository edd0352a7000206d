#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "qbc/analysis.hpp"
#include "qbc/broker.hpp"

using namespace qbc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TestBroker {
  explicit TestBroker(int max_sessions, int timeout_ms = 5000,
                      std::string out_dir = "") {
    BrokerOptions opts;
    opts.port = 0;
    opts.max_sessions = max_sessions;
    opts.timeout_ms = timeout_ms;
    opts.out_dir = std::move(out_dir);
    server = std::make_unique<BrokerServer>(opts);
    thread = std::thread([this] { server->serve(); });
  }
  ~TestBroker() {
    server->stop();
    if (thread.joinable()) thread.join();
  }
  std::unique_ptr<BrokerServer> server;
  std::thread thread;
};

ClientOptions client_opts(const TestBroker& b, const std::string& session,
                          const ProtocolParams& params, std::uint64_t seed) {
  ClientOptions o;
  o.port = b.server->port();
  o.session_id = session;
  o.params = params;
  o.seed = seed;
  o.timeout_ms = 5000;
  return o;
}

// Raw scripted peer for misbehavior tests.
Channel raw_connect(const TestBroker& b, const std::string& role,
                    const std::string& session, const ProtocolParams& params,
                    std::uint64_t seed, const json& strategy) {
  Channel ch(tcp_connect("127.0.0.1", b.server->port(), 2000), role, session);
  ch.send("hello", json{{"params", params_to_json(params)},
                        {"role", role},
                        {"seed", seed},
                        {"strategy", strategy}});
  return ch;
}

}  // namespace

TEST_CASE("broker session matches the in-process engine byte for byte") {
  const auto dir = std::filesystem::temp_directory_path() / "qbc_broker_eq";
  std::filesystem::remove_all(dir);
  TestBroker broker(3, 5000, dir.string());

  int idx = 0;
  for (Variant v : {Variant::A, Variant::B, Variant::C}) {
    ProtocolParams params;
    params.variant = v;
    params.n = v == Variant::A ? 1 : 4;
    params.repetitions = 2;
    const std::uint64_t seed = 900 + static_cast<std::uint64_t>(idx);
    const std::string session = "eq" + std::to_string(idx++);

    const AlicePolicy alice = alice_honest(1);
    const BobPolicy bob = bob_honest_uniform();

    ClientResult ra, rb;
    std::thread ta([&] { ra = run_alice_client(client_opts(broker, session, params, seed), alice); });
    std::thread tb([&] { rb = run_bob_client(client_opts(broker, session, params, seed), bob); });
    ta.join();
    tb.join();
    REQUIRE(ra.ok);
    REQUIRE(rb.ok);
    CHECK(ra.overall.accept);
    CHECK(verdict_to_json(ra.overall) == verdict_to_json(rb.overall));

    const RunOutput inproc = run_with_transcript(params, alice, bob, seed, session);
    CHECK(verdict_to_json(inproc.verdict) == verdict_to_json(rb.overall));
    CHECK(slurp(dir / (session + ".jsonl")) == inproc.transcript.serialize());
  }
}

TEST_CASE("cross-mode equivalence with cheating strategies and noise") {
  const auto dir = std::filesystem::temp_directory_path() / "qbc_broker_eq2";
  std::filesystem::remove_all(dir);
  TestBroker broker(4, 5000, dir.string());

  struct Case {
    ProtocolParams params;
    AlicePolicy alice;
    BobPolicy bob;
  };
  std::vector<Case> cases;
  {
    ProtocolParams p;
    p.variant = Variant::A;
    cases.push_back({p, alice_postpone_guess(0), bob_honest_uniform()});
  }
  {
    ProtocolParams p;
    p.variant = Variant::C;
    p.n = 5;
    cases.push_back({p, alice_intermediate(), bob_chain_prime()});
  }
  {
    ProtocolParams p;
    p.variant = Variant::B;
    p.n = 3;
    cases.push_back({p, alice_store_later(1), bob_honest_uniform()});
  }
  {
    ProtocolParams p;
    p.variant = Variant::B;
    p.n = 6;
    p.noise = NoiseParams{0.1, 0.05, 0.3, 0.2};
    cases.push_back({p, alice_honest(0), bob_honest_uniform()});
  }

  for (size_t i = 0; i < cases.size(); ++i) {
    const std::string session = "mix" + std::to_string(i);
    const std::uint64_t seed = 7100 + i;
    ClientResult ra, rb;
    std::thread ta([&] {
      ra = run_alice_client(client_opts(broker, session, cases[i].params, seed),
                            cases[i].alice);
    });
    std::thread tb([&] {
      rb = run_bob_client(client_opts(broker, session, cases[i].params, seed),
                          cases[i].bob);
    });
    ta.join();
    tb.join();
    REQUIRE(ra.ok);
    REQUIRE(rb.ok);
    const RunOutput inproc = run_with_transcript(
        cases[i].params, cases[i].alice, cases[i].bob, seed, session);
    CHECK(slurp(dir / (session + ".jsonl")) == inproc.transcript.serialize());
    CHECK(verdict_to_json(inproc.verdict) == verdict_to_json(rb.overall));
  }
}

TEST_CASE("information firewall: alice-bound frames carry no amplitudes") {
  TestBroker broker(1, 2000);
  ProtocolParams params;
  params.variant = Variant::A;

  // scripted bob supplies one preparation; scripted alice inspects her frames
  std::thread bob_thread([&] {
    Channel bob = raw_connect(broker, "bob", "fw", params, 5,
                              bob_honest_uniform().descriptor());
    PrepEntry e{bb84_state(BasisLabel::X, 1), BasisLabel::X, 1, 0};
    bob.send("prep", json{{"body", prep_payload(0, e)}, {"repeat", 0}});
    // stop cooperating afterwards; the broker will abort on timeout or EOF
  });

  Channel alice = raw_connect(broker, "alice", "fw", params, 5,
                              alice_honest(0).descriptor());
  auto qubit = alice.recv(2000);
  REQUIRE(qubit.has_value());
  CHECK(qubit->type == "qubit");
  const json body = qubit->payload.at("body");
  CHECK(body.contains("handle"));
  CHECK(body.contains("index"));
  CHECK(body.contains("send_tick"));
  CHECK_FALSE(body.contains("state"));
  CHECK(body.size() == 3);  // exactly handle/index/send_tick
  alice.close();
  bob_thread.join();
}

TEST_CASE("double measurement over the wire aborts the session") {
  const auto dir = std::filesystem::temp_directory_path() / "qbc_broker_dm";
  std::filesystem::remove_all(dir);
  TestBroker broker(1, 2000, dir.string());
  ProtocolParams params;
  params.variant = Variant::B;
  params.n = 2;

  std::thread bob_thread([&] {
    Channel bob = raw_connect(broker, "bob", "dm", params, 6,
                              bob_honest_uniform().descriptor());
    PrepEntry e{bb84_state(BasisLabel::Z, 0), BasisLabel::Z, 0, 0};
    bob.send("prep", json{{"body", prep_payload(0, e)}, {"repeat", 0}});
    // wait for the abort
    while (auto m = bob.recv(3000)) {
      if (m->type == "abort") return;
    }
  });

  Channel alice = raw_connect(broker, "alice", "dm", params, 6,
                              alice_honest(0).descriptor());
  auto qubit = alice.recv(2000);
  REQUIRE(qubit.has_value());
  const auto handle = qubit->payload.at("body").at("handle").get<std::uint64_t>();
  const json measure{{"body",
                      json{{"handle", handle}, {"index", 0}, {"theta", "0"}, {"tick", 0}}},
                     {"repeat", 0}};
  alice.send("measure", measure);
  auto res = alice.recv(2000);
  REQUIRE(res.has_value());
  CHECK(res->type == "result");
  alice.send("measure", measure);  // same handle again
  auto reply = alice.recv(3000);
  REQUIRE(reply.has_value());
  CHECK(reply->type == "abort");
  bob_thread.join();

  // the transcript records the violation and the abort
  const Transcript t = Transcript::parse(slurp(dir / "dm.jsonl"));
  bool violation = false, abort_logged = false;
  for (const auto& m : t.messages) {
    violation |= m.type == MsgType::Violation &&
                 m.payload.at("kind") == "double_measurement";
    abort_logged |= m.type == MsgType::Abort;
  }
  CHECK(violation);
  CHECK(abort_logged);
}

TEST_CASE("early escrow request aborts instead of leaking preparations") {
  TestBroker broker(1, 2000);
  ProtocolParams params;
  params.variant = Variant::B;
  params.n = 2;

  std::thread alice_thread([&] {
    Channel alice = raw_connect(broker, "alice", "esc", params, 7,
                                alice_honest(0).descriptor());
    while (auto m = alice.recv(3000)) {
      if (m->type == "abort") return;
      if (m->type == "qubit") {
        const auto handle = m->payload.at("body").at("handle").get<std::uint64_t>();
        alice.send("measure",
                   json{{"body", json{{"handle", handle},
                                      {"index", m->payload.at("body").at("index")},
                                      {"theta", "0"},
                                      {"tick", m->payload.at("body").at("send_tick")}}},
                        {"repeat", 0}});
      }
    }
  });

  Channel bob = raw_connect(broker, "bob", "esc", params, 7,
                            bob_honest_uniform().descriptor());
  PrepEntry e{bb84_state(BasisLabel::Z, 0), BasisLabel::Z, 0, 0};
  bob.send("prep", json{{"body", prep_payload(0, e)}, {"repeat", 0}});
  auto receipt = bob.recv(2000);
  REQUIRE(receipt.has_value());
  CHECK(receipt->type == "receipt");
  bob.send("escrow_request", json{{"body", json::object()}, {"repeat", 0}});
  // the broker never answers with the escrow; the session dies instead
  auto reply = bob.recv(3000);
  REQUIRE(reply.has_value());
  CHECK(reply->type == "abort");
  alice_thread.join();
}

TEST_CASE("a silent peer stalls the session into an abort, never a verdict") {
  TestBroker broker(1, 400);  // short frame timeout
  ProtocolParams params;
  params.variant = Variant::A;

  // alice connects and then drops off the face of the earth
  Channel silent = raw_connect(broker, "alice", "stall", params, 8,
                               alice_honest(0).descriptor());

  ClientResult rb;
  std::thread tb([&] {
    rb = run_bob_client(client_opts(broker, "stall", params, 8),
                        bob_honest_uniform());
  });
  tb.join();
  CHECK_FALSE(rb.ok);
  CHECK_FALSE(rb.overall.accept);
  silent.close();
}

TEST_CASE("sequence gap from a peer aborts the session") {
  TestBroker broker(1, 2000);
  ProtocolParams params;
  params.variant = Variant::A;

  std::thread alice_thread([&] {
    Channel alice = raw_connect(broker, "alice", "gap", params, 9,
                                alice_honest(0).descriptor());
    while (auto m = alice.recv(3000)) {
      if (m->type == "abort") return;
    }
  });

  // bob sends hello (seq 0) then skips to seq 5
  Channel bob(tcp_connect("127.0.0.1", broker.server->port(), 2000), "bob", "gap");
  bob.send("hello", json{{"params", params_to_json(params)},
                         {"role", "bob"},
                         {"seed", 9},
                         {"strategy", bob_honest_uniform().descriptor()}});
  WireMessage skip;
  skip.session_id = "gap";
  skip.seq = 5;
  skip.sender = "bob";
  skip.type = "prep";
  PrepEntry e{bb84_state(BasisLabel::Z, 0), BasisLabel::Z, 0, 0};
  skip.payload = json{{"body", prep_payload(0, e)}, {"repeat", 0}};
  write_frame(bob.fd(), encode(skip));
  auto reply = bob.recv(3000);
  REQUIRE(reply.has_value());
  CHECK(reply->type == "abort");
  alice_thread.join();
}

TEST_CASE("escrow released to bob equals his submitted preparations") {
  TestBroker broker(1, 5000);
  ProtocolParams params;
  params.variant = Variant::B;
  params.n = 3;

  // run a real session; bob verifies against the released escrow internally,
  // so an honest run accepting is already evidence. Check stronger: verdicts
  // from both sides agree with a local recomputation.
  ClientResult ra, rb;
  std::thread ta([&] {
    ra = run_alice_client(client_opts(broker, "escrow", params, 10), alice_honest(0));
  });
  std::thread tb([&] {
    rb = run_bob_client(client_opts(broker, "escrow", params, 10),
                        bob_honest_uniform());
  });
  ta.join();
  tb.join();
  REQUIRE(ra.ok);
  REQUIRE(rb.ok);
  CHECK(rb.overall.accept);
  const RunOutput inproc = run_with_transcript(params, alice_honest(0),
                                               bob_honest_uniform(), 10, "escrow");
  CHECK(verdict_to_json(inproc.verdict) == verdict_to_json(rb.overall));
}
