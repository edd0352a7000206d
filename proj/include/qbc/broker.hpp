#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "qbc/engine.hpp"
#include "qbc/wire.hpp"

namespace qbc {

// The broker is simulation scaffolding, not a cryptographic component: it
// plays the role of physics so that Alice and Bob can run as separate
// processes with a real trust boundary. It holds hidden qubit states,
// enforces single measurement and storage deadlines, and escrows Bob's
// preparation record until the reveal phase.

struct BrokerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0: pick an ephemeral port
  std::string out_dir;  // transcript files per session; empty: don't write
  int timeout_ms = 10000;
  int max_sessions = 0;  // 0: serve until stop()
};

class BrokerServer {
 public:
  explicit BrokerServer(const BrokerOptions& opts);
  ~BrokerServer();

  int port() const { return port_; }
  // Blocking accept loop; returns once max_sessions sessions finished or
  // stop() was called.
  void serve();
  void stop() { stop_.store(true); }

 private:
  void pair_or_park(int fd);

  BrokerOptions opts_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<int> completed_{0};
  std::mutex mu_;
  struct Pending {
    int fd;
    WireMessage hello;
  };
  std::unordered_map<std::string, Pending> waiting_;
  std::vector<std::thread> threads_;
};

struct ClientOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string session_id = "session";
  ProtocolParams params;
  std::uint64_t seed = 0;
  int timeout_ms = 10000;
};

struct ClientResult {
  bool ok = false;
  Verdict overall;
  std::string error;
};

// Drive one full session (all repeats) as the committer / verifier process.
ClientResult run_alice_client(const ClientOptions& opts, const AlicePolicy& policy);
ClientResult run_bob_client(const ClientOptions& opts, const BobPolicy& policy);

}  // namespace qbc
