#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "qbc/canonical.hpp"

namespace qbc {

// One frame on the wire. Frames are length-prefixed (4-byte big-endian)
// canonical JSON; identical messages encode to identical bytes.
struct WireMessage {
  int schema_version = 1;
  std::string session_id;
  std::uint64_t seq = 0;  // per-sender, starts at 0, no gaps
  std::string sender;     // "alice" | "bob" | "broker"
  std::string type;
  json payload;

  bool operator==(const WireMessage&) const = default;
};

std::string encode(const WireMessage& m);
// Throws ParseError (with byte offset where available) on malformed input.
WireMessage decode(std::string_view bytes);

struct FrameTimeout : ProtocolViolation {
  using ProtocolViolation::ProtocolViolation;
};

inline constexpr std::uint32_t kMaxFrameBytes = 1u << 24;

// Blocking frame I/O over a connected socket. read_frame returns nullopt on
// clean EOF, throws FrameTimeout if the timeout elapses (including mid-frame)
// and ParseError on a truncated or oversized frame.
void write_frame(int fd, std::string_view bytes);
std::optional<std::string> read_frame(int fd, int timeout_ms);

// Minimal TCP helpers (IPv4).
int tcp_listen(const std::string& host, int port);
int tcp_bound_port(int fd);
int tcp_accept(int fd, int timeout_ms);  // -1 on timeout
int tcp_connect(const std::string& host, int port, int timeout_ms);

// Sequenced frame channel: stamps outgoing seq numbers and rejects gaps,
// duplicates and schema mismatches on the way in.
class Channel {
 public:
  Channel() = default;
  Channel(int fd, std::string sender_role, std::string session_id);
  ~Channel();

  Channel(Channel&& other) noexcept;
  Channel& operator=(Channel&& other) noexcept;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void send(const std::string& type, json payload);
  // nullopt on clean EOF.
  std::optional<WireMessage> recv(int timeout_ms);

  // Used when the first frame was consumed outside the channel (hello
  // handling): continue the incoming sequence after last_seq.
  void prime_recv(std::uint64_t last_seq) {
    recv_seq_ = last_seq;
    recv_started_ = true;
  }

  int fd() const { return fd_; }
  void close();

 private:
  int fd_ = -1;
  std::string role_;
  std::string session_id_;
  std::uint64_t send_seq_ = 0;
  std::uint64_t recv_seq_ = 0;
  bool recv_started_ = false;
};

}  // namespace qbc
