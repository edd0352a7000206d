#include "qbc/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace qbc {

std::string encode(const WireMessage& m) {
  json j{{"payload", m.payload},     {"schema_version", m.schema_version},
         {"sender", m.sender},       {"seq", m.seq},
         {"session_id", m.session_id}, {"type", m.type}};
  return canonical_dump(j);
}

WireMessage decode(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("wire: bad JSON: ") + e.what(),
                     static_cast<long>(e.byte));
  }
  WireMessage m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    m.session_id = j.at("session_id").get<std::string>();
    m.seq = j.at("seq").get<std::uint64_t>();
    m.sender = j.at("sender").get<std::string>();
    m.type = j.at("type").get<std::string>();
    m.payload = j.at("payload");
  } catch (const json::exception& e) {
    throw ParseError(std::string("wire: malformed message: ") + e.what());
  }
  return m;
}

namespace {

void wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  const int rc = ::poll(&p, 1, timeout_ms);
  if (rc == 0) throw FrameTimeout("wire: frame timeout");
  if (rc < 0) throw ProtocolViolation(std::string("wire: poll: ") + std::strerror(errno));
}

// Reads exactly len bytes; returns false on immediate clean EOF.
bool read_exact(int fd, char* buf, size_t len, int timeout_ms, bool* mid_frame) {
  size_t got = 0;
  while (got < len) {
    wait_readable(fd, timeout_ms);
    const ssize_t rc = ::recv(fd, buf + got, len - got, 0);
    if (rc == 0) {
      if (got == 0 && !*mid_frame) return false;
      throw ParseError("wire: truncated frame", static_cast<long>(got));
    }
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ProtocolViolation(std::string("wire: recv: ") + std::strerror(errno));
    }
    got += static_cast<size_t>(rc);
    *mid_frame = true;
  }
  return true;
}

}  // namespace

void write_frame(int fd, std::string_view bytes) {
  if (bytes.size() > kMaxFrameBytes)
    throw ProtocolViolation("wire: frame too large");
  unsigned char hdr[4];
  const auto len = static_cast<std::uint32_t>(bytes.size());
  hdr[0] = static_cast<unsigned char>(len >> 24);
  hdr[1] = static_cast<unsigned char>(len >> 16);
  hdr[2] = static_cast<unsigned char>(len >> 8);
  hdr[3] = static_cast<unsigned char>(len);
  std::string out(reinterpret_cast<char*>(hdr), 4);
  out.append(bytes);
  size_t sent = 0;
  while (sent < out.size()) {
    const ssize_t rc = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw ProtocolViolation(std::string("wire: send: ") + std::strerror(errno));
    }
    sent += static_cast<size_t>(rc);
  }
}

std::optional<std::string> read_frame(int fd, int timeout_ms) {
  char hdr[4];
  bool mid_frame = false;
  if (!read_exact(fd, hdr, 4, timeout_ms, &mid_frame)) return std::nullopt;
  const std::uint32_t len =
      (static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[0])) << 24) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[1])) << 16) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[2])) << 8) |
      static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[3]));
  if (len > kMaxFrameBytes) throw ParseError("wire: oversized frame");
  std::string body(len, '\0');
  if (len > 0 && !read_exact(fd, body.data(), len, timeout_ms, &mid_frame))
    return std::nullopt;
  return body;
}

int tcp_listen(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ProtocolViolation(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::domain_error("tcp_listen: bad IPv4 address: " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw ProtocolViolation("bind: " + err);
  }
  if (::listen(fd, 64) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw ProtocolViolation("listen: " + err);
  }
  return fd;
}

int tcp_bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0)
    throw ProtocolViolation(std::string("getsockname: ") + std::strerror(errno));
  return ntohs(addr.sin_port);
}

int tcp_accept(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  const int rc = ::poll(&p, 1, timeout_ms);
  if (rc == 0) return -1;
  if (rc < 0) throw ProtocolViolation(std::string("poll: ") + std::strerror(errno));
  const int conn = ::accept(fd, nullptr, nullptr);
  if (conn < 0) throw ProtocolViolation(std::string("accept: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(conn, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return conn;
}

int tcp_connect(const std::string& host, int port, int timeout_ms) {
  (void)timeout_ms;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ProtocolViolation(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::domain_error("tcp_connect: bad IPv4 address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw ProtocolViolation("connect: " + err);
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

Channel::Channel(int fd, std::string sender_role, std::string session_id)
    : fd_(fd), role_(std::move(sender_role)), session_id_(std::move(session_id)) {}

Channel::~Channel() { close(); }

Channel::Channel(Channel&& other) noexcept { *this = std::move(other); }

Channel& Channel::operator=(Channel&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    role_ = std::move(other.role_);
    session_id_ = std::move(other.session_id_);
    send_seq_ = other.send_seq_;
    recv_seq_ = other.recv_seq_;
    recv_started_ = other.recv_started_;
    other.fd_ = -1;
  }
  return *this;
}

void Channel::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Channel::send(const std::string& type, json payload) {
  WireMessage m;
  m.session_id = session_id_;
  m.seq = send_seq_++;
  m.sender = role_;
  m.type = type;
  m.payload = std::move(payload);
  write_frame(fd_, encode(m));
}

std::optional<WireMessage> Channel::recv(int timeout_ms) {
  auto bytes = read_frame(fd_, timeout_ms);
  if (!bytes) return std::nullopt;
  WireMessage m = decode(*bytes);
  if (m.schema_version != 1)
    throw ProtocolViolation("wire: unsupported schema version");
  const std::uint64_t expected = recv_started_ ? recv_seq_ + 1 : 0;
  if (m.seq != expected)
    throw ProtocolViolation("wire: sequence gap or duplicate from " + m.sender);
  recv_seq_ = m.seq;
  recv_started_ = true;
  return m;
}

}  // namespace qbc
