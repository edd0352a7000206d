#pragma once

#include <stdexcept>
#include <string>

namespace qbc {

// CLI exit codes, one per error class (see README).
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 64,     // bad flags, bad preset, domain errors on inputs
  kExitParse = 65,     // malformed transcript / wire frame
  kExitResource = 66,  // enumeration or optimization guard tripped
  kExitProtocol = 67,  // protocol violation or aborted session
  kExitInternal = 70,
};

struct ResourceGuardError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed transcript line or wire frame; carries a 0-based line number or
// byte offset when known (-1 otherwise).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg, long where = -1)
      : std::runtime_error(where >= 0 ? msg + " (at " + std::to_string(where) + ")"
                                      : msg),
        where_(where) {}
  long where() const { return where_; }

 private:
  long where_;
};

struct ProtocolViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingleUseViolation : ProtocolViolation {
  using ProtocolViolation::ProtocolViolation;
};

struct CapabilityViolation : ProtocolViolation {
  using ProtocolViolation::ProtocolViolation;
};

struct PhaseViolation : ProtocolViolation {
  using ProtocolViolation::ProtocolViolation;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qbc
