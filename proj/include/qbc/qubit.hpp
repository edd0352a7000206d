#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>

#include "qbc/errors.hpp"
#include "qbc/rng.hpp"

namespace qbc {

using Complex = std::complex<double>;

// Pure state of one qubit: amplitudes of |0> and |1>.
using StateVector = Eigen::Vector2cd;

using Tick = std::int64_t;

inline constexpr double kStateTol = 1e-12;
inline constexpr Tick kNeverDecoheres = std::numeric_limits<Tick>::max();

// Measurement bases are rank-1 real rotations e0(t) = cos t|0> + sin t|1>,
// e1(t) = -sin t|0> + cos t|1>, with t in [0, pi).
inline constexpr double kThetaZ = 0.0;
inline constexpr double kThetaX = std::numbers::pi / 4;
inline constexpr double kThetaBreidbart = std::numbers::pi / 8;

enum class BasisLabel { Z, X, None };

inline bool is_normalized(const StateVector& psi, double tol = kStateTol) {
  return std::abs(psi.squaredNorm() - 1.0) <= tol;
}

// Squared overlap |<a|b>|^2; global-phase-insensitive state comparison.
inline double overlap2(const StateVector& a, const StateVector& b) {
  return std::norm(a.dot(b));
}

inline bool same_state(const StateVector& a, const StateVector& b,
                       double tol = kStateTol) {
  return std::abs(overlap2(a, b) - 1.0) <= tol;
}

// The four conjugate-basis states |0>, |1>, |+>, |->.
inline StateVector bb84_state(BasisLabel basis, int bit) {
  if ((basis != BasisLabel::Z && basis != BasisLabel::X) || bit < 0 || bit > 1)
    throw std::domain_error("bb84_state: basis must be Z or X, bit 0 or 1");
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  if (basis == BasisLabel::Z)
    return bit == 0 ? StateVector(1.0, 0.0) : StateVector(0.0, 1.0);
  return bit == 0 ? StateVector(inv_sqrt2, inv_sqrt2)
                  : StateVector(inv_sqrt2, -inv_sqrt2);
}

// Pure state cos(phi)|0> + sin(phi)|1>.
inline StateVector pure_state(double phi) {
  return StateVector(std::cos(phi), std::sin(phi));
}

inline std::pair<StateVector, StateVector> basis_vectors(double theta) {
  if (!(theta >= 0.0 && theta < std::numbers::pi))
    throw std::domain_error("basis_vectors: theta must lie in [0, pi)");
  const double c = std::cos(theta), s = std::sin(theta);
  return {StateVector(c, s), StateVector(-s, c)};
}

struct MeasurementBasis {
  double theta = kThetaZ;  // radians, [0, pi)
  StateVector e0() const { return basis_vectors(theta).first; }
  StateVector e1() const { return basis_vectors(theta).second; }
};

// Born rule: probability of outcome j when measuring psi at angle theta.
inline double outcome_probability(const StateVector& psi, double theta, int j) {
  if (j != 0 && j != 1) throw std::domain_error("outcome_probability: j must be 0 or 1");
  if (!is_normalized(psi))
    throw std::domain_error("outcome_probability: state is not normalized");
  auto [e0, e1] = basis_vectors(theta);
  const double p = overlap2(j == 0 ? e0 : e1, psi);
  return std::clamp(p, 0.0, 1.0);
}

struct Outcome {
  int bit = 0;
  StateVector post_state{1.0, 0.0};
  Tick tick = 0;
};

// Single-use carrier of a hidden qubit state. The measuring party sees only
// the id and deadline; amplitudes are reachable solely through measure().
class QubitHandle {
 public:
  QubitHandle(std::uint64_t id, StateVector state, Tick deadline)
      : id_(id), state_(std::move(state)), deadline_(deadline) {
    if (!is_normalized(state_))
      throw std::domain_error("QubitHandle: state is not normalized");
  }

  QubitHandle(const QubitHandle&) = delete;
  QubitHandle& operator=(const QubitHandle&) = delete;

  std::uint64_t id() const { return id_; }
  Tick deadline() const { return deadline_; }
  bool consumed() const { return consumed_.load(std::memory_order_acquire); }

  friend Outcome measure(QubitHandle&, double, Tick, Rng&);

 private:
  std::uint64_t id_;
  StateVector state_;
  Tick deadline_;
  std::atomic<bool> consumed_{false};
};

// Projective measurement at angle theta. Past the deadline the qubit has
// decohered: the outcome is uniform in whatever basis is chosen.
inline Outcome measure(QubitHandle& handle, double theta, Tick tick, Rng& rng) {
  auto [e0, e1] = basis_vectors(theta);
  if (handle.consumed_.exchange(true, std::memory_order_acq_rel))
    throw SingleUseViolation("measure: qubit handle already consumed");
  const double p0 = tick > handle.deadline_
                        ? 0.5
                        : outcome_probability(handle.state_, theta, 0);
  const int bit = uniform01(rng) < p0 ? 0 : 1;
  return Outcome{bit, bit == 0 ? e0 : e1, tick};
}

}  // namespace qbc
