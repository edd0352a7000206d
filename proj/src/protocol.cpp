#include "qbc/protocol.hpp"

#include <cmath>
#include <stdexcept>

namespace qbc {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
  }
  throw std::logic_error("bad variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Variant::A;
  if (s == "B" || s == "b") return Variant::B;
  if (s == "C" || s == "c") return Variant::C;
  throw std::domain_error("unknown variant: " + s);
}

void ProtocolParams::validate() const {
  if (n < 1) throw std::domain_error("params: n must be >= 1");
  if (variant == Variant::A && n != 1)
    throw std::domain_error("params: variant A runs on exactly one qubit");
  if (storage_window < 1)
    throw std::domain_error("params: storage_window must be >= 1");
  if (pacing < 0) throw std::domain_error("params: pacing must be >= 0");
  if (repetitions < 1) throw std::domain_error("params: repetitions must be >= 1");
  noise.validate();
}

double commit_basis_map(int v) {
  if (v != 0 && v != 1) throw std::domain_error("commit_basis_map: bit must be 0 or 1");
  return v == 0 ? kThetaZ : kThetaX;
}

BasisLabel commit_basis_label(int v) {
  if (v != 0 && v != 1)
    throw std::domain_error("commit_basis_label: bit must be 0 or 1");
  return v == 0 ? BasisLabel::Z : BasisLabel::X;
}

BasisLabel label_of_angle(double theta) {
  if (std::abs(theta - kThetaZ) <= kStateTol) return BasisLabel::Z;
  if (std::abs(theta - kThetaX) <= kStateTol) return BasisLabel::X;
  return BasisLabel::None;
}

std::vector<BasisLabel> derive_basis_chain(int b, std::span<const int> outcomes) {
  if (b != 0 && b != 1)
    throw std::domain_error("derive_basis_chain: bit must be 0 or 1");
  std::vector<BasisLabel> chain;
  chain.reserve(outcomes.size() + 1);
  int driver = b;
  chain.push_back(commit_basis_label(driver));
  for (int o : outcomes) {
    if (o == 0 || o == 1) driver = o;  // lost positions keep the last driver
    chain.push_back(commit_basis_label(driver));
  }
  return chain;
}

Verdict verify_reveal(const PrepRecord& prep, const RevealMessage& reveal,
                      const std::optional<BroadcastMessage>& broadcast,
                      const ProtocolParams& params) {
  const auto n = static_cast<size_t>(params.n);
  if (prep.size() != n || reveal.outcomes.size() != n || reveal.ticks.size() != n)
    throw ProtocolViolation("verify_reveal: malformed reveal (length mismatch)");
  if (reveal.bit != 0 && reveal.bit != 1)
    throw ProtocolViolation("verify_reveal: malformed reveal (bad bit)");

  Verdict v;
  const auto chain = derive_basis_chain(
      reveal.bit, std::span<const int>(reveal.outcomes.data(), n - 1));

  for (size_t i = 0; i < n; ++i) {
    const int o = reveal.outcomes[i];
    if (o == -1) {
      ++v.lost_count;
      continue;
    }
    if (reveal.ticks[i] > prep[i].send_tick + params.storage_window)
      v.timing_ok = false;
    const bool checkable =
        prep[i].label != BasisLabel::None && prep[i].label == chain[i];
    if (!checkable) continue;
    ++v.checkable_count;
    if (o != prep[i].bit) ++v.mismatch_count;
  }

  if (params.variant == Variant::C) {
    v.broadcast_ok = broadcast.has_value() &&
                     reveal.outcomes[n - 1] == broadcast->bit;
  }

  const auto thr = verify_with_threshold(
      ThresholdCounts{v.checkable_count, v.mismatch_count, v.lost_count,
                      params.n},
      params.noise);
  v.loss_ok = thr.loss_ok;

  v.accept = thr.accept && v.timing_ok && v.chain_ok && v.broadcast_ok;
  if (!thr.mismatch_ok)
    v.reject_reason = RejectReason::Mismatch;
  else if (!v.loss_ok)
    v.reject_reason = RejectReason::LossBound;
  else if (!v.timing_ok)
    v.reject_reason = RejectReason::Timing;
  else if (!v.broadcast_ok)
    v.reject_reason = RejectReason::Broadcast;
  return v;
}

ThresholdCounts verdict_counts(const Verdict& v, int n) {
  return ThresholdCounts{v.checkable_count, v.mismatch_count, v.lost_count, n};
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::Mismatch: return "mismatch";
    case RejectReason::Timing: return "timing";
    case RejectReason::Broadcast: return "broadcast";
    case RejectReason::LossBound: return "loss_bound";
    case RejectReason::Malformed: return "malformed";
    case RejectReason::ProtocolViolation: return "protocol_violation";
    case RejectReason::BitDisagreement: return "bit_disagreement";
    case RejectReason::Aborted: return "aborted";
  }
  throw std::logic_error("bad reject reason");
}

RejectReason reject_reason_from_string(const std::string& s) {
  if (s == "none") return RejectReason::None;
  if (s == "mismatch") return RejectReason::Mismatch;
  if (s == "timing") return RejectReason::Timing;
  if (s == "broadcast") return RejectReason::Broadcast;
  if (s == "loss_bound") return RejectReason::LossBound;
  if (s == "malformed") return RejectReason::Malformed;
  if (s == "protocol_violation") return RejectReason::ProtocolViolation;
  if (s == "bit_disagreement") return RejectReason::BitDisagreement;
  if (s == "aborted") return RejectReason::Aborted;
  throw std::domain_error("unknown reject reason: " + s);
}

}  // namespace qbc
