#include "qbc/engine.hpp"

#include <algorithm>
#include <cassert>

namespace qbc {

PhysicsCore::PhysicsCore(const ProtocolParams& params, std::uint64_t seed,
                         int repeat)
    : params_(params),
      physics_rng_(make_stream(seed, "physics", static_cast<std::uint64_t>(repeat))),
      noise_rng_(make_stream(seed, "noise", static_cast<std::uint64_t>(repeat))) {}

PhysicsCore::Sent PhysicsCore::send(int index, const StateVector& state,
                                    Tick send_tick) {
  if (static_cast<size_t>(index) != entries_.size())
    throw ProtocolViolation("physics: preparations must arrive in index order");
  const Tick deadline = params_.granted.long_term_storage
                            ? kNeverDecoheres
                            : send_tick + params_.storage_window;
  const bool lost =
      params_.noise.loss > 0.0 && apply_loss(noise_rng_, params_.noise.loss);
  const std::uint64_t id = entries_.size() + 1;
  entries_.emplace_back(id, state, deadline, lost);
  return Sent{id, deadline, lost};
}

PhysicsCore::MeasureResult PhysicsCore::measure(std::uint64_t handle_id,
                                                double theta, Tick tick) {
  if (handle_id == 0 || handle_id > entries_.size())
    throw ProtocolViolation("physics: unknown qubit handle");
  Entry& e = entries_[handle_id - 1];
  if (e.lost) {
    // A lost carrier never clicks; the attempt consumes the handle but no
    // quantum randomness.
    if (e.touched)
      throw SingleUseViolation("physics: qubit handle already consumed");
    e.touched = true;
    return MeasureResult{-1, false, true};
  }
  const bool late = tick > e.handle.deadline();
  Outcome out = qbc::measure(e.handle, theta, tick, physics_rng_);
  int bit = out.bit;
  if (params_.noise.flip > 0.0)
    bit = flip_outcome(bit, params_.noise.flip, noise_rng_);
  return MeasureResult{bit, late, false};
}

bool PhysicsCore::lost(std::uint64_t handle_id) const {
  if (handle_id == 0 || handle_id > entries_.size())
    throw ProtocolViolation("physics: unknown qubit handle");
  return entries_[handle_id - 1].lost;
}

AliceSession::AliceSession(const ProtocolParams& params, AlicePolicy policy,
                           std::uint64_t seed, int repeat)
    : params_(params),
      policy_(std::move(policy)),
      rng_(make_stream(seed, "alice", static_cast<std::uint64_t>(repeat))) {
  record_.bit = policy_.kind == AliceKind::StoreLater ? policy_.open_target
                                                      : policy_.commit_bit;
  record_.entries.resize(static_cast<size_t>(params_.n));
  history_.assign(static_cast<size_t>(params_.n), -1);
}

AliceSession::Decision AliceSession::on_qubit(int index, Tick send_tick) {
  if (policy_.defers_measurement()) return Decision{kThetaZ, send_tick, true};
  const double theta = policy_.commit_angle(index, history(index));
  // Without storage technology the policy measures on arrival.
  return Decision{theta, send_tick, false};
}

void AliceSession::record_outcome(int index, int bit, Tick tick, bool late) {
  auto& e = record_.entries[static_cast<size_t>(index)];
  e.theta = policy_.commit_angle(index, history(index));
  e.outcome = bit;
  e.tick = tick;
  e.arrival_tick = tick;
  e.measured = true;
  e.late = late;
  history_[static_cast<size_t>(index)] = bit;
}

void AliceSession::record_lost(int index, Tick tick) {
  auto& e = record_.entries[static_cast<size_t>(index)];
  e.lost = true;
  e.tick = tick;
  e.arrival_tick = tick;
  history_[static_cast<size_t>(index)] = -1;
}

void AliceSession::record_stored(int index, Tick arrival) {
  auto& e = record_.entries[static_cast<size_t>(index)];
  e.arrival_tick = arrival;
  e.tick = arrival;
}

int AliceSession::broadcast_bit() {
  const auto& last = record_.entries.back();
  if (policy_.defers_measurement()) return uniform_bit(rng_);
  if (last.lost) return -1;
  return last.outcome;
}

std::optional<AliceSession::Deferred> AliceSession::next_deferred() const {
  if (!policy_.defers_measurement()) return std::nullopt;
  for (int i = 0; i < params_.n; ++i) {
    const auto& e = record_.entries[static_cast<size_t>(i)];
    if (!e.measured && !e.lost)
      return Deferred{i, policy_.commit_angle(i, history(i))};
  }
  return std::nullopt;
}

void AliceSession::record_deferred(int index, int bit, Tick tick, bool late) {
  auto& e = record_.entries[static_cast<size_t>(index)];
  e.theta = policy_.commit_angle(index, history(index));
  e.outcome = bit;
  e.tick = tick;
  e.measured = true;
  e.late = late;
  history_[static_cast<size_t>(index)] = bit;
}

RevealMessage AliceSession::reveal(
    const std::optional<BroadcastMessage>& broadcast) {
  return policy_.make_reveal(policy_.open_target, record_, broadcast, params_,
                             rng_);
}

BobSession::BobSession(const ProtocolParams& params, BobPolicy policy,
                       std::uint64_t seed, int repeat)
    : params_(params),
      policy_(std::move(policy)),
      rng_(make_stream(seed, "bob", static_cast<std::uint64_t>(repeat))) {}

PrepRecord BobSession::draw_preparations() {
  PrepRecord prep;
  prep.reserve(static_cast<size_t>(params_.n));
  const Tick pacing = params_.effective_pacing();
  for (int i = 0; i < params_.n; ++i)
    prep.push_back(policy_.prepare(i, static_cast<Tick>(i) * pacing, rng_));
  return prep;
}

int BobSession::guess(const BroadcastMessage& broadcast) {
  if (policy_.kind == BobKind::HonestUniform || broadcast.bit == -1)
    return uniform_bit(rng_);
  // Maximum likelihood over the broadcast bit, given this preparation.
  std::vector<StateVector> states;
  states.reserve(static_cast<size_t>(params_.n));
  PrepDistribution dist = policy_.prep_distribution(params_.n);
  for (const auto& d : dist) states.push_back(d.front().state);
  const double q0 = honest_last_outcome_p0(states, 0);
  const double q1 = honest_last_outcome_p0(states, 1);
  const double l0 = broadcast.bit == 0 ? q0 : 1.0 - q0;
  const double l1 = broadcast.bit == 0 ? q1 : 1.0 - q1;
  if (std::abs(l0 - l1) <= 1e-15) return uniform_bit(rng_);
  return l0 > l1 ? 0 : 1;
}

Verdict BobSession::verify(const PrepRecord& prep, const RevealMessage& reveal,
                           const std::optional<BroadcastMessage>& broadcast) const {
  return verify_reveal(prep, reveal, broadcast, params_);
}

namespace {

struct SessionContext {
  PhysicsCore physics;
  AliceSession alice;
  BobSession bob;
  std::vector<std::uint64_t> handles;
};

void log_commit(TranscriptBuilder* log, int repeat, const json& payload) {
  if (log) log->log(MsgType::Commit, Role::Alice, Role::Broker, repeat, payload);
}

std::pair<CommitRecord, std::optional<BroadcastMessage>> commit_phase_impl(
    const ProtocolParams& params, const PrepRecord& prep, SessionContext& ctx,
    int repeat, TranscriptBuilder* log) {
  for (int i = 0; i < params.n; ++i) {
    const PrepEntry& pe = prep[static_cast<size_t>(i)];
    if (log)
      log->log(MsgType::Prep, Role::Bob, Role::Broker, repeat,
               prep_payload(i, pe));
    const auto sent = ctx.physics.send(i, pe.state, pe.send_tick);
    ctx.handles.push_back(sent.handle_id);
    if (log)
      log->log(MsgType::Qubit, Role::Broker, Role::Alice, repeat,
               qubit_payload(i, sent.handle_id, pe.send_tick));

    const auto decision = ctx.alice.on_qubit(i, pe.send_tick);
    if (decision.store) {
      ctx.alice.record_stored(i, pe.send_tick);
      log_commit(log, repeat, commit_stored_payload(i, pe.send_tick));
      continue;
    }
    const auto res =
        ctx.physics.measure(sent.handle_id, decision.theta, decision.tick);
    if (res.lost) {
      ctx.alice.record_lost(i, decision.tick);
      log_commit(log, repeat,
                 commit_lost_payload(i, decision.theta, decision.tick));
      if (log)
        log->log(MsgType::Loss, Role::Alice, Role::Bob, repeat,
                 loss_payload(i, decision.tick));
      continue;
    }
    ctx.alice.record_outcome(i, res.bit, decision.tick, res.late);
    log_commit(log, repeat,
               commit_measured_payload(i, decision.theta, res.bit,
                                       decision.tick, res.late));
    if (log && res.late)
      log->log(MsgType::Violation, Role::Broker, Role::Broker, repeat,
               violation_payload("late_measurement", i));
  }

  std::optional<BroadcastMessage> broadcast;
  if (params.variant == Variant::C) {
    broadcast =
        BroadcastMessage{ctx.alice.broadcast_bit(), prep.back().send_tick};
    if (log)
      log->log(MsgType::Broadcast, Role::Alice, Role::Bob, repeat,
               broadcast_payload(*broadcast));
  }
  return {ctx.alice.record(), broadcast};
}

}  // namespace

std::pair<CommitRecord, std::optional<BroadcastMessage>> run_commit_phase(
    const ProtocolParams& params, const PrepRecord& prep,
    const AlicePolicy& alice, std::uint64_t seed, int repeat,
    TranscriptBuilder* log) {
  params.validate();
  if (prep.size() != static_cast<size_t>(params.n))
    throw std::domain_error("run_commit_phase: prep length != n");
  SessionContext ctx{PhysicsCore(params, seed, repeat),
                     AliceSession(params, alice, seed, repeat),
                     BobSession(params, bob_honest_uniform(), seed, repeat),
                     {}};
  return commit_phase_impl(params, prep, ctx, repeat, log);
}

SessionResult run_session(const ProtocolParams& params,
                          const AlicePolicy& alice, const BobPolicy& bob,
                          std::uint64_t seed, int repeat,
                          TranscriptBuilder* log) {
  params.validate();
  SessionContext ctx{PhysicsCore(params, seed, repeat),
                     AliceSession(params, alice, seed, repeat),
                     BobSession(params, bob, seed, repeat),
                     {}};

  SessionResult result;
  result.prep = ctx.bob.draw_preparations();
  auto [commit, broadcast] =
      commit_phase_impl(params, result.prep, ctx, repeat, log);
  result.broadcast = broadcast;

  if (broadcast) {
    result.bob_guess = ctx.bob.guess(*broadcast);
    if (log)
      log->log(MsgType::Guess, Role::Bob, Role::Broker, repeat,
               guess_payload(*result.bob_guess));
  }

  // Reveal phase. A deferring policy measures its stored qubits now, past
  // every storage deadline unless the physics granted long-term storage.
  const Tick reveal_tick = static_cast<Tick>(params.n - 1) *
                               params.effective_pacing() +
                           params.storage_window + 1;
  while (auto deferred = ctx.alice.next_deferred()) {
    const auto res = ctx.physics.measure(
        ctx.handles[static_cast<size_t>(deferred->index)], deferred->theta,
        reveal_tick);
    if (res.lost) {
      ctx.alice.record_lost(deferred->index, reveal_tick);
      log_commit(log, repeat,
                 commit_lost_payload(deferred->index, deferred->theta,
                                     reveal_tick));
      if (log)
        log->log(MsgType::Loss, Role::Alice, Role::Bob, repeat,
                 loss_payload(deferred->index, reveal_tick));
      continue;
    }
    ctx.alice.record_deferred(deferred->index, res.bit, reveal_tick, res.late);
    log_commit(log, repeat,
               commit_measured_payload(deferred->index, deferred->theta,
                                       res.bit, reveal_tick, res.late));
    if (log && res.late)
      log->log(MsgType::Violation, Role::Broker, Role::Broker, repeat,
               violation_payload("late_measurement", deferred->index));
  }
  result.commit = ctx.alice.record();

  result.reveal = ctx.alice.reveal(result.broadcast);
  if (log)
    log->log(MsgType::Reveal, Role::Alice, Role::Bob, repeat,
             reveal_payload(result.reveal));

  result.verdict = ctx.bob.verify(result.prep, result.reveal, result.broadcast);
  if (log)
    log->log(MsgType::Verdict, Role::Bob, Role::Alice, repeat,
             verdict_to_json(result.verdict));
  return result;
}

Verdict combine_verdicts(const ProtocolParams& params,
                         std::span<const Verdict> verdicts,
                         std::span<const int> revealed_bits) {
  if (verdicts.empty() || verdicts.size() != revealed_bits.size())
    throw std::domain_error("combine_verdicts: length mismatch");

  Verdict overall;
  overall.timing_ok = overall.broadcast_ok = overall.chain_ok = true;
  ThresholdCounts pooled;
  bool unanimous = true;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    const Verdict& v = verdicts[i];
    overall.checkable_count += v.checkable_count;
    overall.mismatch_count += v.mismatch_count;
    overall.lost_count += v.lost_count;
    overall.timing_ok = overall.timing_ok && v.timing_ok;
    overall.chain_ok = overall.chain_ok && v.chain_ok;
    overall.broadcast_ok = overall.broadcast_ok && v.broadcast_ok;
    if (revealed_bits[i] != revealed_bits[0]) unanimous = false;
  }
  pooled.checkable = overall.checkable_count;
  pooled.mismatch = overall.mismatch_count;
  pooled.lost = overall.lost_count;
  pooled.total = static_cast<long>(params.n) * static_cast<long>(verdicts.size());
  const auto thr = verify_with_threshold(pooled, params.noise);
  overall.loss_ok = thr.loss_ok;

  overall.accept = unanimous && thr.accept && overall.timing_ok &&
                   overall.chain_ok && overall.broadcast_ok;
  if (!unanimous)
    overall.reject_reason = RejectReason::BitDisagreement;
  else if (!thr.mismatch_ok)
    overall.reject_reason = RejectReason::Mismatch;
  else if (!thr.loss_ok)
    overall.reject_reason = RejectReason::LossBound;
  else if (!overall.timing_ok)
    overall.reject_reason = RejectReason::Timing;
  else if (!overall.broadcast_ok)
    overall.reject_reason = RejectReason::Broadcast;
  return overall;
}

RepeatedResult run_repeated(const ProtocolParams& params,
                            const AlicePolicy& alice, const BobPolicy& bob,
                            std::uint64_t seed, TranscriptBuilder* log) {
  params.validate();
  RepeatedResult out;
  std::vector<Verdict> verdicts;
  std::vector<int> bits;
  for (int r = 0; r < params.repetitions; ++r) {
    out.repeats.push_back(run_session(params, alice, bob, seed, r, log));
    verdicts.push_back(out.repeats.back().verdict);
    bits.push_back(out.repeats.back().reveal.bit);
  }
  out.overall = combine_verdicts(params, verdicts, bits);
  if (log)
    log->log(MsgType::OverallVerdict, Role::Bob, Role::Alice,
             params.repetitions - 1, verdict_to_json(out.overall));
  return out;
}

bool repeated_overall_success(const ProtocolParams& params,
                              const AlicePolicy& alice, const BobPolicy& bob,
                              std::uint64_t seed) {
  params.validate();
  std::vector<Verdict> verdicts;
  std::vector<int> bits;
  verdicts.reserve(static_cast<size_t>(params.repetitions));
  for (int r = 0; r < params.repetitions; ++r) {
    SessionResult s = run_session(params, alice, bob, seed, r);
    // Noise-free, the pooled rule degenerates to "every repeat accepts".
    if (!params.noise.enabled() && !s.verdict.accept) return false;
    verdicts.push_back(s.verdict);
    bits.push_back(s.reveal.bit);
    if (r > 0 && bits[static_cast<size_t>(r)] != bits[0]) return false;
  }
  return combine_verdicts(params, verdicts, bits).accept;
}

RunOutput run_with_transcript(const ProtocolParams& params,
                              const AlicePolicy& alice, const BobPolicy& bob,
                              std::uint64_t seed,
                              const std::string& session_id) {
  params.validate();
  TranscriptBuilder log(make_header(params, alice, bob, seed, session_id));
  RunOutput out;
  out.detail = run_repeated(params, alice, bob, seed, &log);
  out.verdict = out.detail.overall;
  out.transcript = log.take();
  return out;
}

}  // namespace qbc
