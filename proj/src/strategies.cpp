#include "qbc/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace qbc {

namespace {

int chain_driver(int b, std::span<const int> history) {
  int d = b;
  for (int o : history)
    if (o == 0 || o == 1) d = o;
  return d;
}

// "name:key=v,key=v" -> (name, {key: v})
std::pair<std::string, std::map<std::string, std::string>> parse_spec(
    const std::string& spec) {
  std::map<std::string, std::string> kv;
  auto colon = spec.find(':');
  std::string name = spec.substr(0, colon);
  if (colon != std::string::npos) {
    std::stringstream rest(spec.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos)
        throw std::domain_error("bad strategy option (expected key=value): " + item);
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return {name, kv};
}

int parse_bit(const std::string& s, const char* what) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw std::domain_error(std::string(what) + " must be 0 or 1, got: " + s);
}

}  // namespace

std::string AlicePolicy::name() const {
  switch (kind) {
    case AliceKind::Honest: return "honest";
    case AliceKind::PostponeGuess: return "postpone-guess";
    case AliceKind::Intermediate: return "intermediate";
    case AliceKind::StoreLater: return "store-later";
  }
  throw std::logic_error("bad alice kind");
}

double AlicePolicy::commit_angle(int index, std::span<const int> history) const {
  if (index < 0 || static_cast<size_t>(index) != history.size())
    throw std::domain_error("commit_angle: history length must equal index");
  switch (kind) {
    case AliceKind::Honest:
    case AliceKind::PostponeGuess:
      return commit_basis_map(chain_driver(commit_bit, history));
    case AliceKind::Intermediate:
      return theta;
    case AliceKind::StoreLater:
      return commit_basis_map(chain_driver(open_target, history));
  }
  throw std::logic_error("bad alice kind");
}

bool AlicePolicy::truthful_claims(int target) const {
  switch (kind) {
    case AliceKind::Honest: return true;
    case AliceKind::PostponeGuess: return target == commit_bit;
    case AliceKind::Intermediate: return true;
    case AliceKind::StoreLater: return true;
  }
  throw std::logic_error("bad alice kind");
}

int AlicePolicy::claimed_bit(int target) const {
  return kind == AliceKind::Honest ? commit_bit : target;
}

RevealMessage AlicePolicy::make_reveal(
    int target, const CommitRecord& record,
    const std::optional<BroadcastMessage>& broadcast,
    const ProtocolParams& params, Rng& rng) const {
  const size_t n = record.entries.size();
  RevealMessage r;
  r.bit = claimed_bit(target);
  r.outcomes.reserve(n);
  r.ticks.reserve(n);

  const bool truthful = truthful_claims(target);
  for (const auto& e : record.entries) {
    if (e.lost) {
      r.outcomes.push_back(-1);
      r.ticks.push_back(e.arrival_tick);
      continue;
    }
    r.outcomes.push_back(truthful ? e.outcome : uniform_bit(rng));
    // StoreLater measured past the arrival tick but claims arrival times.
    r.ticks.push_back(kind == AliceKind::StoreLater ? e.arrival_tick : e.tick);
  }

  // Broadcast variant: StoreLater had no outcome when it was forced to
  // broadcast, so it echoes the broadcast bit at the last position.
  if (params.variant == Variant::C && kind == AliceKind::StoreLater &&
      broadcast && n > 0 && !record.entries.back().lost) {
    r.outcomes[n - 1] = broadcast->bit;
  }
  return r;
}

json AlicePolicy::descriptor() const {
  json p = json::object();
  switch (kind) {
    case AliceKind::Honest:
      p["b"] = commit_bit;
      break;
    case AliceKind::PostponeGuess:
      p["measure_as"] = commit_bit;
      p["open_as"] = open_target;
      break;
    case AliceKind::Intermediate:
      p["theta"] = canonical_real(theta);
      p["open_as"] = open_target;
      break;
    case AliceKind::StoreLater:
      p["open_as"] = open_target;
      break;
  }
  if (declared.long_term_storage) p["declares_storage"] = true;
  if (declared.qnd_detection) p["declares_qnd"] = true;
  return json{{"name", name()}, {"params", p}};
}

AlicePolicy AlicePolicy::from_descriptor(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  const json& p = j.at("params");
  if (name == "honest") return alice_honest(p.at("b").get<int>());
  if (name == "postpone-guess")
    return alice_postpone_guess(p.at("measure_as").get<int>(),
                                p.at("open_as").get<int>());
  if (name == "intermediate")
    return alice_intermediate(parse_real(p.at("theta")), p.at("open_as").get<int>());
  if (name == "store-later") return alice_store_later(p.at("open_as").get<int>());
  throw std::domain_error("unknown alice strategy: " + name);
}

AlicePolicy alice_honest(int b) {
  if (b != 0 && b != 1) throw std::domain_error("alice_honest: b must be 0 or 1");
  AlicePolicy a;
  a.kind = AliceKind::Honest;
  a.commit_bit = b;
  a.open_target = b;
  return a;
}

AlicePolicy alice_postpone_guess(int measure_as, int open_as) {
  if (measure_as != 0 && measure_as != 1)
    throw std::domain_error("alice_postpone_guess: measure_as must be 0 or 1");
  if (open_as == -1) open_as = 1 - measure_as;
  if (open_as != 0 && open_as != 1)
    throw std::domain_error("alice_postpone_guess: open_as must be 0 or 1");
  AlicePolicy a;
  a.kind = AliceKind::PostponeGuess;
  a.commit_bit = measure_as;
  a.open_target = open_as;
  return a;
}

AlicePolicy alice_intermediate(double theta, int open_as) {
  // theta = 0 is allowed: it degenerates to the postpone-guess profile.
  if (!(theta >= 0.0 && theta <= kThetaX))
    throw std::domain_error("alice_intermediate: theta must lie in [0, pi/4]");
  if (open_as != 0 && open_as != 1)
    throw std::domain_error("alice_intermediate: open_as must be 0 or 1");
  AlicePolicy a;
  a.kind = AliceKind::Intermediate;
  a.theta = theta;
  a.open_target = open_as;
  return a;
}

AlicePolicy alice_store_later(int open_as, Capabilities declared) {
  if (open_as != 0 && open_as != 1)
    throw std::domain_error("alice_store_later: open_as must be 0 or 1");
  if (!declared.long_term_storage)
    throw CapabilityViolation(
        "alice_store_later: strategy requires declaring long-term storage");
  AlicePolicy a;
  a.kind = AliceKind::StoreLater;
  a.open_target = open_as;
  a.declared = declared;
  return a;
}

std::string BobPolicy::name() const {
  switch (kind) {
    case BobKind::HonestUniform: return "honest-uniform";
    case BobKind::ChainPrime: return "chain-prime";
    case BobKind::CustomPure: return "custom-pure";
  }
  throw std::logic_error("bad bob kind");
}

PrepEntry BobPolicy::prepare(int index, Tick send_tick, Rng& rng) const {
  PrepEntry e;
  e.send_tick = send_tick;
  switch (kind) {
    case BobKind::HonestUniform: {
      const std::uint64_t u = rng();
      e.label = (u & 1) ? BasisLabel::X : BasisLabel::Z;
      e.bit = static_cast<int>((u >> 1) & 1);
      e.state = bb84_state(e.label, e.bit);
      return e;
    }
    case BobKind::ChainPrime: {
      e.state = prime_state;
      std::tie(e.label, e.bit) = bb84_label_of(prime_state);
      return e;
    }
    case BobKind::CustomPure: {
      if (index < 0 || static_cast<size_t>(index) >= angles.size())
        throw std::domain_error("bob prepare: index out of range of angle list");
      e.state = pure_state(angles[index]);
      std::tie(e.label, e.bit) = bb84_label_of(e.state);
      return e;
    }
  }
  throw std::logic_error("bad bob kind");
}

PrepDistribution BobPolicy::prep_distribution(int n) const {
  PrepDistribution dist(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    switch (kind) {
      case BobKind::HonestUniform:
        for (BasisLabel l : {BasisLabel::Z, BasisLabel::X})
          for (int b : {0, 1})
            dist[i].push_back({bb84_state(l, b), 0.25, l, b});
        break;
      case BobKind::ChainPrime: {
        auto [l, b] = bb84_label_of(prime_state);
        dist[i].push_back({prime_state, 1.0, l, b});
        break;
      }
      case BobKind::CustomPure: {
        if (static_cast<size_t>(n) != angles.size())
          throw std::domain_error("bob prep_distribution: n != angle count");
        StateVector s = pure_state(angles[i]);
        auto [l, b] = bb84_label_of(s);
        dist[i].push_back({s, 1.0, l, b});
        break;
      }
    }
  }
  return dist;
}

json BobPolicy::descriptor() const {
  json p = json::object();
  switch (kind) {
    case BobKind::HonestUniform:
      break;
    case BobKind::ChainPrime:
      p["state"] = state_to_json(prime_state);
      break;
    case BobKind::CustomPure: {
      json arr = json::array();
      for (double a : angles) arr.push_back(canonical_real(a));
      p["angles"] = arr;
      break;
    }
  }
  return json{{"name", name()}, {"params", p}};
}

BobPolicy BobPolicy::from_descriptor(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  const json& p = j.at("params");
  if (name == "honest-uniform") return bob_honest_uniform();
  if (name == "chain-prime") return bob_chain_prime(state_from_json(p.at("state")));
  if (name == "custom-pure") {
    std::vector<double> angles;
    for (const auto& v : p.at("angles")) angles.push_back(parse_real(v));
    return bob_custom_pure(std::move(angles));
  }
  throw std::domain_error("unknown bob strategy: " + name);
}

BobPolicy bob_honest_uniform() { return BobPolicy{}; }

BobPolicy bob_chain_prime(const StateVector& state) {
  if (!is_normalized(state))
    throw std::domain_error("bob_chain_prime: state is not normalized");
  BobPolicy b;
  b.kind = BobKind::ChainPrime;
  b.prime_state = state;
  return b;
}

BobPolicy bob_custom_pure(std::vector<double> angles) {
  if (angles.empty())
    throw std::domain_error("bob_custom_pure: angle list must not be empty");
  BobPolicy b;
  b.kind = BobKind::CustomPure;
  b.angles = std::move(angles);
  return b;
}

std::pair<BasisLabel, int> bb84_label_of(const StateVector& s) {
  for (BasisLabel l : {BasisLabel::Z, BasisLabel::X})
    for (int bit : {0, 1})
      if (same_state(s, bb84_state(l, bit))) return {l, bit};
  return {BasisLabel::None, -1};
}

double honest_last_outcome_p0(std::span<const StateVector> prep, int b) {
  if (prep.empty()) throw std::domain_error("honest_last_outcome_p0: empty prep");
  // Walk the chain: track P(driver bit) position by position.
  std::array<double, 2> driver{0.0, 0.0};
  driver[b] = 1.0;
  std::array<double, 2> last{};
  for (size_t i = 0; i < prep.size(); ++i) {
    std::array<double, 2> next{0.0, 0.0};
    for (int d : {0, 1}) {
      if (driver[d] == 0.0) continue;
      const double theta = commit_basis_map(d);
      for (int o : {0, 1})
        next[o] += driver[d] * outcome_probability(prep[i], theta, o);
    }
    driver = next;
    last = next;
  }
  return last[0];
}

AlicePolicy alice_from_spec(const std::string& spec) {
  auto [name, kv] = parse_spec(spec);
  auto get = [&kv](const char* key, const char* dflt) -> std::string {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  };
  if (name == "honest") return alice_honest(parse_bit(get("b", "0"), "b"));
  if (name == "postpone" || name == "postpone-guess") {
    int measure_as = parse_bit(get("measure_as", "0"), "measure_as");
    std::string open = get("open_as", "flip");
    int open_as = (open == "flip") ? -1 : parse_bit(open, "open_as");
    return alice_postpone_guess(measure_as, open_as);
  }
  if (name == "intermediate") {
    double theta = std::stod(get("theta", "0.39269908169872414"));  // pi/8
    return alice_intermediate(theta, parse_bit(get("open_as", "0"), "open_as"));
  }
  if (name == "store-later" || name == "store_later")
    return alice_store_later(parse_bit(get("open_as", "1"), "open_as"));
  throw std::domain_error("unknown alice strategy: " + name);
}

BobPolicy bob_from_spec(const std::string& spec) {
  auto [name, kv] = parse_spec(spec);
  if (name == "uniform" || name == "honest-uniform") return bob_honest_uniform();
  if (name == "chain-prime" || name == "chain_prime") {
    if (auto it = kv.find("state"); it != kv.end()) {
      const std::string& s = it->second;
      if (s.size() == 2 && (s[0] == 'Z' || s[0] == 'X') && (s[1] == '0' || s[1] == '1'))
        return bob_chain_prime(
            bb84_state(s[0] == 'Z' ? BasisLabel::Z : BasisLabel::X, s[1] - '0'));
      throw std::domain_error("chain-prime state must be Z0, Z1, X0 or X1");
    }
    if (auto it = kv.find("phi"); it != kv.end())
      return bob_chain_prime(pure_state(std::stod(it->second)));
    return bob_chain_prime();
  }
  if (name == "custom" || name == "custom-pure") {
    auto it = kv.find("angles");
    if (it == kv.end())
      throw std::domain_error("custom-pure needs angles=a;b;c");
    std::vector<double> angles;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ';')) angles.push_back(std::stod(tok));
    return bob_custom_pure(std::move(angles));
  }
  throw std::domain_error("unknown bob strategy: " + name);
}

}  // namespace qbc
