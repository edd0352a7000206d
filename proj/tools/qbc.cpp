// qbc: command-line laboratory for the chained conjugate-basis bit
// commitment protocol. Subcommands: run, exact, attack, sweep, verify,
// broker, alice, bob. See README for the full usage and exit-code table.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "qbc/analysis.hpp"
#include "qbc/broker.hpp"
#include "qbc/engine.hpp"

namespace {

using namespace qbc;

struct CommonOpts {
  std::string variant = "A";
  int n = 1;
  int k = 1;
  long storage_window = 1;
  long pacing = 0;
  double loss = 0.0;
  double flip = 0.0;
  double loss_max = 0.0;
  double tau = 0.0;
  bool grant_storage = false;
  std::string alice = "honest:b=0";
  std::string bob = "uniform";
  std::uint64_t seed = 1;
};

void add_param_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--variant", o.variant, "protocol variant: A, B or C");
  cmd->add_option("--n", o.n, "qubits per session");
  cmd->add_option("--k", o.k, "repetitions");
  cmd->add_option("--storage-window", o.storage_window,
                  "ticks a qubit survives after send");
  cmd->add_option("--pacing", o.pacing,
                  "ticks between sends (0: storage window)");
  cmd->add_option("--loss", o.loss, "per-qubit transmission loss probability");
  cmd->add_option("--flip", o.flip, "per-measurement outcome flip probability");
  cmd->add_option("--loss-max", o.loss_max, "allowed declared-loss fraction");
  cmd->add_option("--tau", o.tau, "allowed mismatch fraction");
  cmd->add_flag("--grant-storage", o.grant_storage,
                "physics honors long-term storage (no decoherence deadline)");
  cmd->add_option("--seed", o.seed, "master seed");
}

void add_strategy_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--alice", o.alice,
                  "committer preset, e.g. honest:b=0, postpone:measure_as=0,"
                  "open_as=1, intermediate:theta=0.3927, store-later:open_as=1");
  cmd->add_option("--bob", o.bob,
                  "verifier preset, e.g. uniform, chain-prime:state=Z0, "
                  "custom:angles=0.1;0.2");
}

ProtocolParams build_params(const CommonOpts& o) {
  ProtocolParams p;
  p.variant = variant_from_string(o.variant);
  p.n = o.n;
  p.repetitions = o.k;
  p.storage_window = o.storage_window;
  p.pacing = o.pacing;
  p.noise.loss = o.loss;
  p.noise.flip = o.flip;
  p.noise.loss_max = o.loss_max;
  p.noise.tau = o.tau;
  p.granted.long_term_storage = o.grant_storage;
  p.validate();
  return p;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::domain_error("cannot open for writing: " + path);
  out << bytes;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::domain_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string verdict_line(const Verdict& v) {
  std::ostringstream out;
  out << "verdict: " << (v.accept ? "accept" : "reject");
  if (!v.accept) out << " (" << to_string(v.reject_reason) << ")";
  out << " checkable=" << v.checkable_count << " mismatch=" << v.mismatch_count
      << " lost=" << v.lost_count;
  return out.str();
}

std::pair<std::string, int> split_host_port(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos)
    throw std::domain_error("address must be host:port, got: " + addr);
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

int cmd_run(const CommonOpts& o, const std::string& out_path,
            const std::string& session_id) {
  const ProtocolParams params = build_params(o);
  const AlicePolicy alice = alice_from_spec(o.alice);
  const BobPolicy bob = bob_from_spec(o.bob);
  const RunOutput run =
      run_with_transcript(params, alice, bob, o.seed, session_id);
  if (!out_path.empty()) write_file(out_path, run.transcript.serialize());
  std::cout << verdict_line(run.verdict) << "\n";
  return kExitOk;
}

int cmd_exact(const CommonOpts& o, const std::string& metric, int target,
              int grid) {
  const ProtocolParams params = build_params(o);
  const BobPolicy bob = bob_from_spec(o.bob);
  if (metric == "alice-open-success") {
    AlicePolicy alice = alice_from_spec(o.alice);
    const int t = target >= 0 ? target : alice.open_target;
    const double v = alice_open_success(params, bob, alice, t);
    std::cout << "alice-open-success(target=" << t << ") = " << pretty_value(v)
              << "\n";
    return kExitOk;
  }
  if (metric == "bob-guess") {
    const double v = bob_guess_probability(params, bob);
    std::cout << "bob-guess = " << pretty_value(v) << "\n";
    return kExitOk;
  }
  if (metric == "bob-guess-optimized") {
    const OptimizeResult r = optimize_bob_prep(params, grid);
    std::cout << "bob-guess-optimized(grid=" << grid
              << ") = " << pretty_value(r.value) << " angles=";
    for (size_t i = 0; i < r.angles.size(); ++i)
      std::cout << (i ? ";" : "") << canonical_real(r.angles[i]);
    std::cout << "\n";
    return kExitOk;
  }
  throw std::domain_error("unknown exact metric: " + metric);
}

int cmd_attack(const CommonOpts& o, const std::string& metric_name, long trials,
               const std::string& out_path, bool bias) {
  const ProtocolParams params = build_params(o);
  const AlicePolicy alice = alice_from_spec(o.alice);
  const BobPolicy bob = bob_from_spec(o.bob);
  const Metric metric = metric_from_string(metric_name);
  const SecurityReport rep =
      monte_carlo_estimate(params, alice, bob, metric, trials, o.seed);

  std::cout << "metric:     " << rep.metric << "\n"
            << "strategies: " << alice.name() << " vs " << bob.name() << "\n"
            << "variant " << to_string(params.variant) << ", n=" << params.n
            << ", k=" << params.repetitions << "\n"
            << "trials:     " << rep.trials << "  seed: " << rep.seed << "\n"
            << "estimate:   " << canonical_real(rep.estimate) << " (stderr "
            << canonical_real(rep.stderr_value) << ")\n";
  if (rep.exact)
    std::cout << "exact:      " << pretty_value(*rep.exact) << "\n"
              << "consistent: " << (rep.consistent ? "yes" : "NO") << "\n";

  json out_lines = json::array();
  out_lines.push_back(rep.to_json());

  if (bias) {
    std::vector<SessionResult> sessions;
    sessions.reserve(static_cast<size_t>(params.repetitions));
    for (int r = 0; r < params.repetitions; ++r)
      sessions.push_back(run_session(params, alice, bob, o.seed, r));
    const BiasTest t = basis_bias_test(sessions, params);
    std::cout << "bias-test:  pooled=" << t.pooled << " matches=" << t.matches
              << " z=" << canonical_real(t.statistic)
              << " p=" << canonical_real(t.p_value) << "\n";
    out_lines.push_back(json{{"matches", t.matches},
                             {"metric", "basis-bias-test"},
                             {"p_value", canonical_real(t.p_value)},
                             {"pooled", t.pooled},
                             {"statistic", canonical_real(t.statistic)}});
  }

  if (!out_path.empty()) {
    std::string bytes;
    for (const auto& line : out_lines) bytes += canonical_dump(line) + "\n";
    write_file(out_path, bytes);
  }
  return kExitOk;
}

struct SweepOpts {
  std::string param;
  double from = 0, to = 0;
  long steps = 0;
  std::string values;  // semicolon list overriding from/to/steps
  std::string metric;
  long trials = 0;
  int grid = 32;
  int target = -1;
  std::string out_path;
};

std::vector<double> sweep_grid(const SweepOpts& s) {
  std::vector<double> vals;
  if (!s.values.empty()) {
    std::stringstream ss(s.values);
    std::string tok;
    while (std::getline(ss, tok, ';')) vals.push_back(std::stod(tok));
  } else if (s.steps > 0) {
    for (long i = 0; i < s.steps; ++i)
      vals.push_back(s.steps == 1
                         ? s.from
                         : s.from + (s.to - s.from) * static_cast<double>(i) /
                               static_cast<double>(s.steps - 1));
  }
  if (vals.empty())
    throw std::domain_error("sweep: empty range (need --values or --from/--to/--steps)");
  return vals;
}

int cmd_sweep(const CommonOpts& base, const SweepOpts& s) {
  const std::vector<double> grid = sweep_grid(s);

  auto point_opts = [&](double v) {
    CommonOpts o = base;
    if (s.param == "n") o.n = static_cast<int>(v);
    else if (s.param == "k") o.k = static_cast<int>(v);
    else if (s.param == "epsilon") o.flip = v;
    else if (s.param == "lambda") o.loss = v;
    else if (s.param == "theta")
      o.alice = "intermediate:theta=" + canonical_real(v);
    else if (s.param != "grid")
      throw std::domain_error("sweep: unknown parameter: " + s.param);
    return o;
  };

  auto run_point = [&](size_t idx) -> std::string {
    const double v = grid[idx];
    const CommonOpts o = point_opts(v);
    const int point_grid = s.param == "grid" ? static_cast<int>(v) : s.grid;
    const ProtocolParams params = build_params(o);
    const BobPolicy bob = bob_from_spec(o.bob);

    SecurityReport rep;
    rep.metric = s.metric;
    rep.seed = o.seed;
    rep.trials = s.trials;
    if (s.metric == "bob-guess") {
      rep.exact = bob_guess_probability(params, bob);
      rep.estimate = *rep.exact;
    } else if (s.metric == "bob-guess-optimized") {
      const OptimizeResult r = optimize_bob_prep(params, point_grid);
      rep.exact = r.value;
      rep.estimate = r.value;
    } else if (s.metric == "alice-open-success") {
      AlicePolicy alice = alice_from_spec(o.alice);
      const int t = s.target >= 0 ? s.target : alice.open_target;
      AlicePolicy opened = alice;
      opened.open_target = t;
      rep.exact = alice_open_success(params, bob, opened, t);
      rep.estimate = *rep.exact;
      if (s.trials > 0)
        rep = monte_carlo_estimate(params, opened, bob,
                                   Metric::AliceOpenSuccess, s.trials, o.seed);
    } else {
      const AlicePolicy alice = alice_from_spec(o.alice);
      if (s.trials <= 0)
        throw std::domain_error("sweep: metric " + s.metric + " needs --trials");
      rep = monte_carlo_estimate(params, alice, bob,
                                 metric_from_string(s.metric), s.trials, o.seed);
    }
    rep.params = json{{"alice", alice_from_spec(o.alice).descriptor()},
                      {"bob", bob.descriptor()},
                      {"protocol", params_to_json(params)}};

    std::ostringstream repro;
    repro << "qbc sweep --param " << s.param << " --values " << canonical_real(v)
          << " --metric " << s.metric << " --variant " << o.variant << " --n "
          << o.n << " --k " << o.k << " --alice '" << o.alice << "' --bob '"
          << o.bob << "' --seed " << o.seed;
    if (s.trials > 0) repro << " --trials " << s.trials;
    if (s.metric == "bob-guess-optimized") repro << " --grid " << point_grid;

    std::string quoted_repro = "\"";
    for (char c : repro.str()) quoted_repro += c == '"' ? std::string("\"\"") : std::string(1, c);
    quoted_repro += "\"";
    return s.param + "," + canonical_real(v) + "," + rep.csv_row() + "," +
           quoted_repro;
  };

  // Points run concurrently; the output keeps grid order.
  std::vector<std::string> rows(grid.size());
  const size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (size_t base_idx = 0; base_idx < grid.size(); base_idx += workers) {
    std::vector<std::future<std::string>> futs;
    for (size_t i = base_idx; i < std::min(base_idx + workers, grid.size()); ++i)
      futs.push_back(std::async(std::launch::async, run_point, i));
    for (size_t i = 0; i < futs.size(); ++i) rows[base_idx + i] = futs[i].get();
  }

  std::string csv = "param,value," + SecurityReport::csv_header() + ",repro\n";
  for (const auto& r : rows) csv += r + "\n";
  if (!s.out_path.empty()) write_file(s.out_path, csv);
  else std::cout << csv;
  return kExitOk;
}

int cmd_verify(const std::string& in_path, bool replay) {
  const Transcript t = Transcript::parse(read_file(in_path));
  const ReplayData data = extract_replay(t);

  bool all_match = true;
  std::vector<Verdict> recomputed;
  std::vector<int> bits;
  for (size_t r = 0; r < data.repeats.size(); ++r) {
    const auto& rep = data.repeats[r];
    const Verdict v =
        verify_reveal(rep.prep, rep.reveal, rep.broadcast, data.params);
    recomputed.push_back(v);
    bits.push_back(rep.reveal.bit);
    const bool match =
        rep.logged_verdict && verdict_to_json(*rep.logged_verdict) == verdict_to_json(v);
    all_match = all_match && match;
    std::cout << "repeat " << r << ": " << verdict_line(v)
              << (match ? "" : "  [differs from logged verdict]") << "\n";
  }
  const Verdict overall = combine_verdicts(data.params, recomputed, bits);
  const bool overall_match =
      data.logged_overall &&
      verdict_to_json(*data.logged_overall) == verdict_to_json(overall);
  all_match = all_match && overall_match;
  std::cout << "overall: " << verdict_line(overall)
            << (overall_match ? "" : "  [differs from logged verdict]") << "\n";

  if (replay) {
    const AlicePolicy alice = AlicePolicy::from_descriptor(data.alice_descriptor);
    const BobPolicy bob = BobPolicy::from_descriptor(data.bob_descriptor);
    const RunOutput rerun = run_with_transcript(data.params, alice, bob,
                                                data.seed, data.session_id);
    const bool identical = rerun.transcript.serialize() == t.serialize();
    std::cout << "replay: " << (identical ? "byte-identical" : "DIFFERS") << "\n";
    all_match = all_match && identical;
  }
  return all_match ? kExitOk : kExitProtocol;
}

int cmd_broker(const std::string& listen, const std::string& out_dir,
               int timeout_ms, int max_sessions) {
  auto [host, port] = split_host_port(listen);
  BrokerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.out_dir = out_dir;
  opts.timeout_ms = timeout_ms;
  opts.max_sessions = max_sessions;
  BrokerServer server(opts);
  std::cout << "listening on " << host << ":" << server.port() << std::endl;
  server.serve();
  return kExitOk;
}

int cmd_client(bool is_alice, const CommonOpts& o, const std::string& connect,
               const std::string& session_id, int timeout_ms) {
  auto [host, port] = split_host_port(connect);
  ClientOptions copts;
  copts.host = host;
  copts.port = port;
  copts.session_id = session_id;
  copts.params = build_params(o);
  copts.seed = o.seed;
  copts.timeout_ms = timeout_ms;
  const ClientResult res =
      is_alice ? run_alice_client(copts, alice_from_spec(o.alice))
               : run_bob_client(copts, bob_from_spec(o.bob));
  if (!res.ok) {
    std::cerr << (is_alice ? "alice" : "bob") << ": " << res.error << "\n";
    return kExitProtocol;
  }
  std::cout << verdict_line(res.overall) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale laboratory for a chained conjugate-basis quantum "
               "bit commitment protocol"};
  app.require_subcommand(1);

  CommonOpts o;

  auto* run = app.add_subcommand("run", "run sessions and write a transcript");
  add_param_flags(run, o);
  add_strategy_flags(run, o);
  std::string out_path, session_id = "session";
  run->add_option("--out", out_path, "transcript output path (JSONL)");
  run->add_option("--session", session_id, "session identifier");

  auto* exact = app.add_subcommand("exact", "print an exactly enumerated metric");
  add_param_flags(exact, o);
  add_strategy_flags(exact, o);
  std::string metric = "alice-open-success";
  int target = -1, grid = 32;
  exact->add_option("--metric", metric,
                    "alice-open-success | bob-guess | bob-guess-optimized");
  exact->add_option("--target", target, "bit to open (alice-open-success)");
  exact->add_option("--grid", grid, "grid resolution (bob-guess-optimized)");

  auto* attack = app.add_subcommand("attack", "Monte Carlo attack evaluation");
  add_param_flags(attack, o);
  add_strategy_flags(attack, o);
  std::string attack_metric = "overall-success", attack_out;
  long trials = 100000;
  bool bias = false;
  attack->add_option("--metric", attack_metric,
                     "alice-open-success | bob-guess | honest-accept | "
                     "overall-success");
  attack->add_option("--trials", trials, "Monte Carlo trials");
  attack->add_option("--out", attack_out, "machine-readable report path");
  attack->add_flag("--bias-test", bias,
                   "pool uncheckable positions over k repeats and test for bias");

  auto* sweep = app.add_subcommand("sweep", "sweep one parameter, emit CSV");
  add_param_flags(sweep, o);
  add_strategy_flags(sweep, o);
  SweepOpts sw;
  sweep->add_option("--param", sw.param, "n | k | epsilon | lambda | theta | grid")
      ->required();
  sweep->add_option("--from", sw.from, "range start");
  sweep->add_option("--to", sw.to, "range end");
  sweep->add_option("--steps", sw.steps, "number of grid points");
  sweep->add_option("--values", sw.values, "explicit list a;b;c");
  sweep->add_option("--metric", sw.metric, "metric per point")->required();
  sweep->add_option("--trials", sw.trials, "Monte Carlo trials per point");
  sweep->add_option("--grid", sw.grid, "optimizer grid resolution");
  sweep->add_option("--target", sw.target, "bit to open (alice-open-success)");
  sweep->add_option("--out", sw.out_path, "CSV output path");

  auto* verify = app.add_subcommand("verify", "recompute a transcript's verdicts");
  std::string in_path;
  bool replay = false;
  verify->add_option("--in", in_path, "transcript path")->required();
  verify->add_flag("--replay", replay, "also re-run and compare bytes");

  auto* broker = app.add_subcommand("broker", "serve sessions as the physics broker");
  std::string listen = "127.0.0.1:0", out_dir;
  int timeout_ms = 10000, max_sessions = 0;
  broker->add_option("--listen", listen, "host:port (port 0 picks one)");
  broker->add_option("--out-dir", out_dir, "directory for session transcripts");
  broker->add_option("--timeout-ms", timeout_ms, "frame timeout");
  broker->add_option("--max-sessions", max_sessions, "exit after N sessions");

  auto* alice = app.add_subcommand("alice", "run the committer process");
  add_param_flags(alice, o);
  add_strategy_flags(alice, o);
  std::string connect = "127.0.0.1:7177", client_session = "session";
  int client_timeout = 10000;
  alice->add_option("--connect", connect, "broker address host:port");
  alice->add_option("--session", client_session, "session identifier");
  alice->add_option("--timeout-ms", client_timeout, "frame timeout");

  auto* bob = app.add_subcommand("bob", "run the verifier process");
  add_param_flags(bob, o);
  add_strategy_flags(bob, o);
  bob->add_option("--connect", connect, "broker address host:port");
  bob->add_option("--session", client_session, "session identifier");
  bob->add_option("--timeout-ms", client_timeout, "frame timeout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(o, out_path, session_id);
    if (exact->parsed()) return cmd_exact(o, metric, target, grid);
    if (attack->parsed())
      return cmd_attack(o, attack_metric, trials, attack_out, bias);
    if (sweep->parsed()) return cmd_sweep(o, sw);
    if (verify->parsed()) return cmd_verify(in_path, replay);
    if (broker->parsed())
      return cmd_broker(listen, out_dir, timeout_ms, max_sessions);
    if (alice->parsed())
      return cmd_client(true, o, connect, client_session, client_timeout);
    if (bob->parsed())
      return cmd_client(false, o, connect, client_session, client_timeout);
  } catch (const ResourceGuardError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitResource;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ProtocolViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
