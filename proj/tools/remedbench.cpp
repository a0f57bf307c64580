// remedbench: suite generation, benchmark runs, grading, toy training,
// reports and transcript replay.
//
// Exit codes: 0 success, 1 run errors (an episode carried an error tag, a
// replay diverged, or I/O failed mid-run), 2 configuration errors.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "remed/bench/bench.hpp"
#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/common/text.hpp"
#include "remed/policy/policy.hpp"
#include "remed/rft/train.hpp"
#include "remed/sim/topology.hpp"

namespace fs = std::filesystem;
using namespace remed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRun = 1;
constexpr int kExitConfig = 2;

// Thrown for bad input before any work starts.
struct ConfigFailure {
  std::string message;
};

[[noreturn]] void config_fail(const std::string& m) { throw ConfigFailure{m}; }

fault::Difficulty difficulty_of(const std::string& s) {
  const auto d = fault::parse_difficulty(s);
  if (!d) config_fail(fmt::format("unknown difficulty '{}' (easy, medium, hard)", s));
  return *d;
}

sim::Topology topology_of(const std::string& s) {
  try {
    return sim::resolve_topology(s);
  } catch (const Error& e) {
    config_fail(fmt::format("topology '{}': {}", s, e.what()));
  }
}

struct RunFlags {
  std::string topology = "simple-micro";
  std::string difficulty = "easy";
  std::uint64_t seed = 1;
  std::string policy = "expert";
  std::uint64_t policy_seed = 1;
  int t_max = 1;
  bool no_probe = false;
  bool no_reflection = false;
  std::string weights = "1,0.1,0.1,0.5,2";
  std::int64_t token_budget = rft::kDefaultTokenBudget;
  std::string endpoint_env = "REMED_LLM";
  int jobs = 1;
  std::string checkpoint;
  std::string transcript;
  std::string out = "out";
  std::string mode = "oracle";
  int probe_budget = 5;
  int settle_steps = 10;
  bool greedy = false;
  bool quiet = false;
  bool agreement = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--topology", f.topology, "bundled topology id or YAML path")->capture_default_str();
  cmd->add_option("--difficulty", f.difficulty, "easy | medium | hard")->capture_default_str();
  cmd->add_option("--seed", f.seed, "suite seed")->capture_default_str();
  cmd->add_option("--policy", f.policy, "expert | expert-template | noop | toy | llm | replay")->capture_default_str();
  cmd->add_option("--policy-seed", f.policy_seed, "sampling seed for the toy policy")->capture_default_str();
  cmd->add_option("--t-max", f.t_max, "retries after the first attempt")->capture_default_str();
  cmd->add_flag("--no-probe", f.no_probe, "disable probing");
  cmd->add_flag("--no-reflection", f.no_reflection, "disable reflection (no retries)");
  cmd->add_option("--weights", f.weights, "reward weights a,b,g,d,l")->capture_default_str();
  cmd->add_option("--token-budget", f.token_budget, "token budget for r_eff")->capture_default_str();
  cmd->add_option("--endpoint-env", f.endpoint_env, "env prefix for <P>_URL, <P>_API_KEY, <P>_MODEL")
      ->capture_default_str();
  cmd->add_option("--jobs", f.jobs, "concurrent episodes")->capture_default_str();
  cmd->add_option("--checkpoint", f.checkpoint, "toy policy checkpoint");
  cmd->add_option("--transcript", f.transcript, "transcript for --policy replay");
  cmd->add_option("--out", f.out, "output root; runs go to <out>/<manifest hash>/")->capture_default_str();
  cmd->add_option("--mode", f.mode, "verification mode: oracle | observable")->capture_default_str();
  cmd->add_option("--probe-budget", f.probe_budget, "probe queries per attempt")->capture_default_str();
  cmd->add_option("--settle-steps", f.settle_steps, "sim steps between execution and verification")
      ->capture_default_str();
  cmd->add_flag("--greedy", f.greedy, "toy policy takes the argmax instead of sampling");
  cmd->add_flag("--quiet", f.quiet, "no per-episode progress lines");
  cmd->add_flag("--agreement", f.agreement, "also measure observable-vs-oracle verdict agreement on the suite");
}

bench::PolicyConfig policy_config(const RunFlags& f) {
  bench::PolicyConfig pc;
  pc.kind = f.policy;
  pc.seed = f.policy_seed;
  pc.checkpoint_path = f.checkpoint;
  pc.transcript_path = f.transcript;
  pc.endpoint_env = f.endpoint_env;
  pc.greedy = f.greedy;
  return pc;
}

bench::RunManifest manifest_of(const RunFlags& f, const sim::Topology& topo, const bench::PolicyConfig& pc) {
  bench::RunManifest m;
  m.topology_id = topo.id;
  m.topology_digest = bench::topology_digest(topo);
  m.difficulty = difficulty_of(f.difficulty);
  m.suite_seed = f.seed;
  m.policy_id = bench::policy_id_for(pc);
  try {
    m.policy_config_hash = pc.hash();
    m.weights = rft::RewardWeights::parse(f.weights);
  } catch (const Error& e) {
    config_fail(e.what());
  }
  m.token_budget = f.token_budget;
  m.loop.t_max = f.t_max;
  m.loop.probing = !f.no_probe;
  m.loop.reflection = !f.no_reflection;
  m.loop.probe_budget = f.probe_budget;
  m.loop.settle_steps = f.settle_steps;
  const auto mode = loop::parse_verification_mode(f.mode);
  if (!mode) config_fail(fmt::format("unknown verification mode '{}'", f.mode));
  m.loop.mode = *mode;
  try {
    m.loop.validate();
  } catch (const Error& e) {
    config_fail(e.what());
  }
  if (f.jobs < 1) config_fail("--jobs must be >= 1");
  return m;
}

int cmd_topology_check(const std::string& id) {
  const auto topo = topology_of(id);
  std::size_t replicas = 0;
  for (const auto& s : topo.services) replicas += static_cast<std::size_t>(s.desired_replicas);
  fmt::print("topology {}: {} services, {} pods, {} links, digest {}\n", topo.id, topo.services.size(), replicas,
             topo.links.size(), hex64(bench::topology_digest(topo)));
  for (const auto& s : topo.services) {
    fmt::print("  {} x{} -> [{}]\n", s.name, s.desired_replicas, text::join(s.dependencies, ", "));
  }
  return kExitOk;
}

int cmd_suite_gen(const std::string& topology, const std::string& difficulty, std::uint64_t seed,
                  const std::string& out) {
  const auto topo = topology_of(topology);
  const auto suite = fault::gen_suite(topo, difficulty_of(difficulty), seed);
  const auto text = fault::suite_to_jsonl(suite);
  if (out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    bench::write_file(out, text);
    fmt::print(stderr, "wrote {} scenarios to {}\n", suite.size(), out);
  }
  return kExitOk;
}

int cmd_run(const RunFlags& f) {
  const auto topo = topology_of(f.topology);
  const auto pc = policy_config(f);
  const auto manifest = manifest_of(f, topo, pc);
  auto log = std::make_shared<policy::TranscriptLog>();
  bench::PolicyFactory factory;
  try {
    factory = bench::make_policy_factory(pc, pc.kind == "replay" ? nullptr : log);
  } catch (const Error& e) {
    config_fail(e.what());
  }

  const auto dir = bench::run_dir(f.out, manifest);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  bench::write_file(dir / "manifest.json", manifest.canonical());

  // Completion-order log so an interrupted run still leaves its episodes.
  std::FILE* partial = std::fopen((dir / "episodes.partial.jsonl").c_str(), "w");
  if (!partial) throw Error(ErrorCode::kIo, "cannot open partial episode log");
  auto sink = [&](std::size_t i, const loop::Episode& ep) {
    const auto line = loop::episode_to_json(ep) + "\n";
    std::fwrite(line.data(), 1, line.size(), partial);
    std::fflush(partial);
    if (!f.quiet) {
      fmt::print(stderr, "[{:>3}] {:<12} {:<7} attempts={} tokens={}{}\n", i + 1, ep.scenario_id,
                 ep.success ? "ok" : "FAILED", ep.attempts.size(), ep.tokens_total(),
                 ep.error.empty() ? "" : " error=" + ep.error);
    }
  };
  bench::BenchResult result;
  try {
    result = bench::run_bench(manifest, topo, factory, f.jobs, sink);
  } catch (...) {
    std::fclose(partial);
    throw;
  }
  std::fclose(partial);
  bench::write_run(dir, result, pc.kind == "replay" ? std::string() : log->to_jsonl());

  std::fputs(bench::emit_report(result, bench::ReportFormat::kTable).c_str(), stdout);
  if (f.agreement) {
    if (pc.kind == "replay") config_fail("--agreement needs a live policy, not a replay");
    bench::SuiteRunOptions opts;
    opts.loop = manifest.loop;
    opts.suite_seed = manifest.suite_seed;
    const auto a = bench::verification_agreement(bench::make_policy_factory(pc), topo, result.suite, opts);
    fmt::print("verification agreement: {}/{} ({:.3f}); observable-only {}, oracle-only {}\n", a.agree, a.n, a.rate(),
               a.observable_only, a.oracle_only);
  }
  fmt::print("run directory: {}\n", dir.string());
  return result.aggregates.errors > 0 ? kExitRun : kExitOk;
}

int cmd_grade(const std::string& run, const std::string& weights_text, std::int64_t budget) {
  auto result = bench::load_run(run);
  if (!weights_text.empty()) {
    try {
      result.manifest.weights = rft::RewardWeights::parse(weights_text);
    } catch (const Error& e) {
      config_fail(e.what());
    }
  }
  if (budget > 0) result.manifest.token_budget = budget;
  fmt::print("scenario_id,success,r_struct,r_exec,r_eff,unsafe,reward\n");
  double sum = 0.0;
  for (const auto& ep : result.episodes) {
    const auto g = rft::grade(ep, result.manifest.weights, result.manifest.token_budget);
    sum += g.total;
    fmt::print("{},{},{},{},{},{},{}\n", ep.scenario_id, g.success, text::format_double(g.r_struct),
               text::format_double(g.r_exec), text::format_double(g.r_eff), g.unsafe, text::format_double(g.total));
  }
  if (!result.episodes.empty()) {
    fmt::print(stderr, "mean reward {:.4f} over {} episodes\n", sum / static_cast<double>(result.episodes.size()),
               result.episodes.size());
  }
  return kExitOk;
}

struct TrainFlags {
  std::string stage = "sft";
  std::string topology = "simple-micro";
  std::string real_topology = "boutique-like";
  std::uint64_t seed = 1;
  int iterations = 0;
  double lr = 0.0;
  int group_size = 8;
  double dpo_beta = 0.1;
  std::string checkpoint;
  std::string out = "out/train";
  int jobs = 1;
};

// Per-stage defaults; zero on the command line means "use the default".
constexpr double kDefaultLr[] = {5.0, 0.1, 5.0};
constexpr int kDefaultIterations[] = {200, 50, 100};

int cmd_train(const TrainFlags& f) {
  const auto stage = rft::parse_stage(f.stage);
  if (!stage) config_fail(fmt::format("unknown stage '{}' (sft, sim_rft, real_rft)", f.stage));
  const int si = static_cast<int>(*stage);
  rft::TrainConfig cfg;
  cfg.stage = *stage;
  cfg.seed = f.seed;
  cfg.learning_rate = f.lr > 0 ? f.lr : kDefaultLr[si];
  cfg.iterations = f.iterations > 0 ? f.iterations : kDefaultIterations[si];
  cfg.group_size = f.group_size;
  cfg.dpo_beta = f.dpo_beta;
  try {
    cfg.validate();
  } catch (const Error& e) {
    config_fail(e.what());
  }

  std::optional<rft::Checkpoint> start;
  if (!f.checkpoint.empty()) {
    try {
      start = rft::Checkpoint::from_json(bench::read_file(f.checkpoint));
    } catch (const Error& e) {
      config_fail(e.what());
    }
  }
  if (*stage == rft::Stage::kSimRft && (!start || start->stage != rft::Stage::kSft)) {
    config_fail("sim_rft needs --checkpoint pointing at an sft checkpoint");
  }
  if (*stage == rft::Stage::kRealRft && (!start || start->stage != rft::Stage::kSimRft)) {
    config_fail("real_rft needs --checkpoint pointing at a sim_rft checkpoint");
  }

  const auto topo = topology_of(f.topology);
  auto env = rft::make_env(topo, fault::Difficulty::kEasy, f.seed);
  env.jobs = f.jobs;
  std::optional<sim::Topology> real_topo;
  std::optional<rft::Env> real_env;
  if (*stage == rft::Stage::kRealRft) {
    real_topo = topology_of(f.real_topology);
    real_env = rft::make_env(*real_topo, fault::Difficulty::kHard, f.seed + 1);
    real_env->jobs = f.jobs;
  }

  const auto result = rft::train_stage(cfg, env, start, real_env ? &*real_env : nullptr);
  const fs::path dir = fs::path(f.out) / std::string(rft::to_string(*stage));
  fs::create_directories(dir);
  bench::write_file(dir / "checkpoint.json", result.checkpoint.to_json());
  bench::write_file(dir / "curve.csv", rft::curve_to_csv(*stage, result.curve));
  if (!result.sft_data.empty()) bench::write_file(dir / "sft.jsonl", rft::sft_to_jsonl(result.sft_data));
  if (!result.train_pairs.empty()) {
    bench::write_file(dir / "pairs.train.jsonl", rft::pairs_to_jsonl(result.train_pairs));
    bench::write_file(dir / "pairs.heldout.jsonl", rft::pairs_to_jsonl(result.heldout_pairs));
  }
  const auto& last = result.curve.back();
  fmt::print("stage {}: {} iterations, final loss {:.6f}", rft::to_string(*stage), cfg.iterations, last.loss);
  if (last.value) fmt::print(", {} {:.4f}", last.metric, *last.value);
  if (result.margin_before) fmt::print(", held-out margin {:.4f} -> {:.4f}", *result.margin_before, *result.margin_after);
  fmt::print("\ncheckpoint: {}\n", (dir / "checkpoint.json").string());
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& format) {
  bench::ReportFormat fmt_kind;
  try {
    fmt_kind = bench::parse_report_format(format);
  } catch (const Error& e) {
    config_fail(e.what());
  }
  std::vector<bench::BenchResult> results;
  for (const auto& r : runs) results.push_back(bench::load_run(r));
  const auto text = bench::emit_report(results, fmt_kind);
  std::fwrite(text.data(), 1, text.size(), stdout);
  return kExitOk;
}

int cmd_replay(const std::string& run, int jobs) {
  const auto recorded = bench::load_run(run);
  const auto transcript = fs::path(run) / "transcript.jsonl";
  if (!fs::exists(transcript)) config_fail(fmt::format("{} has no transcript", run));
  const auto topo = topology_of(recorded.manifest.topology_id);
  if (bench::topology_digest(topo) != recorded.manifest.topology_digest) {
    config_fail("bundled topology differs from the recorded one");
  }
  std::vector<policy::TranscriptEntry> entries;
  for (const auto& line : text::split_lines(bench::read_file(transcript))) {
    if (!text::trim(line).empty()) entries.push_back(policy::transcript_entry_from(line));
  }
  auto shared = std::make_shared<policy::ReplayPolicy>(entries, recorded.manifest.policy_id);
  struct Handle : policy::Policy {
    std::shared_ptr<policy::ReplayPolicy> inner;
    std::string id() const override { return inner->id(); }
    policy::PolicyOutput decide(const policy::PolicyInput& in) override { return inner->decide(in); }
  };
  const auto replayed = bench::run_bench(
      recorded.manifest, topo,
      [shared](const fault::Scenario&, std::size_t) {
        auto h = std::make_unique<Handle>();
        h->inner = shared;
        return h;
      },
      jobs);

  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < replayed.episodes.size(); ++i) {
    auto a = recorded.episodes.at(i);
    auto b = replayed.episodes[i];
    a.wall_ms.reset();
    b.wall_ms.reset();
    if (loop::episode_to_json(a) != loop::episode_to_json(b)) {
      ++mismatches;
      fmt::print("diverged: {}\n", a.scenario_id);
    }
  }
  fmt::print("replayed {} episodes, {} diverged; RA recorded {:.3f}, replayed {:.3f}\n", replayed.episodes.size(),
             mismatches, recorded.aggregates.ra, replayed.aggregates.ra);
  return mismatches == 0 ? kExitOk : kExitRun;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"remedbench: auto-remediation benchmark on a simulated microservice cluster"};
  app.require_subcommand(1);

  auto* topology = app.add_subcommand("topology", "topology utilities");
  topology->require_subcommand(1);
  auto* topo_check = topology->add_subcommand("check", "parse and validate a topology");
  std::string topo_id;
  topo_check->add_option("topology", topo_id, "bundled id or YAML path")->required();

  auto* suite = app.add_subcommand("suite", "suite utilities");
  suite->require_subcommand(1);
  auto* suite_gen = suite->add_subcommand("gen", "generate a scenario suite as JSONL");
  std::string sg_topology = "simple-micro", sg_difficulty = "easy", sg_out;
  std::uint64_t sg_seed = 1;
  suite_gen->add_option("--topology", sg_topology)->capture_default_str();
  suite_gen->add_option("--difficulty", sg_difficulty)->capture_default_str();
  suite_gen->add_option("--seed", sg_seed)->capture_default_str();
  suite_gen->add_option("--out", sg_out, "file; stdout when omitted");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run a policy over a suite");
  add_run_flags(run, run_flags);

  auto* grade = app.add_subcommand("grade", "recompute rewards for a persisted run");
  std::string grade_run, grade_weights;
  std::int64_t grade_budget = 0;
  grade->add_option("--run", grade_run, "run directory")->required();
  grade->add_option("--weights", grade_weights, "override reward weights a,b,g,d,l");
  grade->add_option("--token-budget", grade_budget, "override the r_eff token budget");

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train the toy policy (sft, sim_rft, real_rft)");
  train->add_option("--stage", train_flags.stage)->capture_default_str();
  train->add_option("--topology", train_flags.topology)->capture_default_str();
  train->add_option("--real-topology", train_flags.real_topology, "source of real-stage preference pairs")
      ->capture_default_str();
  train->add_option("--seed", train_flags.seed)->capture_default_str();
  train->add_option("--iterations", train_flags.iterations, "0 = stage default");
  train->add_option("--lr", train_flags.lr, "0 = stage default");
  train->add_option("--group-size", train_flags.group_size)->capture_default_str();
  train->add_option("--dpo-beta", train_flags.dpo_beta)->capture_default_str();
  train->add_option("--checkpoint", train_flags.checkpoint, "starting checkpoint");
  train->add_option("--out", train_flags.out)->capture_default_str();
  train->add_option("--jobs", train_flags.jobs)->capture_default_str();

  auto* report = app.add_subcommand("report", "render persisted runs");
  std::vector<std::string> report_runs;
  std::string report_format = "table";
  report->add_option("--run", report_runs, "run directories")->required();
  report->add_option("--format", report_format, "csv | table | plot")->capture_default_str();

  auto* replay = app.add_subcommand("replay", "re-run a persisted run from its transcript and compare");
  std::string replay_run;
  int replay_jobs = 1;
  replay->add_option("--run", replay_run, "run directory")->required();
  replay->add_option("--jobs", replay_jobs)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (topo_check->parsed()) return cmd_topology_check(topo_id);
    if (suite_gen->parsed()) return cmd_suite_gen(sg_topology, sg_difficulty, sg_seed, sg_out);
    if (run->parsed()) return cmd_run(run_flags);
    if (grade->parsed()) return cmd_grade(grade_run, grade_weights, grade_budget);
    if (train->parsed()) return cmd_train(train_flags);
    if (report->parsed()) return cmd_report(report_runs, report_format);
    if (replay->parsed()) return cmd_replay(replay_run, replay_jobs);
  } catch (const ConfigFailure& e) {
    fmt::print(stderr, "config error: {}\n", e.message);
    return kExitConfig;
  } catch (const Error& e) {
    fmt::print(stderr, "error ({}): {}\n", remed::to_string(e.code()), e.what());
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitRun;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRun;
  }
  return kExitConfig;
}
