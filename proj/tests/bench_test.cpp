#include "doctest.h"

#include <filesystem>

#include <json.hpp>

#include "remed/bench/bench.hpp"
#include "remed/common/error.hpp"
#include "remed/common/text.hpp"

using namespace remed;
using namespace remed::bench;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected remed::Error");
  return ErrorCode::kIo;
}

loop::Episode ep(bool success, std::int64_t latency, std::int64_t tin, std::int64_t tout) {
  loop::Episode e;
  e.success = success;
  e.latency_ms = latency;
  e.tokens_in = tin;
  e.tokens_out = tout;
  return e;
}

const sim::Topology& micro() { return sim::bundled_topology("simple-micro"); }

RunManifest manifest_for(const std::string& kind, fault::Difficulty d = fault::Difficulty::kEasy) {
  PolicyConfig pc;
  pc.kind = kind;
  RunManifest m;
  m.topology_id = micro().id;
  m.topology_digest = topology_digest(micro());
  m.difficulty = d;
  m.suite_seed = 1;
  m.policy_id = policy_id_for(pc);
  m.policy_config_hash = pc.hash();
  return m;
}

BenchResult run_kind(const std::string& kind, int jobs = 1, fault::Difficulty d = fault::Difficulty::kEasy) {
  PolicyConfig pc;
  pc.kind = kind;
  return run_bench(manifest_for(kind, d), micro(), make_policy_factory(pc), jobs);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("remed-bench-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// ---------------------------------------------------------------- metrics

TEST_CASE("remediation accuracy") {
  CHECK(compute_ra({ep(true, 0, 0, 0), ep(true, 0, 0, 0), ep(false, 0, 0, 0), ep(true, 0, 0, 0)}) == 0.75);
  CHECK(compute_ra({ep(true, 0, 0, 0), ep(true, 0, 0, 0)}) == 1.0);
  CHECK(compute_ra({ep(false, 0, 0, 0)}) == 0.0);
  CHECK(code_of([] { compute_ra({}); }) == ErrorCode::kEmptyDataset);
}

TEST_CASE("average remediation latency counts successes only") {
  CHECK(compute_arl({ep(true, 30000, 0, 0), ep(true, 50000, 0, 0)}) == 40000.0);
  CHECK_FALSE(compute_arl({ep(false, 30000, 0, 0)}).has_value());
  CHECK_FALSE(compute_arl({}).has_value());
  CHECK(compute_arl({ep(true, 30000, 0, 0), ep(false, 999999, 0, 0), ep(true, 50000, 0, 0)}) == 40000.0);

  auto w = ep(true, 0, 0, 0);
  w.wall_ms = 12.5;
  CHECK(compute_arl_wall({w, ep(false, 0, 0, 0)}) == 12.5);
  CHECK_FALSE(compute_arl_wall({ep(true, 1, 0, 0)}).has_value());
}

TEST_CASE("average token consumption counts input and output of successes") {
  CHECK(compute_atc({ep(true, 0, 1000, 500), ep(true, 0, 2000, 500)}) == 2000.0);
  CHECK(compute_atc({ep(true, 0, 1000, 500), ep(false, 0, 9000, 9000), ep(true, 0, 2000, 500)}) == 2000.0);
  CHECK_FALSE(compute_atc({ep(false, 0, 10, 10)}).has_value());
  CHECK(compute_atc_all({ep(true, 0, 1000, 500), ep(false, 0, 400, 100)}) == 1000.0);
}

TEST_CASE("aggregates are null, not zero, without successes") {
  const auto r = run_kind("noop");
  CHECK(r.aggregates.n == 23);
  CHECK(r.aggregates.ra == 0.0);
  CHECK_FALSE(r.aggregates.arl_ms.has_value());
  CHECK_FALSE(r.aggregates.atc.has_value());
  CHECK(r.aggregates.atc_all.has_value());
  const auto json = aggregates_to_json(r.aggregates, r.manifest.hash_hex());
  const auto j = nlohmann::json::parse(json);
  CHECK(j.at("arl_ms").is_null());
  CHECK(j.at("atc").is_null());
  CHECK(aggregates_from_json(json) == r.aggregates);
  const auto table = emit_report(r, ReportFormat::kTable);
  CHECK(table.find("null") != std::string::npos);
}

// ------------------------------------------------------------------ suites

TEST_CASE("expert solves the easy suite; noop solves nothing") {
  const auto e = run_kind("expert");
  CHECK(e.suite.size() == 23);
  CHECK(e.aggregates.ra == 1.0);
  CHECK(e.aggregates.errors == 0);
  CHECK(run_kind("noop").aggregates.ra == 0.0);
}

TEST_CASE("parallel runs return episodes in suite order with identical content") {
  const auto one = run_kind("expert", 1, fault::Difficulty::kMedium);
  const auto four = run_kind("expert", 4, fault::Difficulty::kMedium);
  CHECK(loop::episodes_to_jsonl(one.episodes) == loop::episodes_to_jsonl(four.episodes));
  for (std::size_t i = 0; i < one.suite.size(); ++i) CHECK(one.episodes[i].scenario_id == one.suite[i].scenario_id);
}

TEST_CASE("the episode sink sees every episode once") {
  PolicyConfig pc;
  pc.kind = "noop";
  std::vector<int> seen(23, 0);
  run_bench(manifest_for("noop"), micro(), make_policy_factory(pc), 3,
            [&](std::size_t i, const loop::Episode&) { ++seen.at(i); });
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("a throwing factory surfaces from the runner") {
  const PolicyFactory bad = [](const fault::Scenario& s, std::size_t) -> std::unique_ptr<policy::Policy> {
    if (s.scenario_id == "easy-005") throw Error(ErrorCode::kConfig, "no policy");
    return std::make_unique<policy::NoopPolicy>();
  };
  CHECK(code_of([&] { run_bench(manifest_for("noop"), micro(), bad, 2); }) == ErrorCode::kConfig);
}

TEST_CASE("observable verification agrees with the oracle on scripted runs") {
  const auto suite = fault::gen_suite(micro(), fault::Difficulty::kMedium, 1);
  SuiteRunOptions opts;
  PolicyConfig pc;
  pc.kind = "expert";
  const auto expert = verification_agreement(make_policy_factory(pc), micro(), suite, opts);
  CHECK(expert.n == suite.size());
  // Readings are noisy where oracle levels are not: two healed scenarios
  // still read outside the band after settling. Frozen for this suite.
  CHECK(expert.observable_only == 0);
  CHECK(expert.oracle_only == 2);
  CHECK(expert.agree == 47);
  pc.kind = "noop";
  const auto noop = verification_agreement(make_policy_factory(pc), micro(), suite, opts);
  CHECK(noop.n == suite.size());
  // Symptoms of chaos faults stay visible when nothing is done.
  CHECK(noop.observable_only == 0);
}

// -------------------------------------------------------------- manifests

TEST_CASE("manifest hashes separate the ablation configurations") {
  auto full = manifest_for("expert");
  auto no_probe = full;
  no_probe.loop.probing = false;
  auto no_refl = full;
  no_refl.loop.reflection = false;
  auto neither = no_probe;
  neither.loop.reflection = false;
  const std::set<std::uint64_t> hashes{full.hash(), no_probe.hash(), no_refl.hash(), neither.hash()};
  CHECK(hashes.size() == 4);
  CHECK(RunManifest::from_json(no_refl.canonical()).canonical() == no_refl.canonical());
  CHECK(RunManifest::from_json(full.canonical()).hash() == full.hash());

  auto other_weights = full;
  other_weights.weights.lambda = 3.0;
  CHECK(other_weights.hash() != full.hash());
  auto other_seed = full;
  other_seed.suite_seed = 2;
  CHECK(other_seed.hash() != full.hash());
}

TEST_CASE("policy configs: ids, hashes and unknown kinds") {
  PolicyConfig a;
  a.kind = "toy";
  PolicyConfig b = a;
  b.seed = 2;
  CHECK(a.hash() != b.hash());
  CHECK(policy_id_for(a) == "toy");
  PolicyConfig bad;
  bad.kind = "oracle-cheat";
  CHECK(code_of([&] { make_policy_factory(bad); }) == ErrorCode::kConfig);
  PolicyConfig missing;
  missing.kind = "replay";
  CHECK(code_of([&] { make_policy_factory(missing); }) == ErrorCode::kConfig);
}

// ---------------------------------------------------------------- reports

TEST_CASE("csv report has one row per scenario plus a header") {
  const auto r = run_kind("expert");
  const auto csv = emit_report(r, ReportFormat::kCsv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 24);
  CHECK(csv.rfind("scenario_id,difficulty,policy,success,", 0) == 0);
  CHECK(emit_report(r, ReportFormat::kCsv) == csv);
  CHECK(emit_report(r, ReportFormat::kTable) == emit_report(r, ReportFormat::kTable));
}

TEST_CASE("report aggregates equal recomputed metrics") {
  const auto r = run_kind("expert", 1, fault::Difficulty::kHard);
  CHECK(r.aggregates.ra == compute_ra(r.episodes));
  CHECK(r.aggregates.arl_ms == compute_arl(r.episodes));
  CHECK(r.aggregates.atc == compute_atc(r.episodes));
  const auto plot = emit_report(r, ReportFormat::kPlot);
  const auto lines = text::split_lines(plot);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] == "manifest,topology,difficulty,policy,config,arl_ms,ra");
  CHECK(lines[1].find(text::format_double(*compute_arl(r.episodes))) != std::string::npos);
}

TEST_CASE("unknown report format") {
  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
  CHECK(parse_report_format("table") == ReportFormat::kTable);
  CHECK(parse_report_format("plot") == ReportFormat::kPlot);
  CHECK(code_of([] { parse_report_format("pdf"); }) == ErrorCode::kInvalidArgument);
}

// ------------------------------------------------------------ persistence

TEST_CASE("persisted runs reload and recompute to the stored aggregates") {
  TempDir tmp;
  const auto r = run_kind("toy", 2);
  const auto dir = run_dir(tmp.path, r.manifest);
  CHECK(dir.filename() == r.manifest.hash_hex());
  write_run(dir, r, "");
  for (const char* f : {"manifest.json", "suite.jsonl", "episodes.jsonl", "summary.csv", "result.json"}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  CHECK_FALSE(fs::exists(dir / "transcript.jsonl"));
  const auto back = load_run(dir);
  CHECK(back.manifest.hash() == r.manifest.hash());
  CHECK(back.suite == r.suite);
  CHECK(loop::episodes_to_jsonl(back.episodes) == loop::episodes_to_jsonl(r.episodes));
  CHECK(aggregate(back.episodes) == back.aggregates);
  CHECK(back.aggregates == r.aggregates);
  CHECK(read_file(dir / "summary.csv") == emit_report(r, ReportFormat::kCsv));
}

TEST_CASE("reruns of a manifest are byte identical") {
  TempDir tmp;
  for (const char* kind : {"expert", "toy", "noop"}) {
    const auto a = run_kind(kind);
    const auto b = run_kind(kind, 3);
    write_run(tmp.path / "a", a);
    write_run(tmp.path / "b", b);
    for (const char* f : {"episodes.jsonl", "summary.csv", "result.json", "manifest.json"}) {
      CHECK_MESSAGE(read_file(tmp.path / "a" / f) == read_file(tmp.path / "b" / f), kind, " ", f);
    }
  }
}

TEST_CASE("recorded transcripts replay to identical episodes") {
  PolicyConfig pc;
  pc.kind = "expert";
  auto log = std::make_shared<policy::TranscriptLog>();
  const auto m = manifest_for("expert", fault::Difficulty::kHard);
  const auto live = run_bench(m, micro(), make_policy_factory(pc, log), 2);

  TempDir tmp;
  write_file(tmp.path / "t.jsonl", log->to_jsonl());
  PolicyConfig rc;
  rc.kind = "replay";
  rc.transcript_path = (tmp.path / "t.jsonl").string();
  const auto replayed = run_bench(m, micro(), make_policy_factory(rc), 1);
  REQUIRE(replayed.episodes.size() == live.episodes.size());
  for (std::size_t i = 0; i < live.episodes.size(); ++i) {
    auto a = live.episodes[i];
    auto b = replayed.episodes[i];
    CHECK(b.policy_id == "replay");
    b.policy_id = a.policy_id;
    CHECK(loop::episode_to_json(a) == loop::episode_to_json(b));
  }
}

TEST_CASE("file helpers report I/O errors") {
  CHECK(code_of([] { read_file("/nonexistent/remed/file"); }) == ErrorCode::kIo);
  CHECK(code_of([] { load_run("/nonexistent/remed/run"); }) == ErrorCode::kIo);
}
