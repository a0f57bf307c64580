#include "remed/bench/bench.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/common/text.hpp"
#include "remed/policy/llm.hpp"
#include "remed/policy/toy.hpp"
#include "remed/rft/train.hpp"

namespace remed::bench {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------ files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIo, fmt::format("write to {} failed", path.string()));
}

// ---------------------------------------------------------------- manifest

std::string PolicyConfig::canonical() const {
  auto digest_of = [](const std::string& path) {
    return path.empty() ? std::string("-") : hex64(fnv1a64(read_file(path)));
  };
  std::string s = fmt::format("kind={};seed={};greedy={}", kind, seed, greedy);
  if (kind == "toy") s += ";checkpoint=" + digest_of(checkpoint_path);
  if (kind == "replay") s += ";transcript=" + digest_of(transcript_path);
  if (kind == "llm") {
    const char* model = std::getenv((endpoint_env + "_MODEL").c_str());
    s += fmt::format(";env={};model={}", endpoint_env, model ? model : "");
  }
  return s;
}

std::uint64_t PolicyConfig::hash() const { return fnv1a64(canonical()); }

std::string RunManifest::canonical() const {
  ojson j;
  j["harness_version"] = harness_version;
  j["topology"] = ojson{{"id", topology_id}, {"digest", hex64(topology_digest)}};
  j["suite"] = ojson{{"difficulty", fault::to_string(difficulty)}, {"seed", suite_seed}};
  j["policy"] = ojson{{"id", policy_id}, {"config_hash", hex64(policy_config_hash)}};
  j["weights"] = weights.to_string();
  j["token_budget"] = token_budget;
  j["loop"] = ojson{{"t_max", loop.t_max},
                    {"probe_budget", loop.probe_budget},
                    {"settle_steps", loop.settle_steps},
                    {"step_ms", loop.step_ms},
                    {"mode", loop::to_string(loop.mode)},
                    {"probing", loop.probing},
                    {"reflection", loop.reflection},
                    {"ms_per_output_token", loop.ms_per_output_token},
                    {"ms_per_probe", loop.ms_per_probe}};
  return j.dump(2) + "\n";
}

std::uint64_t RunManifest::hash() const { return fnv1a64(canonical()); }
std::string RunManifest::hash_hex() const { return hex64(hash()); }

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const auto j = ojson::parse(text);
    RunManifest m;
    m.harness_version = j.at("harness_version").get<std::string>();
    m.topology_id = j.at("topology").at("id").get<std::string>();
    m.topology_digest = std::stoull(j.at("topology").at("digest").get<std::string>(), nullptr, 16);
    const auto d = fault::parse_difficulty(j.at("suite").at("difficulty").get<std::string>());
    if (!d) throw Error(ErrorCode::kParse, "bad difficulty in manifest");
    m.difficulty = *d;
    m.suite_seed = j.at("suite").at("seed").get<std::uint64_t>();
    m.policy_id = j.at("policy").at("id").get<std::string>();
    m.policy_config_hash = std::stoull(j.at("policy").at("config_hash").get<std::string>(), nullptr, 16);
    m.weights = rft::RewardWeights::parse(j.at("weights").get<std::string>());
    m.token_budget = j.at("token_budget").get<std::int64_t>();
    const auto& l = j.at("loop");
    m.loop.t_max = l.at("t_max").get<int>();
    m.loop.probe_budget = l.at("probe_budget").get<int>();
    m.loop.settle_steps = l.at("settle_steps").get<int>();
    m.loop.step_ms = l.at("step_ms").get<std::int64_t>();
    const auto mode = loop::parse_verification_mode(l.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::kParse, "bad verification mode in manifest");
    m.loop.mode = *mode;
    m.loop.probing = l.at("probing").get<bool>();
    m.loop.reflection = l.at("reflection").get<bool>();
    m.loop.ms_per_output_token = l.at("ms_per_output_token").get<std::int64_t>();
    m.loop.ms_per_probe = l.at("ms_per_probe").get<std::int64_t>();
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, fmt::format("bad manifest: {}", ex.what()));
  }
}

std::uint64_t topology_digest(const sim::Topology& topology) { return fnv1a64(sim::render_topology(topology)); }

std::string policy_id_for(const PolicyConfig& config) {
  if (config.kind == "llm") {
    const char* model = std::getenv((config.endpoint_env + "_MODEL").c_str());
    return fmt::format("llm:{}", model ? model : "");
  }
  return config.kind;
}

PolicyFactory make_policy_factory(const PolicyConfig& config, std::shared_ptr<policy::TranscriptLog> log) {
  auto wrap = [log](std::unique_ptr<policy::Policy> p) -> std::unique_ptr<policy::Policy> {
    if (!log) return p;
    return std::make_unique<policy::RecordingPolicy>(std::move(p), log);
  };
  const auto& kind = config.kind;
  if (kind == "expert" || kind == "expert-template") {
    const auto mode = kind == "expert" ? policy::ExpertPolicy::Mode::kFree : policy::ExpertPolicy::Mode::kTemplate;
    return [wrap, mode](const fault::Scenario&, std::size_t) { return wrap(std::make_unique<policy::ExpertPolicy>(mode)); };
  }
  if (kind == "noop") {
    return [wrap](const fault::Scenario&, std::size_t) { return wrap(std::make_unique<policy::NoopPolicy>()); };
  }
  if (kind == "toy") {
    std::vector<double> theta(static_cast<std::size_t>(policy::kToyContexts * policy::kToyActions), 0.0);
    if (!config.checkpoint_path.empty()) theta = rft::Checkpoint::from_json(read_file(config.checkpoint_path)).theta;
    const auto seed = config.seed;
    const bool greedy = config.greedy;
    return [wrap, theta, seed, greedy](const fault::Scenario&, std::size_t) {
      auto p = std::make_unique<policy::ToyPolicy>(seed, theta);
      p->set_greedy(greedy);
      return wrap(std::move(p));
    };
  }
  if (kind == "llm") {
    const auto cfg = policy::llm_config_from_env(config.endpoint_env);
    return [wrap, cfg](const fault::Scenario&, std::size_t) { return wrap(std::make_unique<policy::LlmPolicy>(cfg)); };
  }
  if (kind == "replay") {
    if (config.transcript_path.empty()) throw Error(ErrorCode::kConfig, "replay policy needs a transcript");
    auto entries = std::make_shared<std::vector<policy::TranscriptEntry>>();
    for (const auto& line : text::split_lines(read_file(config.transcript_path))) {
      if (!text::trim(line).empty()) entries->push_back(policy::transcript_entry_from(line));
    }
    // One shared replayer: entries are keyed by scenario, so sharing is safe.
    auto shared = std::make_shared<policy::ReplayPolicy>(*entries);
    struct Handle : policy::Policy {
      std::shared_ptr<policy::ReplayPolicy> inner;
      std::string id() const override { return inner->id(); }
      policy::PolicyOutput decide(const policy::PolicyInput& in) override { return inner->decide(in); }
    };
    return [wrap, shared](const fault::Scenario&, std::size_t) {
      auto h = std::make_unique<Handle>();
      h->inner = shared;
      return wrap(std::move(h));
    };
  }
  throw Error(ErrorCode::kConfig, fmt::format("unknown policy '{}'", kind));
}

// ----------------------------------------------------------------- metrics

namespace {

template <typename F>
std::optional<double> mean_over_successes(const std::vector<loop::Episode>& eps, F value) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : eps) {
    if (!e.success) continue;
    const std::optional<double> v = value(e);
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> opt_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string opt_text(const std::optional<double>& v, int decimals) {
  return v ? fmt::format("{:.{}f}", *v, decimals) : std::string("null");
}

}  // namespace

double compute_ra(const std::vector<loop::Episode>& episodes) {
  if (episodes.empty()) throw Error(ErrorCode::kEmptyDataset, "RA of an empty episode list");
  const auto ok = std::count_if(episodes.begin(), episodes.end(), [](const loop::Episode& e) { return e.success; });
  return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

std::optional<double> compute_arl(const std::vector<loop::Episode>& episodes) {
  return mean_over_successes(episodes, [](const loop::Episode& e) { return std::optional<double>(e.latency_ms); });
}

std::optional<double> compute_arl_wall(const std::vector<loop::Episode>& episodes) {
  return mean_over_successes(episodes, [](const loop::Episode& e) { return e.wall_ms; });
}

std::optional<double> compute_atc(const std::vector<loop::Episode>& episodes) {
  return mean_over_successes(episodes,
                             [](const loop::Episode& e) { return std::optional<double>(e.tokens_total()); });
}

std::optional<double> compute_atc_all(const std::vector<loop::Episode>& episodes) {
  if (episodes.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : episodes) sum += static_cast<double>(e.tokens_total());
  return sum / static_cast<double>(episodes.size());
}

Aggregates aggregate(const std::vector<loop::Episode>& episodes) {
  Aggregates a;
  a.n = episodes.size();
  for (const auto& e : episodes) {
    a.successes += e.success;
    a.errors += !e.error.empty();
  }
  a.ra = compute_ra(episodes);
  a.arl_ms = compute_arl(episodes);
  a.arl_wall_ms = compute_arl_wall(episodes);
  a.atc = compute_atc(episodes);
  a.atc_all = compute_atc_all(episodes);
  return a;
}

std::string aggregates_to_json(const Aggregates& agg, const std::string& manifest_hash) {
  ojson j;
  j["manifest_hash"] = manifest_hash;
  j["n"] = agg.n;
  j["successes"] = agg.successes;
  j["errors"] = agg.errors;
  j["ra"] = agg.ra;
  j["arl_ms"] = opt_json(agg.arl_ms);
  j["arl_wall_ms"] = opt_json(agg.arl_wall_ms);
  j["atc"] = opt_json(agg.atc);
  j["atc_all"] = opt_json(agg.atc_all);
  return j.dump(2) + "\n";
}

Aggregates aggregates_from_json(std::string_view text) {
  try {
    const auto j = ojson::parse(text);
    Aggregates a;
    a.n = j.at("n").get<std::size_t>();
    a.successes = j.at("successes").get<std::size_t>();
    a.errors = j.at("errors").get<std::size_t>();
    a.ra = j.at("ra").get<double>();
    a.arl_ms = opt_from(j.at("arl_ms"));
    a.arl_wall_ms = opt_from(j.at("arl_wall_ms"));
    a.atc = opt_from(j.at("atc"));
    a.atc_all = opt_from(j.at("atc_all"));
    return a;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, fmt::format("bad result summary: {}", ex.what()));
  }
}

BenchResult run_bench(const RunManifest& manifest, const sim::Topology& topology, const PolicyFactory& factory,
                      int jobs, std::function<void(std::size_t, const loop::Episode&)> on_episode) {
  manifest.weights.validate();
  if (manifest.token_budget < 1) throw Error(ErrorCode::kConfig, "token budget must be >= 1");
  BenchResult r;
  r.manifest = manifest;
  r.suite = fault::gen_suite(topology, manifest.difficulty, manifest.suite_seed);
  SuiteRunOptions opt;
  opt.loop = manifest.loop;
  opt.jobs = jobs;
  opt.suite_seed = manifest.suite_seed;
  opt.on_episode = std::move(on_episode);
  r.episodes = run_suite(factory, topology, r.suite, opt);
  r.aggregates = aggregate(r.episodes);
  return r;
}

// ----------------------------------------------------------------- reports

ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "table") return ReportFormat::kTable;
  if (s == "plot") return ReportFormat::kPlot;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown report format '{}' (csv, table, plot)", s));
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string summary_csv(const BenchResult& r) {
  std::string out =
      "scenario_id,difficulty,policy,success,attempts,latency_ms,tokens_in,tokens_out,r_struct,r_exec,r_eff,unsafe,"
      "reward,error\n";
  for (const auto& e : r.episodes) {
    const auto g = rft::grade(e, r.manifest.weights, r.manifest.token_budget);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(e.scenario_id),
                       fault::to_string(r.manifest.difficulty), csv_field(e.policy_id), e.success ? 1 : 0,
                       e.attempts.size(), e.latency_ms, e.tokens_in, e.tokens_out, text::format_double(g.r_struct),
                       text::format_double(g.r_exec), text::format_double(g.r_eff), g.unsafe > 0 ? 1 : 0,
                       text::format_double(g.total), csv_field(e.error));
  }
  return out;
}

std::string ablation_label(const loop::LoopConfig& l) {
  if (l.probing && l.reflection) return "full";
  if (!l.probing && !l.reflection) return "no-probe,no-reflection";
  return l.probing ? "no-reflection" : "no-probe";
}

}  // namespace

std::string emit_report(const std::vector<BenchResult>& results, ReportFormat format) {
  std::string out;
  switch (format) {
    case ReportFormat::kCsv:
      for (std::size_t i = 0; i < results.size(); ++i) {
        auto body = summary_csv(results[i]);
        if (i > 0) body = body.substr(body.find('\n') + 1);
        out += body;
      }
      return out;
    case ReportFormat::kTable: {
      auto sorted = results;
      std::stable_sort(sorted.begin(), sorted.end(), [](const BenchResult& a, const BenchResult& b) {
        return static_cast<int>(a.manifest.difficulty) < static_cast<int>(b.manifest.difficulty);
      });
      out += fmt::format("{:<10} {:<14} {:<16} {:<24} {:>9} {:>7} {:>11} {:>9} {:>9}\n", "difficulty", "topology",
                         "policy", "config", "scenarios", "RA", "ARL(ms)", "ATC", "ATC(all)");
      for (const auto& r : sorted) {
        const auto& a = r.aggregates;
        out += fmt::format("{:<10} {:<14} {:<16} {:<24} {:>9} {:>7.3f} {:>11} {:>9} {:>9}\n",
                           fault::to_string(r.manifest.difficulty), r.manifest.topology_id, r.manifest.policy_id,
                           ablation_label(r.manifest.loop), a.n, a.ra, opt_text(a.arl_ms, 1), opt_text(a.atc, 1),
                           opt_text(a.atc_all, 1));
      }
      return out;
    }
    case ReportFormat::kPlot:
      out += "manifest,topology,difficulty,policy,config,arl_ms,ra\n";
      for (const auto& r : results) {
        out += fmt::format("{},{},{},{},{},{},{}\n", r.manifest.hash_hex(), r.manifest.topology_id,
                           fault::to_string(r.manifest.difficulty), csv_field(r.manifest.policy_id),
                           csv_field(ablation_label(r.manifest.loop)),
                           r.aggregates.arl_ms ? text::format_double(*r.aggregates.arl_ms) : "",
                           text::format_double(r.aggregates.ra));
      }
      return out;
  }
  return out;
}

std::string emit_report(const BenchResult& result, ReportFormat format) {
  return emit_report(std::vector<BenchResult>{result}, format);
}

// ------------------------------------------------------------- persistence

fs::path run_dir(const fs::path& out_root, const RunManifest& manifest) { return out_root / manifest.hash_hex(); }

void write_run(const fs::path& dir, const BenchResult& result, const std::string& transcript_jsonl) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  write_file(dir / "manifest.json", result.manifest.canonical());
  write_file(dir / "suite.jsonl", fault::suite_to_jsonl(result.suite));
  write_file(dir / "episodes.jsonl", loop::episodes_to_jsonl(result.episodes));
  write_file(dir / "summary.csv", summary_csv(result));
  write_file(dir / "result.json", aggregates_to_json(result.aggregates, result.manifest.hash_hex()));
  if (!transcript_jsonl.empty()) write_file(dir / "transcript.jsonl", transcript_jsonl);
  fs::remove(dir / "episodes.partial.jsonl", ec);
}

BenchResult load_run(const fs::path& dir) {
  BenchResult r;
  r.manifest = RunManifest::from_json(read_file(dir / "manifest.json"));
  r.suite = fault::suite_from_jsonl(read_file(dir / "suite.jsonl"));
  r.episodes = loop::episodes_from_jsonl(read_file(dir / "episodes.jsonl"));
  r.aggregates = aggregates_from_json(read_file(dir / "result.json"));
  return r;
}

}  // namespace remed::bench
