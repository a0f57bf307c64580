#pragma once

// Run manifests, metrics, persistence and reports.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "remed/bench/runner.hpp"
#include "remed/rft/reward.hpp"

namespace remed::bench {

inline constexpr std::string_view kHarnessVersion = "1.0.0";

// What a policy is built from. Checkpoint and transcript enter the config
// hash by content digest, not by path.
struct PolicyConfig {
  std::string kind = "expert";  // expert | expert-template | noop | toy | llm | replay
  std::uint64_t seed = 1;
  std::string checkpoint_path;
  std::string transcript_path;
  std::string endpoint_env = "REMED_LLM";
  bool greedy = false;

  std::string canonical() const;
  std::uint64_t hash() const;
};

struct RunManifest {
  std::string topology_id;
  std::uint64_t topology_digest = 0;
  fault::Difficulty difficulty = fault::Difficulty::kEasy;
  std::uint64_t suite_seed = 1;
  std::string policy_id;
  std::uint64_t policy_config_hash = 0;
  rft::RewardWeights weights;
  std::int64_t token_budget = rft::kDefaultTokenBudget;
  loop::LoopConfig loop;
  std::string harness_version{kHarnessVersion};

  std::string canonical() const;  // ordered JSON, the hash input
  std::uint64_t hash() const;
  std::string hash_hex() const;
  static RunManifest from_json(std::string_view text);
};

std::uint64_t topology_digest(const sim::Topology& topology);

// One policy instance per episode, all sharing the transcript log when given.
PolicyFactory make_policy_factory(const PolicyConfig& config, std::shared_ptr<policy::TranscriptLog> log = nullptr);
std::string policy_id_for(const PolicyConfig& config);

// ----------------------------------------------------------------- metrics

double compute_ra(const std::vector<loop::Episode>& episodes);  // throws kEmptyDataset
std::optional<double> compute_arl(const std::vector<loop::Episode>& episodes);  // simulated ms, successes only
std::optional<double> compute_arl_wall(const std::vector<loop::Episode>& episodes);
std::optional<double> compute_atc(const std::vector<loop::Episode>& episodes);  // successes only
std::optional<double> compute_atc_all(const std::vector<loop::Episode>& episodes);

struct Aggregates {
  std::size_t n = 0;
  std::size_t successes = 0;
  std::size_t errors = 0;
  double ra = 0.0;
  std::optional<double> arl_ms;
  std::optional<double> arl_wall_ms;
  std::optional<double> atc;
  std::optional<double> atc_all;

  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

Aggregates aggregate(const std::vector<loop::Episode>& episodes);
std::string aggregates_to_json(const Aggregates& agg, const std::string& manifest_hash);
Aggregates aggregates_from_json(std::string_view text);

struct BenchResult {
  RunManifest manifest;
  std::vector<fault::Scenario> suite;
  std::vector<loop::Episode> episodes;
  Aggregates aggregates;
};

// Generates the suite from the manifest and runs it.
BenchResult run_bench(const RunManifest& manifest, const sim::Topology& topology, const PolicyFactory& factory,
                      int jobs = 1, std::function<void(std::size_t, const loop::Episode&)> on_episode = {});

// ----------------------------------------------------------------- reports

enum class ReportFormat { kCsv, kTable, kPlot };
ReportFormat parse_report_format(std::string_view s);  // kInvalidArgument on unknown names

// csv: one row per scenario; table: one row per run keyed by difficulty;
// plot: (arl_ms, ra) points per run.
std::string emit_report(const std::vector<BenchResult>& results, ReportFormat format);
std::string emit_report(const BenchResult& result, ReportFormat format);

// ------------------------------------------------------------- persistence

// <out_root>/<manifest hash>/ with manifest.json, suite.jsonl,
// episodes.jsonl, summary.csv, result.json and transcript.jsonl (when given).
std::filesystem::path run_dir(const std::filesystem::path& out_root, const RunManifest& manifest);
void write_run(const std::filesystem::path& dir, const BenchResult& result, const std::string& transcript_jsonl = {});
BenchResult load_run(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace remed::bench
