#pragma once

// Probe, propose, execute, verify, reflect; bounded by t_max retries.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "remed/fault/fault.hpp"
#include "remed/playbook/executor.hpp"
#include "remed/playbook/playbook.hpp"
#include "remed/playbook/safety.hpp"
#include "remed/policy/policy.hpp"

namespace remed::loop {

enum class VerificationMode { kOracle, kObservable };
std::string_view to_string(VerificationMode mode);
std::optional<VerificationMode> parse_verification_mode(std::string_view s);

inline constexpr int kEpisodeSchemaVersion = 1;

struct LoopConfig {
  int t_max = 1;  // retries; attempts <= t_max + 1
  int probe_budget = 5;  // queries per attempt
  int settle_steps = 10;
  std::int64_t step_ms = 1000;
  VerificationMode mode = VerificationMode::kOracle;
  bool probing = true;
  bool reflection = true;  // off means no retries regardless of t_max
  // Simulated cost of policy output and of serving one probe query.
  std::int64_t ms_per_output_token = 20;
  std::int64_t ms_per_probe = 500;

  void validate() const;
  int effective_t_max() const { return reflection ? t_max : 0; }
};

struct ProbeUse {
  std::string query;
  bool refused = false;
};

struct Attempt {
  int index = 0;
  std::string playbook_text;
  std::string reasoning_text;
  bool parsed = false;
  std::string parse_error;
  playbook::StructReport structure;
  playbook::SafetyReport safety;
  playbook::ExecutionTrace trace;
  bool verdict = false;
  std::vector<ProbeUse> probes;
  std::vector<std::string> verification_notes;
  std::int64_t tokens_in = 0;  // proposal plus the probe requests before it
  std::int64_t tokens_out = 0;
  std::vector<policy::Choice> choices;
};

struct Episode {
  std::string scenario_id;
  std::string policy_id;
  VerificationMode mode = VerificationMode::kOracle;
  std::vector<std::string> reports;  // report descriptions, in order
  std::vector<Attempt> attempts;
  bool success = false;
  std::int64_t latency_ms = 0;  // simulated
  std::optional<double> wall_ms;  // remote policies only
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::uint64_t final_digest = 0;
  std::string error;  // "<code>: <message>" when the policy aborted the episode

  std::int64_t tokens_total() const { return tokens_in + tokens_out; }
};

// Targets that must be proven healed; one per injected fault.
struct Target {
  fault::FailureRecord record;
  fault::FailureReport report;
};

Episode run_episode(policy::Policy& policy, sim::ClusterState& state, const std::vector<Target>& targets,
                    const LoopConfig& config, const std::string& scenario_id = "adhoc");

// Threshold stand-in for an anomaly detector: the target's pods all Running
// with readings inside the baseline band (for network faults, the link's
// readings as well). Never looks at perturbations or records.
bool observable_verify(const sim::ClusterState& state, const fault::FailureReport& report);

// Appends what the failed attempt taught: the playbook, a trace summary,
// failed tasks, unrecognized commands, safety hits, verification notes and
// the verdict. Report text is untouched.
policy::PolicyInput reflect(policy::PolicyInput input, const Attempt& attempt);

std::string episode_to_json(const Episode& episode);
Episode episode_from_json(std::string_view line);
std::string episodes_to_jsonl(const std::vector<Episode>& episodes);
std::vector<Episode> episodes_from_jsonl(std::string_view text);

}  // namespace remed::loop
