#pragma once

// Failure injection, ground-truth verification, restore and suite generation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "remed/sim/cluster.hpp"

namespace remed::fault {

enum class FailureCategory { kResource, kNetwork, kApplication };

enum class FailureType {
  kCpuSaturation,
  kMemorySaturation,
  kIoSaturation,
  kNetworkLoss,
  kNetworkDelay,
  kPodFailure,
  kConfigError,
};

inline constexpr int kFailureTypeCount = 7;
inline constexpr FailureType kAllFailureTypes[kFailureTypeCount] = {
    FailureType::kCpuSaturation, FailureType::kMemorySaturation, FailureType::kIoSaturation,
    FailureType::kNetworkLoss,   FailureType::kNetworkDelay,     FailureType::kPodFailure,
    FailureType::kConfigError,
};

enum class InjectionMethod { kChaos, kConfig };

FailureCategory category_of(FailureType type);
std::string_view to_string(FailureCategory category);
std::string_view to_string(FailureType type);   // wire id, e.g. "cpu_saturation"
std::string_view label_of(FailureType type);    // display label, e.g. "CPU Saturation"
std::string_view to_string(InjectionMethod method);
std::optional<FailureType> parse_failure_type(std::string_view s);  // accepts wire id or label
std::optional<FailureCategory> parse_category(std::string_view s);
int index_of(FailureType type);
bool is_network(FailureType type);

struct MagnitudeRange {
  double min = 0.0;
  double max = 0.0;
  double fallback = 0.0;
};
MagnitudeRange magnitude_range(FailureType type);

// For network types `target` is the link source and `peer` its destination.
// `config_key` selects the corrupted key for config_error; empty picks the
// service's first key in sorted order.
struct FailureSpec {
  FailureCategory category = FailureCategory::kResource;
  FailureType type = FailureType::kCpuSaturation;
  std::string target;
  std::string peer;
  std::string config_key;
  double magnitude = 0.0;
  InjectionMethod method = InjectionMethod::kChaos;

  friend bool operator==(const FailureSpec&, const FailureSpec&) = default;
};

// Builds a spec with the category, method and default magnitude filled in.
FailureSpec make_spec(FailureType type, std::string target, std::string peer = {}, std::string config_key = {});

// Throws kInvalidArgument when category/method/magnitude break the table.
void validate_spec(const FailureSpec& spec);

enum class RecoveryPredicate { kCpuInBand, kMemInBand, kIoInBand, kLinkLossInBand, kLinkDelayInBand, kPodsRunning, kConfigRestored };
std::string_view to_string(RecoveryPredicate p);

struct FailureRecord {
  FailureSpec spec;
  std::int64_t injected_at = 0;
  std::vector<std::string> handles;
  std::map<std::string, std::string> original_values;  // config key -> value
  RecoveryPredicate recovery_predicate = RecoveryPredicate::kCpuInBand;
  std::uint64_t lineage = 0;
  std::vector<std::string> affected_pods;
};

FailureRecord inject(sim::ClusterState& state, const FailureSpec& spec);

// Policy-facing view of a service. Deliberately excludes config values.
struct ServiceView {
  std::string name;
  std::vector<std::string> dependencies;
  int desired_replicas = 1;
  sim::Metrics baseline;
};

struct AuxContext {
  std::string environment_summary;
  std::vector<std::string> action_constraints;
  std::vector<std::string> probe_catalog;
  std::vector<ServiceView> services;
};

AuxContext make_aux_context(const sim::ClusterState& state);

struct FailureReport {
  std::string target_service;
  std::string peer;
  FailureType failure_type = FailureType::kCpuSaturation;
  std::string config_key;
  std::string description;
  AuxContext aux_context;
};

FailureReport make_report(const FailureRecord& record, const AuxContext& aux);

// One block per report, in order; the single diagnosis input of a
// multi-fault scenario.
std::string composite_description(const std::vector<FailureReport>& reports);

// Ground truth: cause removed and the target's levels back in band with every
// pod Running. Throws kLineage when the record belongs to another state.
bool oracle_verify(const sim::ClusterState& state, const FailureRecord& record);

// Undoes the injection and anything it left behind on the target. Idempotent.
void restore(sim::ClusterState& state, const FailureRecord& record);

// ------------------------------------------------------------------ suites

enum class Difficulty { kEasy, kMedium, kHard };
std::string_view to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view s);
std::size_t suite_size(Difficulty d);

struct Scenario {
  std::string scenario_id;
  Difficulty difficulty = Difficulty::kEasy;
  std::vector<FailureSpec> specs;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Services a spec touches: the target, plus the peer for network types.
std::vector<std::string> touched_services(const FailureSpec& spec);
bool independent(const sim::Topology& topology, const FailureSpec& a, const FailureSpec& b);

std::vector<Scenario> gen_suite(const sim::Topology& topology, Difficulty difficulty, std::uint64_t seed);

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(std::string_view line);
std::string suite_to_jsonl(const std::vector<Scenario>& suite);
std::vector<Scenario> suite_from_jsonl(std::string_view text);

}  // namespace remed::fault
