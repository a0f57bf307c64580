#pragma once

// Deterministic discrete-time model of a microservice cluster.
//
// Every pod and link carries two copies of each metric: a noise-free `level`
// that relaxes exponentially toward its setpoint, and a `reading` that is the
// level plus seeded Gaussian observation noise. Probes and observable checks
// see readings; ground-truth status verification inspects levels.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "remed/sim/topology.hpp"

namespace remed::sim {

enum class PodPhase { kRunning, kCrashLoop, kPending, kTerminated };
std::string_view to_string(PodPhase phase);

struct Metrics {
  double cpu_pct = 0.0;
  double mem_pct = 0.0;
  double io_await_ms = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct PodState {
  std::string pod_id;
  std::string service;
  PodPhase phase = PodPhase::kRunning;
  Metrics level;
  Metrics reading;
  int restarts = 0;

  double cpu_pct() const { return reading.cpu_pct; }
  double mem_pct() const { return reading.mem_pct; }
  double io_await_ms() const { return reading.io_await_ms; }
};

struct LinkShaping {
  double added_delay_ms = 0.0;
  double loss_pct = 0.0;
};

struct LinkState {
  std::string src;
  std::string dst;
  double base_latency_ms = 0.0;
  LinkShaping level;
  LinkShaping reading;
};

std::string link_key(std::string_view src, std::string_view dst);
std::optional<std::pair<std::string, std::string>> parse_link_key(std::string_view key);

enum class PerturbationKind {
  kCpuStress,
  kMemStress,
  kIoStress,
  kNetDelay,
  kNetLoss,
  kPodKill,
  kConfigCorrupt,
};
std::string_view to_string(PerturbationKind kind);
std::optional<PerturbationKind> parse_perturbation_kind(std::string_view s);
bool is_in_pod_stress(PerturbationKind kind);

// `target` is a service name (stress, config), a pod id (pod_kill) or a link
// key "src->dst" (network). Config corruptions remember the key and the value
// they replaced so a rollback can undo them.
struct Perturbation {
  std::string handle;
  PerturbationKind kind = PerturbationKind::kCpuStress;
  std::string target;
  double magnitude = 0.0;
  std::int64_t injected_at = 0;
  std::string config_key;
  std::string prior_value;
};

struct StressProcess {
  int pid = 0;
  std::string service;
  std::string command;
};

struct ClusterState {
  std::string topology_id;
  std::int64_t clock_ms = 0;
  std::uint64_t seed = 0;
  std::uint64_t lineage = 0;
  SimParams params;
  std::map<std::string, ServiceSpec> services;
  std::vector<PodState> pods;
  std::vector<LinkState> links;
  std::map<std::pair<std::string, std::string>, std::string> config_store;
  std::vector<Perturbation> perturbations;
  std::map<std::string, StressProcess> process_table;
  int next_handle = 1;
  int next_pid = 4100;
  std::map<std::string, int> next_pod_index;

  const ServiceSpec* find_service(std::string_view name) const;
  PodState* find_pod(std::string_view pod_id);
  const PodState* find_pod(std::string_view pod_id) const;
  LinkState* find_link(std::string_view src, std::string_view dst);
  const LinkState* find_link(std::string_view src, std::string_view dst) const;
  std::vector<const PodState*> pods_of(std::string_view service) const;
};

ClusterState load_topology(const Topology& topology, std::uint64_t seed);

// Advances the clock by dt_ms and relaxes every metric by (1 - e^(-dt/tau)).
// Never adds or removes perturbations.
void step(ClusterState& state, std::int64_t dt_ms);

enum class DigestScope {
  kFull,
  // Ignores clock, restart counters, noisy readings and id counters: the
  // equivalence under which restore(inject(s)) == s.
  kStructural,
};

std::string canonical_serialization(const ClusterState& state, DigestScope scope = DigestScope::kFull);
std::uint64_t digest(const ClusterState& state, DigestScope scope = DigestScope::kFull);

// Recovery band: a value is at baseline when within +/- 3 sigma of it.
double band_half_width(const SimParams& params);
bool within_band(double value, double baseline, const SimParams& params);

// ---------------------------------------------------------------- probes

enum class ProbeKind { kPodMetrics, kPodList, kConfigGet, kLinkStats, kTopologySummary };
std::string_view to_string(ProbeKind kind);
std::optional<ProbeKind> parse_probe_kind(std::string_view s);

struct ProbeQuery {
  ProbeKind kind = ProbeKind::kTopologySummary;
  std::string service;
  std::string peer;
  std::string key;

  static ProbeQuery pod_metrics(std::string service);
  static ProbeQuery pod_list(std::string service);
  static ProbeQuery config_get(std::string service, std::string key);
  static ProbeQuery link_stats(std::string src, std::string dst);
  static ProbeQuery topology_summary();

  // "pod_metrics a", "link_stats a b", "config_get a db_url", ...
  std::string to_text() const;
  static ProbeQuery from_text(std::string_view text);

  friend bool operator==(const ProbeQuery&, const ProbeQuery&) = default;
};

struct PodSnapshot {
  std::string pod_id;
  PodPhase phase = PodPhase::kRunning;
  Metrics metrics;
  int restarts = 0;
};

struct ProcessSnapshot {
  std::string handle;
  int pid = 0;
  std::string command;
};

struct LinkSnapshot {
  std::string src;
  std::string dst;
  double latency_ms = 0.0;
  double added_delay_ms = 0.0;
  double loss_pct = 0.0;
};

struct ProbeResult {
  ProbeQuery query;
  std::vector<PodSnapshot> pods;
  std::vector<ProcessSnapshot> processes;
  std::optional<std::string> config_value;
  std::optional<LinkSnapshot> link;
  std::string text;
};

// Read-only; throws Error(kNotFound) for unknown services, links or keys.
ProbeResult observe(const ClusterState& state, const ProbeQuery& query);

// --------------------------------------------------------------- actions

namespace action {
struct RestartPod { std::string pod_id; };
struct RestartService { std::string service; };
struct ScaleService { std::string service; int replicas = 0; };
struct SetConfig { std::string service; std::string key; std::string value; };
struct KillProcess { std::string handle; };
struct ClearLinkShaping { std::string src; std::string dst; };
struct RemovePerturbation { PerturbationKind kind; std::string target; };
struct Noop {};
}  // namespace action

using ClusterAction = std::variant<action::RestartPod, action::RestartService, action::ScaleService,
                                   action::SetConfig, action::KillProcess, action::ClearLinkShaping,
                                   action::RemovePerturbation, action::Noop>;

std::string describe(const ClusterAction& action);

struct ActionOutcome {
  bool changed = false;
  std::string message;
};

// Applies one action. Validation happens before any mutation, so a thrown
// Error leaves the state untouched.
ActionOutcome apply(ClusterState& state, const ClusterAction& action);

// Adds a perturbation with a fresh handle (and a stress process for in-pod
// stress kinds). Used by the fault engine; exposed for tests.
const Perturbation& add_perturbation(ClusterState& state, PerturbationKind kind, std::string target,
                                     double magnitude);

// Overwrites a config value and records a config_corrupt perturbation holding
// the prior value.
const Perturbation& corrupt_config(ClusterState& state, const std::string& service,
                                   const std::string& key, std::string bad_value);

}  // namespace remed::sim
