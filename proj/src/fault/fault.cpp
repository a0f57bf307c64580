#include "remed/fault/fault.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/playbook/catalog.hpp"
#include "remed/playbook/safety.hpp"

namespace remed::fault {

using sim::ClusterState;
using sim::PerturbationKind;
using sim::PodPhase;

namespace {

struct TypeInfo {
  FailureType type;
  FailureCategory category;
  std::string_view id;
  std::string_view label;
  MagnitudeRange range;
};

constexpr TypeInfo kTypes[] = {
    {FailureType::kCpuSaturation, FailureCategory::kResource, "cpu_saturation", "CPU Saturation", {50, 100, 95}},
    {FailureType::kMemorySaturation, FailureCategory::kResource, "memory_saturation", "Memory Saturation",
     {50, 100, 95}},
    {FailureType::kIoSaturation, FailureCategory::kResource, "io_saturation", "IO Saturation", {100, 5000, 500}},
    {FailureType::kNetworkLoss, FailureCategory::kNetwork, "network_loss", "Network Loss", {10, 100, 40}},
    {FailureType::kNetworkDelay, FailureCategory::kNetwork, "network_delay", "Network Delay", {50, 5000, 300}},
    {FailureType::kPodFailure, FailureCategory::kApplication, "pod_failure", "Pod Failure", {1, 1, 1}},
    {FailureType::kConfigError, FailureCategory::kApplication, "config_error", "Configuration Error", {0, 0, 0}},
};

const TypeInfo& info(FailureType t) { return kTypes[static_cast<int>(t)]; }

PerturbationKind chaos_kind(FailureType t) {
  switch (t) {
    case FailureType::kCpuSaturation: return PerturbationKind::kCpuStress;
    case FailureType::kMemorySaturation: return PerturbationKind::kMemStress;
    case FailureType::kIoSaturation: return PerturbationKind::kIoStress;
    case FailureType::kNetworkLoss: return PerturbationKind::kNetLoss;
    case FailureType::kNetworkDelay: return PerturbationKind::kNetDelay;
    case FailureType::kPodFailure: return PerturbationKind::kPodKill;
    case FailureType::kConfigError: return PerturbationKind::kConfigCorrupt;
  }
  throw Error(ErrorCode::kInvalidArgument, "unreachable failure type");
}

RecoveryPredicate predicate_for(FailureType t) {
  switch (t) {
    case FailureType::kCpuSaturation: return RecoveryPredicate::kCpuInBand;
    case FailureType::kMemorySaturation: return RecoveryPredicate::kMemInBand;
    case FailureType::kIoSaturation: return RecoveryPredicate::kIoInBand;
    case FailureType::kNetworkLoss: return RecoveryPredicate::kLinkLossInBand;
    case FailureType::kNetworkDelay: return RecoveryPredicate::kLinkDelayInBand;
    case FailureType::kPodFailure: return RecoveryPredicate::kPodsRunning;
    case FailureType::kConfigError: return RecoveryPredicate::kConfigRestored;
  }
  throw Error(ErrorCode::kInvalidArgument, "unreachable failure type");
}

void require_lineage(const ClusterState& state, const FailureRecord& record) {
  if (record.lineage != state.lineage) {
    throw Error(ErrorCode::kLineage,
                fmt::format("record lineage {} does not match state lineage {}", hex64(record.lineage),
                            hex64(state.lineage)));
  }
}

bool has_handle(const ClusterState& state, const std::string& handle) {
  return std::any_of(state.perturbations.begin(), state.perturbations.end(),
                     [&](const sim::Perturbation& p) { return p.handle == handle; });
}

std::string perturbation_target(const ClusterState& state, const FailureSpec& spec) {
  if (is_network(spec.type)) return sim::link_key(spec.target, spec.peer);
  if (spec.type == FailureType::kPodFailure) {
    const auto pods = state.pods_of(spec.target);
    if (pods.empty()) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("service '{}' has no pods to kill", spec.target));
    }
    return pods.front()->pod_id;
  }
  return spec.target;
}

bool duplicate_active(const ClusterState& state, const FailureSpec& spec) {
  const auto kind = chaos_kind(spec.type);
  for (const auto& p : state.perturbations) {
    if (p.kind != kind) continue;
    if (kind == PerturbationKind::kPodKill) {
      const auto* pod = state.find_pod(p.target);
      if (pod && pod->service == spec.target) return true;
    } else if (is_network(spec.type)) {
      if (p.target == sim::link_key(spec.target, spec.peer)) return true;
    } else if (p.target == spec.target) {
      return true;
    }
  }
  return false;
}

std::string resolve_config_key(const ClusterState& state, const FailureSpec& spec) {
  if (!spec.config_key.empty()) return spec.config_key;
  for (const auto& [key, value] : state.config_store) {
    if (key.first == spec.target) return key.second;
  }
  throw Error(ErrorCode::kNotFound, fmt::format("service '{}' has no config keys", spec.target));
}

sim::Metrics baseline_of(const sim::ServiceSpec& spec) {
  return {spec.baseline.cpu_pct, spec.baseline.mem_pct, spec.baseline.io_await_ms};
}

}  // namespace

FailureCategory category_of(FailureType type) { return info(type).category; }

std::string_view to_string(FailureCategory c) {
  switch (c) {
    case FailureCategory::kResource: return "resource";
    case FailureCategory::kNetwork: return "network";
    case FailureCategory::kApplication: return "application";
  }
  return "?";
}

std::string_view to_string(FailureType type) { return info(type).id; }
std::string_view label_of(FailureType type) { return info(type).label; }
std::string_view to_string(InjectionMethod m) { return m == InjectionMethod::kChaos ? "chaos" : "config"; }

std::optional<FailureType> parse_failure_type(std::string_view s) {
  for (const auto& t : kTypes) {
    if (t.id == s || t.label == s) return t.type;
  }
  return std::nullopt;
}

std::optional<FailureCategory> parse_category(std::string_view s) {
  for (auto c : {FailureCategory::kResource, FailureCategory::kNetwork, FailureCategory::kApplication}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

int index_of(FailureType type) { return static_cast<int>(type); }

bool is_network(FailureType type) { return category_of(type) == FailureCategory::kNetwork; }

MagnitudeRange magnitude_range(FailureType type) { return info(type).range; }

FailureSpec make_spec(FailureType type, std::string target, std::string peer, std::string config_key) {
  FailureSpec s;
  s.type = type;
  s.category = category_of(type);
  s.target = std::move(target);
  s.peer = std::move(peer);
  s.config_key = std::move(config_key);
  s.magnitude = magnitude_range(type).fallback;
  s.method = type == FailureType::kConfigError ? InjectionMethod::kConfig : InjectionMethod::kChaos;
  return s;
}

void validate_spec(const FailureSpec& spec) {
  if (spec.category != category_of(spec.type)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{} belongs to category {}, not {}", to_string(spec.type),
                                                         to_string(category_of(spec.type)), to_string(spec.category)));
  }
  const bool config = spec.type == FailureType::kConfigError;
  if ((spec.method == InjectionMethod::kConfig) != config) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{} cannot use injection method {}", to_string(spec.type), to_string(spec.method)));
  }
  const auto r = magnitude_range(spec.type);
  if (!std::isfinite(spec.magnitude) || spec.magnitude < r.min || spec.magnitude > r.max) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{} magnitude {} outside [{}, {}]", to_string(spec.type),
                                                         spec.magnitude, r.min, r.max));
  }
  if (is_network(spec.type) == spec.peer.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("{} {} a peer", to_string(spec.type), is_network(spec.type) ? "requires" : "takes no"));
  }
}

std::string_view to_string(RecoveryPredicate p) {
  switch (p) {
    case RecoveryPredicate::kCpuInBand: return "cpu_in_band";
    case RecoveryPredicate::kMemInBand: return "mem_in_band";
    case RecoveryPredicate::kIoInBand: return "io_in_band";
    case RecoveryPredicate::kLinkLossInBand: return "link_loss_in_band";
    case RecoveryPredicate::kLinkDelayInBand: return "link_delay_in_band";
    case RecoveryPredicate::kPodsRunning: return "pods_running";
    case RecoveryPredicate::kConfigRestored: return "config_restored";
  }
  return "?";
}

// ----------------------------------------------------------------- inject

FailureRecord inject(ClusterState& state, const FailureSpec& spec) {
  validate_spec(spec);
  if (!state.find_service(spec.target)) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown service '{}'", spec.target));
  }
  if (is_network(spec.type) && !state.find_link(spec.target, spec.peer)) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown link {}->{}", spec.target, spec.peer));
  }
  if (duplicate_active(state, spec)) {
    throw Error(ErrorCode::kDuplicate, fmt::format("{} already active on '{}'", to_string(spec.type),
                                                   is_network(spec.type) ? sim::link_key(spec.target, spec.peer)
                                                                         : spec.target));
  }

  FailureRecord rec;
  rec.spec = spec;
  rec.injected_at = state.clock_ms;
  rec.recovery_predicate = predicate_for(spec.type);
  rec.lineage = state.lineage;

  if (spec.method == InjectionMethod::kConfig) {
    const auto key = resolve_config_key(state, spec);
    rec.spec.config_key = key;
    const auto it = state.config_store.find({spec.target, key});
    if (it == state.config_store.end()) {
      throw Error(ErrorCode::kNotFound, fmt::format("unknown config key '{}' on service '{}'", key, spec.target));
    }
    const std::string original = it->second;
    const auto& p = sim::corrupt_config(state, spec.target, key, original + "#corrupt");
    rec.handles.push_back(p.handle);
    rec.original_values[key] = original;
  } else {
    const auto target = perturbation_target(state, spec);
    const auto& p = sim::add_perturbation(state, chaos_kind(spec.type), target, spec.magnitude);
    rec.handles.push_back(p.handle);
    if (spec.type == FailureType::kPodFailure) rec.affected_pods.push_back(target);
  }
  return rec;
}

// ----------------------------------------------------------------- report

AuxContext make_aux_context(const ClusterState& state) {
  AuxContext aux;
  aux.environment_summary = sim::observe(state, sim::ProbeQuery::topology_summary()).text;
  aux.environment_summary += "playbook commands:\n";
  for (const auto& entry : playbook::command_catalog()) {
    aux.environment_summary += fmt::format("  {}  # {}\n", entry.pattern, entry.effect);
  }
  aux.action_constraints = playbook::safety_rule_ids();
  aux.probe_catalog = {"pod_metrics <service>", "pod_list <service>", "config_get <service> <key>",
                       "link_stats <src> <dst>", "topology_summary"};
  for (const auto& [name, spec] : state.services) {
    aux.services.push_back(ServiceView{name, spec.dependencies, spec.desired_replicas, baseline_of(spec)});
  }
  return aux;
}

FailureReport make_report(const FailureRecord& record, const AuxContext& aux) {
  const auto& s = record.spec;
  FailureReport r;
  r.target_service = s.target;
  r.peer = s.peer;
  r.failure_type = s.type;
  r.config_key = s.config_key;
  r.aux_context = aux;
  const auto label = label_of(s.type);
  switch (s.type) {
    case FailureType::kCpuSaturation:
      r.description = fmt::format("[{}] {} on service '{}': pod CPU utilisation is far above baseline.",
                                  to_string(s.category), label, s.target);
      break;
    case FailureType::kMemorySaturation:
      r.description = fmt::format("[{}] {} on service '{}': pod memory utilisation is far above baseline.",
                                  to_string(s.category), label, s.target);
      break;
    case FailureType::kIoSaturation:
      r.description = fmt::format("[{}] {} on service '{}': pod disk IO await time is far above baseline.",
                                  to_string(s.category), label, s.target);
      break;
    case FailureType::kNetworkLoss:
      r.description = fmt::format("[{}] {} on link '{}' -> '{}': requests from {} to {} are being dropped.",
                                  to_string(s.category), label, s.target, s.peer, s.target, s.peer);
      break;
    case FailureType::kNetworkDelay:
      r.description = fmt::format("[{}] {} on link '{}' -> '{}': requests from {} to {} see added latency.",
                                  to_string(s.category), label, s.target, s.peer, s.target, s.peer);
      break;
    case FailureType::kPodFailure:
      r.description = fmt::format("[{}] {} on service '{}': a pod is not Running and keeps restarting.",
                                  to_string(s.category), label, s.target);
      break;
    case FailureType::kConfigError:
      r.description = fmt::format(
          "[{}] {} on service '{}': pods crash after a change to configuration key '{}'.", to_string(s.category),
          label, s.target, s.config_key);
      break;
  }
  return r;
}

std::string composite_description(const std::vector<FailureReport>& reports) {
  if (reports.size() == 1) return reports.front().description;
  std::string out = fmt::format("{} concurrent failures:\n", reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) out += fmt::format("{}. {}\n", i + 1, reports[i].description);
  return out;
}

// ----------------------------------------------------------------- verify

bool oracle_verify(const ClusterState& state, const FailureRecord& record) {
  require_lineage(state, record);
  const auto& s = record.spec;
  for (const auto& h : record.handles) {
    if (has_handle(state, h)) return false;
  }
  for (const auto& [key, original] : record.original_values) {
    auto it = state.config_store.find({s.target, key});
    if (it == state.config_store.end() || it->second != original) return false;
  }

  if (is_network(s.type)) {
    const auto* link = state.find_link(s.target, s.peer);
    if (!link) return false;
    const double v = s.type == FailureType::kNetworkLoss ? link->level.loss_pct : link->level.added_delay_ms;
    return sim::within_band(v, 0.0, state.params);
  }

  const auto* spec = state.find_service(s.target);
  const auto pods = state.pods_of(s.target);
  if (!spec || pods.empty()) return false;
  for (const auto* pod : pods) {
    if (pod->phase != PodPhase::kRunning) return false;
    switch (record.recovery_predicate) {
      case RecoveryPredicate::kCpuInBand:
        if (!sim::within_band(pod->level.cpu_pct, spec->baseline.cpu_pct, state.params)) return false;
        break;
      case RecoveryPredicate::kMemInBand:
        if (!sim::within_band(pod->level.mem_pct, spec->baseline.mem_pct, state.params)) return false;
        break;
      case RecoveryPredicate::kIoInBand:
        if (!sim::within_band(pod->level.io_await_ms, spec->baseline.io_await_ms, state.params)) return false;
        break;
      default: break;
    }
  }
  return true;
}

// ---------------------------------------------------------------- restore

void restore(ClusterState& state, const FailureRecord& record) {
  require_lineage(state, record);
  const auto& s = record.spec;
  for (const auto& h : record.handles) state.process_table.erase(h);
  std::erase_if(state.perturbations, [&](const sim::Perturbation& p) {
    return std::find(record.handles.begin(), record.handles.end(), p.handle) != record.handles.end();
  });
  for (const auto& [key, original] : record.original_values) {
    state.config_store[{s.target, key}] = original;
    std::erase_if(state.perturbations, [&](const sim::Perturbation& p) {
      return p.kind == PerturbationKind::kConfigCorrupt && p.target == s.target && p.config_key == key;
    });
  }

  if (is_network(s.type)) {
    if (auto* link = state.find_link(s.target, s.peer)) {
      if (s.type == FailureType::kNetworkLoss) {
        link->level.loss_pct = link->reading.loss_pct = 0.0;
      } else {
        link->level.added_delay_ms = link->reading.added_delay_ms = 0.0;
      }
    }
    return;
  }

  const auto& spec = state.services.at(s.target);
  const auto current = static_cast<int>(state.pods_of(s.target).size());
  if (current != spec.desired_replicas) {
    sim::apply(state, sim::action::ScaleService{s.target, spec.desired_replicas});
  }
  const auto base = baseline_of(spec);
  for (auto& pod : state.pods) {
    if (pod.service != s.target) continue;
    if (pod.phase == PodPhase::kRunning && pod.level == base && pod.reading == base) continue;
    if (pod.phase != PodPhase::kPending) ++pod.restarts;
    pod.phase = PodPhase::kRunning;
    pod.level = pod.reading = base;
  }
}

// ----------------------------------------------------------------- suites

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
  }
  return "?";
}

std::optional<Difficulty> parse_difficulty(std::string_view s) {
  for (auto d : {Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard}) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

std::size_t suite_size(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return 23;
    case Difficulty::kMedium: return 49;
    case Difficulty::kHard: return 80;
  }
  return 0;
}

std::vector<std::string> touched_services(const FailureSpec& spec) {
  if (is_network(spec.type)) return {spec.target, spec.peer};
  return {spec.target};
}

bool independent(const sim::Topology& topology, const FailureSpec& a, const FailureSpec& b) {
  for (const auto& x : touched_services(a)) {
    for (const auto& y : touched_services(b)) {
      if (x == y || topology.directly_connected(x, y)) return false;
    }
  }
  return true;
}

namespace {

bool same_fault(const FailureSpec& a, const FailureSpec& b) {
  return a.type == b.type && a.target == b.target && a.peer == b.peer;
}

// Round-robin over a seeded type order; each type walks its own seeded
// target list with a persistent cursor.
class SpecStream {
 public:
  SpecStream(const sim::Topology& topology, std::uint64_t seed) : topology_(topology), rng_(seed) {
    for (auto t : kAllFailureTypes) order_.push_back(t);
    rng_.shuffle(order_);
    for (auto t : kAllFailureTypes) {
      auto& list = candidates_[index_of(t)];
      if (is_network(t)) {
        for (const auto& l : topology.links) list.push_back(make_spec(t, l.src, l.dst));
      } else {
        for (const auto& svc : topology.services) {
          std::string key;
          if (t == FailureType::kConfigError) {
            if (svc.config.empty()) continue;
            auto it = svc.config.begin();
            std::advance(it, static_cast<long>(rng_.below(svc.config.size())));
            key = it->first;
          }
          list.push_back(make_spec(t, svc.name, {}, key));
        }
      }
      rng_.shuffle(list);
    }
  }

  FailureType type_at(std::size_t i) const { return order_[i % order_.size()]; }

  // Next candidate of `type` satisfying `accept`, advancing the cursor past it.
  template <typename Pred>
  std::optional<FailureSpec> take(FailureType type, Pred accept) {
    auto& list = candidates_[index_of(type)];
    auto& cursor = cursors_[index_of(type)];
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& c = list[(cursor + k) % list.size()];
      if (accept(c)) {
        cursor = (cursor + k + 1) % list.size();
        return c;
      }
    }
    return std::nullopt;
  }

  // Tries type_at(i + offset), type_at(i + offset + 1), ... until one yields.
  template <typename Pred>
  FailureSpec take_any(std::size_t i, std::size_t offset, Pred accept, std::string_view why) {
    for (std::size_t j = 0; j < order_.size(); ++j) {
      if (auto s = take(type_at(i + offset + j), accept)) return *s;
    }
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("topology '{}' is too small to build {} scenarios", topology_.id, why));
  }

  SeededRng& rng() { return rng_; }

  bool any_candidate(const std::function<bool(const FailureSpec&)>& accept) const {
    for (const auto& list : candidates_) {
      if (std::any_of(list.begin(), list.end(), accept)) return true;
    }
    return false;
  }

 private:
  const sim::Topology& topology_;
  SeededRng rng_;
  std::vector<FailureType> order_;
  std::vector<FailureSpec> candidates_[kFailureTypeCount];
  std::size_t cursors_[kFailureTypeCount] = {};
};

}  // namespace

std::vector<Scenario> gen_suite(const sim::Topology& topology, Difficulty difficulty, std::uint64_t seed) {
  SpecStream stream(topology, hash_combine(seed, static_cast<std::uint64_t>(difficulty)));
  const auto any = [](const FailureSpec&) { return true; };
  std::vector<Scenario> suite;
  const auto n = suite_size(difficulty);
  for (std::size_t i = 0; i < n; ++i) {
    Scenario sc;
    sc.scenario_id = fmt::format("{}-{:03}", to_string(difficulty), i + 1);
    sc.difficulty = difficulty;
    // A medium first pick must leave an independent partner; on hub-shaped
    // topologies some links touch every other service.
    const auto first =
        difficulty == Difficulty::kMedium
            ? stream.take_any(
                  i, 0,
                  [&](const FailureSpec& c) {
                    return stream.any_candidate([&](const FailureSpec& o) { return independent(topology, c, o); });
                  },
                  "independent-pair")
            : stream.take_any(i, 0, any, "single-fault");
    sc.specs.push_back(first);
    if (difficulty == Difficulty::kMedium) {
      sc.specs.push_back(stream.take_any(
          i, 1, [&](const FailureSpec& c) { return independent(topology, first, c); }, "independent-pair"));
    } else if (difficulty == Difficulty::kHard) {
      sc.specs.push_back(stream.take_any(
          i, 1,
          [&](const FailureSpec& c) { return !same_fault(first, c) && !independent(topology, first, c); },
          "dependent-pair"));
      if (stream.rng().below(2) == 1) {
        sc.specs.push_back(stream.take_any(
            i, 2,
            [&](const FailureSpec& c) {
              return std::none_of(sc.specs.begin(), sc.specs.end(),
                                  [&](const FailureSpec& s) { return same_fault(s, c); });
            },
            "three-fault"));
      }
    }
    suite.push_back(std::move(sc));
  }
  return suite;
}

// ------------------------------------------------------------------- json

namespace {

using ojson = nlohmann::ordered_json;

ojson spec_json(const FailureSpec& s) {
  return ojson{{"category", to_string(s.category)}, {"ftype", to_string(s.type)},   {"target", s.target},
               {"peer", s.peer},                    {"config_key", s.config_key},   {"magnitude", s.magnitude},
               {"method", to_string(s.method)}};
}

FailureSpec spec_from(const ojson& j) {
  FailureSpec s;
  const auto type = parse_failure_type(j.at("ftype").get<std::string>());
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!type || !cat) throw Error(ErrorCode::kParse, "scenario: unknown ftype or category");
  s.type = *type;
  s.category = *cat;
  s.target = j.at("target").get<std::string>();
  s.peer = j.value("peer", "");
  s.config_key = j.value("config_key", "");
  s.magnitude = j.at("magnitude").get<double>();
  const auto method = j.at("method").get<std::string>();
  if (method != "chaos" && method != "config") throw Error(ErrorCode::kParse, "scenario: unknown method " + method);
  s.method = method == "config" ? InjectionMethod::kConfig : InjectionMethod::kChaos;
  validate_spec(s);
  return s;
}

}  // namespace

std::string scenario_to_json(const Scenario& sc) {
  ojson specs = ojson::array();
  for (const auto& s : sc.specs) specs.push_back(spec_json(s));
  return ojson{{"scenario_id", sc.scenario_id}, {"difficulty", to_string(sc.difficulty)}, {"specs", specs}}.dump();
}

Scenario scenario_from_json(std::string_view line) {
  try {
    const auto j = ojson::parse(line);
    Scenario sc;
    sc.scenario_id = j.at("scenario_id").get<std::string>();
    const auto d = parse_difficulty(j.at("difficulty").get<std::string>());
    if (!d) throw Error(ErrorCode::kParse, "scenario: unknown difficulty");
    sc.difficulty = *d;
    for (const auto& s : j.at("specs")) sc.specs.push_back(spec_from(s));
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("scenario: {}", e.what()));
  }
}

std::string suite_to_jsonl(const std::vector<Scenario>& suite) {
  std::string out;
  for (const auto& sc : suite) out += scenario_to_json(sc) + "\n";
  return out;
}

std::vector<Scenario> suite_from_jsonl(std::string_view text) {
  std::vector<Scenario> suite;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    if (!line.empty()) suite.push_back(scenario_from_json(line));
    start = end + 1;
  }
  return suite;
}

}  // namespace remed::fault
