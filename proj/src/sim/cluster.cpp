#include "remed/sim/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/common/text.hpp"

namespace remed::sim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void not_found(const std::string& what) { throw Error(ErrorCode::kNotFound, what); }

double clamp_pct(double v) { return std::clamp(v, 0.0, 100.0); }
double clamp_nonneg(double v) { return std::max(v, 0.0); }

// Stateless seeded noise: a pure function of (seed, clock, entity, channel),
// so the state never carries generator internals.
double gaussian(std::uint64_t seed, std::int64_t clock, std::string_view entity, int channel) {
  std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(clock));
  h = hash_combine(h, fnv1a64(entity));
  h = hash_combine(h, static_cast<std::uint64_t>(channel));
  const double u1 = 1.0 - unit_double(splitmix64(h));
  const double u2 = unit_double(splitmix64(h ^ 0x5851f42d4c957f2dULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Metrics baseline_metrics(const ServiceSpec& spec) {
  return Metrics{spec.baseline.cpu_pct, spec.baseline.mem_pct, spec.baseline.io_await_ms};
}

std::string handle_prefix(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kCpuStress:
    case PerturbationKind::kMemStress:
    case PerturbationKind::kIoStress: return "stress";
    case PerturbationKind::kNetDelay:
    case PerturbationKind::kNetLoss: return "netem";
    case PerturbationKind::kPodKill: return "podkill";
    case PerturbationKind::kConfigCorrupt: return "cfg";
  }
  return "chaos";
}

std::string stress_command(PerturbationKind kind, double magnitude) {
  switch (kind) {
    case PerturbationKind::kCpuStress: return fmt::format("stress-ng --cpu 2 --cpu-load {:.0f}", magnitude);
    case PerturbationKind::kMemStress: return fmt::format("stress-ng --vm 1 --vm-bytes {:.0f}%", magnitude);
    case PerturbationKind::kIoStress: return fmt::format("stress-ng --hdd 2 --target-await {:.0f}ms", magnitude);
    default: return "stress-ng";
  }
}

void reset_pod(PodState& pod, const ServiceSpec& spec) {
  pod.phase = PodPhase::kRunning;
  pod.restarts += 1;
  pod.level = baseline_metrics(spec);
  pod.reading = pod.level;
}

// Drops in-pod stress on `service` and pod kills on the given pods.
bool clear_restart_scoped(ClusterState& state, std::string_view service, const std::vector<std::string>& pod_ids) {
  const auto before = state.perturbations.size();
  std::erase_if(state.perturbations, [&](const Perturbation& p) {
    if (is_in_pod_stress(p.kind) && p.target == service) {
      state.process_table.erase(p.handle);
      return true;
    }
    if (p.kind == PerturbationKind::kPodKill &&
        std::find(pod_ids.begin(), pod_ids.end(), p.target) != pod_ids.end()) {
      return true;
    }
    return false;
  });
  return state.perturbations.size() != before;
}

bool service_config_broken(const ClusterState& state, std::string_view service) {
  return std::any_of(state.perturbations.begin(), state.perturbations.end(), [&](const Perturbation& p) {
    return p.kind == PerturbationKind::kConfigCorrupt && p.target == service;
  });
}

bool pod_killed(const ClusterState& state, std::string_view pod_id) {
  return std::any_of(state.perturbations.begin(), state.perturbations.end(), [&](const Perturbation& p) {
    return p.kind == PerturbationKind::kPodKill && p.target == pod_id;
  });
}

}  // namespace

// ------------------------------------------------------------------ names

std::string_view to_string(PodPhase phase) {
  switch (phase) {
    case PodPhase::kRunning: return "Running";
    case PodPhase::kCrashLoop: return "CrashLoopBackOff";
    case PodPhase::kPending: return "Pending";
    case PodPhase::kTerminated: return "Terminated";
  }
  return "Unknown";
}

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kCpuStress: return "cpu_stress";
    case PerturbationKind::kMemStress: return "mem_stress";
    case PerturbationKind::kIoStress: return "io_stress";
    case PerturbationKind::kNetDelay: return "net_delay";
    case PerturbationKind::kNetLoss: return "net_loss";
    case PerturbationKind::kPodKill: return "pod_kill";
    case PerturbationKind::kConfigCorrupt: return "config_corrupt";
  }
  return "unknown";
}

std::optional<PerturbationKind> parse_perturbation_kind(std::string_view s) {
  for (auto k : {PerturbationKind::kCpuStress, PerturbationKind::kMemStress, PerturbationKind::kIoStress,
                 PerturbationKind::kNetDelay, PerturbationKind::kNetLoss, PerturbationKind::kPodKill,
                 PerturbationKind::kConfigCorrupt}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

bool is_in_pod_stress(PerturbationKind kind) {
  return kind == PerturbationKind::kCpuStress || kind == PerturbationKind::kMemStress ||
         kind == PerturbationKind::kIoStress;
}

std::string link_key(std::string_view src, std::string_view dst) { return fmt::format("{}->{}", src, dst); }

std::optional<std::pair<std::string, std::string>> parse_link_key(std::string_view key) {
  const auto pos = key.find("->");
  if (pos == std::string_view::npos || pos == 0 || pos + 2 >= key.size()) return std::nullopt;
  return std::pair{std::string(key.substr(0, pos)), std::string(key.substr(pos + 2))};
}

// ----------------------------------------------------------------- lookup

const ServiceSpec* ClusterState::find_service(std::string_view name) const {
  auto it = services.find(std::string(name));
  return it == services.end() ? nullptr : &it->second;
}

PodState* ClusterState::find_pod(std::string_view pod_id) {
  auto it = std::find_if(pods.begin(), pods.end(), [&](const PodState& p) { return p.pod_id == pod_id; });
  return it == pods.end() ? nullptr : &*it;
}

const PodState* ClusterState::find_pod(std::string_view pod_id) const {
  return const_cast<ClusterState*>(this)->find_pod(pod_id);
}

LinkState* ClusterState::find_link(std::string_view src, std::string_view dst) {
  auto it = std::find_if(links.begin(), links.end(), [&](const LinkState& l) { return l.src == src && l.dst == dst; });
  return it == links.end() ? nullptr : &*it;
}

const LinkState* ClusterState::find_link(std::string_view src, std::string_view dst) const {
  return const_cast<ClusterState*>(this)->find_link(src, dst);
}

std::vector<const PodState*> ClusterState::pods_of(std::string_view service) const {
  std::vector<const PodState*> out;
  for (const auto& p : pods) {
    if (p.service == service) out.push_back(&p);
  }
  return out;
}

// ------------------------------------------------------------ construction

ClusterState load_topology(const Topology& topology, std::uint64_t seed) {
  ClusterState s;
  s.topology_id = topology.id;
  s.seed = seed;
  s.params = topology.params;
  s.lineage = hash_combine(fnv1a64(topology.id), seed);
  for (const auto& spec : topology.services) {
    s.services.emplace(spec.name, spec);
    for (const auto& [k, v] : spec.config) s.config_store[{spec.name, k}] = v;
    for (int i = 0; i < spec.desired_replicas; ++i) {
      PodState pod;
      pod.pod_id = fmt::format("{}-{}", spec.name, i);
      pod.service = spec.name;
      pod.level = baseline_metrics(spec);
      pod.reading = pod.level;
      s.pods.push_back(std::move(pod));
    }
    s.next_pod_index[spec.name] = spec.desired_replicas;
  }
  for (const auto& l : topology.links) {
    s.links.push_back(LinkState{l.src, l.dst, l.base_latency_ms, {}, {}});
  }
  return s;
}

// --------------------------------------------------------------- dynamics

void step(ClusterState& state, std::int64_t dt_ms) {
  if (dt_ms <= 0) throw Error(ErrorCode::kInvalidArgument, "step: dt_ms must be > 0");
  state.clock_ms += dt_ms;
  const double k = 1.0 - std::exp(-static_cast<double>(dt_ms) / state.params.tau_ms);
  const double sigma = state.params.noise_sigma;

  for (auto& pod : state.pods) {
    const auto& spec = state.services.at(pod.service);
    Metrics target = baseline_metrics(spec);
    for (const auto& p : state.perturbations) {
      if (p.target != pod.service) continue;
      if (p.kind == PerturbationKind::kCpuStress) target.cpu_pct = std::max(target.cpu_pct, p.magnitude);
      if (p.kind == PerturbationKind::kMemStress) target.mem_pct = std::max(target.mem_pct, p.magnitude);
      if (p.kind == PerturbationKind::kIoStress) target.io_await_ms = std::max(target.io_await_ms, p.magnitude);
    }
    pod.level.cpu_pct = clamp_pct(pod.level.cpu_pct + k * (target.cpu_pct - pod.level.cpu_pct));
    pod.level.mem_pct = clamp_pct(pod.level.mem_pct + k * (target.mem_pct - pod.level.mem_pct));
    pod.level.io_await_ms = clamp_nonneg(pod.level.io_await_ms + k * (target.io_await_ms - pod.level.io_await_ms));

    pod.reading.cpu_pct = clamp_pct(pod.level.cpu_pct + sigma * gaussian(state.seed, state.clock_ms, pod.pod_id, 0));
    pod.reading.mem_pct = clamp_pct(pod.level.mem_pct + sigma * gaussian(state.seed, state.clock_ms, pod.pod_id, 1));
    pod.reading.io_await_ms =
        clamp_nonneg(pod.level.io_await_ms + sigma * gaussian(state.seed, state.clock_ms, pod.pod_id, 2));

    if (pod_killed(state, pod.pod_id) || service_config_broken(state, pod.service)) {
      pod.phase = PodPhase::kCrashLoop;
    } else if (pod.phase == PodPhase::kPending) {
      pod.phase = PodPhase::kRunning;
    }
  }

  for (auto& link : state.links) {
    const auto key = link_key(link.src, link.dst);
    LinkShaping target;
    for (const auto& p : state.perturbations) {
      if (p.target != key) continue;
      if (p.kind == PerturbationKind::kNetDelay) target.added_delay_ms = std::max(target.added_delay_ms, p.magnitude);
      if (p.kind == PerturbationKind::kNetLoss) target.loss_pct = std::max(target.loss_pct, p.magnitude);
    }
    link.level.added_delay_ms =
        clamp_nonneg(link.level.added_delay_ms + k * (target.added_delay_ms - link.level.added_delay_ms));
    link.level.loss_pct = clamp_pct(link.level.loss_pct + k * (target.loss_pct - link.level.loss_pct));
    link.reading.added_delay_ms =
        clamp_nonneg(link.level.added_delay_ms + sigma * gaussian(state.seed, state.clock_ms, key, 3));
    link.reading.loss_pct = clamp_pct(link.level.loss_pct + sigma * gaussian(state.seed, state.clock_ms, key, 4));
  }
}

double band_half_width(const SimParams& params) { return 3.0 * params.noise_sigma; }

bool within_band(double value, double baseline, const SimParams& params) {
  return std::abs(value - baseline) <= band_half_width(params);
}

// ------------------------------------------------------------------ digest

std::string canonical_serialization(const ClusterState& s, DigestScope scope) {
  const bool full = scope == DigestScope::kFull;
  using text::format_double;
  std::string out = fmt::format("topology={}\nseed={}\nlineage={}\n", s.topology_id, s.seed, s.lineage);
  if (full) {
    out += fmt::format("clock={}\nnext_handle={}\nnext_pid={}\n", s.clock_ms, s.next_handle, s.next_pid);
    for (const auto& [svc, idx] : s.next_pod_index) out += fmt::format("next_pod {}={}\n", svc, idx);
  }
  out += fmt::format("params tau={} sigma={}\n", format_double(s.params.tau_ms), format_double(s.params.noise_sigma));
  for (const auto& [name, spec] : s.services) {
    out += fmt::format("service {} replicas={} deps=[{}] baseline={},{},{}\n", name, spec.desired_replicas,
                       text::join(spec.dependencies, ","), format_double(spec.baseline.cpu_pct),
                       format_double(spec.baseline.mem_pct), format_double(spec.baseline.io_await_ms));
  }
  for (const auto& p : s.pods) {
    out += fmt::format("pod {} svc={} phase={} level={},{},{}", p.pod_id, p.service, to_string(p.phase),
                       format_double(p.level.cpu_pct), format_double(p.level.mem_pct),
                       format_double(p.level.io_await_ms));
    if (full) {
      out += fmt::format(" reading={},{},{} restarts={}", format_double(p.reading.cpu_pct),
                         format_double(p.reading.mem_pct), format_double(p.reading.io_await_ms), p.restarts);
    }
    out += '\n';
  }
  for (const auto& l : s.links) {
    out += fmt::format("link {}->{} base={} level={},{}", l.src, l.dst, format_double(l.base_latency_ms),
                       format_double(l.level.added_delay_ms), format_double(l.level.loss_pct));
    if (full) {
      out += fmt::format(" reading={},{}", format_double(l.reading.added_delay_ms), format_double(l.reading.loss_pct));
    }
    out += '\n';
  }
  for (const auto& [key, value] : s.config_store) {
    out += fmt::format("config {}/{}={}\n", key.first, key.second, value);
  }
  for (const auto& p : s.perturbations) {
    out += fmt::format("perturbation {} kind={} target={} magnitude={} key={} prior={}", p.handle, to_string(p.kind),
                       p.target, format_double(p.magnitude), p.config_key, p.prior_value);
    if (full) out += fmt::format(" at={}", p.injected_at);
    out += '\n';
  }
  for (const auto& [handle, proc] : s.process_table) {
    out += fmt::format("process {} svc={} cmd={}", handle, proc.service, proc.command);
    if (full) out += fmt::format(" pid={}", proc.pid);
    out += '\n';
  }
  return out;
}

std::uint64_t digest(const ClusterState& state, DigestScope scope) {
  return fnv1a64(canonical_serialization(state, scope));
}

// ------------------------------------------------------------------ probes

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::kPodMetrics: return "pod_metrics";
    case ProbeKind::kPodList: return "pod_list";
    case ProbeKind::kConfigGet: return "config_get";
    case ProbeKind::kLinkStats: return "link_stats";
    case ProbeKind::kTopologySummary: return "topology_summary";
  }
  return "unknown";
}

std::optional<ProbeKind> parse_probe_kind(std::string_view s) {
  for (auto k : {ProbeKind::kPodMetrics, ProbeKind::kPodList, ProbeKind::kConfigGet, ProbeKind::kLinkStats,
                 ProbeKind::kTopologySummary}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

ProbeQuery ProbeQuery::pod_metrics(std::string service) { return {ProbeKind::kPodMetrics, std::move(service), {}, {}}; }
ProbeQuery ProbeQuery::pod_list(std::string service) { return {ProbeKind::kPodList, std::move(service), {}, {}}; }
ProbeQuery ProbeQuery::config_get(std::string service, std::string key) {
  return {ProbeKind::kConfigGet, std::move(service), {}, std::move(key)};
}
ProbeQuery ProbeQuery::link_stats(std::string src, std::string dst) {
  return {ProbeKind::kLinkStats, std::move(src), std::move(dst), {}};
}
ProbeQuery ProbeQuery::topology_summary() { return {ProbeKind::kTopologySummary, {}, {}, {}}; }

std::string ProbeQuery::to_text() const {
  switch (kind) {
    case ProbeKind::kPodMetrics:
    case ProbeKind::kPodList: return fmt::format("{} {}", to_string(kind), service);
    case ProbeKind::kConfigGet: return fmt::format("config_get {} {}", service, key);
    case ProbeKind::kLinkStats: return fmt::format("link_stats {} {}", service, peer);
    case ProbeKind::kTopologySummary: return "topology_summary";
  }
  return {};
}

ProbeQuery ProbeQuery::from_text(std::string_view line) {
  const auto words = text::split_ws(line);
  if (words.empty()) throw Error(ErrorCode::kParse, "empty probe query");
  const auto kind = parse_probe_kind(words[0]);
  if (!kind) throw Error(ErrorCode::kParse, fmt::format("unknown probe kind '{}'", words[0]));
  const std::size_t want = *kind == ProbeKind::kTopologySummary                                  ? 1
                           : (*kind == ProbeKind::kConfigGet || *kind == ProbeKind::kLinkStats) ? 3
                                                                                                 : 2;
  if (words.size() != want) {
    throw Error(ErrorCode::kParse, fmt::format("probe '{}' expects {} argument(s)", words[0], want - 1));
  }
  switch (*kind) {
    case ProbeKind::kPodMetrics: return pod_metrics(words[1]);
    case ProbeKind::kPodList: return pod_list(words[1]);
    case ProbeKind::kConfigGet: return config_get(words[1], words[2]);
    case ProbeKind::kLinkStats: return link_stats(words[1], words[2]);
    case ProbeKind::kTopologySummary: return topology_summary();
  }
  throw Error(ErrorCode::kParse, "unreachable probe kind");
}

ProbeResult observe(const ClusterState& state, const ProbeQuery& query) {
  ProbeResult r;
  r.query = query;
  const auto require_service = [&](const std::string& name) -> const ServiceSpec& {
    const auto* spec = state.find_service(name);
    if (!spec) not_found(fmt::format("unknown service '{}'", name));
    return *spec;
  };

  switch (query.kind) {
    case ProbeKind::kPodMetrics:
    case ProbeKind::kPodList: {
      require_service(query.service);
      const bool metrics = query.kind == ProbeKind::kPodMetrics;
      r.text = metrics ? fmt::format("{:<24} {:<17} {:>6} {:>6} {:>9} {:>8}\n", "POD", "STATUS", "CPU%", "MEM%",
                                     "IO_AWAIT", "RESTARTS")
                       : fmt::format("{:<24} {:<17} {:>8}\n", "POD", "STATUS", "RESTARTS");
      for (const auto* pod : state.pods_of(query.service)) {
        r.pods.push_back(PodSnapshot{pod->pod_id, pod->phase, pod->reading, pod->restarts});
        r.text += metrics ? fmt::format("{:<24} {:<17} {:>6.1f} {:>6.1f} {:>9.1f} {:>8}\n", pod->pod_id,
                                        to_string(pod->phase), pod->reading.cpu_pct, pod->reading.mem_pct,
                                        pod->reading.io_await_ms, pod->restarts)
                          : fmt::format("{:<24} {:<17} {:>8}\n", pod->pod_id, to_string(pod->phase), pod->restarts);
      }
      if (metrics) {
        for (const auto& [handle, proc] : state.process_table) {
          if (proc.service != query.service) continue;
          r.processes.push_back(ProcessSnapshot{handle, proc.pid, proc.command});
        }
        if (!r.processes.empty()) {
          r.text += "PROCESSES\n";
          for (const auto& p : r.processes) r.text += fmt::format("{} pid={} {}\n", p.handle, p.pid, p.command);
        }
      }
      break;
    }
    case ProbeKind::kConfigGet: {
      require_service(query.service);
      auto it = state.config_store.find({query.service, query.key});
      if (it == state.config_store.end()) {
        not_found(fmt::format("unknown config key '{}' on service '{}'", query.key, query.service));
      }
      r.config_value = it->second;
      r.text = fmt::format("{}/{} = {}\n", query.service, query.key, it->second);
      break;
    }
    case ProbeKind::kLinkStats: {
      const auto* link = state.find_link(query.service, query.peer);
      if (!link) not_found(fmt::format("unknown link {}->{}", query.service, query.peer));
      LinkSnapshot snap{link->src, link->dst, link->base_latency_ms + link->reading.added_delay_ms,
                        link->reading.added_delay_ms, link->reading.loss_pct};
      r.link = snap;
      r.text = fmt::format("link {}->{} latency_ms={:.1f} added_delay_ms={:.1f} loss_pct={:.1f}\n", snap.src,
                           snap.dst, snap.latency_ms, snap.added_delay_ms, snap.loss_pct);
      break;
    }
    case ProbeKind::kTopologySummary: {
      r.text = fmt::format("topology {} ({} services)\n", state.topology_id, state.services.size());
      for (const auto& [name, spec] : state.services) {
        r.text += fmt::format("{} replicas={} pods={} depends_on=[{}]\n", name, spec.desired_replicas,
                              state.pods_of(name).size(), text::join(spec.dependencies, ", "));
      }
      break;
    }
  }
  return r;
}

// ----------------------------------------------------------------- actions

std::string describe(const ClusterAction& a) {
  return std::visit(
      overloaded{
          [](const action::RestartPod& x) { return fmt::format("restart_pod({})", x.pod_id); },
          [](const action::RestartService& x) { return fmt::format("restart_service({})", x.service); },
          [](const action::ScaleService& x) { return fmt::format("scale_service({}, {})", x.service, x.replicas); },
          [](const action::SetConfig& x) { return fmt::format("set_config({}, {}, {})", x.service, x.key, x.value); },
          [](const action::KillProcess& x) { return fmt::format("kill_process({})", x.handle); },
          [](const action::ClearLinkShaping& x) { return fmt::format("clear_link_shaping({}, {})", x.src, x.dst); },
          [](const action::RemovePerturbation& x) {
            return fmt::format("remove_perturbation({}, {})", to_string(x.kind), x.target);
          },
          [](const action::Noop&) { return std::string("noop"); },
      },
      a);
}

ActionOutcome apply(ClusterState& state, const ClusterAction& act) {
  return std::visit(
      overloaded{
          [&](const action::RestartPod& x) -> ActionOutcome {
            auto* pod = state.find_pod(x.pod_id);
            if (!pod) not_found(fmt::format("unknown pod '{}'", x.pod_id));
            const std::string service = pod->service;
            reset_pod(*pod, state.services.at(service));
            clear_restart_scoped(state, service, {x.pod_id});
            return {true, fmt::format("pod \"{}\" deleted and recreated", x.pod_id)};
          },
          [&](const action::RestartService& x) -> ActionOutcome {
            const auto* spec = state.find_service(x.service);
            if (!spec) not_found(fmt::format("unknown service '{}'", x.service));
            std::vector<std::string> ids;
            for (auto& pod : state.pods) {
              if (pod.service != x.service) continue;
              reset_pod(pod, *spec);
              ids.push_back(pod.pod_id);
            }
            clear_restart_scoped(state, x.service, ids);
            if (ids.empty()) return {false, fmt::format("deployment.apps/{} has no pods", x.service)};
            return {true, fmt::format("deployment.apps/{} restarted", x.service)};
          },
          [&](const action::ScaleService& x) -> ActionOutcome {
            const auto* spec = state.find_service(x.service);
            if (!spec) not_found(fmt::format("unknown service '{}'", x.service));
            if (x.replicas < 0) {
              throw Error(ErrorCode::kInvalidArgument, fmt::format("replicas must be >= 0 (got {})", x.replicas));
            }
            const auto current = static_cast<int>(state.pods_of(x.service).size());
            if (current == x.replicas) return {false, fmt::format("deployment.apps/{} already at {}", x.service, current)};
            if (x.replicas > current) {
              for (int i = current; i < x.replicas; ++i) {
                PodState pod;
                pod.pod_id = fmt::format("{}-{}", x.service, state.next_pod_index[x.service]++);
                pod.service = x.service;
                pod.phase = PodPhase::kPending;
                pod.level = baseline_metrics(*spec);
                pod.reading = pod.level;
                state.pods.push_back(std::move(pod));
              }
            } else {
              int to_remove = current - x.replicas;
              for (auto it = state.pods.rbegin(); it != state.pods.rend() && to_remove > 0;) {
                if (it->service == x.service) {
                  const std::string id = it->pod_id;
                  std::erase_if(state.perturbations, [&](const Perturbation& p) {
                    return p.kind == PerturbationKind::kPodKill && p.target == id;
                  });
                  it = std::make_reverse_iterator(state.pods.erase(std::next(it).base()));
                  --to_remove;
                } else {
                  ++it;
                }
              }
            }
            return {true, fmt::format("deployment.apps/{} scaled to {}", x.service, x.replicas)};
          },
          [&](const action::SetConfig& x) -> ActionOutcome {
            if (!state.find_service(x.service)) not_found(fmt::format("unknown service '{}'", x.service));
            auto it = state.config_store.find({x.service, x.key});
            if (it == state.config_store.end()) {
              not_found(fmt::format("unknown config key '{}' on service '{}'", x.key, x.service));
            }
            if (it->second == x.value) return {false, fmt::format("{}/{} unchanged", x.service, x.key)};
            it->second = x.value;
            std::erase_if(state.perturbations, [&](const Perturbation& p) {
              return p.kind == PerturbationKind::kConfigCorrupt && p.target == x.service && p.config_key == x.key;
            });
            return {true, fmt::format("{}/{} updated", x.service, x.key)};
          },
          [&](const action::KillProcess& x) -> ActionOutcome {
            if (!state.process_table.count(x.handle)) not_found(fmt::format("no process matched '{}'", x.handle));
            state.process_table.erase(x.handle);
            std::erase_if(state.perturbations, [&](const Perturbation& p) { return p.handle == x.handle; });
            return {true, fmt::format("killed {}", x.handle)};
          },
          [&](const action::ClearLinkShaping& x) -> ActionOutcome {
            auto* link = state.find_link(x.src, x.dst);
            if (!link) not_found(fmt::format("unknown link {}->{}", x.src, x.dst));
            const auto key = link_key(x.src, x.dst);
            const auto removed = std::erase_if(state.perturbations, [&](const Perturbation& p) {
              return (p.kind == PerturbationKind::kNetDelay || p.kind == PerturbationKind::kNetLoss) && p.target == key;
            });
            const bool shaped = link->level.added_delay_ms != 0.0 || link->level.loss_pct != 0.0;
            link->level = {};
            link->reading = {};
            return {removed > 0 || shaped, fmt::format("qdisc on {} removed", key)};
          },
          [&](const action::RemovePerturbation& x) -> ActionOutcome {
            auto matches = [&](const Perturbation& p) {
              if (p.kind != x.kind) return false;
              if (p.target == x.target) return true;
              if (p.kind == PerturbationKind::kPodKill) {
                const auto* pod = state.find_pod(p.target);
                return pod && pod->service == x.target;
              }
              return false;
            };
            if (std::none_of(state.perturbations.begin(), state.perturbations.end(), matches)) {
              not_found(fmt::format("no {} perturbation on '{}'", to_string(x.kind), x.target));
            }
            for (const auto& p : state.perturbations) {
              if (!matches(p)) continue;
              if (p.kind == PerturbationKind::kConfigCorrupt) state.config_store[{p.target, p.config_key}] = p.prior_value;
              state.process_table.erase(p.handle);
            }
            std::erase_if(state.perturbations, matches);
            return {true, fmt::format("{} on '{}' removed", to_string(x.kind), x.target)};
          },
          [&](const action::Noop&) -> ActionOutcome { return {false, "noop"}; },
      },
      act);
}

const Perturbation& add_perturbation(ClusterState& state, PerturbationKind kind, std::string target,
                                     double magnitude) {
  switch (kind) {
    case PerturbationKind::kCpuStress:
    case PerturbationKind::kMemStress:
    case PerturbationKind::kIoStress:
      if (!state.find_service(target)) not_found(fmt::format("unknown service '{}'", target));
      break;
    case PerturbationKind::kNetDelay:
    case PerturbationKind::kNetLoss: {
      const auto ends = parse_link_key(target);
      if (!ends || !state.find_link(ends->first, ends->second)) not_found(fmt::format("unknown link '{}'", target));
      break;
    }
    case PerturbationKind::kPodKill:
      if (!state.find_pod(target)) not_found(fmt::format("unknown pod '{}'", target));
      break;
    case PerturbationKind::kConfigCorrupt:
      throw Error(ErrorCode::kInvalidArgument, "config corruption goes through corrupt_config");
  }
  if (!std::isfinite(magnitude) || magnitude < 0) {
    throw Error(ErrorCode::kInvalidArgument, "perturbation magnitude must be finite and >= 0");
  }
  Perturbation p;
  p.handle = fmt::format("{}-{}", handle_prefix(kind), state.next_handle++);
  p.kind = kind;
  p.target = std::move(target);
  p.magnitude = magnitude;
  p.injected_at = state.clock_ms;
  if (is_in_pod_stress(kind)) {
    state.process_table[p.handle] = StressProcess{state.next_pid++, p.target, stress_command(kind, magnitude)};
  }
  if (kind == PerturbationKind::kPodKill) state.find_pod(p.target)->phase = PodPhase::kCrashLoop;
  state.perturbations.push_back(std::move(p));
  return state.perturbations.back();
}

const Perturbation& corrupt_config(ClusterState& state, const std::string& service, const std::string& key,
                                   std::string bad_value) {
  if (!state.find_service(service)) not_found(fmt::format("unknown service '{}'", service));
  auto it = state.config_store.find({service, key});
  if (it == state.config_store.end()) not_found(fmt::format("unknown config key '{}' on service '{}'", key, service));
  Perturbation p;
  p.handle = fmt::format("cfg-{}", state.next_handle++);
  p.kind = PerturbationKind::kConfigCorrupt;
  p.target = service;
  p.injected_at = state.clock_ms;
  p.config_key = key;
  p.prior_value = it->second;
  it->second = std::move(bad_value);
  state.perturbations.push_back(std::move(p));
  return state.perturbations.back();
}

}  // namespace remed::sim
