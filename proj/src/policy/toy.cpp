#include "remed/policy/toy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/playbook/playbook.hpp"

namespace remed::policy {

using fault::FailureType;

namespace {

// A probed value this far above its baseline reads as degraded. Equal to the
// simulator's default 3-sigma band so healthy noise almost never trips it.
constexpr double kDegradeMargin = 6.0;

const fault::ServiceView* find_view(const PolicyInput& input, std::string_view name) {
  for (const auto& s : input.context.services) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool pods_degraded(const sim::ProbeResult& r, const fault::ServiceView* view) {
  for (const auto& pod : r.pods) {
    if (pod.phase != sim::PodPhase::kRunning) return true;
    if (!view) continue;
    if (pod.metrics.cpu_pct > view->baseline.cpu_pct + kDegradeMargin) return true;
    if (pod.metrics.mem_pct > view->baseline.mem_pct + kDegradeMargin) return true;
    if (pod.metrics.io_await_ms > view->baseline.io_await_ms + kDegradeMargin) return true;
  }
  return !r.processes.empty();
}

bool link_degraded(const sim::ProbeResult& r) {
  return r.link && (r.link->loss_pct > kDegradeMargin || r.link->added_delay_ms > kDegradeMargin);
}

std::optional<bool> probed_state(const PolicyInput& input, const sim::ProbeQuery& q) {
  for (auto it = input.history.rbegin(); it != input.history.rend(); ++it) {
    if (it->attempt != input.attempt || !it->probe || !(it->probe->query == q)) continue;
    if (q.kind == sim::ProbeKind::kLinkStats) return link_degraded(*it->probe);
    return pods_degraded(*it->probe, find_view(input, q.service));
  }
  return std::nullopt;
}

}  // namespace

int context_class(FailureType type, bool target_degraded, bool dependency_degraded) {
  return fault::index_of(type) * 4 + (target_degraded ? 2 : 0) + (dependency_degraded ? 1 : 0);
}

FailureType context_type(int f) {
  if (f < 0 || f >= kToyContexts) throw Error(ErrorCode::kInvalidArgument, fmt::format("context class {} out of range", f));
  return fault::kAllFailureTypes[f / 4];
}

const std::array<TemplateInfo, kToyActions>& template_library() {
  static const std::array<TemplateInfo, kToyActions> lib = {{
      {0, "restart-service", "resource, pod"},
      {1, "clear-link-shaping", "network"},
      {2, "rollback-and-restart", "config"},
      {3, "scale-out", "distractor"},
      {4, "delete-first-pod", "pod"},
      {5, "rollback-only", "distractor"},
      {6, "inspect-only", "distractor"},
      {7, "restart-and-purge-namespace", "distractor"},
  }};
  return lib;
}

std::vector<std::string> template_commands(int a, const fault::FailureReport& report) {
  const std::string& s = report.target_service;
  const std::string& p = report.peer.empty() ? s : report.peer;
  switch (a) {
    case 0: return {fmt::format("kubectl rollout restart deployment/{}", s)};
    case 1: return {fmt::format("tc qdisc del dev {}@{} root", s, p)};
    // One task: a failed rollback must not fall through to the restart.
    case 2: return {fmt::format("kubectl rollout undo deployment/{0} && kubectl rollout restart deployment/{0}", s)};
    case 3: return {fmt::format("kubectl scale deployment {} --replicas=3", s)};
    case 4: return {fmt::format("kubectl delete pod {}-0", s)};
    case 5: return {fmt::format("kubectl rollout undo deployment/{}", s)};
    case 6: return {fmt::format("get-metrics {}", s)};
    case 7: return {fmt::format("kubectl rollout restart deployment/{}", s), "kubectl delete namespace default"};
    default: throw Error(ErrorCode::kInvalidArgument, fmt::format("template {} out of range", a));
  }
}

int canonical_template(FailureType type) {
  switch (type) {
    case FailureType::kNetworkLoss:
    case FailureType::kNetworkDelay: return 1;
    case FailureType::kConfigError: return 2;
    default: return 0;
  }
}

std::string render_template_playbook(const std::vector<std::pair<int, const fault::FailureReport*>>& picks) {
  playbook::Play play;
  play.name = "remediate";
  play.hosts = picks.empty() ? "all" : picks.front().second->target_service;
  for (const auto& [a, report] : picks) {
    const auto cmds = template_commands(a, *report);
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      playbook::TaskDef t;
      t.name = fmt::format("{} {}{}", template_library()[a].name, report->target_service,
                           cmds.size() > 1 ? fmt::format(" step {}", i + 1) : "");
      t.action = playbook::ActionKind::kShell;
      t.command = cmds[i];
      play.tasks.push_back(std::move(t));
    }
  }
  return playbook::render(playbook::Playbook{{std::move(play)}});
}

std::vector<sim::ProbeQuery> feature_probes(const PolicyInput& input, const fault::FailureReport& report) {
  std::vector<sim::ProbeQuery> out;
  out.push_back(fault::is_network(report.failure_type)
                    ? sim::ProbeQuery::link_stats(report.target_service, report.peer)
                    : sim::ProbeQuery::pod_metrics(report.target_service));
  if (const auto* view = find_view(input, report.target_service)) {
    for (const auto& dep : view->dependencies) out.push_back(sim::ProbeQuery::pod_metrics(dep));
  }
  return out;
}

ToyFeatures features_from_history(const PolicyInput& input, const fault::FailureReport& report) {
  ToyFeatures feat;
  const auto probes = feature_probes(input, report);
  if (auto t = probed_state(input, probes.front())) feat.target_degraded = *t;
  for (std::size_t i = 1; i < probes.size(); ++i) {
    if (probed_state(input, probes[i]).value_or(false)) feat.dependency_degraded = true;
  }
  return feat;
}

// ------------------------------------------------------------------- toy

ToyPolicy::ToyPolicy(std::uint64_t seed) : ToyPolicy(seed, std::vector<double>(kToyContexts * kToyActions, 0.0)) {}

ToyPolicy::ToyPolicy(std::uint64_t seed, std::vector<double> theta) : seed_(seed), theta_(std::move(theta)) {
  if (theta_.size() != static_cast<std::size_t>(kToyContexts * kToyActions)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("theta must have {} entries (got {})", kToyContexts * kToyActions, theta_.size()));
  }
}

void ToyPolicy::check_index(int f, int a) const {
  if (f < 0 || f >= kToyContexts) throw Error(ErrorCode::kInvalidArgument, fmt::format("context class {} out of range", f));
  if (a < 0 || a >= kToyActions) throw Error(ErrorCode::kInvalidArgument, fmt::format("action {} out of range", a));
}

double& ToyPolicy::at(int f, int a) {
  check_index(f, a);
  return theta_[static_cast<std::size_t>(f * kToyActions + a)];
}

double ToyPolicy::at(int f, int a) const {
  check_index(f, a);
  return theta_[static_cast<std::size_t>(f * kToyActions + a)];
}

std::vector<double> ToyPolicy::probs(int f) const {
  check_index(f, 0);
  const double* row = &theta_[static_cast<std::size_t>(f * kToyActions)];
  const double m = *std::max_element(row, row + kToyActions);
  std::vector<double> p(kToyActions);
  double z = 0.0;
  for (int a = 0; a < kToyActions; ++a) z += (p[a] = std::exp(row[a] - m));
  for (auto& v : p) v /= z;
  return p;
}

double ToyPolicy::logprob(int f, int a) const {
  check_index(f, a);
  const double* row = &theta_[static_cast<std::size_t>(f * kToyActions)];
  const double m = *std::max_element(row, row + kToyActions);
  double z = 0.0;
  for (int b = 0; b < kToyActions; ++b) z += std::exp(row[b] - m);
  return row[a] - m - std::log(z);
}

std::vector<double> ToyPolicy::grad_logprob(int f, int a) const {
  check_index(f, a);
  auto g = probs(f);
  for (auto& v : g) v = -v;
  g[a] += 1.0;
  return g;
}

int ToyPolicy::sample(int f, std::uint64_t salt) const {
  const auto p = probs(f);
  const double u = unit_double(hash_combine(hash_combine(seed_, static_cast<std::uint64_t>(f)), salt));
  double acc = 0.0;
  for (int a = 0; a < kToyActions; ++a) {
    acc += p[a];
    if (u < acc) return a;
  }
  return kToyActions - 1;
}

int ToyPolicy::argmax(int f) const {
  const auto p = probs(f);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

PolicyOutput ToyPolicy::decide(const PolicyInput& input) {
  if (input.probing && input.probes_left > 0 && !input.probed_this_attempt()) {
    ProbeRequest req;
    for (const auto& r : input.reports) {
      for (auto& q : feature_probes(input, r)) {
        if (std::find(req.queries.begin(), req.queries.end(), q) == req.queries.end()) req.queries.push_back(q);
      }
    }
    if (req.queries.size() > static_cast<std::size_t>(input.probes_left)) req.queries.resize(input.probes_left);
    req.tokens_in = prompt_tokens(input);
    for (const auto& q : req.queries) req.tokens_out += count_tokens(q.to_text());
    return req;
  }

  RemedyProposal out;
  std::vector<std::pair<int, const fault::FailureReport*>> picks;
  for (std::size_t i = 0; i < input.reports.size(); ++i) {
    const auto& r = input.reports[i];
    const auto feat = features_from_history(input, r);
    const int f = context_class(r.failure_type, feat.target_degraded, feat.dependency_degraded);
    std::uint64_t salt = fnv1a64(input.scenario_id);
    salt = hash_combine(salt, static_cast<std::uint64_t>(input.attempt));
    salt = hash_combine(salt, i);
    const int a = greedy_ ? argmax(f) : sample(f, salt);
    picks.emplace_back(a, &r);
    out.choices.push_back({f, a});
  }
  out.playbook_text = render_template_playbook(picks);
  out.tokens_in = prompt_tokens(input);
  out.tokens_out = count_tokens(out.playbook_text);
  return out;
}

}  // namespace remed::policy
