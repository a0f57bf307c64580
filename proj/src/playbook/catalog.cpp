#include "remed/playbook/catalog.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "remed/common/text.hpp"

namespace remed::playbook {

namespace sa = sim::action;

const std::vector<CatalogEntry>& command_catalog() {
  static const std::vector<CatalogEntry> catalog = {
      {"kubectl-scale", "kubectl scale deployment <svc> --replicas=<n>", "scale_service(svc, n)",
       "kubectl scale deployment order --replicas=3"},
      {"kubectl-delete-pod", "kubectl delete pod <pod>", "restart_pod(pod)", "kubectl delete pod order-0"},
      {"kubectl-rollout-restart", "kubectl rollout restart deployment/<svc>", "restart_service(svc)",
       "kubectl rollout restart deployment/order"},
      {"kubectl-rollout-undo", "kubectl rollout undo deployment/<svc>", "revert the last config change of svc",
       "kubectl rollout undo deployment/order"},
      {"kubectl-get-pods", "kubectl get pods [-l app=<svc>]", "read-only pod listing", "kubectl get pods -l app=order"},
      {"systemctl-restart", "systemctl restart <svc>", "restart_service(svc)", "systemctl restart order"},
      {"tc-qdisc-del", "tc qdisc del dev <src>@<dst> root", "clear_link_shaping(src, dst)",
       "tc qdisc del dev order@payment root"},
      {"pkill", "pkill [-f] <handle>", "kill_process(handle)", "pkill -f stress-3"},
      {"kill-pid", "kill [-9] <pid>", "kill_process(pid)", "kill -9 4101"},
      {"set-config", "set-config <svc> <key> <value>", "set_config(svc, key, value)",
       "set-config order db_url postgres://db/order"},
      {"get-metrics", "get-metrics <svc> [cpu|mem|io]", "read-only metric query", "get-metrics order cpu"},
      {"top", "top -bn1 ...", "read-only mean CPU% over the play's hosts", "top -bn1"},
      {"echo", "echo <text>", "prints text", "echo done"},
      {"curl", "curl <url> ...", "no-op notification", "curl http://monitor/api/notify -d 'ok'"},
  };
  return catalog;
}

bool MatchedCommand::mutates() const {
  const auto* act = std::get_if<sim::ClusterAction>(&effect);
  return act && !std::holds_alternative<sa::Noop>(*act);
}

namespace {

// Shell-ish word split: whitespace separated, single and double quotes group
// and are stripped. Stops at the first unquoted pipe.
std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  bool have = false;
  char quote = 0;
  for (char c : s) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      have = true;
    } else if (c == '|') {
      break;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (have) out.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur += c;
      have = true;
    }
  }
  if (have) out.push_back(std::move(cur));
  return out;
}

// "deployment/x", "deploy/x", or "deployment x" starting at w[i].
std::optional<std::string> deployment_name(const std::vector<std::string>& w, std::size_t i) {
  for (; i < w.size(); ++i) {
    const auto& t = w[i];
    if (text::starts_with(t, "-")) continue;
    for (std::string_view prefix : {"deployment/", "deployments/", "deploy/"}) {
      if (text::starts_with(t, prefix)) return t.substr(prefix.size());
    }
    if ((t == "deployment" || t == "deployments" || t == "deploy") && i + 1 < w.size()) return w[i + 1];
    return std::nullopt;
  }
  return std::nullopt;
}

std::optional<int> replicas_flag(const std::vector<std::string>& w) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::string_view v;
    if (text::starts_with(w[i], "--replicas=")) {
      v = std::string_view(w[i]).substr(11);
    } else if (w[i] == "--replicas" && i + 1 < w.size()) {
      v = w[i + 1];
    } else {
      continue;
    }
    if (const auto n = text::parse_int(v)) return static_cast<int>(*n);
    return std::nullopt;
  }
  return std::nullopt;
}

MatchedCommand act(std::string id, sim::ClusterAction a) { return {std::move(id), std::move(a)}; }
MatchedCommand query(std::string id, ReadQuery q) { return {std::move(id), std::move(q)}; }

std::string pod_service(std::string_view pod_id) {
  const auto dash = pod_id.rfind('-');
  if (dash == std::string_view::npos) return std::string(pod_id);
  return std::string(pod_id.substr(0, dash));
}

}  // namespace

std::vector<std::string> split_segments(std::string_view command) {
  std::vector<std::string> out;
  std::string cur;
  char quote = 0;
  auto flush = [&] {
    const auto t = text::trim(cur);
    if (!t.empty()) out.emplace_back(t);
    cur.clear();
  };
  for (std::size_t i = 0; i < command.size(); ++i) {
    const char c = command[i];
    if (quote) {
      if (c == quote) quote = 0;
      cur += c;
      continue;
    }
    const char next = i + 1 < command.size() ? command[i + 1] : '\0';
    if (c == '\'' || c == '"') {
      quote = c;
      cur += c;
    } else if (c == '\n' || c == ';') {
      flush();
    } else if ((c == '&' && next == '&') || (c == '|' && next == '|')) {
      flush();
      ++i;
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

std::optional<MatchedCommand> match_command(std::string_view command, const sim::ClusterState* state) {
  auto w = words(command);
  if (!w.empty() && w.front() == "sudo") w.erase(w.begin());
  if (w.empty()) return std::nullopt;
  const auto& verb = w[0];
  const auto at = [&](std::size_t i) -> std::string { return i < w.size() ? w[i] : std::string(); };

  if (verb == "kubectl") {
    if (at(1) == "scale") {
      const auto name = deployment_name(w, 2);
      const auto n = replicas_flag(w);
      if (name && n) return act("kubectl-scale", sa::ScaleService{*name, *n});
      return std::nullopt;
    }
    if (at(1) == "delete") {
      if ((at(2) == "pod" || at(2) == "pods") && !at(3).empty() && !text::starts_with(at(3), "-")) {
        return act("kubectl-delete-pod", sa::RestartPod{at(3)});
      }
      if (text::starts_with(at(2), "pod/")) return act("kubectl-delete-pod", sa::RestartPod{at(2).substr(4)});
      return std::nullopt;
    }
    if (at(1) == "rollout" && (at(2) == "restart" || at(2) == "undo")) {
      const auto name = deployment_name(w, 3);
      if (!name) return std::nullopt;
      if (at(2) == "restart") return act("kubectl-rollout-restart", sa::RestartService{*name});
      return act("kubectl-rollout-undo", sa::RemovePerturbation{sim::PerturbationKind::kConfigCorrupt, *name});
    }
    if (at(1) == "get" && (at(2) == "pods" || at(2) == "pod" || at(2) == "po")) {
      ReadQuery q{ReadQuery::Kind::kGetPods, {}, {}, {}};
      for (std::size_t i = 3; i + 1 < w.size(); ++i) {
        if (w[i] == "-l" && text::starts_with(w[i + 1], "app=")) q.service = w[i + 1].substr(4);
      }
      return query("kubectl-get-pods", q);
    }
    return std::nullopt;
  }
  if (verb == "systemctl" && at(1) == "restart" && !at(2).empty()) {
    std::string svc = at(2);
    if (svc.size() > 8 && svc.compare(svc.size() - 8, 8, ".service") == 0) svc.resize(svc.size() - 8);
    return act("systemctl-restart", sa::RestartService{svc});
  }
  if (verb == "tc" && at(1) == "qdisc" && (at(2) == "del" || at(2) == "delete") && at(3) == "dev") {
    const auto dev = at(4);
    const auto sep = dev.find('@');
    if (sep == std::string::npos || sep == 0 || sep + 1 == dev.size()) return std::nullopt;
    return act("tc-qdisc-del", sa::ClearLinkShaping{dev.substr(0, sep), dev.substr(sep + 1)});
  }
  if (verb == "pkill") {
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (!text::starts_with(w[i], "-")) return act("pkill", sa::KillProcess{w[i]});
    }
    return std::nullopt;
  }
  if (verb == "kill") {
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (text::starts_with(w[i], "-")) continue;
      const auto pid = text::parse_int(w[i]);
      if (!pid) return std::nullopt;
      std::string handle = fmt::format("pid-{}", *pid);
      if (state) {
        for (const auto& [h, proc] : state->process_table) {
          if (proc.pid == *pid) handle = h;
        }
      }
      return act("kill-pid", sa::KillProcess{handle});
    }
    return std::nullopt;
  }
  if (verb == "set-config" && w.size() >= 4) {
    std::vector<std::string> rest(w.begin() + 3, w.end());
    return act("set-config", sa::SetConfig{w[1], w[2], text::join(rest, " ")});
  }
  if (verb == "get-metrics" && w.size() >= 2) {
    ReadQuery q{ReadQuery::Kind::kGetMetrics, w[1], at(2), {}};
    if (!q.metric.empty() && q.metric != "cpu" && q.metric != "mem" && q.metric != "io") return std::nullopt;
    return query("get-metrics", q);
  }
  if (verb == "top") return query("top", ReadQuery{ReadQuery::Kind::kTopCpu, {}, {}, {}});
  if (verb == "echo") {
    std::vector<std::string> rest(w.begin() + 1, w.end());
    return query("echo", ReadQuery{ReadQuery::Kind::kEcho, {}, {}, text::join(rest, " ")});
  }
  if (verb == "curl") return act("curl", sa::Noop{});
  return std::nullopt;
}

std::vector<std::string> written_services(const sim::ClusterAction& action, const sim::ClusterState* state) {
  return std::visit(
      [&](const auto& a) -> std::vector<std::string> {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, sa::RestartPod>) {
          if (state) {
            if (const auto* pod = state->find_pod(a.pod_id)) return {pod->service};
          }
          return {pod_service(a.pod_id)};
        } else if constexpr (std::is_same_v<T, sa::RestartService>) {
          return {a.service};
        } else if constexpr (std::is_same_v<T, sa::ScaleService>) {
          return {a.service};
        } else if constexpr (std::is_same_v<T, sa::SetConfig>) {
          return {a.service};
        } else if constexpr (std::is_same_v<T, sa::KillProcess>) {
          if (state) {
            auto it = state->process_table.find(a.handle);
            if (it != state->process_table.end()) return {it->second.service};
          }
          return {};
        } else if constexpr (std::is_same_v<T, sa::ClearLinkShaping>) {
          return {a.src};
        } else if constexpr (std::is_same_v<T, sa::RemovePerturbation>) {
          if (const auto ends = sim::parse_link_key(a.target)) return {ends->first};
          return {a.target};
        } else {
          return {};
        }
      },
      action);
}

}  // namespace remed::playbook
