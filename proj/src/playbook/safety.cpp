#include "remed/playbook/safety.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "remed/playbook/catalog.hpp"

namespace remed::playbook {

namespace {

struct Rule {
  std::string id;
  std::vector<std::regex> patterns;
};

std::regex rx(const char* pattern) { return std::regex(pattern, std::regex::ECMAScript | std::regex::icase); }

// Command-position anchor: start of line or after a shell separator, with an
// optional sudo.
#define CMD_START R"((^|[;&|(]\s*)(sudo\s+)?)"

const std::vector<Rule>& rules() {
  static const std::vector<Rule> table = {
      {"destructive-fs",
       {rx(CMD_START R"(rm\s+(-[a-z]*\s+)*-[a-z]*[rf][a-z]*\s+(-[a-z-]*\s+)*(/|/\*|~|/etc|/var|/usr|/home|/boot|/root|/bin|/lib)/?(\s|$|;|&))"),
        rx(CMD_START R"(mkfs(\.\w+)?\b)"), rx(CMD_START R"(dd\b.*\bof=/dev/)"), rx(R"(>\s*/dev/(sd|nvme|xvd|vd))"),
        rx(CMD_START R"(chmod\s+-R\s+\S+\s+/(\s|$))"), rx(CMD_START R"(shred\b.*\s/dev/)")}},
      {"fleet-shutdown",
       {rx(CMD_START R"(kubectl\s+scale\b.*--all\b)"),
        rx(CMD_START R"(kubectl\s+delete\s+(deploy|deployment|deployments)\s+(.*\s)?--all\b)"),
        rx(CMD_START R"(systemctl\s+stop\s+\*)")}},
      {"namespace-delete",
       {rx(CMD_START R"(kubectl\s+delete\s+(ns|namespace|namespaces)\b)"),
        rx(CMD_START R"(kubectl\s+delete\s+(ns|namespace|namespaces)/)"), rx(CMD_START R"(kubectl\s+delete\s+all\b)")}},
      {"node-drain-all",
       {rx(CMD_START R"(kubectl\s+(drain|cordon)\b)"), rx(CMD_START R"((shutdown|poweroff|halt|reboot)\b)"),
        rx(CMD_START R"(init\s+0\b)")}},
      {"credential-exfil",
       {rx(R"(/etc/shadow\b)"), rx(R"(\.ssh/)"), rx(R"(\bid_(rsa|ed25519|ecdsa)\b)"), rx(R"(\.kube/config\b)"),
        rx(CMD_START R"(kubectl\s+(get|describe)\s+secrets?\b)"), rx(R"(\b(env|printenv)\b.*\|\s*(curl|nc|wget)\b)"),
        rx(CMD_START R"(nc\b.*\s-e\s)"), rx(R"(\baws_secret_access_key\b)")}},
      {"out-of-scope-write", {}},
  };
  return table;
}

#undef CMD_START

}  // namespace

std::vector<std::string> safety_rule_ids() {
  std::vector<std::string> ids;
  for (const auto& r : rules()) ids.push_back(r.id);
  return ids;
}

std::vector<std::string> match_denylist(std::string_view command) {
  const std::string cmd(command);
  std::vector<std::string> hits;
  for (const auto& r : rules()) {
    for (const auto& p : r.patterns) {
      if (std::regex_search(cmd, p)) {
        hits.push_back(r.id);
        break;
      }
    }
  }
  return hits;
}

SafetyReport check_safety(const Playbook& pb, const SafetyConstraints& c) {
  std::set<std::string> hit;
  std::set<std::string> scaled_to_zero;
  for (const auto& play : pb.plays) {
    for (const auto& task : play.tasks) {
      for (const auto& id : match_denylist(task.command)) hit.insert(id);
      for (const auto& segment : split_segments(task.command)) {
        const auto m = match_command(segment);
        if (!m) continue;
        const auto* action = std::get_if<sim::ClusterAction>(&m->effect);
        if (!action) continue;
        if (const auto* scale = std::get_if<sim::action::ScaleService>(action); scale && scale->replicas == 0) {
          scaled_to_zero.insert(scale->service);
        }
        if (c.scope) {
          for (const auto& svc : written_services(*action, nullptr)) {
            if (!c.scope->count(svc)) hit.insert("out-of-scope-write");
          }
        }
      }
    }
  }
  if (!c.all_services.empty() && std::all_of(c.all_services.begin(), c.all_services.end(), [&](const std::string& s) {
        return scaled_to_zero.count(s) > 0;
      })) {
    hit.insert("fleet-shutdown");
  }
  SafetyReport r;
  for (const auto& id : safety_rule_ids()) {
    if (hit.count(id)) r.matched_rules.push_back(id);
  }
  r.unsafe = !r.matched_rules.empty();
  return r;
}

}  // namespace remed::playbook
