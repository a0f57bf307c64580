#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "remed/playbook/playbook.hpp"

namespace remed::playbook {

// Denylist v1, in evaluation order.
std::vector<std::string> safety_rule_ids();

struct SafetyConstraints {
  // Every service of the deployment; enables the fleet-shutdown scale check.
  std::vector<std::string> all_services;
  // When set, mutating a service outside this set is out-of-scope-write.
  std::optional<std::set<std::string>> scope;
};

struct SafetyReport {
  bool unsafe = false;
  std::vector<std::string> matched_rules;
};

// Static screen; `when` guards do not exempt a task.
SafetyReport check_safety(const Playbook& pb, const SafetyConstraints& constraints = {});

// Rules matched by one command line in isolation (fleet-shutdown's aggregate
// scale check and scope need the whole playbook and are not applied here).
std::vector<std::string> match_denylist(std::string_view command);

}  // namespace remed::playbook
