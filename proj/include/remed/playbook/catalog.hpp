#pragma once

// Maps shell command text onto simulated effects. Rules are tried in order
// and the first match wins; anything unmatched is "unrecognized".

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "remed/sim/cluster.hpp"

namespace remed::playbook {

struct CatalogEntry {
  std::string id;
  std::string pattern;
  std::string effect;
  std::string example;
};

const std::vector<CatalogEntry>& command_catalog();

// Read-only commands evaluated against the state at execution time.
struct ReadQuery {
  enum class Kind { kTopCpu, kGetMetrics, kGetPods, kEcho } kind = Kind::kEcho;
  std::string service;  // get-metrics
  std::string metric;   // get-metrics: cpu | mem | io | empty for all
  std::string text;     // echo payload
};

struct MatchedCommand {
  std::string rule_id;
  std::variant<sim::ClusterAction, ReadQuery> effect;

  bool mutates() const;
};

// Splits a shell line into commands on unquoted newlines, ';', '&&' and
// '||'. Pipes stay inside a segment.
std::vector<std::string> split_segments(std::string_view command);

// Pure text match of one segment. Pid-based kills are resolved against
// `state` when given.
std::optional<MatchedCommand> match_command(std::string_view command, const sim::ClusterState* state = nullptr);

// Services a mutating action writes to; empty for read-only or no-op.
std::vector<std::string> written_services(const sim::ClusterAction& action, const sim::ClusterState* state);

}  // namespace remed::playbook
