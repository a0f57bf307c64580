#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "remed/playbook/playbook.hpp"
#include "remed/sim/cluster.hpp"

namespace remed::playbook {

enum class TaskStatus { kOk, kChanged, kSkipped, kFailed, kUnrecognized };
std::string_view to_string(TaskStatus status);
std::optional<TaskStatus> parse_task_status(std::string_view s);

struct TaskRecord {
  std::string play;
  std::string task;
  std::string command;
  TaskStatus status = TaskStatus::kOk;
  std::string stdout_text;
  std::string registered;  // variable name, empty when the task has no register

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

struct ExecutionTrace {
  std::vector<TaskRecord> records;

  std::size_t count(TaskStatus status) const;
  friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;
};

// Runs every task in order. Failures never throw; they become statuses.
ExecutionTrace execute(const Playbook& pb, sim::ClusterState& state);

// (ok + changed + skipped) / total; 0 for an empty trace.
double r_exec(const ExecutionTrace& trace);

std::string trace_to_jsonl(const ExecutionTrace& trace);
ExecutionTrace trace_from_jsonl(std::string_view text);

}  // namespace remed::playbook
