#include "remed/playbook/executor.hpp"

#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/text.hpp"
#include "remed/playbook/catalog.hpp"

namespace remed::playbook {

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::kOk: return "ok";
    case TaskStatus::kChanged: return "changed";
    case TaskStatus::kSkipped: return "skipped";
    case TaskStatus::kFailed: return "failed";
    case TaskStatus::kUnrecognized: return "unrecognized";
  }
  return "?";
}

std::optional<TaskStatus> parse_task_status(std::string_view s) {
  for (auto st : {TaskStatus::kOk, TaskStatus::kChanged, TaskStatus::kSkipped, TaskStatus::kFailed,
                  TaskStatus::kUnrecognized}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::size_t ExecutionTrace::count(TaskStatus status) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.status == status;
  return n;
}

namespace {

double metric_of(const sim::Metrics& m, std::string_view metric) {
  if (metric == "mem") return m.mem_pct;
  if (metric == "io") return m.io_await_ms;
  return m.cpu_pct;
}

// Mean reading across the pods a play targets: the service named by `hosts`,
// or every pod when hosts is a group name.
double mean_cpu(const sim::ClusterState& state, const std::string& hosts) {
  std::vector<const sim::PodState*> pods;
  if (state.find_service(hosts)) {
    pods = state.pods_of(hosts);
  } else {
    for (const auto& p : state.pods) pods.push_back(&p);
  }
  if (pods.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* p : pods) sum += p->reading.cpu_pct;
  return sum / static_cast<double>(pods.size());
}

std::string run_query(const ReadQuery& q, const sim::ClusterState& state, const std::string& hosts) {
  switch (q.kind) {
    case ReadQuery::Kind::kTopCpu: return fmt::format("{:.1f}", mean_cpu(state, hosts));
    case ReadQuery::Kind::kGetMetrics: {
      const auto r = sim::observe(state, sim::ProbeQuery::pod_metrics(q.service));
      if (q.metric.empty()) return r.text;
      if (r.pods.empty()) return "0.0";
      double sum = 0.0;
      for (const auto& p : r.pods) sum += metric_of(p.metrics, q.metric);
      return fmt::format("{:.1f}", sum / static_cast<double>(r.pods.size()));
    }
    case ReadQuery::Kind::kGetPods: {
      if (!q.service.empty()) return sim::observe(state, sim::ProbeQuery::pod_list(q.service)).text;
      std::string out;
      for (const auto& [name, spec] : state.services) out += sim::observe(state, sim::ProbeQuery::pod_list(name)).text;
      return out;
    }
    case ReadQuery::Kind::kEcho: return q.text;
  }
  return {};
}

bool compare(double lhs, CompareOp op, double rhs) {
  switch (op) {
    case CompareOp::kGt: return lhs > rhs;
    case CompareOp::kLt: return lhs < rhs;
    case CompareOp::kGe: return lhs >= rhs;
    case CompareOp::kLe: return lhs <= rhs;
    case CompareOp::kEq: return lhs == rhs;
  }
  return false;
}

void run_task(const TaskDef& task, const Play& play, sim::ClusterState& state,
              std::map<std::string, std::string>& registered, TaskRecord& rec) {
  if (!task.when.empty()) {
    const auto w = parse_when(task.when);
    if (!w) {
      rec.status = TaskStatus::kFailed;
      rec.stdout_text = fmt::format("error: cannot evaluate when '{}'", task.when);
      return;
    }
    bool go = false;
    if (w->literal) {
      go = *w->literal;
    } else {
      auto it = registered.find(w->ident);
      if (it == registered.end()) {
        rec.status = TaskStatus::kFailed;
        rec.stdout_text = fmt::format("error: '{}' is undefined", w->ident);
        return;
      }
      // Non-numeric stdout coerces to 0, as a float filter does.
      go = compare(text::parse_double(text::trim(it->second)).value_or(0.0), w->op, w->rhs);
    }
    if (!go) {
      rec.status = TaskStatus::kSkipped;
      return;
    }
  }

  // Every segment must be recognized before anything runs.
  std::vector<MatchedCommand> plan;
  for (const auto& segment : split_segments(task.command)) {
    auto m = match_command(segment, &state);
    if (!m) {
      rec.status = TaskStatus::kUnrecognized;
      rec.stdout_text = fmt::format("unrecognized command: {}", segment);
      return;
    }
    plan.push_back(std::move(*m));
  }
  if (plan.empty()) {
    rec.status = TaskStatus::kUnrecognized;
    return;
  }

  rec.status = TaskStatus::kOk;
  std::vector<std::string> out;
  for (const auto& m : plan) {
    try {
      if (const auto* action = std::get_if<sim::ClusterAction>(&m.effect)) {
        const auto outcome = sim::apply(state, *action);
        if (outcome.changed) rec.status = TaskStatus::kChanged;
        if (!std::holds_alternative<sim::action::Noop>(*action)) out.push_back(outcome.message);
      } else {
        out.push_back(run_query(std::get<ReadQuery>(m.effect), state, play.hosts));
      }
    } catch (const Error& e) {
      rec.status = TaskStatus::kFailed;
      out.push_back(fmt::format("error: {}", e.what()));
      break;
    }
  }
  rec.stdout_text = text::join(out, "\n");
}

}  // namespace

ExecutionTrace execute(const Playbook& pb, sim::ClusterState& state) {
  ExecutionTrace trace;
  for (const auto& play : pb.plays) {
    std::map<std::string, std::string> registered;
    for (const auto& task : play.tasks) {
      TaskRecord rec;
      rec.play = play.name;
      rec.task = task.name;
      rec.command = task.command;
      run_task(task, play, state, registered, rec);
      if (!task.register_as.empty()) {
        rec.registered = task.register_as;
        registered[task.register_as] = rec.stdout_text;
      }
      trace.records.push_back(std::move(rec));
    }
  }
  return trace;
}

double r_exec(const ExecutionTrace& trace) {
  if (trace.records.empty()) return 0.0;
  const auto good = trace.count(TaskStatus::kOk) + trace.count(TaskStatus::kChanged) + trace.count(TaskStatus::kSkipped);
  return static_cast<double>(good) / static_cast<double>(trace.records.size());
}

std::string trace_to_jsonl(const ExecutionTrace& trace) {
  std::string out;
  for (const auto& r : trace.records) {
    nlohmann::ordered_json j{{"play", r.play},     {"task", r.task},     {"command", r.command},
                             {"status", to_string(r.status)}, {"stdout", r.stdout_text}, {"registered", r.registered}};
    out += j.dump() + "\n";
  }
  return out;
}

ExecutionTrace trace_from_jsonl(std::string_view text) {
  ExecutionTrace trace;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TaskRecord r;
      r.play = j.at("play").get<std::string>();
      r.task = j.at("task").get<std::string>();
      r.command = j.at("command").get<std::string>();
      const auto st = parse_task_status(j.at("status").get<std::string>());
      if (!st) throw Error(ErrorCode::kParse, "trace: unknown status");
      r.status = *st;
      r.stdout_text = j.at("stdout").get<std::string>();
      r.registered = j.at("registered").get<std::string>();
      trace.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, fmt::format("trace: {}", e.what()));
    }
  }
  return trace;
}

}  // namespace remed::playbook
