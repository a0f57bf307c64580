#include "remed/policy/policy.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/text.hpp"
#include "remed/playbook/playbook.hpp"
#include "remed/policy/toy.hpp"

namespace remed::policy {

using ojson = nlohmann::ordered_json;
using fault::FailureType;

std::string_view to_string(HistoryKind kind) {
  switch (kind) {
    case HistoryKind::kProbeResult: return "probe_result";
    case HistoryKind::kProbeRefused: return "probe_refused";
    case HistoryKind::kPlaybook: return "playbook";
    case HistoryKind::kTrace: return "trace";
    case HistoryKind::kFailedTask: return "failed_task";
    case HistoryKind::kUnrecognized: return "unrecognized";
    case HistoryKind::kSafety: return "safety";
    case HistoryKind::kVerification: return "verification";
    case HistoryKind::kVerdict: return "verdict";
  }
  return "?";
}

std::string PolicyInput::report_text() const { return fault::composite_description(reports); }

bool PolicyInput::probed_this_attempt() const {
  return std::any_of(history.begin(), history.end(), [&](const HistoryItem& h) {
    return h.attempt == attempt && (h.kind == HistoryKind::kProbeResult || h.kind == HistoryKind::kProbeRefused);
  });
}

std::int64_t count_tokens(std::string_view text) { return static_cast<std::int64_t>(text::word_count(text)); }

std::int64_t prompt_tokens(const PolicyInput& input) {
  std::int64_t n = count_tokens(input.report_text());
  for (const auto& h : input.history) n += count_tokens(h.text);
  return n;
}

// --------------------------------------------------------------- expert

namespace {

const sim::ProbeResult* latest_probe(const PolicyInput& input, const sim::ProbeQuery& query) {
  for (auto it = input.history.rbegin(); it != input.history.rend(); ++it) {
    if (it->probe && it->probe->query == query) return &*it->probe;
  }
  return nullptr;
}

std::vector<sim::ProbeQuery> expert_probes(const PolicyInput& input) {
  std::vector<sim::ProbeQuery> out;
  for (const auto& r : input.reports) {
    auto q = fault::is_network(r.failure_type) ? sim::ProbeQuery::link_stats(r.target_service, r.peer)
                                               : sim::ProbeQuery::pod_metrics(r.target_service);
    if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(std::move(q));
  }
  if (out.size() > static_cast<std::size_t>(std::max(input.probes_left, 0))) out.resize(std::max(input.probes_left, 0));
  return out;
}

bool wants_probe(const PolicyInput& input) {
  return input.probing && input.probes_left > 0 && !input.probed_this_attempt();
}

playbook::TaskDef shell_task(std::string name, std::string command) {
  playbook::TaskDef t;
  t.name = std::move(name);
  t.action = playbook::ActionKind::kShell;
  t.command = std::move(command);
  return t;
}

RemedyProposal expert_free(const PolicyInput& input) {
  // Causes first, restarts last, so a restart never races a live cause.
  std::vector<playbook::TaskDef> causes;
  std::vector<std::string> restarts;
  std::set<std::string> seen_cmds;
  std::vector<std::string> reasoning;
  auto add_cause = [&](std::string name, std::string cmd) {
    if (seen_cmds.insert(cmd).second) causes.push_back(shell_task(std::move(name), std::move(cmd)));
  };
  auto add_restart = [&](const std::string& svc) {
    if (std::find(restarts.begin(), restarts.end(), svc) == restarts.end()) restarts.push_back(svc);
  };

  for (const auto& r : input.reports) {
    const auto& svc = r.target_service;
    switch (r.failure_type) {
      case FailureType::kCpuSaturation:
      case FailureType::kMemorySaturation:
      case FailureType::kIoSaturation: {
        std::vector<std::string> handles;
        if (const auto* p = latest_probe(input, sim::ProbeQuery::pod_metrics(svc))) {
          for (const auto& proc : p->processes) handles.push_back(proc.handle);
        }
        for (const auto& h : handles) add_cause(fmt::format("kill {} on {}", h, svc), fmt::format("pkill -f {}", h));
        add_restart(svc);
        reasoning.push_back(fmt::format("{} on {}: {} stress process(es) observed; kill them, then restart {}",
                                        fault::to_string(r.failure_type), svc, handles.size(), svc));
        break;
      }
      case FailureType::kNetworkLoss:
      case FailureType::kNetworkDelay:
        add_cause(fmt::format("clear shaping {}->{}", svc, r.peer), fmt::format("tc qdisc del dev {}@{} root", svc, r.peer));
        reasoning.push_back(fmt::format("{} on link {}->{}: remove the qdisc on that link",
                                        fault::to_string(r.failure_type), svc, r.peer));
        break;
      case FailureType::kPodFailure:
        add_restart(svc);
        reasoning.push_back(fmt::format("pod_failure on {}: restart the deployment to replace crashed pods", svc));
        break;
      case FailureType::kConfigError:
        add_cause(fmt::format("roll back config of {}", svc), fmt::format("kubectl rollout undo deployment/{}", svc));
        add_restart(svc);
        reasoning.push_back(fmt::format("config_error on {}{}: roll back, then restart so pods reload it", svc,
                                        r.config_key.empty() ? "" : fmt::format(" (key {})", r.config_key)));
        break;
    }
  }

  playbook::Play play;
  play.name = "remediate";
  play.hosts = input.reports.empty() ? "all" : input.reports.front().target_service;
  play.tasks = std::move(causes);
  for (const auto& svc : restarts) {
    play.tasks.push_back(shell_task(fmt::format("restart {}", svc), fmt::format("kubectl rollout restart deployment/{}", svc)));
  }
  if (play.tasks.empty()) play.tasks.push_back(shell_task("nothing to do", "echo no-op"));

  RemedyProposal out;
  out.playbook_text = playbook::render(playbook::Playbook{{std::move(play)}});
  out.reasoning_text = text::join(reasoning, "\n");
  out.tokens_in = prompt_tokens(input);
  out.tokens_out = count_tokens(out.reasoning_text) + count_tokens(out.playbook_text);
  return out;
}

RemedyProposal expert_template(const PolicyInput& input) {
  std::vector<std::pair<int, const fault::FailureReport*>> picks;
  RemedyProposal out;
  std::vector<std::string> reasoning;
  for (const auto& r : input.reports) {
    const auto feat = features_from_history(input, r);
    const int a = canonical_template(r.failure_type);
    const int f = context_class(r.failure_type, feat.target_degraded, feat.dependency_degraded);
    picks.emplace_back(a, &r);
    out.choices.push_back({f, a});
    reasoning.push_back(fmt::format("{} on {} (target {}, dependencies {}): apply {}", fault::to_string(r.failure_type),
                                    r.target_service, feat.target_degraded ? "degraded" : "healthy",
                                    feat.dependency_degraded ? "degraded" : "healthy", template_library()[a].name));
  }
  out.playbook_text = render_template_playbook(picks);
  out.reasoning_text = text::join(reasoning, "\n");
  out.tokens_in = prompt_tokens(input);
  out.tokens_out = count_tokens(out.reasoning_text) + count_tokens(out.playbook_text);
  return out;
}

}  // namespace

PolicyOutput ExpertPolicy::decide(const PolicyInput& input) {
  if (wants_probe(input)) {
    ProbeRequest req;
    if (mode_ == Mode::kFree) {
      req.queries = expert_probes(input);
    } else {
      for (const auto& r : input.reports) {
        for (auto& q : feature_probes(input, r)) {
          if (std::find(req.queries.begin(), req.queries.end(), q) == req.queries.end()) req.queries.push_back(q);
        }
      }
      if (req.queries.size() > static_cast<std::size_t>(input.probes_left)) req.queries.resize(input.probes_left);
    }
    if (!req.queries.empty()) {
      req.tokens_in = prompt_tokens(input);
      for (const auto& q : req.queries) req.tokens_out += count_tokens(q.to_text());
      return req;
    }
  }
  return mode_ == Mode::kFree ? expert_free(input) : expert_template(input);
}

PolicyOutput NoopPolicy::decide(const PolicyInput& input) {
  playbook::Play play;
  play.name = "noop";
  play.hosts = "all";
  play.tasks.push_back(shell_task("acknowledge", "echo noop"));
  RemedyProposal out;
  out.playbook_text = playbook::render(playbook::Playbook{{std::move(play)}});
  out.tokens_in = prompt_tokens(input);
  out.tokens_out = count_tokens(out.playbook_text);
  return out;
}

// ------------------------------------------------------------ transcripts

std::string transcript_line(const TranscriptEntry& entry) {
  ojson j;
  j["scenario_id"] = entry.scenario_id;
  std::visit(
      [&](const auto& out) {
        using T = std::decay_t<decltype(out)>;
        if constexpr (std::is_same_v<T, ProbeRequest>) {
          j["type"] = "probe";
          auto qs = ojson::array();
          for (const auto& q : out.queries) qs.push_back(q.to_text());
          j["queries"] = std::move(qs);
        } else {
          j["type"] = "proposal";
          j["playbook"] = out.playbook_text;
          j["reasoning"] = out.reasoning_text;
          auto cs = ojson::array();
          for (const auto& c : out.choices) cs.push_back(ojson::array({c.f, c.a}));
          j["choices"] = std::move(cs);
        }
        j["tokens_in"] = out.tokens_in;
        j["tokens_out"] = out.tokens_out;
      },
      entry.output);
  return j.dump();
}

TranscriptEntry transcript_entry_from(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
    TranscriptEntry e;
    e.scenario_id = j.at("scenario_id").get<std::string>();
    const auto type = j.at("type").get<std::string>();
    if (type == "probe") {
      ProbeRequest req;
      for (const auto& q : j.at("queries")) req.queries.push_back(sim::ProbeQuery::from_text(q.get<std::string>()));
      req.tokens_in = j.at("tokens_in").get<std::int64_t>();
      req.tokens_out = j.at("tokens_out").get<std::int64_t>();
      e.output = std::move(req);
    } else if (type == "proposal") {
      RemedyProposal p;
      p.playbook_text = j.at("playbook").get<std::string>();
      p.reasoning_text = j.at("reasoning").get<std::string>();
      p.tokens_in = j.at("tokens_in").get<std::int64_t>();
      p.tokens_out = j.at("tokens_out").get<std::int64_t>();
      if (j.contains("choices")) {
        for (const auto& c : j["choices"]) p.choices.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
      }
      e.output = std::move(p);
    } else {
      throw Error(ErrorCode::kParse, fmt::format("unknown transcript entry type '{}'", type));
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, fmt::format("bad transcript line: {}", ex.what()));
  }
}

void TranscriptLog::append(TranscriptEntry entry) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = by_scenario_.try_emplace(entry.scenario_id);
  if (inserted) order_.push_back(entry.scenario_id);
  it->second.push_back(std::move(entry));
}

std::vector<TranscriptEntry> TranscriptLog::entries() const {
  std::lock_guard lock(mu_);
  std::vector<TranscriptEntry> out;
  for (const auto& id : order_) {
    const auto& v = by_scenario_.at(id);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::string TranscriptLog::to_jsonl() const {
  std::string out;
  for (const auto& e : entries()) {
    out += transcript_line(e);
    out += '\n';
  }
  return out;
}

PolicyOutput RecordingPolicy::decide(const PolicyInput& input) {
  auto out = inner_->decide(input);
  log_->append({input.scenario_id, out});
  return out;
}

ReplayPolicy::ReplayPolicy(const std::vector<TranscriptEntry>& entries, std::string id) : id_(std::move(id)) {
  for (const auto& e : entries) queues_[e.scenario_id].push_back(e.output);
}

ReplayPolicy ReplayPolicy::from_jsonl(std::string_view text, std::string id) {
  std::vector<TranscriptEntry> entries;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) continue;
    entries.push_back(transcript_entry_from(line));
  }
  return ReplayPolicy(entries, std::move(id));
}

PolicyOutput ReplayPolicy::decide(const PolicyInput& input) {
  std::lock_guard lock(mu_);
  auto it = queues_.find(input.scenario_id);
  if (it == queues_.end() || it->second.empty()) {
    throw Error(ErrorCode::kTranscriptExhausted,
                fmt::format("transcript has no further entries for scenario '{}'", input.scenario_id));
  }
  auto out = std::move(it->second.front());
  it->second.pop_front();
  return out;
}

}  // namespace remed::policy
