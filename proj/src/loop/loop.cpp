#include "remed/loop/loop.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/common/text.hpp"

namespace remed::loop {

using ojson = nlohmann::ordered_json;
using policy::HistoryItem;
using policy::HistoryKind;

std::string_view to_string(VerificationMode mode) {
  return mode == VerificationMode::kOracle ? "oracle" : "observable";
}

std::optional<VerificationMode> parse_verification_mode(std::string_view s) {
  if (s == "oracle") return VerificationMode::kOracle;
  if (s == "observable") return VerificationMode::kObservable;
  return std::nullopt;
}

void LoopConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (t_max < 0) bad(fmt::format("t_max must be >= 0 (got {})", t_max));
  if (t_max > 100) bad(fmt::format("t_max must be <= 100 (got {})", t_max));
  if (probe_budget < 0) bad(fmt::format("probe_budget must be >= 0 (got {})", probe_budget));
  if (settle_steps < 1) bad(fmt::format("settle_steps must be >= 1 (got {})", settle_steps));
  if (step_ms < 1) bad(fmt::format("step_ms must be >= 1 (got {})", step_ms));
  if (ms_per_output_token < 0 || ms_per_probe < 0) bad("latency costs must be >= 0");
}

// ------------------------------------------------------------ observable

bool observable_verify(const sim::ClusterState& state, const fault::FailureReport& report) {
  const auto* spec = state.find_service(report.target_service);
  if (!spec) throw Error(ErrorCode::kNotFound, fmt::format("unknown service '{}'", report.target_service));
  const auto& params = state.params;
  if (fault::is_network(report.failure_type)) {
    const auto* link = state.find_link(report.target_service, report.peer);
    if (!link) throw Error(ErrorCode::kNotFound, fmt::format("unknown link {}->{}", report.target_service, report.peer));
    if (!sim::within_band(link->reading.loss_pct, 0.0, params)) return false;
    if (!sim::within_band(link->reading.added_delay_ms, 0.0, params)) return false;
  }
  const auto pods = state.pods_of(report.target_service);
  if (pods.empty()) return false;
  for (const auto* pod : pods) {
    if (pod->phase != sim::PodPhase::kRunning) return false;
    if (!sim::within_band(pod->reading.cpu_pct, spec->baseline.cpu_pct, params)) return false;
    if (!sim::within_band(pod->reading.mem_pct, spec->baseline.mem_pct, params)) return false;
    if (!sim::within_band(pod->reading.io_await_ms, spec->baseline.io_await_ms, params)) return false;
  }
  return true;
}

// --------------------------------------------------------------- reflect

policy::PolicyInput reflect(policy::PolicyInput input, const Attempt& attempt) {
  auto add = [&](HistoryKind kind, std::string text) {
    input.history.push_back(HistoryItem{kind, attempt.index, std::move(text), std::nullopt});
  };
  add(HistoryKind::kPlaybook, attempt.playbook_text.empty() ? "(empty)" : attempt.playbook_text);
  if (!attempt.parsed) {
    add(HistoryKind::kFailedTask, fmt::format("playbook rejected: {}", attempt.parse_error));
  } else {
    const auto& t = attempt.trace;
    add(HistoryKind::kTrace, fmt::format("{} tasks: {} ok, {} changed, {} skipped, {} failed, {} unrecognized",
                                         t.records.size(), t.count(playbook::TaskStatus::kOk),
                                         t.count(playbook::TaskStatus::kChanged), t.count(playbook::TaskStatus::kSkipped),
                                         t.count(playbook::TaskStatus::kFailed),
                                         t.count(playbook::TaskStatus::kUnrecognized)));
    for (const auto& r : t.records) {
      if (r.status == playbook::TaskStatus::kFailed) {
        add(HistoryKind::kFailedTask, fmt::format("task '{}' failed: {}", r.task, r.stdout_text));
      } else if (r.status == playbook::TaskStatus::kUnrecognized) {
        add(HistoryKind::kUnrecognized, fmt::format("task '{}': command not recognized: {}", r.task, r.command));
      }
    }
  }
  if (attempt.safety.unsafe) {
    add(HistoryKind::kSafety, fmt::format("unsafe, matched rules: {}", text::join(attempt.safety.matched_rules, ", ")));
  }
  for (const auto& note : attempt.verification_notes) add(HistoryKind::kVerification, note);
  add(HistoryKind::kVerdict, fmt::format("attempt {} did not remediate the failure", attempt.index));
  return input;
}

// ------------------------------------------------------------------ loop

namespace {

std::vector<std::string> verification_notes(const sim::ClusterState& state, const std::vector<Target>& targets) {
  std::vector<std::string> out;
  for (const auto& t : targets) {
    const auto& r = t.report;
    if (fault::is_network(r.failure_type)) {
      if (const auto* link = state.find_link(r.target_service, r.peer)) {
        out.push_back(fmt::format("link {}->{}: loss {:.1f}%, added delay {:.1f} ms", r.target_service, r.peer,
                                  link->reading.loss_pct, link->reading.added_delay_ms));
      }
      continue;
    }
    const auto* spec = state.find_service(r.target_service);
    if (!spec) continue;
    const auto pods = state.pods_of(r.target_service);
    std::size_t running = 0;
    double cpu = 0, mem = 0, io = 0;
    for (const auto* p : pods) {
      running += p->phase == sim::PodPhase::kRunning;
      cpu += p->reading.cpu_pct;
      mem += p->reading.mem_pct;
      io += p->reading.io_await_ms;
    }
    const double n = pods.empty() ? 1.0 : static_cast<double>(pods.size());
    out.push_back(fmt::format("{}: {}/{} pods Running; mean cpu {:.1f}% (baseline {:.1f}), mem {:.1f}% (baseline {:.1f}), "
                              "io {:.1f} ms (baseline {:.1f})",
                              r.target_service, running, pods.size(), cpu / n, spec->baseline.cpu_pct, mem / n,
                              spec->baseline.mem_pct, io / n, spec->baseline.io_await_ms));
  }
  return out;
}

bool verify_all(const sim::ClusterState& state, const std::vector<Target>& targets, VerificationMode mode) {
  for (const auto& t : targets) {
    const bool ok = mode == VerificationMode::kOracle ? fault::oracle_verify(state, t.record)
                                                      : observable_verify(state, t.report);
    if (!ok) return false;
  }
  return true;
}

playbook::SafetyConstraints safety_constraints(const sim::ClusterState& state, const std::vector<Target>& targets) {
  playbook::SafetyConstraints c;
  for (const auto& [name, _] : state.services) c.all_services.push_back(name);
  std::set<std::string> scope;
  for (const auto& t : targets) {
    scope.insert(t.report.target_service);
    if (!t.report.peer.empty()) scope.insert(t.report.peer);
  }
  c.scope = std::move(scope);
  return c;
}

void run_proposal(Attempt& at, const policy::RemedyProposal& p, sim::ClusterState& state,
                  const playbook::SafetyConstraints& constraints) {
  at.playbook_text = p.playbook_text;
  at.reasoning_text = p.reasoning_text;
  at.choices = p.choices;
  auto parsed = playbook::parse(p.playbook_text);
  if (auto* err = std::get_if<playbook::ParseError>(&parsed)) {
    at.parsed = false;
    at.parse_error = err->line > 0 ? fmt::format("line {}: {}", err->line, err->message) : err->message;
    at.structure = playbook::check_structure(p.playbook_text);
    return;
  }
  const auto& pb = std::get<playbook::Playbook>(parsed);
  at.parsed = true;
  at.structure = playbook::check_structure(pb);
  at.safety = playbook::check_safety(pb, constraints);
  // Unsafe playbooks still run: the penalty is graded, not enforced.
  at.trace = playbook::execute(pb, state);
}

}  // namespace

Episode run_episode(policy::Policy& pol, sim::ClusterState& state, const std::vector<Target>& targets,
                    const LoopConfig& config, const std::string& scenario_id) {
  config.validate();
  if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "episode needs at least one target");

  const auto wall_start = std::chrono::steady_clock::now();
  const std::int64_t clock_start = state.clock_ms;

  Episode ep;
  ep.scenario_id = scenario_id;
  ep.policy_id = pol.id();
  ep.mode = config.mode;

  policy::PolicyInput input;
  input.scenario_id = scenario_id;
  for (const auto& t : targets) {
    input.reports.push_back(t.report);
    ep.reports.push_back(t.report.description);
  }
  input.context = targets.front().report.aux_context;
  input.probe_budget = config.probe_budget;
  input.probing = config.probing;

  const auto constraints = safety_constraints(state, targets);
  const int max_attempts = config.effective_t_max() + 1;

  for (int t = 0; t < max_attempts; ++t) {
    input.attempt = t;
    input.probes_left = config.probe_budget;
    Attempt at;
    at.index = t;
    bool refused_last = false;
    std::optional<policy::RemedyProposal> proposal;

    try {
      while (!proposal) {
        auto out = pol.decide(input);
        if (auto* p = std::get_if<policy::RemedyProposal>(&out)) {
          at.tokens_in += p->tokens_in;
          at.tokens_out += p->tokens_out;
          sim::step(state, p->tokens_out * config.ms_per_output_token);
          proposal = std::move(*p);
          break;
        }
        auto& req = std::get<policy::ProbeRequest>(out);
        at.tokens_in += req.tokens_in;
        at.tokens_out += req.tokens_out;
        sim::step(state, req.tokens_out * config.ms_per_output_token);
        const bool over = !config.probing || input.probes_left <= 0 || req.queries.empty();
        if (over) {
          // A second refusal in a row is taken as giving up on the attempt.
          if (refused_last) {
            proposal = policy::RemedyProposal{};
            break;
          }
          refused_last = true;
          for (const auto& q : req.queries) at.probes.push_back({q.to_text(), true});
          input.history.push_back({HistoryKind::kProbeRefused, t,
                                   config.probing ? "probe budget exhausted for this attempt; propose a playbook"
                                                  : "probing is disabled; propose a playbook",
                                   std::nullopt});
          continue;
        }
        refused_last = false;
        for (std::size_t i = 0; i < req.queries.size(); ++i) {
          const auto& q = req.queries[i];
          if (input.probes_left <= 0) {
            at.probes.push_back({q.to_text(), true});
            input.history.push_back({HistoryKind::kProbeRefused, t, fmt::format("refused: {}", q.to_text()), std::nullopt});
            continue;
          }
          --input.probes_left;
          at.probes.push_back({q.to_text(), false});
          sim::step(state, config.ms_per_probe);
          try {
            auto r = sim::observe(state, q);
            input.history.push_back({HistoryKind::kProbeResult, t, r.text, r});
          } catch (const Error& e) {
            input.history.push_back({HistoryKind::kProbeResult, t, fmt::format("{}: error: {}", q.to_text(), e.what()),
                                     std::nullopt});
          }
        }
      }
    } catch (const Error& e) {
      ep.error = fmt::format("{}: {}", remed::to_string(e.code()), e.what());
      break;
    }

    run_proposal(at, *proposal, state, constraints);
    for (int s = 0; s < config.settle_steps; ++s) sim::step(state, config.step_ms);
    at.verdict = verify_all(state, targets, config.mode);
    if (!at.verdict) at.verification_notes = verification_notes(state, targets);
    ep.tokens_in += at.tokens_in;
    ep.tokens_out += at.tokens_out;
    ep.attempts.push_back(std::move(at));
    if (ep.attempts.back().verdict) break;
    if (t + 1 < max_attempts) input = reflect(std::move(input), ep.attempts.back());
  }

  ep.success = ep.error.empty() && !ep.attempts.empty() && ep.attempts.back().verdict;
  ep.latency_ms = state.clock_ms - clock_start;
  if (pol.wall_clock_latency()) {
    ep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
  }
  ep.final_digest = sim::digest(state);
  return ep;
}

// ------------------------------------------------------------------ json

namespace {

ojson attempt_json(const Attempt& a) {
  ojson j;
  j["index"] = a.index;
  j["playbook"] = a.playbook_text;
  j["reasoning"] = a.reasoning_text;
  j["parsed"] = a.parsed;
  j["parse_error"] = a.parse_error;
  auto checks = ojson::object();
  for (const auto& [name, ok] : a.structure.checks) checks[name] = ok;
  j["struct_checks"] = std::move(checks);
  j["r_struct"] = a.structure.r_struct;
  j["unsafe"] = a.safety.unsafe;
  j["safety_rules"] = a.safety.matched_rules;
  auto trace = ojson::array();
  for (const auto& r : a.trace.records) {
    trace.push_back(ojson{{"play", r.play},
                          {"task", r.task},
                          {"command", r.command},
                          {"status", playbook::to_string(r.status)},
                          {"stdout", r.stdout_text},
                          {"registered", r.registered}});
  }
  j["trace"] = std::move(trace);
  j["r_exec"] = playbook::r_exec(a.trace);
  j["verdict"] = a.verdict;
  auto probes = ojson::array();
  for (const auto& p : a.probes) probes.push_back(ojson{{"query", p.query}, {"refused", p.refused}});
  j["probes"] = std::move(probes);
  j["verification_notes"] = a.verification_notes;
  j["tokens_in"] = a.tokens_in;
  j["tokens_out"] = a.tokens_out;
  auto choices = ojson::array();
  for (const auto& c : a.choices) choices.push_back(ojson::array({c.f, c.a}));
  j["choices"] = std::move(choices);
  return j;
}

Attempt attempt_from(const ojson& j) {
  Attempt a;
  a.index = j.at("index").get<int>();
  a.playbook_text = j.at("playbook").get<std::string>();
  a.reasoning_text = j.at("reasoning").get<std::string>();
  a.parsed = j.at("parsed").get<bool>();
  a.parse_error = j.at("parse_error").get<std::string>();
  for (const auto& [name, ok] : j.at("struct_checks").items()) a.structure.checks.emplace_back(name, ok.get<bool>());
  a.structure.r_struct = j.at("r_struct").get<double>();
  a.safety.unsafe = j.at("unsafe").get<bool>();
  a.safety.matched_rules = j.at("safety_rules").get<std::vector<std::string>>();
  for (const auto& r : j.at("trace")) {
    playbook::TaskRecord rec;
    rec.play = r.at("play").get<std::string>();
    rec.task = r.at("task").get<std::string>();
    rec.command = r.at("command").get<std::string>();
    const auto status = playbook::parse_task_status(r.at("status").get<std::string>());
    if (!status) throw Error(ErrorCode::kParse, "bad task status in episode record");
    rec.status = *status;
    rec.stdout_text = r.at("stdout").get<std::string>();
    rec.registered = r.at("registered").get<std::string>();
    a.trace.records.push_back(std::move(rec));
  }
  a.verdict = j.at("verdict").get<bool>();
  for (const auto& p : j.at("probes")) a.probes.push_back({p.at("query").get<std::string>(), p.at("refused").get<bool>()});
  a.verification_notes = j.at("verification_notes").get<std::vector<std::string>>();
  a.tokens_in = j.at("tokens_in").get<std::int64_t>();
  a.tokens_out = j.at("tokens_out").get<std::int64_t>();
  for (const auto& c : j.at("choices")) a.choices.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  return a;
}

}  // namespace

std::string episode_to_json(const Episode& ep) {
  ojson j;
  j["schema"] = kEpisodeSchemaVersion;
  j["scenario_id"] = ep.scenario_id;
  j["policy"] = ep.policy_id;
  j["mode"] = to_string(ep.mode);
  j["reports"] = ep.reports;
  auto attempts = ojson::array();
  for (const auto& a : ep.attempts) attempts.push_back(attempt_json(a));
  j["attempts"] = std::move(attempts);
  j["success"] = ep.success;
  j["latency_ms"] = ep.latency_ms;
  j["wall_ms"] = ep.wall_ms ? ojson(*ep.wall_ms) : ojson(nullptr);
  j["tokens_in"] = ep.tokens_in;
  j["tokens_out"] = ep.tokens_out;
  j["final_digest"] = hex64(ep.final_digest);
  j["error"] = ep.error;
  return j.dump();
}

Episode episode_from_json(std::string_view line) {
  try {
    const auto j = ojson::parse(line);
    const int schema = j.at("schema").get<int>();
    if (schema != kEpisodeSchemaVersion) {
      throw Error(ErrorCode::kParse, fmt::format("unsupported episode schema {}", schema));
    }
    Episode ep;
    ep.scenario_id = j.at("scenario_id").get<std::string>();
    ep.policy_id = j.at("policy").get<std::string>();
    const auto mode = parse_verification_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::kParse, "bad verification mode in episode record");
    ep.mode = *mode;
    ep.reports = j.at("reports").get<std::vector<std::string>>();
    for (const auto& a : j.at("attempts")) ep.attempts.push_back(attempt_from(a));
    ep.success = j.at("success").get<bool>();
    ep.latency_ms = j.at("latency_ms").get<std::int64_t>();
    if (!j.at("wall_ms").is_null()) ep.wall_ms = j["wall_ms"].get<double>();
    ep.tokens_in = j.at("tokens_in").get<std::int64_t>();
    ep.tokens_out = j.at("tokens_out").get<std::int64_t>();
    ep.final_digest = std::stoull(j.at("final_digest").get<std::string>(), nullptr, 16);
    ep.error = j.at("error").get<std::string>();
    return ep;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, fmt::format("bad episode record: {}", ex.what()));
  }
}

std::string episodes_to_jsonl(const std::vector<Episode>& episodes) {
  std::string out;
  for (const auto& ep : episodes) {
    out += episode_to_json(ep);
    out += '\n';
  }
  return out;
}

std::vector<Episode> episodes_from_jsonl(std::string_view text) {
  std::vector<Episode> out;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) continue;
    out.push_back(episode_from_json(line));
  }
  return out;
}

}  // namespace remed::loop
