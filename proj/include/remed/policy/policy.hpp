#pragma once

// Decision-makers for the remediation loop. A policy sees only failure
// reports, the auxiliary context and its own interaction history; it never
// gets a FailureRecord.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "remed/fault/fault.hpp"
#include "remed/sim/cluster.hpp"

namespace remed::policy {

enum class HistoryKind {
  kProbeResult,
  kProbeRefused,
  kPlaybook,
  kTrace,
  kFailedTask,
  kUnrecognized,
  kSafety,
  kVerification,
  kVerdict,
};
std::string_view to_string(HistoryKind kind);

struct HistoryItem {
  HistoryKind kind = HistoryKind::kVerdict;
  int attempt = 0;
  std::string text;
  std::optional<sim::ProbeResult> probe;
};

struct PolicyInput {
  std::string scenario_id;
  std::vector<fault::FailureReport> reports;
  fault::AuxContext context;
  std::vector<HistoryItem> history;  // append-only within an episode
  int attempt = 0;
  int probe_budget = 5;
  int probes_left = 5;
  bool probing = true;

  std::string report_text() const;
  bool probed_this_attempt() const;
};

struct ProbeRequest {
  std::vector<sim::ProbeQuery> queries;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
};

// (context class, action id) pairs, filled by template-based policies.
struct Choice {
  int f = 0;
  int a = 0;

  friend bool operator==(const Choice&, const Choice&) = default;
};

struct RemedyProposal {
  std::string playbook_text;
  std::string reasoning_text;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::vector<Choice> choices;
};

using PolicyOutput = std::variant<ProbeRequest, RemedyProposal>;

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  virtual PolicyOutput decide(const PolicyInput& input) = 0;
  // Episode latency is measured on the wall clock only for remote policies.
  virtual bool wall_clock_latency() const { return false; }
};

// Synthetic token count for scripted policies: whitespace-separated words.
std::int64_t count_tokens(std::string_view text);

// Prompt-side token count shared by scripted policies: the report plus the
// rendered history.
std::int64_t prompt_tokens(const PolicyInput& input);

// ------------------------------------------------------------- scripted

// Rule-based teacher. In free mode it probes once per attempt, then kills
// observed stress processes, clears shaped links, rolls back configs and
// restarts last. In template mode it answers with the canonical toy template
// per report, so its choices are usable as supervised targets.
class ExpertPolicy : public Policy {
 public:
  enum class Mode { kFree, kTemplate };
  explicit ExpertPolicy(Mode mode = Mode::kFree) : mode_(mode) {}
  std::string id() const override { return mode_ == Mode::kFree ? "expert" : "expert-template"; }
  PolicyOutput decide(const PolicyInput& input) override;

 private:
  Mode mode_;
};

class NoopPolicy : public Policy {
 public:
  std::string id() const override { return "noop"; }
  PolicyOutput decide(const PolicyInput& input) override;
};

// ------------------------------------------------------------ transcripts

struct TranscriptEntry {
  std::string scenario_id;
  PolicyOutput output;
};

std::string transcript_line(const TranscriptEntry& entry);
TranscriptEntry transcript_entry_from(std::string_view line);

// Thread-safe sink shared by recording wrappers across parallel episodes.
class TranscriptLog {
 public:
  void append(TranscriptEntry entry);
  // Entries grouped by scenario in first-seen order, each group in call order.
  std::string to_jsonl() const;
  std::vector<TranscriptEntry> entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<TranscriptEntry>> by_scenario_;
};

class RecordingPolicy : public Policy {
 public:
  RecordingPolicy(std::unique_ptr<Policy> inner, std::shared_ptr<TranscriptLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  std::string id() const override { return inner_->id(); }
  PolicyOutput decide(const PolicyInput& input) override;
  bool wall_clock_latency() const override { return inner_->wall_clock_latency(); }

 private:
  std::unique_ptr<Policy> inner_;
  std::shared_ptr<TranscriptLog> log_;
};

// Replays recorded outputs per scenario id; running past the end of a
// scenario's entries throws kTranscriptExhausted.
class ReplayPolicy : public Policy {
 public:
  // `id` lets a replay carry the recorded policy's id so episode records
  // compare byte for byte.
  explicit ReplayPolicy(const std::vector<TranscriptEntry>& entries, std::string id = "replay");
  static ReplayPolicy from_jsonl(std::string_view text, std::string id = "replay");
  std::string id() const override { return id_; }
  PolicyOutput decide(const PolicyInput& input) override;

 private:
  std::string id_;
  std::mutex mu_;
  std::map<std::string, std::deque<PolicyOutput>> queues_;
};

}  // namespace remed::policy
