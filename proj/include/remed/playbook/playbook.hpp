#pragma once

// The supported playbook subset: a list of plays, each with hosts, become and
// tasks; a task holds exactly one shell/command action plus optional register
// and when. No loops, handlers, roles or templating.

#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace remed::playbook {

enum class ActionKind { kShell, kCommand };
std::string_view to_string(ActionKind kind);

struct TaskDef {
  std::string name;
  ActionKind action = ActionKind::kShell;
  std::string command;
  std::string register_as;
  std::string when;

  friend bool operator==(const TaskDef&, const TaskDef&) = default;
};

struct Play {
  std::string name;
  std::string hosts;
  bool become = false;
  std::vector<TaskDef> tasks;

  friend bool operator==(const Play&, const Play&) = default;
};

struct Playbook {
  std::vector<Play> plays;

  std::size_t task_count() const;
  friend bool operator==(const Playbook&, const Playbook&) = default;
};

// 1-based position; 0 when unknown.
struct ParseError {
  std::string message;
  int line = 0;
  int column = 0;
};

using ParseResult = std::variant<Playbook, ParseError>;

// Strict parse. Rejects empty or malformed documents, unknown task keywords,
// tasks with zero or several actions and duplicate registers within a play.
// Missing hosts, empty task lists and unresolved when-references parse fine
// and are left to check_structure.
ParseResult parse(std::string_view text);

std::string render(const Playbook& pb);

// Pulls a playbook out of free-form model output: the first ```yaml / ```yml
// / ```ansible fence, else the first bare ``` fence whose body parses as a
// YAML sequence, else the raw text.
std::string extract_playbook_text(std::string_view output);

// ------------------------------------------------------------- structure

inline constexpr std::string_view kStructChecks[] = {
    "parsable", "has_play", "hosts_present", "tasks_nonempty", "actions_valid", "register_unique", "when_resolvable",
};
inline constexpr std::size_t kStructCheckCount = std::size(kStructChecks);

struct StructReport {
  std::vector<std::pair<std::string, bool>> checks;
  double r_struct = 0.0;

  bool passed(std::string_view check) const;
};

// Evaluates every check on a lenient reading of the text, so a playbook
// rejected by the strict parser for a single-rule violation still scores
// the checks it satisfies. Text that is not a YAML play list scores 0.
StructReport check_structure(std::string_view text);
StructReport check_structure(const Playbook& pb);

// ------------------------------------------------------------------ when

enum class CompareOp { kGt, kLt, kGe, kLe, kEq };

// `ident[.stdout] [| float|int] op number`, or a bare literal (true/false or
// a number).
struct WhenExpr {
  std::optional<bool> literal;
  std::string ident;
  CompareOp op = CompareOp::kGt;
  double rhs = 0.0;
};

std::optional<WhenExpr> parse_when(std::string_view text);

}  // namespace remed::playbook
