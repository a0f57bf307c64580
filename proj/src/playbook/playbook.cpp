#include "remed/playbook/playbook.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "remed/common/text.hpp"

namespace remed::playbook {

std::string_view to_string(ActionKind kind) { return kind == ActionKind::kShell ? "shell" : "command"; }

std::size_t Playbook::task_count() const {
  std::size_t n = 0;
  for (const auto& p : plays) n += p.tasks.size();
  return n;
}

bool StructReport::passed(std::string_view check) const {
  for (const auto& [name, ok] : checks) {
    if (name == check) return ok;
  }
  return false;
}

namespace {

// ------------------------------------------------------------- lenient model

struct TaskDraft {
  std::string name;
  std::vector<std::pair<ActionKind, std::string>> actions;
  std::vector<std::pair<std::string, YAML::Mark>> unknown_keys;
  std::string register_as;
  std::string when;
  YAML::Mark mark;
};

struct PlayDraft {
  std::string name;
  std::string hosts;
  bool become = false;
  std::vector<TaskDraft> tasks;
  YAML::Mark mark;
};

struct Draft {
  std::vector<PlayDraft> plays;
};

const std::set<std::string, std::less<>> kIgnoredTaskKeys = {
    "become", "become_user", "ignore_errors", "changed_when", "failed_when", "tags",  "environment",
    "args",   "no_log",      "delegate_to",   "vars",         "check_mode",  "timeout",
};

std::optional<ActionKind> action_kind(std::string_view key) {
  if (key == "shell" || key == "ansible.builtin.shell") return ActionKind::kShell;
  if (key == "command" || key == "ansible.builtin.command") return ActionKind::kCommand;
  return std::nullopt;
}

std::string scalar_text(const YAML::Node& n) {
  if (!n || n.IsNull()) return "";
  if (n.IsScalar()) return n.Scalar();
  if (n.IsSequence()) {
    std::vector<std::string> parts;
    for (const auto& item : n) parts.push_back(scalar_text(item));
    return text::join(parts, " and ");
  }
  if (n.IsMap() && n["cmd"]) return scalar_text(n["cmd"]);
  return "";
}

bool truthy(const YAML::Node& n) {
  const auto s = scalar_text(n);
  return s == "yes" || s == "true" || s == "True" || s == "on" || s == "1";
}

struct DraftError {
  std::string message;
  YAML::Mark mark;
};

using DraftResult = std::variant<Draft, DraftError>;

TaskDraft read_task(const YAML::Node& node) {
  TaskDraft t;
  t.mark = node.Mark();
  for (const auto& kv : node) {
    const auto key = kv.first.Scalar();
    if (key == "name") {
      t.name = scalar_text(kv.second);
    } else if (key == "register") {
      t.register_as = scalar_text(kv.second);
    } else if (key == "when") {
      t.when = scalar_text(kv.second);
    } else if (auto kind = action_kind(key)) {
      t.actions.emplace_back(*kind, text::trim(scalar_text(kv.second)));
    } else if (!kIgnoredTaskKeys.count(key)) {
      t.unknown_keys.emplace_back(key, kv.first.Mark());
    }
  }
  return t;
}

PlayDraft read_play(const YAML::Node& node) {
  PlayDraft p;
  p.mark = node.Mark();
  p.name = scalar_text(node["name"]);
  p.hosts = scalar_text(node["hosts"]);
  p.become = node["become"] && truthy(node["become"]);
  if (const auto tasks = node["tasks"]; tasks && tasks.IsSequence()) {
    for (const auto& t : tasks) {
      if (t.IsMap()) p.tasks.push_back(read_task(t));
    }
  }
  return p;
}

DraftResult read_draft(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    return DraftError{fmt::format("malformed document: {}", e.msg), e.mark};
  } catch (const YAML::Exception& e) {
    return DraftError{fmt::format("malformed document: {}", e.msg), e.mark};
  }
  if (!root || root.IsNull()) return DraftError{"empty document", YAML::Mark::null_mark()};
  Draft d;
  try {
    if (root.IsMap() && (root["tasks"] || root["hosts"])) {
      d.plays.push_back(read_play(root));
    } else if (root.IsSequence()) {
      for (const auto& play : root) {
        if (!play.IsMap()) return DraftError{"each play must be a mapping", play.Mark()};
        if (play["tasks"] && !play["tasks"].IsSequence()) return DraftError{"'tasks' must be a list", play.Mark()};
        d.plays.push_back(read_play(play));
      }
    } else {
      return DraftError{"document is not a list of plays", root.Mark()};
    }
  } catch (const YAML::Exception& e) {
    return DraftError{fmt::format("malformed document: {}", e.msg), e.mark};
  }
  return d;
}

int line_of(const YAML::Mark& m) { return m.line < 0 ? 0 : m.line + 1; }
int column_of(const YAML::Mark& m) { return m.column < 0 ? 0 : m.column + 1; }

bool task_action_valid(const TaskDraft& t) {
  return t.unknown_keys.empty() && t.actions.size() == 1 && !t.actions.front().second.empty();
}

StructReport score(const Draft* d) {
  StructReport r;
  std::vector<bool> ok(kStructCheckCount, false);
  if (d) {
    ok[0] = true;
    ok[1] = !d->plays.empty();
    ok[2] = ok[1] && std::all_of(d->plays.begin(), d->plays.end(), [](const PlayDraft& p) { return !p.hosts.empty(); });
    ok[3] = ok[1] && std::all_of(d->plays.begin(), d->plays.end(), [](const PlayDraft& p) { return !p.tasks.empty(); });
    bool any_task = false, actions = true, registers = true, whens = true;
    for (const auto& p : d->plays) {
      std::set<std::string> seen;
      for (const auto& t : p.tasks) {
        any_task = true;
        actions = actions && task_action_valid(t);
        if (!t.when.empty()) {
          const auto w = parse_when(t.when);
          whens = whens && w && (w->literal || seen.count(w->ident));
        }
        if (!t.register_as.empty() && !seen.insert(t.register_as).second) registers = false;
      }
    }
    ok[4] = any_task && actions;
    ok[5] = registers;
    ok[6] = whens;
  }
  std::size_t passed = 0;
  for (std::size_t i = 0; i < kStructCheckCount; ++i) {
    r.checks.emplace_back(std::string(kStructChecks[i]), ok[i]);
    passed += ok[i];
  }
  r.r_struct = static_cast<double>(passed) / static_cast<double>(kStructCheckCount);
  return r;
}

}  // namespace

ParseResult parse(std::string_view text) {
  auto draft = read_draft(text);
  if (auto* err = std::get_if<DraftError>(&draft)) {
    return ParseError{err->message, line_of(err->mark), column_of(err->mark)};
  }
  const auto& d = std::get<Draft>(draft);
  Playbook pb;
  for (const auto& pd : d.plays) {
    Play play{pd.name, pd.hosts, pd.become, {}};
    std::set<std::string> registers;
    for (const auto& t : pd.tasks) {
      if (!t.unknown_keys.empty()) {
        const auto& [key, mark] = t.unknown_keys.front();
        return ParseError{fmt::format("unknown action kind '{}'", key), line_of(mark), column_of(mark)};
      }
      if (t.actions.size() != 1) {
        return ParseError{fmt::format("task '{}' must have exactly one action, found {}", t.name, t.actions.size()),
                          line_of(t.mark), column_of(t.mark)};
      }
      if (t.actions.front().second.empty()) {
        return ParseError{fmt::format("task '{}' has an empty command", t.name), line_of(t.mark), column_of(t.mark)};
      }
      if (!t.register_as.empty() && !registers.insert(t.register_as).second) {
        return ParseError{fmt::format("duplicate register '{}'", t.register_as), line_of(t.mark), column_of(t.mark)};
      }
      play.tasks.push_back(TaskDef{t.name, t.actions.front().first, t.actions.front().second, t.register_as, t.when});
    }
    pb.plays.push_back(std::move(play));
  }
  return pb;
}

std::string render(const Playbook& pb) {
  YAML::Emitter out;
  out << YAML::BeginSeq;
  for (const auto& play : pb.plays) {
    out << YAML::BeginMap;
    if (!play.name.empty()) out << YAML::Key << "name" << YAML::Value << play.name;
    if (!play.hosts.empty()) out << YAML::Key << "hosts" << YAML::Value << play.hosts;
    if (play.become) out << YAML::Key << "become" << YAML::Value << YAML::YesNoBool << true;
    out << YAML::Key << "tasks" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : play.tasks) {
      out << YAML::BeginMap;
      if (!t.name.empty()) out << YAML::Key << "name" << YAML::Value << t.name;
      out << YAML::Key << std::string(to_string(t.action)) << YAML::Value << t.command;
      if (!t.register_as.empty()) out << YAML::Key << "register" << YAML::Value << t.register_as;
      if (!t.when.empty()) out << YAML::Key << "when" << YAML::Value << t.when;
      out << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq;
  return std::string("---\n") + out.c_str() + "\n";
}

std::string extract_playbook_text(std::string_view output) {
  std::optional<std::string> bare;
  std::size_t pos = 0;
  while (true) {
    const auto open = output.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto info_end = output.find('\n', open);
    if (info_end == std::string_view::npos) break;
    const auto info = text::trim(output.substr(open + 3, info_end - open - 3));
    const auto close = output.find("```", info_end + 1);
    const auto body = output.substr(info_end + 1, (close == std::string_view::npos ? output.size() : close) - info_end - 1);
    if (info == "yaml" || info == "yml" || info == "ansible") return std::string(body);
    if (info.empty() && !bare) {
      try {
        if (YAML::Load(std::string(body)).IsSequence()) bare = std::string(body);
      } catch (const YAML::Exception&) {
      }
    }
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  if (bare) return *bare;
  return std::string(text::trim(output));
}

StructReport check_structure(std::string_view text) {
  const auto draft = read_draft(text);
  return score(std::get_if<Draft>(&draft));
}

StructReport check_structure(const Playbook& pb) { return check_structure(render(pb)); }

std::optional<WhenExpr> parse_when(std::string_view raw) {
  const auto s = std::string(text::trim(raw));
  WhenExpr w;
  if (s == "true" || s == "True" || s == "yes") {
    w.literal = true;
    return w;
  }
  if (s == "false" || s == "False" || s == "no") {
    w.literal = false;
    return w;
  }
  if (const auto v = text::parse_double(s)) {
    w.literal = *v != 0.0;
    return w;
  }
  static const std::regex re(
      R"(^([A-Za-z_][A-Za-z0-9_]*)(\.stdout)?\s*(\|\s*(float|int)\s*)?(>=|<=|==|>|<)\s*(-?[0-9]+(\.[0-9]+)?)$)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return std::nullopt;
  w.ident = m[1].str();
  const auto op = m[5].str();
  w.op = op == ">"    ? CompareOp::kGt
         : op == "<"  ? CompareOp::kLt
         : op == ">=" ? CompareOp::kGe
         : op == "<=" ? CompareOp::kLe
                      : CompareOp::kEq;
  w.rhs = *text::parse_double(m[6].str());
  return w;
}

}  // namespace remed::playbook
