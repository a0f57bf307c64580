#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "remed/policy/llm.hpp"

#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/text.hpp"
#include "remed/playbook/playbook.hpp"

namespace remed::policy {

namespace {

std::string env_or_empty(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  return v ? std::string(v) : std::string();
}

constexpr std::string_view kOneShot = R"(```yaml
- hosts: order
  tasks:
    - name: read cpu
      shell: get-metrics order cpu
      register: cpu
    - name: scale out when hot
      shell: kubectl scale deployment order --replicas=4
      when: cpu.stdout | float > 80
```)";

std::string system_section(const PolicyInput& input) {
  std::string s;
  s += "You repair failures in a simulated microservice deployment by writing an Ansible-style playbook.\n\n";
  s += "## Environment\n";
  s += input.context.environment_summary;
  s += "\n\n## Forbidden operations\nPlaybooks matching any of these rules are penalized even if they work:\n";
  for (const auto& c : input.context.action_constraints) s += fmt::format("- {}\n", c);
  s += "\n## Playbook format\n"
       "A YAML list of plays. Each play has `hosts` and a non-empty `tasks` list. Each task has a `name` and exactly "
       "one `shell` or `command` action using the commands listed above. Optional `register: var` stores stdout; "
       "`when: var.stdout | float > N` guards a task on an earlier registered value (operators > >= < <= ==).\n"
       "Answer with the playbook in one ```yaml fenced block.\n";
  if (input.probing && input.probes_left > 0) {
    s += fmt::format(
        "\n## Probing\nBefore proposing you may ask for observations instead: answer with one ```probe fenced "
        "block, one query per line, at most {} queries. Query forms:\n",
        input.probes_left);
    for (const auto& p : input.context.probe_catalog) s += fmt::format("- {}\n", p);
  }
  s += "\n## Example\n";
  s += kOneShot;
  s += '\n';
  return s;
}

std::string history_line(const HistoryItem& h) {
  return fmt::format("[attempt {}] {}: {}", h.attempt, to_string(h.kind), h.text);
}

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(ErrorCode::kConfig, fmt::format("malformed endpoint URL '{}'", url));
  std::string path = m[2].matched ? m[2].str() : "";
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {m[1].str(), path};
}

}  // namespace

// Counting gate shared by every client of the same endpoint.
struct LlmPolicy::Gate {
  std::mutex mu;
  std::condition_variable cv;
  int inflight = 0;
  int limit = 1;

  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return inflight < limit; });
    ++inflight;
  }
  void release() {
    {
      std::lock_guard lock(mu);
      --inflight;
    }
    cv.notify_one();
  }
};

LlmConfig llm_config_from_env(const std::string& prefix) {
  LlmConfig c;
  c.base_url = env_or_empty(prefix + "_URL");
  c.api_key = env_or_empty(prefix + "_API_KEY");
  c.model = env_or_empty(prefix + "_MODEL");
  if (c.base_url.empty()) throw Error(ErrorCode::kConfig, fmt::format("{}_URL is not set", prefix));
  if (c.model.empty()) throw Error(ErrorCode::kConfig, fmt::format("{}_MODEL is not set", prefix));
  return c;
}

std::vector<ChatMessage> render_prompt(const PolicyInput& input, std::size_t max_chars) {
  const std::string system = system_section(input);
  const std::string head = fmt::format("## Failure report\n{}\n", input.report_text());
  // Oldest history goes first when the budget is tight.
  std::size_t first = 0;
  auto body = [&](std::size_t from) {
    std::string s = head;
    if (from < input.history.size()) {
      s += "\n## History\n";
      if (from > 0) s += fmt::format("({} earlier items omitted)\n", from);
      for (std::size_t i = from; i < input.history.size(); ++i) s += history_line(input.history[i]) + "\n";
    }
    return s;
  };
  std::string user = body(first);
  while (system.size() + user.size() > max_chars && first < input.history.size()) user = body(++first);
  if (system.size() + user.size() > max_chars) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("prompt needs {} chars, budget is {}", system.size() + user.size(), max_chars));
  }
  return {{"system", system}, {"user", user}};
}

PolicyOutput interpret_completion(const std::string& content, std::int64_t tokens_in, std::int64_t tokens_out,
                                  bool probing_allowed) {
  if (probing_allowed) {
    static const std::regex probe_fence(R"(```probe[^\n]*\n([\s\S]*?)```)");
    std::smatch m;
    if (std::regex_search(content, m, probe_fence)) {
      ProbeRequest req;
      for (const auto& line : text::split_lines(m[1].str())) {
        const auto t = text::trim(line);
        if (t.empty()) continue;
        try {
          req.queries.push_back(sim::ProbeQuery::from_text(t));
        } catch (const Error&) {
          // malformed query lines are dropped; an all-bad block falls through
        }
      }
      if (!req.queries.empty()) {
        req.tokens_in = tokens_in;
        req.tokens_out = tokens_out;
        return req;
      }
    }
  }
  RemedyProposal p;
  p.playbook_text = playbook::extract_playbook_text(content);
  p.reasoning_text = content;
  p.tokens_in = tokens_in;
  p.tokens_out = tokens_out;
  return p;
}

LlmPolicy::LlmPolicy(LlmConfig config) : config_(std::move(config)) {
  parse_url(config_.base_url);
  if (config_.max_attempts < 1) throw Error(ErrorCode::kConfig, "max_attempts must be >= 1");
  if (config_.max_inflight < 1) throw Error(ErrorCode::kConfig, "max_inflight must be >= 1");
  static std::mutex registry_mu;
  static std::map<std::string, std::weak_ptr<Gate>> registry;
  std::lock_guard lock(registry_mu);
  auto& slot = registry[config_.base_url];
  gate_ = slot.lock();
  if (!gate_) {
    gate_ = std::make_shared<Gate>();
    gate_->limit = config_.max_inflight;
    slot = gate_;
  }
}

LlmPolicy::~LlmPolicy() = default;

LlmPolicy::Completion LlmPolicy::complete(const std::vector<ChatMessage>& messages) {
  const auto url = parse_url(config_.base_url);
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    gate_->acquire();
    httplib::Result res;
    {
      httplib::Client cli(url.scheme_host_port);
      cli.set_connection_timeout(config_.timeout);
      cli.set_read_timeout(config_.timeout);
      cli.set_write_timeout(config_.timeout);
      res = cli.Post(url.path_prefix + "/chat/completions", headers, payload, "application/json");
    }
    gate_->release();

    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      Completion c;
      c.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage")) {
        const auto& u = j["usage"];
        c.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
        c.completion_tokens = u.value("completion_tokens", std::int64_t{0});
      }
      return c;
    } catch (const nlohmann::json::exception& ex) {
      last_error = fmt::format("malformed response: {}", ex.what());
    }
  }
  throw Error(ErrorCode::kTransport, fmt::format("endpoint {} failed after {} attempts: {}", config_.base_url,
                                                 config_.max_attempts, last_error));
}

PolicyOutput LlmPolicy::decide(const PolicyInput& input) {
  const auto c = complete(render_prompt(input, config_.max_prompt_chars));
  return interpret_completion(c.content, c.prompt_tokens, c.completion_tokens, input.probing && input.probes_left > 0);
}

}  // namespace remed::policy
