#pragma once

// Chat-completions client policy.

#include <chrono>
#include <memory>
#include <string>

#include "remed/policy/policy.hpp"

namespace remed::policy {

struct LlmConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string api_key;
  std::string model;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
  int max_inflight = 4;
  double temperature = 0.0;
  std::size_t max_prompt_chars = 48000;
};

// Reads <PREFIX>_URL, <PREFIX>_API_KEY and <PREFIX>_MODEL. Missing URL or
// model is a kConfig error.
LlmConfig llm_config_from_env(const std::string& prefix = "REMED_LLM");

struct ChatMessage {
  std::string role;
  std::string content;
};

std::vector<ChatMessage> render_prompt(const PolicyInput& input, std::size_t max_chars);

// Interprets one completion: a ```probe fence with at least one valid query
// line is a ProbeRequest; anything else is a proposal (possibly unparsable).
PolicyOutput interpret_completion(const std::string& content, std::int64_t tokens_in, std::int64_t tokens_out,
                                  bool probing_allowed);

class LlmPolicy : public Policy {
 public:
  explicit LlmPolicy(LlmConfig config);
  ~LlmPolicy() override;

  std::string id() const override { return "llm:" + config_.model; }
  PolicyOutput decide(const PolicyInput& input) override;
  bool wall_clock_latency() const override { return true; }

  // Transport failures are retried with exponential backoff, then thrown as
  // kTransport.
  struct Completion {
    std::string content;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
  };
  Completion complete(const std::vector<ChatMessage>& messages);

 private:
  struct Gate;
  LlmConfig config_;
  std::shared_ptr<Gate> gate_;
};

}  // namespace remed::policy
