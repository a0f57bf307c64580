#pragma once

// Tabular softmax policy over a fixed library of playbook templates.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "remed/policy/policy.hpp"

namespace remed::policy {

inline constexpr int kToyContexts = fault::kFailureTypeCount * 4;
inline constexpr int kToyActions = 8;

// f = ftype * 4 + target_degraded * 2 + dependency_degraded
int context_class(fault::FailureType type, bool target_degraded, bool dependency_degraded);
fault::FailureType context_type(int f);

struct TemplateInfo {
  int id;
  std::string name;
  std::string intent;  // the ftype family it is meant for, or "distractor"
};

const std::array<TemplateInfo, kToyActions>& template_library();

// Playbook tasks for template `a` instantiated on one report.
std::vector<std::string> template_commands(int a, const fault::FailureReport& report);

// The template the scripted expert chooses for each failure type.
int canonical_template(fault::FailureType type);

// Renders a one-play playbook from per-report template choices.
std::string render_template_playbook(const std::vector<std::pair<int, const fault::FailureReport*>>& picks);

struct ToyFeatures {
  bool target_degraded = true;
  bool dependency_degraded = false;
};

// Degradation read from this attempt's probe results; unprobed features
// default to (target degraded, dependencies healthy).
ToyFeatures features_from_history(const PolicyInput& input, const fault::FailureReport& report);

// Probe queries covering a report's target and its direct dependencies.
std::vector<sim::ProbeQuery> feature_probes(const PolicyInput& input, const fault::FailureReport& report);

class ToyPolicy : public Policy {
 public:
  explicit ToyPolicy(std::uint64_t seed = 0);
  ToyPolicy(std::uint64_t seed, std::vector<double> theta);

  std::string id() const override { return "toy"; }
  PolicyOutput decide(const PolicyInput& input) override;

  std::vector<double> probs(int f) const;
  double logprob(int f, int a) const;
  // d log pi(a|f) / d theta[f][.] = onehot(a) - pi(.|f), returned as row f only.
  std::vector<double> grad_logprob(int f, int a) const;

  // Inverse-CDF sample keyed on (seed, f, salt): stateless, so repeated calls
  // with the same input give the same action.
  int sample(int f, std::uint64_t salt) const;
  int argmax(int f) const;

  const std::vector<double>& theta() const { return theta_; }
  std::vector<double>& theta() { return theta_; }
  double& at(int f, int a);
  double at(int f, int a) const;

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_greedy(bool greedy) { greedy_ = greedy; }

 private:
  void check_index(int f, int a) const;

  std::uint64_t seed_;
  std::vector<double> theta_;
  bool greedy_ = false;
};

}  // namespace remed::policy
