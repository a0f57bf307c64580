#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "remed/loop/loop.hpp"

namespace remed::rft {

struct RewardWeights {
  double alpha = 1.0;
  double beta = 0.1;
  double gamma = 0.1;
  double delta = 0.5;
  double lambda = 2.0;

  // "a,b,g,d,l"; every weight must be finite and >= 0.
  static RewardWeights parse(std::string_view csv);
  std::string to_string() const;
  void validate() const;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

inline constexpr std::int64_t kDefaultTokenBudget = 4096;

struct RewardBreakdown {
  double success = 0.0;
  double r_struct = 0.0;
  double r_exec = 0.0;
  double r_eff = 0.0;
  double unsafe = 0.0;
  double total = 0.0;
};

// R = alpha*success + beta*r_struct + gamma*r_exec + delta*r_eff - lambda*unsafe
double combine(const RewardWeights& w, double success, double r_struct, double r_exec, double r_eff, double unsafe);

// max(0, 1 - tokens/budget); budget must be > 0.
double token_efficiency(std::int64_t tokens, std::int64_t budget);

// Components come from the final attempt, success from the episode; r_eff is
// zero unless the episode succeeded, and everything is zero for an
// unparsable final playbook.
RewardBreakdown grade(const loop::Episode& episode, const RewardWeights& weights,
                      std::int64_t token_budget = kDefaultTokenBudget);

}  // namespace remed::rft
