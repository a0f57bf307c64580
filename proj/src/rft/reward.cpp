#include "remed/rft/reward.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "remed/common/error.hpp"
#include "remed/common/text.hpp"

namespace remed::rft {

RewardWeights RewardWeights::parse(std::string_view csv) {
  std::vector<double> v;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto end = std::min(csv.find(',', start), csv.size());
    const auto field = text::trim(csv.substr(start, end - start));
    const auto d = text::parse_double(field);
    if (!d) throw Error(ErrorCode::kConfig, fmt::format("bad reward weight '{}' in '{}'", field, csv));
    v.push_back(*d);
    start = end + 1;
  }
  if (v.size() != 5) throw Error(ErrorCode::kConfig, fmt::format("expected 5 reward weights, got {} in '{}'", v.size(), csv));
  RewardWeights w{v[0], v[1], v[2], v[3], v[4]};
  w.validate();
  return w;
}

std::string RewardWeights::to_string() const {
  return fmt::format("{},{},{},{},{}", text::format_double(alpha), text::format_double(beta),
                     text::format_double(gamma), text::format_double(delta), text::format_double(lambda));
}

void RewardWeights::validate() const {
  for (double x : {alpha, beta, gamma, delta, lambda}) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::kConfig, fmt::format("reward weights must be finite and >= 0 ({})", to_string()));
  }
}

double combine(const RewardWeights& w, double success, double r_struct, double r_exec, double r_eff, double unsafe) {
  return w.alpha * success + w.beta * r_struct + w.gamma * r_exec + w.delta * r_eff - w.lambda * unsafe;
}

double token_efficiency(std::int64_t tokens, std::int64_t budget) {
  if (budget <= 0) throw Error(ErrorCode::kInvalidArgument, "token budget must be > 0");
  return std::max(0.0, 1.0 - static_cast<double>(tokens) / static_cast<double>(budget));
}

RewardBreakdown grade(const loop::Episode& episode, const RewardWeights& weights, std::int64_t token_budget) {
  RewardBreakdown b;
  b.success = episode.success ? 1.0 : 0.0;
  if (!episode.attempts.empty()) {
    const auto& last = episode.attempts.back();
    if (last.parsed) {
      b.r_struct = last.structure.r_struct;
      b.r_exec = playbook::r_exec(last.trace);
      b.unsafe = last.safety.unsafe ? 1.0 : 0.0;
    }
  }
  if (episode.success) b.r_eff = token_efficiency(episode.tokens_total(), token_budget);
  b.total = combine(weights, b.success, b.r_struct, b.r_exec, b.r_eff, b.unsafe);
  return b;
}

}  // namespace remed::rft
