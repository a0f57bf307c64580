#pragma once

// Expert harvesting, the three training objectives on the toy policy, and
// the staged training driver.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "remed/bench/runner.hpp"
#include "remed/policy/toy.hpp"
#include "remed/rft/reward.hpp"

namespace remed::rft {

struct SftExample {
  int f = 0;
  std::string t;  // reasoning trace; stored, not modeled by the toy policy
  int a = 0;
  std::string scenario_id;

  friend bool operator==(const SftExample&, const SftExample&) = default;
};

struct RolloutMember {
  int f = 0;
  int a = 0;
  double reward = 0.0;
};

struct RolloutGroup {
  std::string scenario_id;
  std::vector<RolloutMember> members;
};

struct PrefPair {
  int f = 0;
  int a_plus = 0;
  int a_minus = 0;
  std::string scenario_id;

  friend bool operator==(const PrefPair&, const PrefPair&) = default;
};

// Loss plus its gradient over the full theta (contexts x actions, row-major).
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean negative log-likelihood of the expert actions.
LossGrad sft_loss(const policy::ToyPolicy& pi, const std::vector<SftExample>& batch);

// -sum_i log pi(a_i|f_i) * (R_i - mean of R over i's group). No clipping.
LossGrad grpo_loss(const policy::ToyPolicy& pi, const std::vector<RolloutGroup>& groups);

// Mean over pairs of -log sigmoid(beta * [D(a+) - D(a-)]) with
// D(a) = log pi(a|f) - log ref(a|f); ref is treated as a constant.
LossGrad dpo_loss(const policy::ToyPolicy& pi, const policy::ToyPolicy& ref, const std::vector<PrefPair>& pairs,
                  double beta);

// Mean of log pi(a+|f) - log pi(a-|f).
double preference_margin(const policy::ToyPolicy& pi, const std::vector<PrefPair>& pairs);

// ------------------------------------------------------------ environment

struct Env {
  const sim::Topology* topology = nullptr;
  std::vector<fault::Scenario> suite;
  std::uint64_t suite_seed = 1;
  loop::LoopConfig loop;  // t_max is forced to 0 for rollouts
  RewardWeights weights;
  std::int64_t token_budget = kDefaultTokenBudget;
  int jobs = 1;
};

// Easy-suite environment on a bundled topology with single-shot rollouts.
Env make_env(const sim::Topology& topology, fault::Difficulty difficulty, std::uint64_t seed);

// Runs the teacher over the first n scenarios; every choice of a successful
// episode becomes one example. Throws kEmptyDataset when nothing succeeds.
std::vector<SftExample> harvest_expert(const Env& env, const bench::PolicyFactory& teacher, std::size_t n);

std::string sft_to_jsonl(const std::vector<SftExample>& data);
std::vector<SftExample> sft_from_jsonl(std::string_view text);
std::string pairs_to_jsonl(const std::vector<PrefPair>& pairs);
std::vector<PrefPair> pairs_from_jsonl(std::string_view text);

// Suite RA of the toy policy, sampling with `eval_seed`, single attempt.
double evaluate_ra(const Env& env, const policy::ToyPolicy& pi, std::uint64_t eval_seed);

// solved[s][a]: template a, executed on scenario s, passes the oracle.
std::vector<std::array<bool, policy::kToyActions>> template_solvability(const Env& env);

// Expected RA of the uniform toy policy, from the solvability matrix.
double uniform_ra(const std::vector<std::array<bool, policy::kToyActions>>& solved);

// One GRPO group: `group_size` rollouts of the same scenario with distinct
// sampling seeds, graded with the env's weights.
RolloutGroup rollout_group(const Env& env, const policy::ToyPolicy& pi, std::size_t scenario_index, int group_size,
                           std::uint64_t seed);

// Preference pairs from failed toy rollouts: the expert's canonical action
// is preferred over the failed one.
std::vector<PrefPair> synthesize_pairs(const Env& env, const policy::ToyPolicy& pi, int samples_per_scenario,
                                       std::uint64_t seed);

// --------------------------------------------------------------- training

enum class Stage { kSft, kSimRft, kRealRft };
std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view s);

struct TrainConfig {
  Stage stage = Stage::kSft;
  double learning_rate = 0.5;
  int iterations = 200;
  int group_size = 8;
  int scenarios_per_iteration = 8;
  double dpo_beta = 0.1;
  std::uint64_t seed = 1;
  std::int64_t token_budget = kDefaultTokenBudget;
  int eval_every = 25;
  double heldout_fraction = 0.25;

  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct CurvePoint {
  int iteration = 0;
  double loss = 0.0;
  std::string metric;  // "ra", "margin" or empty
  std::optional<double> value;
};

std::string curve_to_csv(Stage stage, const std::vector<CurvePoint>& curve);

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  Stage stage = Stage::kSft;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<double> theta;

  std::string to_json() const;
  static Checkpoint from_json(std::string_view text);
  policy::ToyPolicy policy() const;
};

struct TrainResult {
  policy::ToyPolicy policy;
  std::vector<CurvePoint> curve;
  Checkpoint checkpoint;
  // Stage-specific extras, kept for reporting.
  std::vector<SftExample> sft_data;
  std::vector<PrefPair> train_pairs;
  std::vector<PrefPair> heldout_pairs;
  std::optional<double> margin_before;
  std::optional<double> margin_after;
};

// sft starts from uniform (or `start` when given); sim_rft requires an sft
// checkpoint; real_rft requires a sim_rft checkpoint and freezes it as ref.
// `real_env` is the environment the preference pairs are drawn from.
TrainResult train_stage(const TrainConfig& config, const Env& env, const std::optional<Checkpoint>& start,
                        const Env* real_env = nullptr);

}  // namespace remed::rft
