#include "remed/rft/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"
#include "remed/common/text.hpp"

namespace remed::rft {

using ojson = nlohmann::ordered_json;
using policy::kToyActions;
using policy::kToyContexts;
using policy::ToyPolicy;

namespace {

constexpr std::size_t kThetaSize = static_cast<std::size_t>(kToyContexts * kToyActions);

void add_row(std::vector<double>& grad, int f, const std::vector<double>& row, double scale) {
  for (int a = 0; a < kToyActions; ++a) grad[static_cast<std::size_t>(f * kToyActions + a)] += scale * row[a];
}

void check_finite(const LossGrad& lg, std::string_view what) {
  bool ok = std::isfinite(lg.loss);
  for (double g : lg.grad) ok = ok && std::isfinite(g);
  if (!ok) throw Error(ErrorCode::kDivergence, fmt::format("{} loss or gradient is not finite", what));
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ----------------------------------------------------------------- losses

LossGrad sft_loss(const ToyPolicy& pi, const std::vector<SftExample>& batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyDataset, "sft batch is empty");
  LossGrad out{0.0, std::vector<double>(kThetaSize, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    out.loss -= pi.logprob(ex.f, ex.a) * inv_n;
    add_row(out.grad, ex.f, pi.grad_logprob(ex.f, ex.a), -inv_n);
  }
  return out;
}

LossGrad grpo_loss(const ToyPolicy& pi, const std::vector<RolloutGroup>& groups) {
  if (groups.empty()) throw Error(ErrorCode::kEmptyDataset, "no rollout groups");
  LossGrad out{0.0, std::vector<double>(kThetaSize, 0.0)};
  for (const auto& g : groups) {
    if (g.members.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("group '{}' has {} member(s); GRPO needs at least 2", g.scenario_id, g.members.size()));
    }
    double mean = 0.0;
    for (const auto& m : g.members) mean += m.reward;
    mean /= static_cast<double>(g.members.size());
    for (const auto& m : g.members) {
      const double adv = m.reward - mean;
      out.loss -= pi.logprob(m.f, m.a) * adv;
      add_row(out.grad, m.f, pi.grad_logprob(m.f, m.a), -adv);
    }
  }
  return out;
}

LossGrad dpo_loss(const ToyPolicy& pi, const ToyPolicy& ref, const std::vector<PrefPair>& pairs, double beta) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "no preference pairs");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(ErrorCode::kInvalidArgument, "dpo beta must be > 0");
  LossGrad out{0.0, std::vector<double>(kThetaSize, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    if (p.a_plus == p.a_minus) throw Error(ErrorCode::kInvalidArgument, "preference pair actions must differ");
    const double dp = pi.logprob(p.f, p.a_plus) - ref.logprob(p.f, p.a_plus);
    const double dm = pi.logprob(p.f, p.a_minus) - ref.logprob(p.f, p.a_minus);
    const double z = beta * (dp - dm);
    out.loss += softplus(-z) * inv_n;
    // d/dz of -log sigmoid(z) is -sigmoid(-z)
    const double coeff = -sigmoid(-z) * beta * inv_n;
    add_row(out.grad, p.f, pi.grad_logprob(p.f, p.a_plus), coeff);
    add_row(out.grad, p.f, pi.grad_logprob(p.f, p.a_minus), -coeff);
  }
  return out;
}

double preference_margin(const ToyPolicy& pi, const std::vector<PrefPair>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyDataset, "no preference pairs");
  double m = 0.0;
  for (const auto& p : pairs) m += pi.logprob(p.f, p.a_plus) - pi.logprob(p.f, p.a_minus);
  return m / static_cast<double>(pairs.size());
}

// ------------------------------------------------------------ environment

namespace {

loop::LoopConfig rollout_loop(const Env& env) {
  auto cfg = env.loop;
  cfg.t_max = 0;
  return cfg;
}

// Answers every scenario with one fixed template; never probes.
class FixedTemplatePolicy : public policy::Policy {
 public:
  explicit FixedTemplatePolicy(int a) : a_(a) {}
  std::string id() const override { return fmt::format("template-{}", a_); }
  policy::PolicyOutput decide(const policy::PolicyInput& input) override {
    std::vector<std::pair<int, const fault::FailureReport*>> picks;
    policy::RemedyProposal p;
    for (const auto& r : input.reports) {
      picks.emplace_back(a_, &r);
      p.choices.push_back({policy::context_class(r.failure_type, true, false), a_});
    }
    p.playbook_text = policy::render_template_playbook(picks);
    p.tokens_out = policy::count_tokens(p.playbook_text);
    return p;
  }

 private:
  int a_;
};

loop::Episode run_one(const Env& env, policy::Policy& pol, std::size_t scenario_index, const loop::LoopConfig& cfg) {
  const auto& sc = env.suite.at(scenario_index);
  auto prepared = bench::prepare_scenario(*env.topology, sc, env.suite_seed);
  return loop::run_episode(pol, prepared.state, prepared.targets, cfg, sc.scenario_id);
}

}  // namespace

Env make_env(const sim::Topology& topology, fault::Difficulty difficulty, std::uint64_t seed) {
  Env env;
  env.topology = &topology;
  env.suite = fault::gen_suite(topology, difficulty, seed);
  env.suite_seed = seed;
  env.loop.t_max = 0;
  return env;
}

std::vector<SftExample> harvest_expert(const Env& env, const bench::PolicyFactory& teacher, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "harvest needs n > 0");
  if (!env.topology) throw Error(ErrorCode::kConfig, "environment has no topology");
  std::vector<fault::Scenario> subset(env.suite.begin(), env.suite.begin() + std::min(n, env.suite.size()));
  bench::SuiteRunOptions opt;
  opt.loop = env.loop;
  opt.jobs = env.jobs;
  opt.suite_seed = env.suite_seed;
  const auto episodes = bench::run_suite(teacher, *env.topology, subset, opt);
  std::vector<SftExample> out;
  for (const auto& ep : episodes) {
    if (!ep.success || ep.attempts.empty()) continue;
    const auto& last = ep.attempts.back();
    for (const auto& c : last.choices) out.push_back({c.f, last.reasoning_text, c.a, ep.scenario_id});
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyDataset, "teacher produced no successful episode");
  return out;
}

std::string sft_to_jsonl(const std::vector<SftExample>& data) {
  std::string out;
  for (const auto& ex : data) {
    out += ojson{{"scenario_id", ex.scenario_id}, {"f", ex.f}, {"a", ex.a}, {"t", ex.t}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<SftExample> sft_from_jsonl(std::string_view text) {
  std::vector<SftExample> out;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) continue;
    try {
      const auto j = ojson::parse(line);
      out.push_back({j.at("f").get<int>(), j.at("t").get<std::string>(), j.at("a").get<int>(),
                     j.at("scenario_id").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kParse, fmt::format("bad sft record: {}", ex.what()));
    }
  }
  return out;
}

std::string pairs_to_jsonl(const std::vector<PrefPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += ojson{{"scenario_id", p.scenario_id}, {"f", p.f}, {"a_plus", p.a_plus}, {"a_minus", p.a_minus}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<PrefPair> pairs_from_jsonl(std::string_view text) {
  std::vector<PrefPair> out;
  for (const auto& line : text::split_lines(text)) {
    if (text::trim(line).empty()) continue;
    try {
      const auto j = ojson::parse(line);
      out.push_back({j.at("f").get<int>(), j.at("a_plus").get<int>(), j.at("a_minus").get<int>(),
                     j.at("scenario_id").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kParse, fmt::format("bad preference record: {}", ex.what()));
    }
  }
  return out;
}

double evaluate_ra(const Env& env, const ToyPolicy& pi, std::uint64_t eval_seed) {
  bench::SuiteRunOptions opt;
  opt.loop = rollout_loop(env);
  opt.jobs = env.jobs;
  opt.suite_seed = env.suite_seed;
  const auto episodes = bench::run_suite(
      [&](const fault::Scenario&, std::size_t) {
        auto p = std::make_unique<ToyPolicy>(pi);
        p->set_seed(eval_seed);
        return p;
      },
      *env.topology, env.suite, opt);
  if (episodes.empty()) throw Error(ErrorCode::kEmptyDataset, "empty suite");
  const auto ok = std::count_if(episodes.begin(), episodes.end(), [](const loop::Episode& e) { return e.success; });
  return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

std::vector<std::array<bool, kToyActions>> template_solvability(const Env& env) {
  auto cfg = rollout_loop(env);
  cfg.probing = false;
  std::vector<std::array<bool, kToyActions>> out(env.suite.size());
  for (std::size_t s = 0; s < env.suite.size(); ++s) {
    for (int a = 0; a < kToyActions; ++a) {
      FixedTemplatePolicy pol(a);
      out[s][a] = run_one(env, pol, s, cfg).success;
    }
  }
  return out;
}

double uniform_ra(const std::vector<std::array<bool, kToyActions>>& solved) {
  if (solved.empty()) throw Error(ErrorCode::kEmptyDataset, "empty solvability matrix");
  double sum = 0.0;
  for (const auto& row : solved) sum += static_cast<double>(std::count(row.begin(), row.end(), true)) / kToyActions;
  return sum / static_cast<double>(solved.size());
}

RolloutGroup rollout_group(const Env& env, const ToyPolicy& pi, std::size_t scenario_index, int group_size,
                           std::uint64_t seed) {
  const auto cfg = rollout_loop(env);
  RolloutGroup g;
  g.scenario_id = env.suite.at(scenario_index).scenario_id;
  for (int m = 0; m < group_size; ++m) {
    ToyPolicy member(pi);
    member.set_seed(hash_combine(seed, static_cast<std::uint64_t>(m)));
    const auto ep = run_one(env, member, scenario_index, cfg);
    if (ep.attempts.empty()) continue;
    const double r = grade(ep, env.weights, env.token_budget).total;
    for (const auto& c : ep.attempts.back().choices) g.members.push_back({c.f, c.a, r});
  }
  return g;
}

std::vector<PrefPair> synthesize_pairs(const Env& env, const ToyPolicy& pi, int samples_per_scenario,
                                       std::uint64_t seed) {
  const auto cfg = rollout_loop(env);
  std::vector<PrefPair> out;
  for (std::size_t s = 0; s < env.suite.size(); ++s) {
    const auto& sc = env.suite[s];
    for (int k = 0; k < samples_per_scenario; ++k) {
      ToyPolicy member(pi);
      member.set_seed(hash_combine(hash_combine(seed, s), static_cast<std::uint64_t>(k)));
      const auto ep = run_one(env, member, s, cfg);
      if (ep.success || ep.attempts.empty()) continue;
      const auto& choices = ep.attempts.back().choices;
      for (std::size_t i = 0; i < choices.size() && i < sc.specs.size(); ++i) {
        const int a_plus = policy::canonical_template(sc.specs[i].type);
        if (choices[i].a == a_plus) continue;
        out.push_back({choices[i].f, a_plus, choices[i].a, sc.scenario_id});
      }
    }
  }
  return out;
}

// --------------------------------------------------------------- training

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kSft: return "sft";
    case Stage::kSimRft: return "sim_rft";
    case Stage::kRealRft: return "real_rft";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "sft") return Stage::kSft;
  if (s == "sim_rft") return Stage::kSimRft;
  if (s == "real_rft") return Stage::kRealRft;
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::kConfig, m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning rate must be > 0");
  if (iterations < 1) bad("iterations must be >= 1");
  if (group_size < 2) bad("group size must be >= 2");
  if (scenarios_per_iteration < 1) bad("scenarios per iteration must be >= 1");
  if (!(dpo_beta > 0.0) || !std::isfinite(dpo_beta)) bad("dpo beta must be > 0");
  if (token_budget < 1) bad("token budget must be >= 1");
  if (eval_every < 1) bad("eval_every must be >= 1");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) bad("heldout fraction must be in (0, 1)");
}

std::string TrainConfig::canonical() const {
  return fmt::format("stage={};lr={};iterations={};group={};spi={};beta={};seed={};budget={};eval_every={};heldout={}",
                     to_string(stage), text::format_double(learning_rate), iterations, group_size,
                     scenarios_per_iteration, text::format_double(dpo_beta), seed, token_budget, eval_every,
                     text::format_double(heldout_fraction));
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(canonical()); }

std::string curve_to_csv(Stage stage, const std::vector<CurvePoint>& curve) {
  std::string out = "stage,iteration,loss,metric,value\n";
  for (const auto& p : curve) {
    out += fmt::format("{},{},{},{},{}\n", to_string(stage), p.iteration, text::format_double(p.loss), p.metric,
                       p.value ? text::format_double(*p.value) : std::string());
  }
  return out;
}

std::string Checkpoint::to_json() const {
  ojson j;
  j["schema"] = kCheckpointSchemaVersion;
  j["manifest"] = ojson{{"stage", to_string(stage)},
                        {"seed", seed},
                        {"config_hash", hex64(config_hash)},
                        {"contexts", kToyContexts},
                        {"actions", kToyActions}};
  j["theta"] = theta;
  return j.dump(2);
}

Checkpoint Checkpoint::from_json(std::string_view text) {
  try {
    const auto j = ojson::parse(text);
    if (j.at("schema").get<int>() != kCheckpointSchemaVersion) {
      throw Error(ErrorCode::kParse, "unsupported checkpoint schema");
    }
    const auto& m = j.at("manifest");
    if (m.at("contexts").get<int>() != kToyContexts || m.at("actions").get<int>() != kToyActions) {
      throw Error(ErrorCode::kParse, "checkpoint shape does not match the toy policy");
    }
    Checkpoint c;
    const auto stage = parse_stage(m.at("stage").get<std::string>());
    if (!stage) throw Error(ErrorCode::kParse, "bad stage in checkpoint");
    c.stage = *stage;
    c.seed = m.at("seed").get<std::uint64_t>();
    c.config_hash = std::stoull(m.at("config_hash").get<std::string>(), nullptr, 16);
    c.theta = j.at("theta").get<std::vector<double>>();
    if (c.theta.size() != kThetaSize) throw Error(ErrorCode::kParse, "checkpoint theta has the wrong size");
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, fmt::format("bad checkpoint: {}", ex.what()));
  }
}

ToyPolicy Checkpoint::policy() const { return ToyPolicy(seed, theta); }

namespace {

// Rows no batch touches never reach the loss, so parameters are checked too.
void descend(ToyPolicy& pi, const LossGrad& lg, double lr) {
  auto& th = pi.theta();
  for (std::size_t i = 0; i < th.size(); ++i) {
    th[i] -= lr * lg.grad[i];
    if (!std::isfinite(th[i])) throw Error(ErrorCode::kDivergence, fmt::format("parameter {} is not finite", i));
  }
}

void require_start(const std::optional<Checkpoint>& start, Stage needed, Stage stage) {
  if (!start || start->stage != needed) {
    throw Error(ErrorCode::kConfig, fmt::format("{} must start from a {} checkpoint", to_string(stage), to_string(needed)));
  }
}

}  // namespace

TrainResult train_stage(const TrainConfig& config, const Env& env, const std::optional<Checkpoint>& start,
                        const Env* real_env) {
  config.validate();
  if (!env.topology) throw Error(ErrorCode::kConfig, "environment has no topology");
  if (env.suite.empty()) throw Error(ErrorCode::kEmptyDataset, "environment suite is empty");

  TrainResult out{start ? start->policy() : ToyPolicy(config.seed), {}, {}, {}, {}, {}, {}, {}};
  auto& pi = out.policy;
  pi.set_seed(config.seed);
  const std::uint64_t eval_seed = hash_combine(config.seed, 0xe7a1ULL);

  switch (config.stage) {
    case Stage::kSft: {
      out.sft_data = harvest_expert(
          env, [](const fault::Scenario&, std::size_t) {
            return std::make_unique<policy::ExpertPolicy>(policy::ExpertPolicy::Mode::kTemplate);
          },
          env.suite.size());
      for (int it = 1; it <= config.iterations; ++it) {
        const auto lg = sft_loss(pi, out.sft_data);
        check_finite(lg, "sft");
        descend(pi, lg, config.learning_rate);
        CurvePoint p{it, lg.loss, {}, std::nullopt};
        if (it % config.eval_every == 0 || it == config.iterations) {
          p.metric = "ra";
          p.value = evaluate_ra(env, pi, eval_seed);
        }
        out.curve.push_back(std::move(p));
      }
      break;
    }
    case Stage::kSimRft: {
      require_start(start, Stage::kSft, config.stage);
      std::vector<std::size_t> order(env.suite.size());
      std::iota(order.begin(), order.end(), 0);
      SeededRng rng(hash_combine(config.seed, 0x5151ULL));
      rng.shuffle(order);
      std::size_t cursor = 0;
      for (int it = 1; it <= config.iterations; ++it) {
        std::vector<RolloutGroup> groups;
        for (int k = 0; k < config.scenarios_per_iteration; ++k) {
          if (cursor == order.size()) {
            rng.shuffle(order);
            cursor = 0;
          }
          const std::size_t s = order[cursor++];
          const auto gseed = hash_combine(hash_combine(config.seed, static_cast<std::uint64_t>(it)), s);
          auto g = rollout_group(env, pi, s, config.group_size, gseed);
          if (g.members.size() >= 2) groups.push_back(std::move(g));
        }
        if (groups.empty()) throw Error(ErrorCode::kEmptyDataset, "no usable rollout group");
        const auto lg = grpo_loss(pi, groups);
        check_finite(lg, "grpo");
        descend(pi, lg, config.learning_rate);
        CurvePoint p{it, lg.loss, {}, std::nullopt};
        if (it % config.eval_every == 0 || it == config.iterations) {
          p.metric = "ra";
          p.value = evaluate_ra(env, pi, eval_seed);
        }
        out.curve.push_back(std::move(p));
      }
      break;
    }
    case Stage::kRealRft: {
      require_start(start, Stage::kSimRft, config.stage);
      const Env& src = real_env ? *real_env : env;
      const ToyPolicy ref = pi;
      auto pairs = synthesize_pairs(src, ref, 16, hash_combine(config.seed, 0xd90ULL));
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double u = unit_double(hash_combine(config.seed ^ 0x4e1dULL, i));
        (u < config.heldout_fraction ? out.heldout_pairs : out.train_pairs).push_back(pairs[i]);
      }
      if (out.train_pairs.empty() || out.heldout_pairs.empty()) {
        throw Error(ErrorCode::kEmptyDataset,
                    fmt::format("need training and held-out preference pairs (got {} and {})", out.train_pairs.size(),
                                out.heldout_pairs.size()));
      }
      out.margin_before = preference_margin(pi, out.heldout_pairs);
      for (int it = 1; it <= config.iterations; ++it) {
        const auto lg = dpo_loss(pi, ref, out.train_pairs, config.dpo_beta);
        check_finite(lg, "dpo");
        descend(pi, lg, config.learning_rate);
        CurvePoint p{it, lg.loss, {}, std::nullopt};
        if (it % config.eval_every == 0 || it == config.iterations) {
          p.metric = "margin";
          p.value = preference_margin(pi, out.heldout_pairs);
        }
        out.curve.push_back(std::move(p));
      }
      out.margin_after = preference_margin(pi, out.heldout_pairs);
      break;
    }
  }

  out.checkpoint = Checkpoint{config.stage, config.seed, config.hash(), pi.theta()};
  return out;
}

}  // namespace remed::rft
