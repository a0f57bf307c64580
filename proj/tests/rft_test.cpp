#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "remed/bench/runner.hpp"
#include "remed/common/error.hpp"
#include "remed/playbook/executor.hpp"
#include "remed/playbook/playbook.hpp"
#include "remed/rft/reward.hpp"
#include "remed/rft/train.hpp"

using namespace remed;
using namespace remed::rft;
using policy::kToyActions;
using policy::kToyContexts;
using policy::ToyPolicy;

namespace {

constexpr double kGridTol = 1e-12;
constexpr double kFdStep = 1e-5;
constexpr double kSftFdTol = 1e-6;
constexpr double kFdTol = 1e-4;
constexpr double kZeroGradTol = 1e-10;
constexpr double kInvarianceTol = 1e-10;
constexpr double kLn2Tol = 1e-9;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected remed::Error");
  return ErrorCode::kIo;
}

using Theta = std::vector<double>;

Theta random_theta(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Theta th(kToyContexts * kToyActions);
  for (auto& x : th) x = u(rng);
  return th;
}

// Independent oracles over a raw parameter vector.
double lp(const Theta& th, int f, int a) {
  double m = -INFINITY;
  for (int b = 0; b < kToyActions; ++b) m = std::max(m, th[f * kToyActions + b]);
  double z = 0.0;
  for (int b = 0; b < kToyActions; ++b) z += std::exp(th[f * kToyActions + b] - m);
  return th[f * kToyActions + a] - m - std::log(z);
}

double oracle_sft(const Theta& th, const std::vector<SftExample>& batch) {
  double s = 0.0;
  for (const auto& e : batch) s -= lp(th, e.f, e.a);
  return s / static_cast<double>(batch.size());
}

double oracle_grpo(const Theta& th, const std::vector<RolloutGroup>& groups) {
  double s = 0.0;
  for (const auto& g : groups) {
    double mean = 0.0;
    for (const auto& m : g.members) mean += m.reward;
    mean /= static_cast<double>(g.members.size());
    for (const auto& m : g.members) s -= lp(th, m.f, m.a) * (m.reward - mean);
  }
  return s;
}

double oracle_dpo(const Theta& th, const Theta& ref, const std::vector<PrefPair>& pairs, double beta) {
  double s = 0.0;
  for (const auto& p : pairs) {
    const double z = beta * ((lp(th, p.f, p.a_plus) - lp(ref, p.f, p.a_plus)) -
                             (lp(th, p.f, p.a_minus) - lp(ref, p.f, p.a_minus)));
    s += std::log1p(std::exp(-z));
  }
  return s / static_cast<double>(pairs.size());
}

// Relative error of an analytic gradient against central differences of an
// oracle loss.
template <typename F>
double fd_rel_err(const Theta& th, const std::vector<double>& grad, F&& loss) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < th.size(); ++k) {
    Theta up = th, down = th;
    up[k] += kFdStep;
    down[k] -= kFdStep;
    const double fd = (loss(up) - loss(down)) / (2 * kFdStep);
    num += (grad[k] - fd) * (grad[k] - fd);
    den += fd * fd;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<SftExample> random_sft(std::mt19937_64& rng, int n) {
  std::vector<SftExample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({static_cast<int>(rng() % kToyContexts), "t", static_cast<int>(rng() % kToyActions), "s"});
  }
  return out;
}

std::vector<RolloutGroup> random_groups(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> r(-2.3, 1.7);
  std::vector<RolloutGroup> out;
  for (int g = 0; g < n; ++g) {
    RolloutGroup grp{"s" + std::to_string(g), {}};
    const int size = 2 + static_cast<int>(rng() % 7);
    for (int m = 0; m < size; ++m) {
      grp.members.push_back({static_cast<int>(rng() % kToyContexts), static_cast<int>(rng() % kToyActions), r(rng)});
    }
    out.push_back(std::move(grp));
  }
  return out;
}

std::vector<PrefPair> random_pairs(std::mt19937_64& rng, int n) {
  std::vector<PrefPair> out;
  for (int i = 0; i < n; ++i) {
    const int a = static_cast<int>(rng() % kToyActions);
    const int b = (a + 1 + static_cast<int>(rng() % (kToyActions - 1))) % kToyActions;
    out.push_back({static_cast<int>(rng() % kToyContexts), a, b, "s"});
  }
  return out;
}

loop::Episode graded_episode(bool success, bool unsafe, bool components_on) {
  loop::Episode ep;
  ep.success = success;
  loop::Attempt at;
  at.parsed = true;
  at.structure.r_struct = components_on ? 1.0 : 0.0;
  at.trace.records.push_back(
      {"p", "t", "echo", components_on ? playbook::TaskStatus::kOk : playbook::TaskStatus::kFailed, "", ""});
  at.safety.unsafe = unsafe;
  ep.attempts.push_back(at);
  // zero tokens give r_eff 1; a full budget gives 0
  ep.tokens_in = components_on ? 0 : kDefaultTokenBudget;
  return ep;
}

const sim::Topology& micro() { return sim::bundled_topology("simple-micro"); }

bench::PolicyFactory template_expert() {
  return [](const fault::Scenario&, std::size_t) {
    return std::make_unique<policy::ExpertPolicy>(policy::ExpertPolicy::Mode::kTemplate);
  };
}

}  // namespace

// ---------------------------------------------------------------- reward

TEST_CASE("reward grid matches an independent recomputation") {
  const RewardWeights w;
  CHECK(w.alpha == 1.0);
  CHECK(w.beta == 0.1);
  CHECK(w.gamma == 0.1);
  CHECK(w.delta == 0.5);
  CHECK(w.lambda == 2.0);
  int cases = 0;
  for (int s : {0, 1}) {
    for (int u : {0, 1}) {
      for (int c : {0, 1}) {
        const auto b = grade(graded_episode(s, u, c), w);
        // r_eff only counts on success
        const double expected = 1.0 * s + 0.1 * c + 0.1 * c + 0.5 * (c * s) - 2.0 * u;
        CHECK(std::abs(b.total - expected) <= kGridTol);
        CHECK(b.success == s);
        CHECK(b.unsafe == u);
        CHECK(b.r_struct == c);
        CHECK(b.r_exec == c);
        CHECK(b.r_eff == c * s);
        ++cases;
      }
    }
  }
  CHECK(cases == 8);
}

TEST_CASE("reward anchors") {
  const RewardWeights w;
  CHECK(std::abs(grade(graded_episode(true, false, true), w).total - 1.7) <= kGridTol);
  CHECK(std::abs(grade(graded_episode(true, true, true), w).total - (-0.3)) <= kGridTol);

  loop::Episode unparsable;
  loop::Attempt at;
  at.parsed = false;
  at.safety.unsafe = true;  // ignored: nothing parsed
  unparsable.attempts.push_back(at);
  const auto z = grade(unparsable, w);
  CHECK(z.total == 0.0);
  CHECK(z.r_struct == 0.0);
  CHECK(z.r_exec == 0.0);
  CHECK(z.r_eff == 0.0);
  CHECK(grade(loop::Episode{}, w).total == 0.0);
}

TEST_CASE("reward comes from the final attempt") {
  auto ep = graded_episode(true, false, true);
  auto first = ep.attempts[0];
  first.safety.unsafe = true;
  first.structure.r_struct = 0.0;
  ep.attempts.insert(ep.attempts.begin(), first);
  const auto b = grade(ep, RewardWeights{});
  CHECK(b.unsafe == 0.0);
  CHECK(b.r_struct == 1.0);
}

TEST_CASE("token efficiency") {
  CHECK(token_efficiency(0, 4096) == 1.0);
  CHECK(token_efficiency(1024, 4096) == 0.75);
  CHECK(token_efficiency(4096, 4096) == 0.0);
  CHECK(token_efficiency(9000, 4096) == 0.0);
  CHECK(code_of([] { token_efficiency(1, 0); }) == ErrorCode::kInvalidArgument);
  auto ep = graded_episode(true, false, true);
  ep.tokens_in = 1000;
  ep.tokens_out = 24;
  CHECK(grade(ep, RewardWeights{}, 2048).r_eff == 0.5);
}

TEST_CASE("reward weights parse and validate") {
  const auto w = RewardWeights::parse("1,0.1,0.1,0.5,2");
  CHECK(w == RewardWeights{});
  CHECK(RewardWeights::parse(w.to_string()) == w);
  CHECK(code_of([] { RewardWeights::parse("1,2,3"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { RewardWeights::parse("1,0.1,-0.1,0.5,2"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { RewardWeights::parse("1,x,0.1,0.5,2"); }) == ErrorCode::kConfig);
}

// ------------------------------------------------------------------- sft

TEST_CASE("sft loss: uniform value, perfect imitation, errors") {
  ToyPolicy uniform;
  std::vector<SftExample> batch{{0, "t", 3, "a"}, {17, "t", 6, "b"}};
  CHECK(sft_loss(uniform, batch).loss == doctest::Approx(std::log(8.0)).epsilon(1e-15));

  Theta four(kToyContexts * kToyActions, 0.0);
  for (int a = 4; a < kToyActions; ++a) four[a] = -800.0;
  CHECK(sft_loss(ToyPolicy(0, four), {{0, "t", 2, "a"}}).loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Theta sharp(kToyContexts * kToyActions, 0.0);
  sharp[0 * kToyActions + 3] = 60.0;
  sharp[17 * kToyActions + 6] = 60.0;
  CHECK(sft_loss(ToyPolicy(0, sharp), batch).loss < 1e-20);

  CHECK(code_of([&] { sft_loss(uniform, {}); }) == ErrorCode::kEmptyDataset);
}

TEST_CASE("sft gradient matches finite differences") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 4; ++trial) {
    const auto th = random_theta(100 + trial, 2.0);
    const auto batch = random_sft(rng, 40);
    const auto lg = sft_loss(ToyPolicy(0, th), batch);
    CHECK(lg.loss == doctest::Approx(oracle_sft(th, batch)).epsilon(1e-12));
    CHECK(fd_rel_err(th, lg.grad, [&](const Theta& t) { return oracle_sft(t, batch); }) <= kSftFdTol);
  }
}

// ------------------------------------------------------------------ grpo

TEST_CASE("grpo advantages are mean-subtracted rewards") {
  ToyPolicy uniform;
  RolloutGroup g{"s", {{0, 0, 1.7}, {0, 1, 0.0}}};
  const auto lg = grpo_loss(uniform, {g});
  // -sum adv * (onehot - 1/8): only the chosen entries survive.
  CHECK(lg.grad[0] == doctest::Approx(-0.85).epsilon(1e-15));
  CHECK(lg.grad[1] == doctest::Approx(0.85).epsilon(1e-15));
  for (int a = 2; a < kToyActions; ++a) CHECK(std::abs(lg.grad[a]) < 1e-15);

  const auto th = random_theta(4, 1.0);
  RolloutGroup split{"s", {{2, 5, 1.7}, {9, 3, 0.0}}};
  const double expect = -(lp(th, 2, 5) * 0.85 + lp(th, 9, 3) * -0.85);
  CHECK(grpo_loss(ToyPolicy(0, th), {split}).loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("grpo equal rewards cancel") {
  const auto th = random_theta(8, 3.0);
  RolloutGroup g{"s", {{1, 0, 0.7}, {5, 4, 0.7}, {5, 7, 0.7}, {20, 2, 0.7}}};
  const auto lg = grpo_loss(ToyPolicy(0, th), {g});
  CHECK(std::abs(lg.loss) < kZeroGradTol);
  CHECK(norm(lg.grad) < kZeroGradTol);
}

TEST_CASE("grpo is invariant to a constant reward shift") {
  std::mt19937_64 rng(3);
  const auto th = random_theta(9, 2.0);
  const auto groups = random_groups(rng, 6);
  auto shifted = groups;
  for (auto& g : shifted) {
    for (auto& m : g.members) m.reward += 3.7;
  }
  const auto a = grpo_loss(ToyPolicy(0, th), groups);
  const auto b = grpo_loss(ToyPolicy(0, th), shifted);
  CHECK(std::abs(a.loss - b.loss) <= kInvarianceTol);
  for (std::size_t k = 0; k < a.grad.size(); ++k) CHECK(std::abs(a.grad[k] - b.grad[k]) <= kInvarianceTol);
}

TEST_CASE("grpo gradient matches finite differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const auto th = random_theta(200 + trial, 2.0);
    const auto groups = random_groups(rng, 8);
    const auto lg = grpo_loss(ToyPolicy(0, th), groups);
    CHECK(lg.loss == doctest::Approx(oracle_grpo(th, groups)).epsilon(1e-12));
    CHECK(fd_rel_err(th, lg.grad, [&](const Theta& t) { return oracle_grpo(t, groups); }) <= kFdTol);
  }
}

TEST_CASE("grpo errors") {
  ToyPolicy pi;
  CHECK(code_of([&] { grpo_loss(pi, {RolloutGroup{"s", {{0, 0, 1.0}}}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { grpo_loss(pi, {}); }) == ErrorCode::kEmptyDataset);
}

// ------------------------------------------------------------------- dpo

TEST_CASE("dpo at policy = reference") {
  std::mt19937_64 rng(6);
  const auto th = random_theta(10, 2.0);
  const ToyPolicy pi(0, th), ref(0, th);
  const auto pairs = random_pairs(rng, 12);
  const double beta = 0.1;
  const auto lg = dpo_loss(pi, ref, pairs, beta);
  CHECK(std::abs(lg.loss - std::log(2.0)) <= kLn2Tol);

  // Gradient is -(beta/2) times the mean score difference.
  std::vector<double> expect(th.size(), 0.0);
  for (const auto& p : pairs) {
    const auto gp = pi.grad_logprob(p.f, p.a_plus);
    const auto gm = pi.grad_logprob(p.f, p.a_minus);
    for (int a = 0; a < kToyActions; ++a) {
      expect[p.f * kToyActions + a] -= beta / 2 * (gp[a] - gm[a]) / static_cast<double>(pairs.size());
    }
  }
  for (std::size_t k = 0; k < th.size(); ++k) CHECK(std::abs(lg.grad[k] - expect[k]) <= 1e-15);
}

TEST_CASE("dpo gradient matches finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    const auto th = random_theta(300 + trial, 2.0);
    const auto ref = random_theta(400 + trial, 2.0);
    const auto pairs = random_pairs(rng, 20);
    for (double beta : {0.1, 1.0, 5.0}) {
      const auto lg = dpo_loss(ToyPolicy(0, th), ToyPolicy(0, ref), pairs, beta);
      CHECK(lg.loss == doctest::Approx(oracle_dpo(th, ref, pairs, beta)).epsilon(1e-12));
      CHECK(fd_rel_err(th, lg.grad, [&](const Theta& t) { return oracle_dpo(t, ref, pairs, beta); }) <= kFdTol);
    }
  }
}

TEST_CASE("dpo saturates as beta grows when the preferred action gained") {
  Theta ref(kToyContexts * kToyActions, 0.0);
  Theta th = ref;
  th[3 * kToyActions + 1] = 0.5;   // a+ gained relative to ref
  th[3 * kToyActions + 6] = -0.5;  // a- lost
  const std::vector<PrefPair> pairs{{3, 1, 6, "s"}};
  double prev = INFINITY;
  for (double beta : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const double l = dpo_loss(ToyPolicy(0, th), ToyPolicy(0, ref), pairs, beta).loss;
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-200);
}

TEST_CASE("one dpo step moves the pair the right way") {
  const auto th = random_theta(12, 1.0);
  ToyPolicy pi(0, th);
  const ToyPolicy ref(0, th);
  const std::vector<PrefPair> pairs{{7, 2, 5, "s"}};
  const double plus0 = pi.logprob(7, 2), minus0 = pi.logprob(7, 5);
  const auto lg = dpo_loss(pi, ref, pairs, 0.1);
  for (std::size_t k = 0; k < th.size(); ++k) pi.theta()[k] -= 1.0 * lg.grad[k];
  CHECK(pi.logprob(7, 2) > plus0);
  CHECK(pi.logprob(7, 5) < minus0);
  CHECK(preference_margin(pi, pairs) > plus0 - minus0);
}

TEST_CASE("dpo errors") {
  ToyPolicy pi;
  CHECK(code_of([&] { dpo_loss(pi, pi, {}, 0.1); }) == ErrorCode::kEmptyDataset);
  CHECK(code_of([&] { dpo_loss(pi, pi, {{0, 1, 1, "s"}}, 0.1); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { dpo_loss(pi, pi, {{0, 1, 2, "s"}}, 0.0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { preference_margin(pi, {}); }) == ErrorCode::kEmptyDataset);
}

// --------------------------------------------------------------- harvest

TEST_CASE("expert harvest over the easy suite") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  REQUIRE(env.suite.size() == 23);
  const auto data = harvest_expert(env, template_expert(), env.suite.size());
  CHECK(data.size() == 23);
  CHECK(harvest_expert(env, template_expert(), env.suite.size()) == data);
  CHECK(harvest_expert(env, template_expert(), 5).size() == 5);
  CHECK(sft_from_jsonl(sft_to_jsonl(data)) == data);

  // Purity: each harvested action, replayed on a fresh injection, heals it.
  for (const auto& ex : data) {
    const auto it = std::find_if(env.suite.begin(), env.suite.end(),
                                 [&](const auto& s) { return s.scenario_id == ex.scenario_id; });
    REQUIRE(it != env.suite.end());
    auto p = bench::prepare_scenario(micro(), *it, env.suite_seed);
    CHECK(policy::context_type(ex.f) == it->specs[0].type);
    const auto text = policy::render_template_playbook({{ex.a, &p.targets[0].report}});
    playbook::execute(std::get<playbook::Playbook>(playbook::parse(text)), p.state);
    for (int i = 0; i < env.loop.settle_steps; ++i) sim::step(p.state, env.loop.step_ms);
    CHECK_MESSAGE(fault::oracle_verify(p.state, p.targets[0].record), ex.scenario_id);
    CHECK_FALSE(ex.t.empty());
  }
}

TEST_CASE("a teacher that never succeeds yields no dataset") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  const bench::PolicyFactory noop = [](const fault::Scenario&, std::size_t) {
    return std::make_unique<policy::NoopPolicy>();
  };
  CHECK(code_of([&] { harvest_expert(env, noop, 23); }) == ErrorCode::kEmptyDataset);
}

TEST_CASE("uniform suite RA is analytic from template solvability") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  const auto solved = template_solvability(env);
  REQUIRE(solved.size() == env.suite.size());
  for (std::size_t s = 0; s < solved.size(); ++s) {
    const auto t = env.suite[s].specs[0].type;
    CHECK(solved[s][policy::canonical_template(t)]);
  }
  double expect = 0.0;
  for (const auto& row : solved) expect += std::count(row.begin(), row.end(), true) / 8.0;
  expect /= static_cast<double>(solved.size());
  CHECK(uniform_ra(solved) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(uniform_ra(solved) < 0.5);
}

TEST_CASE("rollout groups share a scenario and vary the sampling seed") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  const ToyPolicy pi(3);
  const auto g = rollout_group(env, pi, 4, 8, 99);
  CHECK(g.scenario_id == env.suite[4].scenario_id);
  CHECK(g.members.size() == 8);
  std::set<int> actions;
  for (const auto& m : g.members) {
    actions.insert(m.a);
    CHECK(m.reward >= -2.0);
    CHECK(m.reward <= 1.7 + kGridTol);
  }
  CHECK(actions.size() > 1);
  const auto again = rollout_group(env, pi, 4, 8, 99);
  for (std::size_t i = 0; i < g.members.size(); ++i) {
    CHECK(g.members[i].a == again.members[i].a);
    CHECK(g.members[i].reward == again.members[i].reward);
  }
}

TEST_CASE("synthesized pairs prefer the expert action over a failed one") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  const auto pairs = synthesize_pairs(env, ToyPolicy(1), 4, 5);
  REQUIRE_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    CHECK(p.a_plus != p.a_minus);
    CHECK(p.a_plus == policy::canonical_template(policy::context_type(p.f)));
  }
  CHECK(pairs_from_jsonl(pairs_to_jsonl(pairs)) == pairs);
}

// --------------------------------------------------------------- training

TEST_CASE("staged training: prerequisites, curves, checkpoints") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  TrainConfig sft;
  sft.learning_rate = 5.0;
  sft.iterations = 200;
  const auto r1 = train_stage(sft, env, std::nullopt);
  CHECK(r1.curve.size() == 200);
  CHECK(r1.curve.back().loss < 0.1);
  CHECK(r1.curve.back().metric == "ra");
  CHECK(*r1.curve.back().value >= 0.9);
  CHECK(r1.sft_data.size() == 23);
  CHECK(r1.checkpoint.stage == Stage::kSft);
  CHECK(r1.checkpoint.config_hash == sft.hash());

  const auto csv = curve_to_csv(Stage::kSft, r1.curve);
  CHECK(csv.rfind("stage,iteration,loss,metric,value\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 201);

  const auto back = Checkpoint::from_json(r1.checkpoint.to_json());
  CHECK(back.theta == r1.checkpoint.theta);
  CHECK(back.stage == Stage::kSft);
  CHECK(back.config_hash == r1.checkpoint.config_hash);

  TrainConfig rl;
  rl.stage = Stage::kSimRft;
  rl.learning_rate = 0.1;
  rl.iterations = 4;
  rl.eval_every = 2;
  CHECK(code_of([&] { train_stage(rl, env, std::nullopt); }) == ErrorCode::kConfig);
  const auto r2 = train_stage(rl, env, r1.checkpoint);
  CHECK(r2.checkpoint.stage == Stage::kSimRft);
  CHECK(r2.curve.size() == 4);

  TrainConfig dpo;
  dpo.stage = Stage::kRealRft;
  dpo.learning_rate = 5.0;
  dpo.iterations = 20;
  CHECK(code_of([&] { train_stage(dpo, env, r1.checkpoint); }) == ErrorCode::kConfig);
  const auto hard = make_env(sim::bundled_topology("boutique-like"), fault::Difficulty::kHard, 2);
  const auto r3 = train_stage(dpo, env, r2.checkpoint, &hard);
  REQUIRE(r3.margin_before.has_value());
  CHECK_FALSE(r3.heldout_pairs.empty());
  CHECK_FALSE(r3.train_pairs.empty());
  CHECK(*r3.margin_after > *r3.margin_before);
}

TEST_CASE("training is deterministic") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  TrainConfig c;
  c.iterations = 20;
  c.learning_rate = 5.0;
  const auto a = train_stage(c, env, std::nullopt);
  const auto b = train_stage(c, env, std::nullopt);
  CHECK(a.checkpoint.to_json() == b.checkpoint.to_json());
}

TEST_CASE("non-finite parameters abort training") {
  const auto env = make_env(micro(), fault::Difficulty::kEasy, 1);
  Checkpoint bad{Stage::kSft, 1, 0, Theta(kToyContexts * kToyActions, 0.0)};
  bad.theta[5] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig c;
  c.iterations = 3;
  CHECK(code_of([&] { train_stage(c, env, bad); }) == ErrorCode::kDivergence);
}

TEST_CASE("train config validation and checkpoint errors") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = TrainConfig{};
  c.group_size = 1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = TrainConfig{};
  c.dpo_beta = -1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  CHECK(TrainConfig{}.hash() != c.hash());
  CHECK(code_of([] { Checkpoint::from_json("{\"schema\":2}"); }) == ErrorCode::kParse);
  CHECK(code_of([] { Checkpoint::from_json("not json"); }) == ErrorCode::kParse);
  CHECK(parse_stage("sim_rft") == Stage::kSimRft);
  CHECK_FALSE(parse_stage("ppo").has_value());
}
