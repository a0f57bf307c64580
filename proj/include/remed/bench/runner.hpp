#pragma once

// Fresh-state scenario preparation and the (optionally parallel) suite runner.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "remed/fault/fault.hpp"
#include "remed/loop/loop.hpp"
#include "remed/policy/policy.hpp"
#include "remed/sim/topology.hpp"

namespace remed::bench {

// Sim steps between injection and the first report, so symptoms are visible.
inline constexpr int kPrepareSettleSteps = 3;
inline constexpr std::int64_t kPrepareStepMs = 1000;

struct PreparedScenario {
  sim::ClusterState state;
  std::vector<loop::Target> targets;
};

std::uint64_t scenario_state_seed(std::uint64_t suite_seed, const fault::Scenario& scenario);

PreparedScenario prepare_scenario(const sim::Topology& topology, const fault::Scenario& scenario,
                                  std::uint64_t suite_seed);

// Reverse-order restore of every target.
void restore_all(sim::ClusterState& state, const std::vector<loop::Target>& targets);

// One fresh policy per episode; `index` is the scenario's position.
using PolicyFactory = std::function<std::unique_ptr<policy::Policy>(const fault::Scenario&, std::size_t index)>;

struct SuiteRunOptions {
  loop::LoopConfig loop;
  int jobs = 1;
  std::uint64_t suite_seed = 1;
  // Called once per finished episode, serialized, in completion order.
  std::function<void(std::size_t index, const loop::Episode&)> on_episode;
};

// Episodes come back in suite order whatever the completion order was.
std::vector<loop::Episode> run_suite(const PolicyFactory& factory, const sim::Topology& topology,
                                     const std::vector<fault::Scenario>& suite, const SuiteRunOptions& options);

// Oracle versus observable verdicts on each episode's final state. Episodes
// run in oracle mode; the observable predicate is evaluated alongside.
struct AgreementStats {
  std::size_t n = 0;
  std::size_t agree = 0;
  std::size_t observable_only = 0;  // observable healthy, oracle not healed
  std::size_t oracle_only = 0;      // oracle healed, symptoms still visible

  double rate() const { return n == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(n); }
};

AgreementStats verification_agreement(const PolicyFactory& factory, const sim::Topology& topology,
                                      const std::vector<fault::Scenario>& suite, const SuiteRunOptions& options);

}  // namespace remed::bench
