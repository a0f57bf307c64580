#include "remed/bench/runner.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "remed/common/error.hpp"
#include "remed/common/hash.hpp"

namespace remed::bench {

std::uint64_t scenario_state_seed(std::uint64_t suite_seed, const fault::Scenario& scenario) {
  return hash_combine(suite_seed, fnv1a64(scenario.scenario_id));
}

PreparedScenario prepare_scenario(const sim::Topology& topology, const fault::Scenario& scenario,
                                  std::uint64_t suite_seed) {
  PreparedScenario out{sim::load_topology(topology, scenario_state_seed(suite_seed, scenario)), {}};
  std::vector<fault::FailureRecord> records;
  for (const auto& spec : scenario.specs) records.push_back(fault::inject(out.state, spec));
  for (int i = 0; i < kPrepareSettleSteps; ++i) sim::step(out.state, kPrepareStepMs);
  const auto aux = fault::make_aux_context(out.state);
  for (auto& rec : records) {
    auto report = fault::make_report(rec, aux);
    out.targets.push_back({std::move(rec), std::move(report)});
  }
  return out;
}

void restore_all(sim::ClusterState& state, const std::vector<loop::Target>& targets) {
  for (auto it = targets.rbegin(); it != targets.rend(); ++it) fault::restore(state, it->record);
}

std::vector<loop::Episode> run_suite(const PolicyFactory& factory, const sim::Topology& topology,
                                     const std::vector<fault::Scenario>& suite, const SuiteRunOptions& options) {
  options.loop.validate();
  if (options.jobs < 1) throw Error(ErrorCode::kConfig, "jobs must be >= 1");

  std::vector<loop::Episode> episodes(suite.size());
  std::atomic<std::size_t> next{0};
  std::mutex sink_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= suite.size()) return;
      try {
        auto prepared = prepare_scenario(topology, suite[i], options.suite_seed);
        auto pol = factory(suite[i], i);
        auto ep = loop::run_episode(*pol, prepared.state, prepared.targets, options.loop, suite[i].scenario_id);
        restore_all(prepared.state, prepared.targets);
        episodes[i] = std::move(ep);
        if (options.on_episode) {
          std::lock_guard lock(sink_mu);
          options.on_episode(i, episodes[i]);
        }
      } catch (...) {
        std::lock_guard lock(sink_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(suite.size());
        return;
      }
    }
  };

  const int n = std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(suite.size(), 1)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < n; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return episodes;
}

AgreementStats verification_agreement(const PolicyFactory& factory, const sim::Topology& topology,
                                      const std::vector<fault::Scenario>& suite, const SuiteRunOptions& options) {
  auto config = options.loop;
  config.mode = loop::VerificationMode::kOracle;
  config.validate();
  AgreementStats stats;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    auto prepared = prepare_scenario(topology, suite[i], options.suite_seed);
    auto pol = factory(suite[i], i);
    const auto ep = loop::run_episode(*pol, prepared.state, prepared.targets, config, suite[i].scenario_id);
    bool observable = true;
    for (const auto& t : prepared.targets) observable = observable && loop::observable_verify(prepared.state, t.report);
    ++stats.n;
    if (observable == ep.success) {
      ++stats.agree;
    } else if (observable) {
      ++stats.observable_only;
    } else {
      ++stats.oracle_only;
    }
  }
  return stats;
}

}  // namespace remed::bench
