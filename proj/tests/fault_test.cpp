#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "remed/common/error.hpp"
#include "remed/fault/fault.hpp"

using namespace remed;
using namespace remed::fault;
using sim::ClusterState;

namespace {

sim::Topology two_services() {
  return sim::parse_topology(R"(
id: pair
services:
  - name: a
    dependencies: [b]
    config: {db_url: "postgres://db/a", pool_size: "8"}
  - name: b
    config: {cache_ttl: "30"}
)");
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected remed::Error");
  return ErrorCode::kIo;
}

void settle(ClusterState& s, int steps) {
  for (int i = 0; i < steps; ++i) sim::step(s, 1000);
}

FailureSpec spec_for(FailureType t, const sim::Topology& topo, std::size_t pick) {
  if (is_network(t)) {
    const auto& l = topo.links[pick % topo.links.size()];
    return make_spec(t, l.src, l.dst);
  }
  return make_spec(t, topo.services[pick % topo.services.size()].name);
}

}  // namespace

TEST_CASE("failure taxonomy: seven types in three categories") {
  std::map<FailureCategory, int> per;
  for (auto t : kAllFailureTypes) ++per[category_of(t)];
  CHECK(per[FailureCategory::kResource] == 3);
  CHECK(per[FailureCategory::kNetwork] == 2);
  CHECK(per[FailureCategory::kApplication] == 2);
  CHECK(label_of(FailureType::kCpuSaturation) == "CPU Saturation");
  for (auto t : kAllFailureTypes) {
    CHECK(parse_failure_type(to_string(t)) == t);
    CHECK(parse_failure_type(label_of(t)) == t);
  }
}

TEST_CASE("validate_spec enforces the category table, method and magnitude range") {
  auto s = make_spec(FailureType::kCpuSaturation, "a");
  CHECK_NOTHROW(validate_spec(s));
  s.magnitude = 101;
  CHECK(code_of([&] { validate_spec(s); }) == ErrorCode::kInvalidArgument);
  s = make_spec(FailureType::kCpuSaturation, "a");
  s.category = FailureCategory::kNetwork;
  CHECK(code_of([&] { validate_spec(s); }) == ErrorCode::kInvalidArgument);
  s = make_spec(FailureType::kConfigError, "a");
  s.method = InjectionMethod::kChaos;
  CHECK(code_of([&] { validate_spec(s); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { validate_spec(make_spec(FailureType::kNetworkLoss, "a")); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("inject cpu_saturation then 50 settle steps drives the target level to >= 90") {
  auto state = sim::load_topology(two_services(), 1);
  const auto rec = inject(state, make_spec(FailureType::kCpuSaturation, "a"));
  CHECK(rec.handles.size() == 1);
  settle(state, 50);
  CHECK(state.find_pod("a-0")->level.cpu_pct >= 90.0);
  CHECK(state.find_pod("b-0")->level.cpu_pct == 20.0);
}

TEST_CASE("inject config_error crashes pods after one step and keeps the original value") {
  auto state = sim::load_topology(two_services(), 1);
  const auto rec = inject(state, make_spec(FailureType::kConfigError, "a", {}, "db_url"));
  settle(state, 1);
  CHECK(state.find_pod("a-0")->phase == sim::PodPhase::kCrashLoop);
  CHECK(rec.original_values.at("db_url") == "postgres://db/a");
  CHECK(state.config_store.at({"a", "db_url"}) != "postgres://db/a");
}

TEST_CASE("inject errors: unknown target, unknown link, duplicate") {
  auto state = sim::load_topology(two_services(), 1);
  CHECK(code_of([&] { inject(state, make_spec(FailureType::kCpuSaturation, "ghost")); }) == ErrorCode::kNotFound);
  CHECK(code_of([&] { inject(state, make_spec(FailureType::kNetworkDelay, "b", "a")); }) == ErrorCode::kNotFound);
  inject(state, make_spec(FailureType::kPodFailure, "a"));
  CHECK(code_of([&] { inject(state, make_spec(FailureType::kPodFailure, "a")); }) == ErrorCode::kDuplicate);
  CHECK_NOTHROW(inject(state, make_spec(FailureType::kPodFailure, "b")));
}

TEST_CASE("make_report: labels, endpoints and determinism") {
  auto state = sim::load_topology(two_services(), 1);
  const auto aux = make_aux_context(state);
  const auto cpu = make_report(inject(state, make_spec(FailureType::kCpuSaturation, "a")), aux);
  CHECK(cpu.description.find("'a'") != std::string::npos);
  CHECK(cpu.description.find("CPU Saturation") != std::string::npos);

  const auto rec = inject(state, make_spec(FailureType::kNetworkDelay, "a", "b"));
  const auto net = make_report(rec, aux);
  CHECK(net.description.find("'a'") != std::string::npos);
  CHECK(net.description.find("'b'") != std::string::npos);
  CHECK(make_report(rec, aux).description == net.description);
}

TEST_CASE("aux context exposes the denylist and hides config values") {
  const auto state = sim::load_topology(two_services(), 1);
  const auto aux = make_aux_context(state);
  CHECK(aux.action_constraints.size() == 6);
  CHECK(aux.probe_catalog.size() == 5);
  CHECK(aux.environment_summary.find("postgres://db/a") == std::string::npos);
  CHECK(aux.environment_summary.find("kubectl rollout undo") != std::string::npos);
}

TEST_CASE("property: reports never carry handles or original config values") {
  for (const auto& id : sim::bundled_topology_ids()) {
    const auto& topo = sim::bundled_topology(id);
    for (auto t : kAllFailureTypes) {
      for (std::size_t pick = 0; pick < 4; ++pick) {
        auto state = sim::load_topology(topo, pick);
        const auto rec = inject(state, spec_for(t, topo, pick));
        const auto rep = make_report(rec, make_aux_context(state));
        std::string blob = rep.description + rep.aux_context.environment_summary;
        for (const auto& c : rep.aux_context.action_constraints) blob += c;
        for (const auto& h : rec.handles) CHECK(blob.find(h) == std::string::npos);
        for (const auto& [k, v] : rec.original_values) CHECK(blob.find(v) == std::string::npos);
      }
    }
  }
}

TEST_CASE("oracle_verify examples") {
  auto state = sim::load_topology(two_services(), 2);
  const auto rec = inject(state, make_spec(FailureType::kCpuSaturation, "a"));
  CHECK_FALSE(oracle_verify(state, rec));
  settle(state, 20);
  sim::apply(state, sim::action::RemovePerturbation{sim::PerturbationKind::kCpuStress, "a"});
  CHECK_FALSE(oracle_verify(state, rec));  // cause gone but level still high
  settle(state, 50);
  CHECK(oracle_verify(state, rec));

  auto s2 = sim::load_topology(two_services(), 2);
  const auto kill = inject(s2, make_spec(FailureType::kPodFailure, "a"));
  sim::apply(s2, sim::action::RemovePerturbation{sim::PerturbationKind::kPodKill, "a"});
  settle(s2, 5);
  CHECK(s2.find_pod("a-0")->phase == sim::PodPhase::kCrashLoop);
  CHECK_FALSE(oracle_verify(s2, kill));
  sim::apply(s2, sim::action::RestartPod{"a-0"});
  CHECK(oracle_verify(s2, kill));
}

TEST_CASE("config_error: set_config to the original value plus restart satisfies the oracle") {
  auto state = sim::load_topology(two_services(), 3);
  const auto rec = inject(state, make_spec(FailureType::kConfigError, "a", {}, "pool_size"));
  settle(state, 2);
  sim::apply(state, sim::action::SetConfig{"a", "pool_size", "9"});
  sim::apply(state, sim::action::RestartService{"a"});
  settle(state, 2);
  CHECK_FALSE(oracle_verify(state, rec));  // value differs from the original
  sim::apply(state, sim::action::SetConfig{"a", "pool_size", "8"});
  sim::apply(state, sim::action::RestartService{"a"});
  settle(state, 2);
  CHECK(oracle_verify(state, rec));
}

TEST_CASE("oracle and restore reject records from another lineage") {
  auto state = sim::load_topology(two_services(), 1);
  auto other = sim::load_topology(two_services(), 2);
  const auto rec = inject(other, make_spec(FailureType::kCpuSaturation, "a"));
  CHECK(code_of([&] { oracle_verify(state, rec); }) == ErrorCode::kLineage);
  CHECK(code_of([&] { restore(state, FailureRecord{}); }) == ErrorCode::kLineage);
}

TEST_CASE("property: oracle soundness and reversibility for every type, target and seed") {
  int checked = 0;
  for (const auto& id : sim::bundled_topology_ids()) {
    const auto& topo = sim::bundled_topology(id);
    for (auto t : kAllFailureTypes) {
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto state = sim::load_topology(topo, seed);
        settle(state, 3);
        const auto before = sim::digest(state, sim::DigestScope::kStructural);
        const auto rec = inject(state, spec_for(t, topo, seed * 7 + 3));
        REQUIRE_FALSE(oracle_verify(state, rec));
        settle(state, static_cast<int>(seed % 4) * 5);
        REQUIRE_FALSE(oracle_verify(state, rec));
        restore(state, rec);
        REQUIRE(oracle_verify(state, rec));
        REQUIRE(sim::digest(state, sim::DigestScope::kStructural) == before);
        const auto full = sim::digest(state);
        restore(state, rec);
        REQUIRE(sim::digest(state) == full);  // idempotent
        ++checked;
      }
    }
  }
  CHECK(checked == 3 * 7 * 8);
}

TEST_CASE("restore brings a scaled-away service back to its desired replicas") {
  auto state = sim::load_topology(two_services(), 1);
  const auto rec = inject(state, make_spec(FailureType::kPodFailure, "a"));
  sim::apply(state, sim::action::ScaleService{"a", 0});
  restore(state, rec);
  CHECK(state.pods_of("a").size() == 1);
  CHECK(oracle_verify(state, rec));
}

// ----------------------------------------------------------------- suites

TEST_CASE("gen_suite: exact cardinality on every bundled topology") {
  for (const auto& id : sim::bundled_topology_ids()) {
    const auto& topo = sim::bundled_topology(id);
    CHECK(gen_suite(topo, Difficulty::kEasy, 1).size() == 23);
    CHECK(gen_suite(topo, Difficulty::kMedium, 1).size() == 49);
    CHECK(gen_suite(topo, Difficulty::kHard, 1).size() == 80);
  }
}

TEST_CASE("gen_suite: composition rules") {
  for (const auto& id : sim::bundled_topology_ids()) {
    const auto& topo = sim::bundled_topology(id);
    for (std::uint64_t seed : {1, 2, 99}) {
      std::set<FailureType> easy_types;
      for (const auto& sc : gen_suite(topo, Difficulty::kEasy, seed)) {
        REQUIRE(sc.specs.size() == 1);
        easy_types.insert(sc.specs[0].type);
      }
      CHECK(easy_types.size() == 7);
      for (const auto& sc : gen_suite(topo, Difficulty::kMedium, seed)) {
        REQUIRE(sc.specs.size() == 2);
        CHECK(independent(topo, sc.specs[0], sc.specs[1]));
      }
      for (const auto& sc : gen_suite(topo, Difficulty::kHard, seed)) {
        REQUIRE(sc.specs.size() >= 2);
        REQUIRE(sc.specs.size() <= 3);
        bool dependent_pair = false;
        for (std::size_t i = 0; i < sc.specs.size(); ++i) {
          for (std::size_t j = i + 1; j < sc.specs.size(); ++j) {
            dependent_pair |= !independent(topo, sc.specs[i], sc.specs[j]);
          }
        }
        CHECK(dependent_pair);
      }
    }
  }
}

TEST_CASE("gen_suite: every scenario injects cleanly") {
  for (const auto& id : sim::bundled_topology_ids()) {
    const auto& topo = sim::bundled_topology(id);
    for (auto d : {Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard}) {
      for (const auto& sc : gen_suite(topo, d, 1)) {
        auto state = sim::load_topology(topo, 1);
        for (const auto& s : sc.specs) REQUIRE_NOTHROW(inject(state, s));
      }
    }
  }
}

TEST_CASE("gen_suite: determinism and JSONL round trip") {
  const auto& topo = sim::bundled_topology("boutique-like");
  const auto a = gen_suite(topo, Difficulty::kHard, 5);
  CHECK(a == gen_suite(topo, Difficulty::kHard, 5));
  CHECK(a != gen_suite(topo, Difficulty::kHard, 6));
  const auto text = suite_to_jsonl(a);
  CHECK(suite_from_jsonl(text) == a);
  CHECK(suite_to_jsonl(suite_from_jsonl(text)) == text);
  CHECK(code_of([] { scenario_from_json("{\"scenario_id\": 1}"); }) == ErrorCode::kParse);
}

TEST_CASE("gen_suite matches the golden files") {
  // Regenerate with REMED_UPDATE_GOLDEN=1 after an intentional generator change.
  const bool update = std::getenv("REMED_UPDATE_GOLDEN") != nullptr;
  for (const auto& id : sim::bundled_topology_ids()) {
    for (auto d : {Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard}) {
      const auto path = std::filesystem::path(REMED_GOLDEN_DIR) / (id + "-" + std::string(to_string(d)) + "-seed1.jsonl");
      const auto text = suite_to_jsonl(gen_suite(sim::bundled_topology(id), d, 1));
      if (update) {
        std::ofstream(path) << text;
        continue;
      }
      std::ifstream in(path);
      REQUIRE_MESSAGE(in, "missing golden file " << path);
      std::stringstream ss;
      ss << in.rdbuf();
      CHECK_MESSAGE(ss.str() == text, "golden mismatch: " << path);
    }
  }
}
