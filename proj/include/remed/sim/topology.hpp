#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace remed::sim {

struct BaselineProfile {
  double cpu_pct = 20.0;
  double mem_pct = 30.0;
  double io_await_ms = 5.0;
};

struct ServiceSpec {
  std::string name;
  int desired_replicas = 1;
  std::vector<std::string> dependencies;
  std::map<std::string, std::string> config;
  BaselineProfile baseline;
};

struct LinkSpec {
  std::string src;
  std::string dst;
  double base_latency_ms = 1.0;
};

struct SimParams {
  double tau_ms = 5000.0;
  double noise_sigma = 2.0;
};

// Immutable catalog entry; shareable across episodes.
struct Topology {
  std::string id;
  SimParams params;
  std::vector<ServiceSpec> services;
  std::vector<LinkSpec> links;

  const ServiceSpec* find(std::string_view name) const;
  // Services that list `name` as a dependency.
  std::vector<std::string> dependents_of(std::string_view name) const;
  bool directly_connected(std::string_view a, std::string_view b) const;
};

// Parses and validates a topology document (YAML). Throws Error with
// kParse, kDuplicate, kNotFound, kCycle or kInvalidArgument.
Topology parse_topology(std::string_view document);
Topology load_topology_file(const std::string& path);
std::string render_topology(const Topology& topology);

std::vector<std::string> bundled_topology_ids();
// "simple-micro", "boutique-like", "ticket-like".
const Topology& bundled_topology(std::string_view id);

// A bundled id or a path to a topology document.
Topology resolve_topology(const std::string& id_or_path);

}  // namespace remed::sim
