#include "remed/sim/topology.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "remed/common/error.hpp"
#include "remed/common/text.hpp"

namespace remed::sim {

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_topologies();
}

const ServiceSpec* Topology::find(std::string_view name) const {
  for (const auto& s : services) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::vector<std::string> Topology::dependents_of(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& s : services) {
    if (std::find(s.dependencies.begin(), s.dependencies.end(), name) != s.dependencies.end()) {
      out.push_back(s.name);
    }
  }
  return out;
}

bool Topology::directly_connected(std::string_view a, std::string_view b) const {
  auto depends = [&](std::string_view from, std::string_view to) {
    const auto* s = find(from);
    return s && std::find(s->dependencies.begin(), s->dependencies.end(), to) != s->dependencies.end();
  };
  return depends(a, b) || depends(b, a);
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

double read_double(const YAML::Node& node, const char* key, double fallback) {
  if (!node[key]) return fallback;
  return node[key].as<double>();
}

void validate(Topology& t) {
  if (t.id.empty()) fail(ErrorCode::kParse, "topology: missing id");
  if (t.services.empty()) fail(ErrorCode::kParse, "topology: no services declared");
  std::set<std::string> names;
  for (const auto& s : t.services) {
    if (s.name.empty()) fail(ErrorCode::kParse, "topology: service without name");
    if (!names.insert(s.name).second) {
      fail(ErrorCode::kDuplicate, fmt::format("topology: duplicate service name '{}'", s.name));
    }
  }
  for (const auto& s : t.services) {
    if (s.desired_replicas < 1) {
      fail(ErrorCode::kInvalidArgument,
           fmt::format("topology: service '{}' has replicas {} (< 1)", s.name, s.desired_replicas));
    }
    for (const auto& d : s.dependencies) {
      if (!names.count(d)) {
        fail(ErrorCode::kNotFound,
             fmt::format("topology: service '{}' depends on undeclared service '{}'", s.name, d));
      }
      if (d == s.name) fail(ErrorCode::kCycle, fmt::format("topology: service '{}' depends on itself", s.name));
    }
  }

  // Three-colour DFS for cycle detection.
  std::map<std::string, int> colour;
  std::function<void(const std::string&)> visit = [&](const std::string& n) {
    colour[n] = 1;
    for (const auto& d : t.find(n)->dependencies) {
      if (colour[d] == 1) {
        fail(ErrorCode::kCycle, fmt::format("topology: dependency cycle through '{}' -> '{}'", n, d));
      }
      if (colour[d] == 0) visit(d);
    }
    colour[n] = 2;
  };
  for (const auto& s : t.services) {
    if (colour[s.name] == 0) visit(s.name);
  }

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& l : t.links) {
    if (!names.count(l.src) || !names.count(l.dst)) {
      fail(ErrorCode::kNotFound, fmt::format("topology: link {}->{} references an undeclared service", l.src, l.dst));
    }
    if (l.src == l.dst) fail(ErrorCode::kInvalidArgument, fmt::format("topology: self link on '{}'", l.src));
    if (l.base_latency_ms < 0) fail(ErrorCode::kInvalidArgument, "topology: negative link latency");
    if (!seen.insert({l.src, l.dst}).second) {
      fail(ErrorCode::kDuplicate, fmt::format("topology: duplicate link {}->{}", l.src, l.dst));
    }
  }
  // Every dependency edge carries traffic, so it gets a link.
  for (const auto& s : t.services) {
    for (const auto& d : s.dependencies) {
      if (seen.insert({s.name, d}).second) t.links.push_back(LinkSpec{s.name, d, 1.0});
    }
  }
  if (t.params.tau_ms <= 0) fail(ErrorCode::kInvalidArgument, "topology: sim.tau_ms must be > 0");
  if (t.params.noise_sigma < 0) fail(ErrorCode::kInvalidArgument, "topology: sim.noise_sigma must be >= 0");
}

}  // namespace

Topology parse_topology(std::string_view document) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(document));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::kParse, fmt::format("topology: {}", e.what()));
  }
  if (!root.IsMap()) fail(ErrorCode::kParse, "topology: document root must be a mapping");

  Topology t;
  try {
    t.id = root["id"] ? root["id"].as<std::string>() : "";
    if (const auto sim = root["sim"]) {
      t.params.tau_ms = read_double(sim, "tau_ms", t.params.tau_ms);
      t.params.noise_sigma = read_double(sim, "noise_sigma", t.params.noise_sigma);
    }
    const auto services = root["services"];
    if (!services || !services.IsSequence()) fail(ErrorCode::kParse, "topology: 'services' must be a list");
    for (const auto& node : services) {
      ServiceSpec s;
      s.name = node["name"] ? node["name"].as<std::string>() : "";
      s.desired_replicas = node["replicas"] ? node["replicas"].as<int>() : 1;
      if (const auto deps = node["dependencies"]) {
        for (const auto& d : deps) s.dependencies.push_back(d.as<std::string>());
      }
      if (const auto cfg = node["config"]) {
        for (const auto& kv : cfg) s.config[kv.first.as<std::string>()] = kv.second.as<std::string>();
      }
      if (const auto b = node["baseline"]) {
        s.baseline.cpu_pct = read_double(b, "cpu_pct", s.baseline.cpu_pct);
        s.baseline.mem_pct = read_double(b, "mem_pct", s.baseline.mem_pct);
        s.baseline.io_await_ms = read_double(b, "io_await_ms", s.baseline.io_await_ms);
      }
      t.services.push_back(std::move(s));
    }
    if (const auto links = root["links"]) {
      for (const auto& node : links) {
        LinkSpec l;
        l.src = node["src"].as<std::string>();
        l.dst = node["dst"].as<std::string>();
        l.base_latency_ms = read_double(node, "base_latency_ms", 1.0);
        t.links.push_back(std::move(l));
      }
    }
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::kParse, fmt::format("topology: {}", e.what()));
  }
  validate(t);
  return t;
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open topology file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

std::string render_topology(const Topology& t) {
  std::string out = fmt::format("id: {}\nsim:\n  tau_ms: {}\n  noise_sigma: {}\nservices:\n", t.id,
                                text::format_double(t.params.tau_ms), text::format_double(t.params.noise_sigma));
  for (const auto& s : t.services) {
    out += fmt::format("  - name: {}\n    replicas: {}\n    dependencies: [{}]\n", s.name, s.desired_replicas,
                       text::join(s.dependencies, ", "));
    out += "    config: {";
    bool first = true;
    for (const auto& [k, v] : s.config) {
      out += fmt::format("{}{}: \"{}\"", first ? "" : ", ", k, v);
      first = false;
    }
    out += fmt::format("}}\n    baseline: {{cpu_pct: {}, mem_pct: {}, io_await_ms: {}}}\n",
                       text::format_double(s.baseline.cpu_pct), text::format_double(s.baseline.mem_pct),
                       text::format_double(s.baseline.io_await_ms));
  }
  out += "links:\n";
  for (const auto& l : t.links) {
    out += fmt::format("  - {{src: {}, dst: {}, base_latency_ms: {}}}\n", l.src, l.dst,
                       text::format_double(l.base_latency_ms));
  }
  return out;
}

std::vector<std::string> bundled_topology_ids() {
  std::vector<std::string> ids;
  for (const auto& [name, doc] : detail::embedded_topologies()) ids.emplace_back(name);
  return ids;
}

const Topology& bundled_topology(std::string_view id) {
  static const std::map<std::string, Topology, std::less<>> catalog = [] {
    std::map<std::string, Topology, std::less<>> m;
    for (const auto& [name, doc] : detail::embedded_topologies()) m.emplace(std::string(name), parse_topology(doc));
    return m;
  }();
  auto it = catalog.find(id);
  if (it == catalog.end()) throw Error(ErrorCode::kNotFound, fmt::format("unknown bundled topology '{}'", id));
  return it->second;
}

Topology resolve_topology(const std::string& id_or_path) {
  for (const auto& id : bundled_topology_ids()) {
    if (id == id_or_path) return bundled_topology(id);
  }
  if (std::filesystem::exists(id_or_path)) return load_topology_file(id_or_path);
  throw Error(ErrorCode::kNotFound, fmt::format("'{}' is neither a bundled topology nor a file", id_or_path));
}

}  // namespace remed::sim
