#include "pathcut/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "pathcut/digest.hpp"
#include "pathcut/error.hpp"

using nlohmann::json;

namespace pathcut {

std::vector<Distance> geodesic_distances(const HdrGraph& graph,
                                         std::span<const std::size_t> sources) {
  if (sources.empty()) throw DataError("geodesic distances need at least one source");
  const std::size_t n = graph.nodes.size();
  std::vector<std::vector<std::size_t>> next(n);
  for (const Edge& e : graph.edges) {
    const std::size_t a = graph.local_index(e.from);
    const std::size_t b = graph.local_index(e.to);
    next[a].push_back(b);
    if (graph.orientation == Orientation::undirected) next[b].push_back(a);
  }

  std::vector<Distance> dist(n);
  std::deque<std::size_t> queue;
  for (std::size_t s : sources) {
    const std::size_t i = graph.local_index(s);
    if (!dist[i]) {
      dist[i] = 0;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (std::size_t j : next[i]) {
      if (!dist[j]) {
        dist[j] = *dist[i] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

double suppression_factor(double alpha0, double max_in_hdr, double hdr_cap, double lambda,
                          Distance distance) {
  if (!distance) return 0.0;
  const double a = alpha0 * (max_in_hdr / hdr_cap) * std::exp(-lambda * static_cast<double>(*distance));
  return std::clamp(a, 0.0, 1.0);
}

std::vector<double> max_incoming_weight(const HdrGraph& graph) {
  std::vector<double> best(graph.nodes.size(), 0.0);
  for (const Edge& e : graph.edges) {
    const std::size_t b = graph.local_index(e.to);
    best[b] = std::max(best[b], e.weight);
    if (graph.orientation == Orientation::undirected) {
      const std::size_t a = graph.local_index(e.from);
      best[a] = std::max(best[a], e.weight);
    }
  }
  return best;
}

namespace {

std::string graph_digest(const HdrGraph& g) {
  json j;
  j["nodes"] = g.nodes;
  json edges = json::array();
  for (const Edge& e : g.edges) edges.push_back({e.from, e.to, e.weight});
  j["edges"] = std::move(edges);
  j["orientation"] = to_string(g.orientation);
  j["epsilon"] = g.epsilon;
  j["hdr_cap"] = g.hdr_cap;
  return sha256_hex(j.dump());
}

}  // namespace

InterventionPlan build_plan(const ActivationTrace& trace, const HdrGraph& graph,
                            const Partition& partition, const SensitivityProfile& profile,
                            const PlanParams& params) {
  if (!(params.alpha0 > 0.0 && params.alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in (0, 1]");
  if (!(params.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (profile.instigators.empty()) throw DataError("cannot plan without instigators");
  if (partition.nodes != graph.nodes) throw DataError("partition does not cover the graph nodes");
  for (std::size_t u : profile.instigators) {
    if (!graph.contains(u)) {
      throw DataError("instigator " + std::to_string(u) + " is not a graph node");
    }
  }

  const std::set<std::size_t> instigators(profile.instigators.begin(), profile.instigators.end());
  const std::set<std::size_t> critical(profile.critical.begin(), profile.critical.end());

  std::set<std::size_t> infected;
  for (std::size_t u : instigators) infected.insert(partition.module_of_ordinal(u));

  const auto dist = geodesic_distances(graph, profile.instigators);
  const auto influx = max_incoming_weight(graph);
  const double scale = params.normalize_hdr ? graph.hdr_cap : 1.0;

  InterventionPlan plan;
  plan.params = params;
  plan.hdr_cap = graph.hdr_cap;
  plan.entries.reserve(trace.neuron_count());
  for (std::size_t u = 0; u < trace.neuron_count(); ++u) {
    PlanEntry e;
    e.neuron = trace.neurons[u];
    const bool in_graph = graph.contains(u);
    std::size_t local = 0;
    if (in_graph) {
      local = graph.local_index(u);
      e.distance = dist[local];
      e.max_in_hdr = influx[local];
    }
    if (critical.count(u)) {
      e.role = Role::critical;
      if (instigators.count(u)) plan.conflicts.push_back(e.neuron);
    } else if (instigators.count(u)) {
      e.role = Role::instigator;
      e.alpha = 1.0;
    } else if (in_graph && infected.count(partition.module_of[local])) {
      e.role = Role::downstream;
      e.alpha = params.uniform ? params.alpha0
                               : suppression_factor(params.alpha0, e.max_in_hdr, scale,
                                                    params.lambda, e.distance);
    }
    plan.entries.push_back(e);
  }

  plan.provenance = {{"trace", trace_digest(trace)},
                     {"graph", graph_digest(graph)},
                     {"partition", sha256_hex(partition_to_json(partition).dump())}};
  return plan;
}

WeightMap apply_plan_to_weights(const InterventionPlan& plan, const WeightMap& weights) {
  WeightMap out = weights;
  for (const PlanEntry& e : plan.entries) {
    auto it = out.find(e.neuron);
    if (it == out.end()) {
      if (e.alpha > 0.0) throw DataError("no weights for planned neuron " + to_string(e.neuron));
      continue;
    }
    if (e.alpha == 0.0) continue;
    const double keep = 1.0 - e.alpha;
    for (double& w : it->second) w *= keep;
  }
  return out;
}

std::string to_string(Role role) {
  switch (role) {
    case Role::instigator: return "instigator";
    case Role::downstream: return "downstream";
    case Role::critical: return "critical";
    case Role::untouched: return "untouched";
  }
  return "untouched";
}

Role role_from_string(const std::string& s) {
  if (s == "instigator") return Role::instigator;
  if (s == "downstream") return Role::downstream;
  if (s == "critical") return Role::critical;
  if (s == "untouched") return Role::untouched;
  throw DataError("unknown role: " + s);
}

json plan_to_json(const InterventionPlan& plan) {
  json j;
  j["version"] = kPlanFormatVersion;
  j["params"] = {{"alpha0", plan.params.alpha0},
                 {"lambda", plan.params.lambda},
                 {"normalize_hdr", plan.params.normalize_hdr},
                 {"uniform", plan.params.uniform},
                 {"hdr_cap", plan.hdr_cap}};
  json entries = json::array();
  for (const PlanEntry& e : plan.entries) {
    entries.push_back({{"layer", e.neuron.layer},
                       {"index", e.neuron.index},
                       {"alpha", e.alpha},
                       {"role", to_string(e.role)},
                       {"distance", e.distance ? json(*e.distance) : json(nullptr)},
                       {"max_in_hdr", e.max_in_hdr}});
  }
  j["entries"] = std::move(entries);
  j["provenance"] = plan.provenance;
  return j;
}

InterventionPlan plan_from_json(const json& j) {
  try {
    if (j.at("version").get<std::string>() != kPlanFormatVersion) {
      throw DataError("unsupported plan version");
    }
    InterventionPlan plan;
    const json& p = j.at("params");
    plan.params.alpha0 = p.at("alpha0").get<double>();
    plan.params.lambda = p.at("lambda").get<double>();
    plan.params.normalize_hdr = p.at("normalize_hdr").get<bool>();
    plan.params.uniform = p.value("uniform", false);
    plan.hdr_cap = p.at("hdr_cap").get<double>();
    for (const auto& e : j.at("entries")) {
      PlanEntry entry;
      entry.neuron = {e.at("layer").get<std::uint32_t>(), e.at("index").get<std::uint32_t>()};
      entry.alpha = e.at("alpha").get<double>();
      entry.role = role_from_string(e.at("role").get<std::string>());
      if (!e.at("distance").is_null()) entry.distance = e.at("distance").get<std::size_t>();
      entry.max_in_hdr = e.at("max_in_hdr").get<double>();
      if (!(entry.alpha >= 0.0 && entry.alpha <= 1.0)) {
        throw DataError("plan alpha outside [0, 1] for " + to_string(entry.neuron));
      }
      plan.entries.push_back(entry);
    }
    plan.provenance = j.value("provenance", json::object());
    return plan;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed plan: ") + e.what());
  }
}

}  // namespace pathcut
