#include "pathcut/hdr_graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "pathcut/error.hpp"
#include "pathcut/se_partition.hpp"
#include "pathcut/sensitivity.hpp"

using nlohmann::json;

namespace pathcut {

namespace {

constexpr double kDegenerateVariance = 1e-12;

struct ColumnStats {
  std::vector<double> centered;
  double sum_sq = 0.0;
  bool degenerate = false;
};

ColumnStats column_stats(const Matrix& m, std::size_t col) {
  ColumnStats st;
  const std::size_t rows = m.rows();
  double mean = 0.0;
  for (std::size_t r = 0; r < rows; ++r) mean += m(r, col);
  mean /= static_cast<double>(rows);
  st.centered.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    st.centered[r] = static_cast<double>(m(r, col)) - mean;
    st.sum_sq += st.centered[r] * st.centered[r];
  }
  st.degenerate = st.sum_sq / static_cast<double>(rows) < kDegenerateVariance;
  return st;
}

double correlate(const ColumnStats& a, const ColumnStats& b) {
  if (a.degenerate || b.degenerate) return 0.0;
  double cross = 0.0;
  for (std::size_t r = 0; r < a.centered.size(); ++r) cross += a.centered[r] * b.centered[r];
  const double rho = cross / std::sqrt(a.sum_sq * b.sum_sq);
  return std::clamp(rho, -1.0, 1.0);
}

std::string format_weight(double w) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.4g", w);
  return buf.data();
}

constexpr std::array<const char*, 10> kPalette = {
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00",
    "#ffff33", "#a65628", "#f781bf", "#999999", "#66c2a5"};

}  // namespace

std::size_t HdrGraph::local_index(std::size_t ordinal) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), ordinal);
  if (it == nodes.end() || *it != ordinal) {
    throw DataError("neuron ordinal " + std::to_string(ordinal) + " is not a graph node");
  }
  return static_cast<std::size_t>(it - nodes.begin());
}

bool HdrGraph::contains(std::size_t ordinal) const {
  return std::binary_search(nodes.begin(), nodes.end(), ordinal);
}

std::vector<double> HdrGraph::degrees() const {
  std::vector<double> d(nodes.size(), 0.0);
  for (const Edge& e : edges) {
    d[local_index(e.from)] += e.weight;
    d[local_index(e.to)] += e.weight;
  }
  return d;
}

double pearson(const Matrix& activations, std::size_t u, std::size_t v) {
  if (activations.rows() < 2) throw DataError("pearson needs at least two samples");
  if (u >= activations.cols() || v >= activations.cols()) {
    throw DataError("pearson column out of range");
  }
  return correlate(column_stats(activations, u), column_stats(activations, v));
}

double pearson(const ActivationTrace& trace, const std::string& condition, std::size_t u,
               std::size_t v) {
  return pearson(trace.condition(condition).activations, u, v);
}

double hdr(double rho_hall, double rho_fact, double epsilon, double cap) {
  const double ratio = std::fabs(rho_hall - rho_fact) / std::max(std::fabs(rho_fact), epsilon);
  return std::min(cap, ratio);
}

std::vector<std::size_t> candidate_nodes(const SensitivityProfile& profile, double multiplier) {
  if (multiplier < 0.0) throw ConfigError("candidate_multiplier must be non-negative");
  const std::size_t n = profile.delta.size();
  const auto extra = static_cast<std::size_t>(
      std::llround(multiplier * static_cast<double>(profile.instigators.size())));
  std::vector<std::size_t> order(n);
  for (std::size_t u = 0; u < n; ++u) order[u] = u;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::fabs(profile.delta[a]);
    const double db = std::fabs(profile.delta[b]);
    if (da != db) return da > db;
    return a < b;
  });
  std::set<std::size_t> nodes(profile.instigators.begin(), profile.instigators.end());
  nodes.insert(order.begin(), order.begin() + std::min(extra, n));
  return {nodes.begin(), nodes.end()};
}

HdrGraph build_graph(const ActivationTrace& trace, std::span<const std::size_t> candidates,
                     const GraphConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(cfg.hdr_cap > 0.0)) throw ConfigError("hdr_cap must be positive");

  HdrGraph g;
  g.orientation = cfg.orientation;
  g.epsilon = cfg.epsilon;
  g.hdr_cap = cfg.hdr_cap;
  g.nodes.assign(candidates.begin(), candidates.end());
  std::sort(g.nodes.begin(), g.nodes.end());
  g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());
  if (g.nodes.size() < 2) throw DataError("graph needs at least two candidate nodes");
  for (std::size_t u : g.nodes) {
    if (u >= trace.neuron_count()) {
      throw DataError("candidate ordinal " + std::to_string(u) + " outside the trace");
    }
  }

  const Matrix& fact = trace.condition(kFact).activations;
  const Matrix& hall = trace.condition(kHall).activations;
  const std::size_t k = g.nodes.size();
  std::vector<ColumnStats> fact_cols, hall_cols;
  fact_cols.reserve(k);
  hall_cols.reserve(k);
  for (std::size_t u : g.nodes) {
    fact_cols.push_back(column_stats(fact, u));
    hall_cols.push_back(column_stats(hall, u));
  }

  // Local (i < j) pairs with positive weight, in canonical order.
  struct Pair {
    std::size_t i, j;
    double w;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double rho_hall = correlate(hall_cols[i], hall_cols[j]);
      double w = 0.0;
      if (cfg.weighting == EdgeWeighting::hdr) {
        w = hdr(rho_hall, correlate(fact_cols[i], fact_cols[j]), cfg.epsilon, cfg.hdr_cap);
      } else {
        w = std::min(cfg.hdr_cap, std::fabs(rho_hall));
      }
      if (w > 0.0) pairs.push_back({i, j, w});
    }
  }

  std::vector<char> keep(pairs.size(), 0);
  if (cfg.sparsify.mode == Sparsify::Mode::threshold) {
    for (std::size_t p = 0; p < pairs.size(); ++p) keep[p] = pairs[p].w >= cfg.sparsify.threshold;
  } else {
    std::vector<std::vector<std::size_t>> incident(k);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      incident[pairs[p].i].push_back(p);
      incident[pairs[p].j].push_back(p);
    }
    for (std::size_t i = 0; i < k; ++i) {
      auto& list = incident[i];
      auto other = [&](std::size_t p) { return pairs[p].i == i ? pairs[p].j : pairs[p].i; };
      std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
        if (pairs[a].w != pairs[b].w) return pairs[a].w > pairs[b].w;
        return other(a) < other(b);
      });
      for (std::size_t r = 0; r < std::min(cfg.sparsify.top_k, list.size()); ++r) keep[list[r]] = 1;
    }
  }

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!keep[p]) continue;
    std::size_t a = g.nodes[pairs[p].i];
    std::size_t b = g.nodes[pairs[p].j];
    if (cfg.orientation == Orientation::layer_forward &&
        std::pair(trace.neurons[b].layer, b) < std::pair(trace.neurons[a].layer, a)) {
      std::swap(a, b);
    }
    g.edges.push_back({a, b, pairs[p].w});
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& x, const Edge& y) {
    return std::pair(x.from, x.to) < std::pair(y.from, y.to);
  });

  if (g.edges.empty()) throw DataError("empty graph: every candidate pair was pruned");
  return g;
}

std::string export_dot(const HdrGraph& graph, const ActivationTrace* trace,
                       const Partition* partition) {
  const bool directed = graph.orientation == Orientation::layer_forward;
  std::ostringstream out;
  out << (directed ? "digraph" : "graph") << " hdr {\n";
  out << "  node [shape=ellipse];\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const std::size_t u = graph.nodes[i];
    out << "  n" << u << " [label=\"";
    if (trace && u < trace->neuron_count()) {
      out << to_string(trace->neurons[u]);
    } else {
      out << u;
    }
    out << "\"";
    if (partition && !partition->module_of.empty()) {
      const std::size_t m = partition->module_of.at(i);
      out << ", module=" << m << ", style=filled, fillcolor=\"" << kPalette[m % kPalette.size()]
          << "\"";
    }
    out << "];\n";
  }
  const char* arrow = directed ? " -> " : " -- ";
  for (const Edge& e : graph.edges) {
    out << "  n" << e.from << arrow << "n" << e.to << " [label=\"" << format_weight(e.weight)
        << "\", weight=" << format_weight(e.weight) << "];\n";
  }
  out << "}\n";
  return out.str();
}

std::string to_string(Orientation o) {
  return o == Orientation::undirected ? "undirected" : "layer_forward";
}

Orientation orientation_from_string(const std::string& s) {
  if (s == "undirected") return Orientation::undirected;
  if (s == "layer_forward") return Orientation::layer_forward;
  throw ConfigError("unknown orientation: " + s);
}

json graph_to_json(const HdrGraph& graph, const GraphConfig& cfg) {
  json j;
  j["nodes"] = graph.nodes;
  json edges = json::array();
  for (const Edge& e : graph.edges) edges.push_back({{"u", e.from}, {"v", e.to}, {"w", e.weight}});
  j["edges"] = std::move(edges);
  j["orientation"] = to_string(graph.orientation);
  j["epsilon"] = graph.epsilon;
  j["hdr_cap"] = graph.hdr_cap;
  json c;
  c["sparsify_mode"] = cfg.sparsify.mode == Sparsify::Mode::top_k ? "top_k" : "threshold";
  c["sparsify_param"] = cfg.sparsify.mode == Sparsify::Mode::top_k
                            ? json(cfg.sparsify.top_k)
                            : json(cfg.sparsify.threshold);
  c["weighting"] = cfg.weighting == EdgeWeighting::hdr ? "hdr" : "abs_hall_correlation";
  j["config"] = std::move(c);
  return j;
}

HdrGraph graph_from_json(const json& j) {
  try {
    HdrGraph g;
    g.nodes = j.at("nodes").get<std::vector<std::size_t>>();
    if (!std::is_sorted(g.nodes.begin(), g.nodes.end())) {
      throw DataError("graph nodes must be sorted ascending");
    }
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at("u").get<std::size_t>(), e.at("v").get<std::size_t>(),
                         e.at("w").get<double>()});
    }
    g.orientation = orientation_from_string(j.at("orientation").get<std::string>());
    g.epsilon = j.at("epsilon").get<double>();
    g.hdr_cap = j.at("hdr_cap").get<double>();
    for (const Edge& e : g.edges) {
      if (!g.contains(e.from) || !g.contains(e.to) || e.from == e.to) {
        throw DataError("graph edge references an unknown node or is a self-loop");
      }
    }
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed graph: ") + e.what());
  }
}

}  // namespace pathcut
