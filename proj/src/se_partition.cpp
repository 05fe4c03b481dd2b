#include "pathcut/se_partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pathcut/error.hpp"

using nlohmann::json;

namespace pathcut {

namespace {

double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

// Aggregates that determine one module's entropy contribution.
struct ModuleStats {
  double volume = 0.0;
  double cut = 0.0;
  double sum_dlogd = 0.0;  // sum over members of d * log2(d)
};

// H_int + H_ext of one module, written in terms of its aggregates:
//   H_int = -(1/V) (sum d log d - vol log vol)
//   H_ext = -(cut/V) log(vol/V)
double module_entropy(const ModuleStats& m, double total_volume) {
  if (m.volume <= 0.0 || total_volume <= 0.0) return 0.0;
  const double internal = -(m.sum_dlogd - xlog2x(m.volume)) / total_volume;
  const double external = m.cut > 0.0 ? -(m.cut / total_volume) * std::log2(m.volume / total_volume) : 0.0;
  return internal + external;
}

struct Adjacency {
  std::vector<std::vector<std::pair<std::size_t, double>>> neighbours;  // local ids
  std::vector<double> degree;
  double total_volume = 0.0;
};

Adjacency adjacency_of(const HdrGraph& graph) {
  Adjacency adj;
  const std::size_t n = graph.nodes.size();
  adj.neighbours.resize(n);
  adj.degree.assign(n, 0.0);
  for (const Edge& e : graph.edges) {
    const std::size_t a = graph.local_index(e.from);
    const std::size_t b = graph.local_index(e.to);
    if (a == b) throw DataError("self-loop in graph");
    adj.neighbours[a].emplace_back(b, e.weight);
    adj.neighbours[b].emplace_back(a, e.weight);
    adj.degree[a] += e.weight;
    adj.degree[b] += e.weight;
  }
  for (double d : adj.degree) adj.total_volume += d;
  return adj;
}

std::vector<std::size_t> canonical_ids(std::span<const std::size_t> module_of) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out(module_of.size());
  for (std::size_t i = 0; i < module_of.size(); ++i) {
    auto [it, inserted] = remap.emplace(module_of[i], remap.size());
    out[i] = it->second;
  }
  return out;
}

std::vector<ModuleStats> module_stats(const Adjacency& adj, std::span<const std::size_t> module_of,
                                      std::size_t module_count) {
  std::vector<ModuleStats> stats(module_count);
  for (std::size_t i = 0; i < module_of.size(); ++i) {
    auto& m = stats[module_of[i]];
    m.volume += adj.degree[i];
    m.sum_dlogd += xlog2x(adj.degree[i]);
    for (const auto& [j, w] : adj.neighbours[i]) {
      if (module_of[j] != module_of[i]) m.cut += w;
    }
  }
  return stats;
}

}  // namespace

std::size_t Partition::module_of_ordinal(std::size_t ordinal) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), ordinal);
  if (it == nodes.end() || *it != ordinal) {
    throw DataError("neuron ordinal " + std::to_string(ordinal) + " is not partitioned");
  }
  return module_of[static_cast<std::size_t>(it - nodes.begin())];
}

double structural_entropy(const HdrGraph& graph, std::span<const std::size_t> module_of) {
  if (module_of.size() != graph.nodes.size()) {
    throw DataError("assignment does not cover every graph node");
  }
  const Adjacency adj = adjacency_of(graph);
  if (adj.total_volume <= 0.0) return 0.0;
  const auto ids = canonical_ids(module_of);
  const std::size_t m = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
  double total = 0.0;
  for (const auto& s : module_stats(adj, ids, m)) total += module_entropy(s, adj.total_volume);
  return total;
}

Partition make_partition(const HdrGraph& graph, std::span<const std::size_t> module_of) {
  if (module_of.size() != graph.nodes.size()) {
    throw DataError("assignment does not cover every graph node");
  }
  const Adjacency adj = adjacency_of(graph);
  Partition p;
  p.nodes = graph.nodes;
  p.module_of = canonical_ids(module_of);
  const std::size_t m =
      p.module_of.empty() ? 0 : *std::max_element(p.module_of.begin(), p.module_of.end()) + 1;
  const auto stats = module_stats(adj, p.module_of, m);
  p.modules.resize(m);
  for (std::size_t i = 0; i < p.nodes.size(); ++i) p.modules[p.module_of[i]].members.push_back(p.nodes[i]);
  p.total_volume = adj.total_volume;
  for (std::size_t x = 0; x < m; ++x) {
    p.modules[x].volume = stats[x].volume;
    p.modules[x].cut = stats[x].cut;
    p.entropy += module_entropy(stats[x], adj.total_volume);
  }
  return p;
}

Partition singleton_partition(const HdrGraph& graph) {
  std::vector<std::size_t> ids(graph.nodes.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return make_partition(graph, ids);
}

Partition single_module_partition(const HdrGraph& graph) {
  return make_partition(graph, std::vector<std::size_t>(graph.nodes.size(), 0));
}

Partition merge_stage(const HdrGraph& graph, std::vector<MergeStep>* history) {
  const Adjacency adj = adjacency_of(graph);
  const std::size_t n = graph.nodes.size();
  if (adj.total_volume <= 0.0) return singleton_partition(graph);
  const double vol = adj.total_volume;

  struct Live {
    ModuleStats stats;
    std::map<std::size_t, double> links;  // neighbouring module id -> total edge weight
    bool alive = true;
  };
  std::vector<Live> mods(n);
  std::vector<std::size_t> module_of(n);
  double entropy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    module_of[i] = i;
    mods[i].stats = {adj.degree[i], adj.degree[i], xlog2x(adj.degree[i])};
    for (const auto& [j, w] : adj.neighbours[i]) mods[i].links[j] += w;
    entropy += module_entropy(mods[i].stats, vol);
  }

  auto merged_stats = [](const ModuleStats& a, const ModuleStats& b, double w) {
    return ModuleStats{a.volume + b.volume, a.cut + b.cut - 2.0 * w, a.sum_dlogd + b.sum_dlogd};
  };

  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_x = 0, best_y = 0;
    for (std::size_t x = 0; x < n; ++x) {
      if (!mods[x].alive) continue;
      for (const auto& [y, w] : mods[x].links) {
        if (y <= x) continue;
        const double delta = module_entropy(merged_stats(mods[x].stats, mods[y].stats, w), vol) -
                             module_entropy(mods[x].stats, vol) - module_entropy(mods[y].stats, vol);
        if (delta < best) {
          best = delta;
          best_x = x;
          best_y = y;
        }
      }
    }
    if (!(best < -kStrictDecrease)) break;

    Live& keep = mods[best_x];
    Live& gone = mods[best_y];
    const double w = keep.links.at(best_y);
    keep.stats = merged_stats(keep.stats, gone.stats, w);
    keep.links.erase(best_y);
    for (const auto& [z, wz] : gone.links) {
      if (z == best_x) continue;
      keep.links[z] += wz;
      auto& back = mods[z].links;
      back.erase(best_y);
      back[best_x] += wz;
    }
    gone.links.clear();
    gone.alive = false;
    for (auto& m : module_of) {
      if (m == best_y) m = best_x;
    }
    entropy += best;
    if (history) history->push_back({best_x, best_y, best, entropy, module_of});
  }
  return make_partition(graph, module_of);
}

Partition refine_stage(const HdrGraph& graph, const Partition& partition, std::size_t max_sweeps) {
  if (partition.nodes != graph.nodes || partition.module_of.size() != graph.nodes.size()) {
    throw DataError("partition does not match graph nodes");
  }
  const Adjacency adj = adjacency_of(graph);
  const std::size_t n = graph.nodes.size();
  if (adj.total_volume <= 0.0) return make_partition(graph, partition.module_of);
  const double vol = adj.total_volume;

  std::vector<std::size_t> module_of = partition.module_of;
  std::size_t next_id = partition.modules.size();
  // Room for every node to open a fresh module.
  std::vector<ModuleStats> stats = module_stats(adj, module_of, next_id);
  stats.resize(next_id + n * max_sweeps + 1);
  std::vector<std::size_t> sizes(stats.size(), 0);
  for (std::size_t m : module_of) ++sizes[m];

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = adj.degree[i];
      if (d <= 0.0) continue;
      const std::size_t from = module_of[i];

      std::map<std::size_t, double> link;  // module -> weight from i
      for (const auto& [j, w] : adj.neighbours[i]) link[module_of[j]] += w;
      const double w_own = link.count(from) ? link.at(from) : 0.0;

      const ModuleStats& x = stats[from];
      const ModuleStats x_after{x.volume - d, x.cut - d + 2.0 * w_own, x.sum_dlogd - xlog2x(d)};
      const double base_x = module_entropy(x, vol);
      const double after_x = sizes[from] == 1 ? 0.0 : module_entropy(x_after, vol);

      double best = std::numeric_limits<double>::infinity();
      std::size_t best_to = from;
      for (const auto& [to, w_to] : link) {
        if (to == from) continue;
        const ModuleStats& y = stats[to];
        const ModuleStats y_after{y.volume + d, y.cut + d - 2.0 * w_to, y.sum_dlogd + xlog2x(d)};
        const double delta =
            after_x + module_entropy(y_after, vol) - base_x - module_entropy(y, vol);
        if (delta < best) {
          best = delta;
          best_to = to;
        }
      }
      if (sizes[from] > 1) {
        const ModuleStats fresh{d, d, xlog2x(d)};
        const double delta = after_x + module_entropy(fresh, vol) - base_x;
        if (delta < best) {
          best = delta;
          best_to = next_id;
        }
      }
      if (!(best < -kStrictDecrease)) continue;

      const std::size_t to = best_to;
      if (to == next_id) ++next_id;
      const double w_to = link.count(to) ? link.at(to) : 0.0;
      stats[from] = sizes[from] == 1 ? ModuleStats{} : x_after;
      ModuleStats& y = stats[to];
      y = {y.volume + d, y.cut + d - 2.0 * w_to, y.sum_dlogd + xlog2x(d)};
      --sizes[from];
      ++sizes[to];
      module_of[i] = to;
      moved = true;
    }
    if (!moved) break;
  }
  return make_partition(graph, module_of);
}

Partition find_partition(const HdrGraph& graph) {
  return refine_stage(graph, merge_stage(graph));
}

Partition partition_optimal_bruteforce(const HdrGraph& graph) {
  const std::size_t n = graph.nodes.size();
  if (n > kBruteForceMaxNodes) {
    throw ConfigError("brute-force partitioning is limited to " +
                      std::to_string(kBruteForceMaxNodes) + " nodes");
  }
  const Adjacency adj = adjacency_of(graph);
  if (adj.total_volume <= 0.0) return singleton_partition(graph);

  std::vector<std::size_t> active;  // nodes with positive degree
  for (std::size_t i = 0; i < n; ++i) {
    if (adj.degree[i] > 0.0) active.push_back(i);
  }
  const std::size_t k = active.size();

  struct LocalEdge {
    std::size_t a, b;
    double w;
  };
  std::vector<std::size_t> slot(n, 0);
  for (std::size_t s = 0; s < k; ++s) slot[active[s]] = s;
  std::vector<LocalEdge> edges;
  for (const Edge& e : graph.edges) {
    edges.push_back({slot[graph.local_index(e.from)], slot[graph.local_index(e.to)], e.weight});
  }

  // Restricted growth strings enumerate every set partition exactly once, in
  // lexicographic order.
  std::vector<std::size_t> rgs(k, 0), prefix_max(k, 0), best_rgs;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_modules = 0;
  std::vector<ModuleStats> stats(k);

  while (true) {
    const std::size_t m = k == 0 ? 0 : prefix_max[k - 1] + 1;
    std::fill(stats.begin(), stats.begin() + m, ModuleStats{});
    for (std::size_t s = 0; s < k; ++s) {
      const double d = adj.degree[active[s]];
      stats[rgs[s]].volume += d;
      stats[rgs[s]].sum_dlogd += xlog2x(d);
    }
    for (const auto& e : edges) {
      if (rgs[e.a] != rgs[e.b]) {
        stats[rgs[e.a]].cut += e.w;
        stats[rgs[e.b]].cut += e.w;
      }
    }
    double h = 0.0;
    for (std::size_t x = 0; x < m; ++x) h += module_entropy(stats[x], adj.total_volume);
    if (h < best - kStrictDecrease || (std::fabs(h - best) <= kStrictDecrease && m < best_modules)) {
      best = h;
      best_modules = m;
      best_rgs = rgs;
    }

    // Advance to the next restricted growth string.
    bool advanced = false;
    for (std::size_t pos = k; pos-- > 1;) {
      if (rgs[pos] <= prefix_max[pos - 1]) {
        ++rgs[pos];
        prefix_max[pos] = std::max(prefix_max[pos - 1], rgs[pos]);
        for (std::size_t t = pos + 1; t < k; ++t) {
          rgs[t] = 0;
          prefix_max[t] = prefix_max[pos];
        }
        advanced = true;
        break;
      }
    }
    if (!advanced) break;
  }

  std::vector<std::size_t> module_of(n);
  std::size_t next = best_modules;
  for (std::size_t i = 0; i < n; ++i) module_of[i] = adj.degree[i] > 0.0 ? 0 : next++;
  for (std::size_t s = 0; s < k; ++s) module_of[active[s]] = best_rgs[s];
  return make_partition(graph, module_of);
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw DataError("partitions label different item counts");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, c] : table) index += pairs(c);
  for (const auto& [key, c] : rows) sum_rows += pairs(c);
  for (const auto& [key, c] : cols) sum_cols += pairs(c);
  const double total = pairs(static_cast<double>(n));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return index == expected ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

json partition_to_json(const Partition& p) {
  json j;
  json assignment = json::array();
  for (std::size_t i = 0; i < p.nodes.size(); ++i) {
    assignment.push_back({{"node", p.nodes[i]}, {"module", p.module_of[i]}});
  }
  j["assignment"] = std::move(assignment);
  j["entropy"] = p.entropy;
  j["total_volume"] = p.total_volume;
  json modules = json::array();
  for (std::size_t x = 0; x < p.modules.size(); ++x) {
    modules.push_back({{"id", x},
                       {"members", p.modules[x].members},
                       {"volume", p.modules[x].volume},
                       {"cut", p.modules[x].cut}});
  }
  j["modules"] = std::move(modules);
  return j;
}

Partition partition_from_json(const json& j) {
  try {
    Partition p;
    for (const auto& a : j.at("assignment")) {
      p.nodes.push_back(a.at("node").get<std::size_t>());
      p.module_of.push_back(a.at("module").get<std::size_t>());
    }
    p.entropy = j.at("entropy").get<double>();
    p.total_volume = j.at("total_volume").get<double>();
    for (const auto& m : j.at("modules")) {
      p.modules.push_back({m.at("members").get<std::vector<std::size_t>>(),
                           m.at("volume").get<double>(), m.at("cut").get<double>()});
    }
    for (std::size_t id : p.module_of) {
      if (id >= p.modules.size()) throw DataError("partition assignment names an unknown module");
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed partition: ") + e.what());
  }
}

}  // namespace pathcut
