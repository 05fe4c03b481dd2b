#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathcut/hdr_graph.hpp"

namespace pathcut {

struct Module {
  std::vector<std::size_t> members;  // neuron ordinals, ascending
  double volume = 0.0;
  double cut = 0.0;

  bool operator==(const Module&) const = default;
};

// Flat (two-level) partition of a graph's nodes. Module ids are canonical:
// numbered 0..m-1 in order of each module's first node.
struct Partition {
  std::vector<std::size_t> nodes;      // same order as HdrGraph::nodes
  std::vector<std::size_t> module_of;  // per local node
  std::vector<Module> modules;
  double total_volume = 0.0;
  double entropy = 0.0;

  std::size_t module_count() const { return modules.size(); }
  // Module id of a neuron ordinal; throws if the ordinal is not a node.
  std::size_t module_of_ordinal(std::size_t ordinal) const;

  bool operator==(const Partition&) const = default;
};

// One accepted merge, recorded when a history sink is passed to merge_stage.
struct MergeStep {
  std::size_t kept = 0;
  std::size_t absorbed = 0;
  double delta = 0.0;
  double entropy = 0.0;  // maintained incrementally
  std::vector<std::size_t> module_of;
};

inline constexpr double kStrictDecrease = 1e-12;
inline constexpr std::size_t kBruteForceMaxNodes = 12;

// Two-level structural entropy (base 2) of a local assignment. Returns 0 for
// an edgeless graph.
double structural_entropy(const HdrGraph& graph, std::span<const std::size_t> module_of);

// Canonicalises module ids and fills volumes, cuts and entropy.
Partition make_partition(const HdrGraph& graph, std::span<const std::size_t> module_of);

Partition singleton_partition(const HdrGraph& graph);
Partition single_module_partition(const HdrGraph& graph);

// Greedy agglomeration from singletons: repeatedly applies the edge-connected
// merge with the largest strict entropy decrease.
Partition merge_stage(const HdrGraph& graph, std::vector<MergeStep>* history = nullptr);

// Sweeps nodes in ascending order, moving each to the neighbouring module or
// fresh singleton that lowers entropy the most, until a sweep makes no move.
Partition refine_stage(const HdrGraph& graph, const Partition& partition,
                       std::size_t max_sweeps = 100);

Partition find_partition(const HdrGraph& graph);

// Exhaustive minimum over all set partitions of the non-isolated nodes.
// Throws ConfigError above kBruteForceMaxNodes nodes.
Partition partition_optimal_bruteforce(const HdrGraph& graph);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

nlohmann::json partition_to_json(const Partition& partition);
Partition partition_from_json(const nlohmann::json& j);

}  // namespace pathcut
