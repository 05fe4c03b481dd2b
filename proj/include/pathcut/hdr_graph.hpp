#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathcut/trace_store.hpp"

namespace pathcut {

struct Partition;
struct SensitivityProfile;

enum class Orientation { undirected, layer_forward };

// How pair weights are derived from activation correlations. `abs_hall_correlation`
// drops the fact baseline and exists for ablation runs.
enum class EdgeWeighting { hdr, abs_hall_correlation };

struct Sparsify {
  enum class Mode { threshold, top_k };
  Mode mode = Mode::top_k;
  double threshold = 0.0;
  std::size_t top_k = 10;
};

struct GraphConfig {
  double epsilon = 1e-6;
  double hdr_cap = 100.0;
  Sparsify sparsify;
  Orientation orientation = Orientation::undirected;
  EdgeWeighting weighting = EdgeWeighting::hdr;
};

// Undirected edges keep from < to. Under layer_forward, from is the endpoint
// with the lower (layer, ordinal).
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;

  bool operator==(const Edge&) const = default;
};

struct HdrGraph {
  std::vector<std::size_t> nodes;  // neuron ordinals, ascending
  std::vector<Edge> edges;         // canonical order
  Orientation orientation = Orientation::undirected;
  double epsilon = 1e-6;
  double hdr_cap = 100.0;

  // Position of an ordinal in `nodes`; throws if absent.
  std::size_t local_index(std::size_t ordinal) const;
  bool contains(std::size_t ordinal) const;
  // Weighted degree per local node (orientation ignored).
  std::vector<double> degrees() const;

  bool operator==(const HdrGraph&) const = default;
};

// Pearson coefficient of two activation columns; exactly 0 when either column
// has variance below 1e-12.
double pearson(const Matrix& activations, std::size_t u, std::size_t v);
double pearson(const ActivationTrace& trace, const std::string& condition, std::size_t u,
               std::size_t v);

// min(cap, |rho_hall - rho_fact| / max(|rho_fact|, epsilon))
double hdr(double rho_hall, double rho_fact, double epsilon, double cap);

// Instigators plus the top `multiplier * |instigators|` ordinals by |delta|.
std::vector<std::size_t> candidate_nodes(const SensitivityProfile& profile, double multiplier);

// Throws DataError when every pair is pruned.
HdrGraph build_graph(const ActivationTrace& trace, std::span<const std::size_t> candidates,
                     const GraphConfig& cfg);

std::string export_dot(const HdrGraph& graph, const ActivationTrace* trace = nullptr,
                       const Partition* partition = nullptr);

nlohmann::json graph_to_json(const HdrGraph& graph, const GraphConfig& cfg);
HdrGraph graph_from_json(const nlohmann::json& j);

std::string to_string(Orientation o);
Orientation orientation_from_string(const std::string& s);

}  // namespace pathcut
