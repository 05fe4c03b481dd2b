#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathcut/hdr_graph.hpp"
#include "pathcut/se_partition.hpp"
#include "pathcut/sensitivity.hpp"
#include "pathcut/trace_store.hpp"

namespace pathcut {

enum class Role { instigator, downstream, critical, untouched };

// Hop count; nullopt means unreachable.
using Distance = std::optional<std::size_t>;

struct PlanEntry {
  NeuronId neuron;
  double alpha = 0.0;
  Role role = Role::untouched;
  Distance distance;
  double max_in_hdr = 0.0;

  bool operator==(const PlanEntry&) const = default;
};

struct PlanParams {
  double alpha0 = 1.0;
  double lambda = 1.0;
  // Divide the influx term by the graph's HDR cap so it lies in [0, 1].
  bool normalize_hdr = true;
  // Ablation: every non-critical node of an infected module gets alpha0.
  bool uniform = false;

  bool operator==(const PlanParams&) const = default;
};

struct InterventionPlan {
  std::vector<PlanEntry> entries;  // one per trace neuron, in ordinal order
  PlanParams params;
  double hdr_cap = 100.0;
  nlohmann::json provenance = nlohmann::json::object();
  // Neurons that were both instigator and critical; resolved as critical.
  std::vector<NeuronId> conflicts;
};

inline constexpr const char* kPlanFormatVersion = "1";

// Multi-source breadth-first hop counts, aligned with graph.nodes. Undirected
// graphs are walked both ways; layer_forward graphs only along edge direction.
std::vector<Distance> geodesic_distances(const HdrGraph& graph,
                                         std::span<const std::size_t> sources);

// clamp(alpha0 * (max_in_hdr / hdr_cap) * exp(-lambda * d), 0, 1); 0 when
// unreachable.
double suppression_factor(double alpha0, double max_in_hdr, double hdr_cap, double lambda,
                          Distance distance);

// Largest weight over edges entering each node (incident edges when undirected).
std::vector<double> max_incoming_weight(const HdrGraph& graph);

InterventionPlan build_plan(const ActivationTrace& trace, const HdrGraph& graph,
                            const Partition& partition, const SensitivityProfile& profile,
                            const PlanParams& params);

using WeightMap = std::map<NeuronId, std::vector<double>>;

// Multiplies each neuron's parameter vector by (1 - alpha).
WeightMap apply_plan_to_weights(const InterventionPlan& plan, const WeightMap& weights);

std::string to_string(Role role);
Role role_from_string(const std::string& s);

nlohmann::json plan_to_json(const InterventionPlan& plan);
InterventionPlan plan_from_json(const nlohmann::json& j);

}  // namespace pathcut
