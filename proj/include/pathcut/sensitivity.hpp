#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathcut/trace_store.hpp"

namespace pathcut {

enum class RankScope { global, per_layer };

struct SelectionConfig {
  double select_ratio = 0.01;
  double general_filter_quantile = 0.05;
  // Defaults to round(0.05 * N) when unset.
  std::optional<std::size_t> critical_count;
  RankScope rank_scope = RankScope::global;

  bool operator==(const SelectionConfig&) const = default;
};

struct InstigatorSelection {
  std::vector<std::size_t> instigators;
  std::vector<std::size_t> filtered_out;
  std::size_t target = 0;
  // Number of instigator slots left empty because too few candidates survived
  // the general-task filter.
  std::size_t shortfall = 0;
};

struct SensitivityProfile {
  std::map<std::string, std::vector<double>> importance;
  std::vector<double> delta;
  std::vector<std::size_t> instigators;
  std::vector<std::size_t> critical;
  std::vector<std::size_t> filtered_out;
  std::size_t shortfall = 0;
  SelectionConfig config;

  bool operator==(const SensitivityProfile&) const = default;
};

// Column mean of |sensitivity| for one condition, summed left to right.
std::vector<double> importance_scores(const ActivationTrace& trace, const std::string& condition);

std::vector<double> sensitivity_delta(std::span<const double> hall_importance,
                                      std::span<const double> fact_importance);

// Ranks by delta descending (ties: ascending ordinal). Candidates whose
// general importance is in the top quantile are skipped into filtered_out and
// replaced by the next-ranked candidate. `layers` gives each ordinal's layer
// and is only consulted for per-layer scope.
InstigatorSelection select_instigators(std::span<const double> delta,
                                       std::optional<std::span<const double>> general_importance,
                                       const SelectionConfig& cfg,
                                       std::span<const std::uint32_t> layers = {});

// The k highest fact-importance ordinals that are not instigators.
std::vector<std::size_t> select_critical(std::span<const double> fact_importance, std::size_t k,
                                         std::span<const std::size_t> instigators);

// Mean inner product of paired fact/hall sensitivity rows.
double gradient_overlap(const ActivationTrace& trace);

std::size_t default_critical_count(std::size_t neuron_count);

SensitivityProfile build_profile(const ActivationTrace& trace, const SelectionConfig& cfg);

nlohmann::json profile_to_json(const SensitivityProfile& profile);
SensitivityProfile profile_from_json(const nlohmann::json& j);

std::string to_string(RankScope scope);
RankScope rank_scope_from_string(const std::string& s);

}  // namespace pathcut
