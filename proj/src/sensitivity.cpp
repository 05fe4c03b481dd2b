#include "pathcut/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pathcut/error.hpp"

using nlohmann::json;

namespace pathcut {

namespace {

// Ordinals sorted by score descending, ties by ascending ordinal.
std::vector<std::size_t> rank_descending(std::span<const double> scores,
                                         std::span<const std::size_t> pool) {
  std::vector<std::size_t> order(pool.begin(), pool.end());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

std::vector<std::size_t> iota_vector(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace

std::vector<double> importance_scores(const ActivationTrace& trace, const std::string& condition) {
  const Matrix& s = trace.condition(condition).sensitivities;
  std::vector<double> out(s.cols(), 0.0);
  if (s.rows() == 0) return out;
  for (std::size_t c = 0; c < s.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < s.rows(); ++r) sum += std::fabs(static_cast<double>(s(r, c)));
    out[c] = sum / static_cast<double>(s.rows());
  }
  return out;
}

std::vector<double> sensitivity_delta(std::span<const double> hall_importance,
                                      std::span<const double> fact_importance) {
  if (hall_importance.size() != fact_importance.size()) {
    throw DataError("importance vectors differ in length");
  }
  std::vector<double> delta(hall_importance.size());
  for (std::size_t u = 0; u < delta.size(); ++u) delta[u] = hall_importance[u] - fact_importance[u];
  return delta;
}

InstigatorSelection select_instigators(std::span<const double> delta,
                                       std::optional<std::span<const double>> general_importance,
                                       const SelectionConfig& cfg,
                                       std::span<const std::uint32_t> layers) {
  const std::size_t n = delta.size();
  if (!(cfg.select_ratio > 0.0 && cfg.select_ratio <= 1.0)) {
    throw ConfigError("select_ratio must lie in (0, 1]");
  }
  if (!(cfg.general_filter_quantile >= 0.0 && cfg.general_filter_quantile < 1.0)) {
    throw ConfigError("general_filter_quantile must lie in [0, 1)");
  }
  if (cfg.general_filter_quantile > 0.0 && !general_importance) {
    throw ConfigError("general_filter_quantile > 0 requires a general condition");
  }
  if (general_importance && general_importance->size() != n) {
    throw DataError("general importance length differs from delta length");
  }

  std::set<std::size_t> high_baseline;
  if (cfg.general_filter_quantile > 0.0) {
    const auto count = static_cast<std::size_t>(
        std::ceil(cfg.general_filter_quantile * static_cast<double>(n) - 1e-9));
    const auto all = iota_vector(n);
    const auto by_general = rank_descending(*general_importance, all);
    high_baseline.insert(by_general.begin(), by_general.begin() + std::min(count, n));
  }

  // Each scope is a pool of ordinals with its own instigator quota.
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> scopes;
  if (cfg.rank_scope == RankScope::global) {
    scopes.emplace_back(iota_vector(n), round_count(cfg.select_ratio * static_cast<double>(n)));
  } else {
    if (layers.size() != n) throw DataError("per-layer ranking needs a layer for every neuron");
    std::map<std::uint32_t, std::vector<std::size_t>> by_layer;
    for (std::size_t u = 0; u < n; ++u) by_layer[layers[u]].push_back(u);
    for (auto& [layer, pool] : by_layer) {
      const std::size_t quota = round_count(cfg.select_ratio * static_cast<double>(pool.size()));
      scopes.emplace_back(std::move(pool), quota);
    }
  }

  InstigatorSelection sel;
  for (const auto& [pool, quota] : scopes) sel.target += quota;
  if (sel.target == 0) throw ConfigError("select_ratio * N rounds to zero instigators");

  for (const auto& [pool, quota] : scopes) {
    std::size_t taken = 0;
    for (std::size_t u : rank_descending(delta, pool)) {
      if (taken == quota) break;
      if (high_baseline.count(u)) {
        sel.filtered_out.push_back(u);
        continue;
      }
      sel.instigators.push_back(u);
      ++taken;
    }
    sel.shortfall += quota - taken;
  }
  std::sort(sel.instigators.begin(), sel.instigators.end());
  std::sort(sel.filtered_out.begin(), sel.filtered_out.end());
  return sel;
}

std::vector<std::size_t> select_critical(std::span<const double> fact_importance, std::size_t k,
                                         std::span<const std::size_t> instigators) {
  if (k == 0) throw ConfigError("critical_count must be positive");
  if (k >= fact_importance.size()) throw ConfigError("critical_count must be below the neuron count");
  const std::set<std::size_t> excluded(instigators.begin(), instigators.end());
  std::vector<std::size_t> critical;
  for (std::size_t u : rank_descending(fact_importance, iota_vector(fact_importance.size()))) {
    if (critical.size() == k) break;
    if (!excluded.count(u)) critical.push_back(u);
  }
  std::sort(critical.begin(), critical.end());
  return critical;
}

double gradient_overlap(const ActivationTrace& trace) {
  const Matrix& fact = trace.condition(kFact).sensitivities;
  const Matrix& hall = trace.condition(kHall).sensitivities;
  if (fact.cols() != hall.cols()) throw DataError("fact and hall neuron counts differ");
  const std::size_t rows = std::min(fact.rows(), hall.rows());
  if (rows < 1) throw DataError("gradient overlap needs at least one comparable row");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < fact.cols(); ++c) {
      dot += static_cast<double>(fact(r, c)) * static_cast<double>(hall(r, c));
    }
    total += dot;
  }
  return total / static_cast<double>(rows);
}

std::size_t default_critical_count(std::size_t neuron_count) {
  return std::max<std::size_t>(1, round_count(0.05 * static_cast<double>(neuron_count)));
}

SensitivityProfile build_profile(const ActivationTrace& trace, const SelectionConfig& cfg) {
  SensitivityProfile p;
  p.config = cfg;
  for (const auto& [name, cond] : trace.conditions) {
    p.importance[name] = importance_scores(trace, name);
  }
  if (!p.importance.count(kFact) || !p.importance.count(kHall)) {
    throw DataError("trace needs both fact and hall conditions");
  }
  p.delta = sensitivity_delta(p.importance.at(kHall), p.importance.at(kFact));

  std::optional<std::span<const double>> general;
  if (auto it = p.importance.find(kGeneral); it != p.importance.end()) general = it->second;
  if (cfg.general_filter_quantile > 0.0 && !general) {
    throw ConfigError("general_filter_quantile > 0 requires a general condition in the trace");
  }

  std::vector<std::uint32_t> layers;
  layers.reserve(trace.neurons.size());
  for (const auto& id : trace.neurons) layers.push_back(id.layer);

  auto sel = select_instigators(p.delta, general, cfg, layers);
  p.instigators = std::move(sel.instigators);
  p.filtered_out = std::move(sel.filtered_out);
  p.shortfall = sel.shortfall;

  const std::size_t k = cfg.critical_count.value_or(default_critical_count(trace.neuron_count()));
  p.critical = select_critical(p.importance.at(kFact), k, p.instigators);
  return p;
}

std::string to_string(RankScope scope) {
  return scope == RankScope::global ? "global" : "per_layer";
}

RankScope rank_scope_from_string(const std::string& s) {
  if (s == "global") return RankScope::global;
  if (s == "per_layer") return RankScope::per_layer;
  throw ConfigError("unknown rank_scope: " + s);
}

json profile_to_json(const SensitivityProfile& p) {
  json j;
  j["importance"] = p.importance;
  j["delta"] = p.delta;
  j["instigators"] = p.instigators;
  j["critical"] = p.critical;
  j["filtered_out"] = p.filtered_out;
  j["shortfall"] = p.shortfall;
  json cfg;
  cfg["select_ratio"] = p.config.select_ratio;
  cfg["general_filter_quantile"] = p.config.general_filter_quantile;
  cfg["critical_count"] = p.config.critical_count ? json(*p.config.critical_count) : json(nullptr);
  cfg["rank_scope"] = to_string(p.config.rank_scope);
  j["config"] = std::move(cfg);
  return j;
}

SensitivityProfile profile_from_json(const json& j) {
  try {
    SensitivityProfile p;
    p.importance = j.at("importance").get<std::map<std::string, std::vector<double>>>();
    p.delta = j.at("delta").get<std::vector<double>>();
    p.instigators = j.at("instigators").get<std::vector<std::size_t>>();
    p.critical = j.at("critical").get<std::vector<std::size_t>>();
    p.filtered_out = j.at("filtered_out").get<std::vector<std::size_t>>();
    p.shortfall = j.at("shortfall").get<std::size_t>();
    const json& cfg = j.at("config");
    p.config.select_ratio = cfg.at("select_ratio").get<double>();
    p.config.general_filter_quantile = cfg.at("general_filter_quantile").get<double>();
    if (!cfg.at("critical_count").is_null()) {
      p.config.critical_count = cfg.at("critical_count").get<std::size_t>();
    }
    p.config.rank_scope = rank_scope_from_string(cfg.at("rank_scope").get<std::string>());
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed sensitivity profile: ") + e.what());
  }
}

}  // namespace pathcut
