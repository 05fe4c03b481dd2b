#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <doctest.h>

#include "pathcut/error.hpp"
#include "pathcut/sensitivity.hpp"
#include "support.hpp"

using namespace pathcut;
using Ords = std::vector<std::size_t>;

namespace {

ActivationTrace trace_from_sensitivities(const std::vector<std::vector<float>>& fact_cols,
                                         const std::vector<std::vector<float>>& hall_cols) {
  ActivationTrace t;
  for (std::size_t i = 0; i < fact_cols.size(); ++i) t.neurons.push_back({0, static_cast<std::uint32_t>(i)});
  const auto fact = testing::column_matrix(fact_cols);
  const auto hall = testing::column_matrix(hall_cols);
  t.conditions[kFact] = {Matrix(fact.rows(), fact.cols()), fact};
  t.conditions[kHall] = {Matrix(hall.rows(), hall.cols()), hall};
  return t;
}

std::vector<double> descending(std::size_t n) {
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<double>(n - 1 - i);
  return d;
}

}  // namespace

TEST_CASE("importance is the column mean of absolute sensitivities") {
  const auto t = trace_from_sensitivities({{0.2f, -0.4f, 0.6f}, {0, 0, 0}, {0.3f, 0.3f, 0.3f}},
                                          {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
  const auto imp = importance_scores(t, kFact);
  CHECK(imp[0] == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(imp[1] == 0.0);
  CHECK(imp[2] == doctest::Approx(0.3).epsilon(1e-7));
}

TEST_CASE("delta subtracts fact importance from hall importance") {
  const std::vector<double> hall{0.4, 0.25, 0.0};
  const std::vector<double> fact{0.1, 0.25, 0.2};
  const auto d = sensitivity_delta(hall, fact);
  CHECK(d[0] == doctest::Approx(0.3));
  CHECK(d[1] == 0.0);
  CHECK(d[2] == doctest::Approx(-0.2));
  CHECK_THROWS_AS(sensitivity_delta(hall, std::vector<double>{1.0}), DataError);
}

TEST_CASE("instigators are the top-ranked deltas") {
  SelectionConfig cfg;
  cfg.select_ratio = 0.2;
  cfg.general_filter_quantile = 0.0;
  const auto sel = select_instigators(descending(10), std::nullopt, cfg);
  CHECK(sel.instigators == Ords{0, 1});
  CHECK(sel.filtered_out.empty());
  CHECK(sel.target == 2);
}

TEST_CASE("general filter replaces a high-baseline candidate with the next one") {
  SelectionConfig cfg;
  cfg.select_ratio = 0.2;
  cfg.general_filter_quantile = 0.1;  // ceil(0.1 * 10) = 1 neuron filtered
  std::vector<double> general(10, 0.0);
  general[0] = 5.0;
  const auto sel = select_instigators(descending(10), general, cfg);
  CHECK(sel.instigators == Ords{1, 2});
  CHECK(sel.filtered_out == Ords{0});
  CHECK(sel.shortfall == 0);
}

TEST_CASE("filter replacement agrees with enumeration") {
  // Oracle: walk the delta order by hand, skipping the top-q general ordinals.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20;
    std::vector<double> delta(n), general(n);
    for (auto& x : delta) x = u(rng);
    for (auto& x : general) x = u(rng);
    SelectionConfig cfg;
    cfg.select_ratio = 0.15;
    cfg.general_filter_quantile = 0.2;
    Ords by_general(n);
    std::iota(by_general.begin(), by_general.end(), 0);
    std::sort(by_general.begin(), by_general.end(), [&](auto a, auto b) { return general[a] > general[b]; });
    const std::set<std::size_t> blocked(by_general.begin(), by_general.begin() + 4);
    Ords by_delta(n);
    std::iota(by_delta.begin(), by_delta.end(), 0);
    std::sort(by_delta.begin(), by_delta.end(), [&](auto a, auto b) { return delta[a] > delta[b]; });
    Ords expect, expect_filtered;
    for (auto o : by_delta) {
      if (expect.size() == 3) break;
      (blocked.count(o) ? expect_filtered : expect).push_back(o);
    }
    std::sort(expect.begin(), expect.end());
    std::sort(expect_filtered.begin(), expect_filtered.end());
    const auto sel = select_instigators(delta, general, cfg);
    CHECK(sel.instigators == expect);
    CHECK(sel.filtered_out == expect_filtered);
  }
}

TEST_CASE("equal deltas break ties by ordinal") {
  SelectionConfig cfg;
  cfg.select_ratio = 0.2;
  cfg.general_filter_quantile = 0.0;
  const auto sel = select_instigators(std::vector<double>(10, 1.0), std::nullopt, cfg);
  CHECK(sel.instigators == Ords{0, 1});
}

TEST_CASE("per-layer scope gives each layer its own quota") {
  SelectionConfig cfg;
  cfg.select_ratio = 0.5;
  cfg.general_filter_quantile = 0.0;
  cfg.rank_scope = RankScope::per_layer;
  const std::vector<double> delta{1, 2, 3, 4, 10, 20};
  const std::vector<std::uint32_t> layers{0, 0, 0, 0, 1, 1};
  const auto sel = select_instigators(delta, std::nullopt, cfg, layers);
  CHECK(sel.instigators == Ords{2, 3, 5});
}

TEST_CASE("selection rejects bad ratios") {
  SelectionConfig cfg;
  cfg.general_filter_quantile = 0.0;
  cfg.select_ratio = 0.0;
  CHECK_THROWS_AS(select_instigators(descending(10), std::nullopt, cfg), ConfigError);
  cfg.select_ratio = 0.01;  // rounds to zero of 10
  CHECK_THROWS_AS(select_instigators(descending(10), std::nullopt, cfg), ConfigError);
}

TEST_CASE("critical set takes top fact importance and backfills around instigators") {
  const std::vector<double> fact{5, 4, 3, 2};
  CHECK(select_critical(fact, 2, Ords{}) == Ords{0, 1});
  CHECK(select_critical(fact, 2, Ords{0}) == Ords{1, 2});
  CHECK(select_critical(std::vector<double>{1, 3, 3, 3}, 2, Ords{}) == Ords{1, 2});
  CHECK_THROWS_AS(select_critical(fact, 4, Ords{}), ConfigError);
}

TEST_CASE("default critical count is five percent of N") {
  CHECK(default_critical_count(400) == 20);
  CHECK(default_critical_count(10) == 1);
  CHECK(default_critical_count(30) == 2);
}

TEST_CASE("gradient overlap signs") {
  auto t = testing::random_trace(4, 6, 9);
  t.conditions[kHall].sensitivities = t.conditions[kFact].sensitivities;
  const double self = gradient_overlap(t);
  CHECK(self > 0.0);
  for (auto& v : t.conditions[kHall].sensitivities.data()) v = -v;
  CHECK(gradient_overlap(t) == doctest::Approx(-self));

  // Rows orthogonal by construction: fact on the even columns, hall on the odd ones.
  auto o = testing::random_trace(4, 6, 10);
  for (std::size_t r = 0; r < 6; ++r) {
    o.conditions[kFact].sensitivities(r, 1) = o.conditions[kFact].sensitivities(r, 3) = 0.0f;
    o.conditions[kHall].sensitivities(r, 0) = o.conditions[kHall].sensitivities(r, 2) = 0.0f;
  }
  CHECK(std::abs(gradient_overlap(o)) < 1e-6);
}

TEST_CASE("profile is scale covariant and keeps its sets") {
  auto t = testing::random_trace(40, 8, 21);
  t.conditions[kGeneral] = t.conditions[kFact];
  SelectionConfig cfg;
  cfg.select_ratio = 0.1;
  const auto base = build_profile(t, cfg);
  for (auto& [name, cond] : t.conditions) {
    for (auto& v : cond.sensitivities.data()) v *= 4.0f;  // exact in binary32
  }
  const auto scaled = build_profile(t, cfg);
  CHECK(scaled.instigators == base.instigators);
  CHECK(scaled.critical == base.critical);
  for (std::size_t u = 0; u < base.delta.size(); ++u) CHECK(scaled.delta[u] == doctest::Approx(4.0 * base.delta[u]));
}

TEST_CASE("profile sets are disjoint and sized") {
  auto t = testing::random_trace(100, 8, 22);
  t.conditions[kGeneral] = t.conditions[kHall];
  SelectionConfig cfg;
  cfg.select_ratio = 0.05;
  const auto p = build_profile(t, cfg);
  CHECK(p.instigators.size() == 5);
  CHECK(p.critical.size() == 5);
  for (auto u : p.instigators) {
    CHECK(std::find(p.critical.begin(), p.critical.end(), u) == p.critical.end());
    CHECK(std::find(p.filtered_out.begin(), p.filtered_out.end(), u) == p.filtered_out.end());
  }
  CHECK(profile_from_json(profile_to_json(p)) == p);
}

TEST_CASE("permuting neurons permutes the selection") {
  auto t = testing::random_trace(30, 6, 23);
  SelectionConfig cfg;
  cfg.select_ratio = 0.1;
  cfg.general_filter_quantile = 0.0;
  const auto p = build_profile(t, cfg);
  // Reverse the column order.
  auto r = t;
  for (auto& [name, cond] : r.conditions) {
    for (Matrix* m : {&cond.activations, &cond.sensitivities}) {
      Matrix out(m->rows(), m->cols());
      for (std::size_t i = 0; i < m->rows(); ++i) {
        for (std::size_t c = 0; c < m->cols(); ++c) out(i, c) = (*m)(i, m->cols() - 1 - c);
      }
      *m = out;
    }
  }
  const auto q = build_profile(r, cfg);
  Ords mapped;
  for (auto u : p.instigators) mapped.push_back(29 - u);
  std::sort(mapped.begin(), mapped.end());
  CHECK(q.instigators == mapped);
}

TEST_CASE("filter without a general condition is a config error") {
  const auto t = testing::random_trace(20, 4, 2);
  SelectionConfig cfg;
  cfg.select_ratio = 0.1;
  CHECK_THROWS_AS(build_profile(t, cfg), ConfigError);
}
