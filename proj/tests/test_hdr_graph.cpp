#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <doctest.h>

#include "pathcut/error.hpp"
#include "pathcut/hdr_graph.hpp"
#include "pathcut/se_partition.hpp"
#include "pathcut/sensitivity.hpp"
#include "support.hpp"

using namespace pathcut;

namespace {

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

// Pairwise HDR weights recomputed with the oracle Pearson.
std::map<std::pair<std::size_t, std::size_t>, double> oracle_weights(const ActivationTrace& t,
                                                                     const std::vector<std::size_t>& nodes,
                                                                     double eps, double cap) {
  std::map<std::pair<std::size_t, std::size_t>, double> w;
  const auto& f = t.conditions.at(kFact).activations;
  const auto& h = t.conditions.at(kHall).activations;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const double rh = testing::oracle_pearson(column(h, nodes[i]), column(h, nodes[j]));
      const double rf = testing::oracle_pearson(column(f, nodes[i]), column(f, nodes[j]));
      w[{nodes[i], nodes[j]}] = std::min(cap, std::fabs(rh - rf) / std::max(std::fabs(rf), eps));
    }
  }
  return w;
}

std::set<std::pair<std::size_t, std::size_t>> edge_set(const HdrGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> s;
  for (const auto& e : g.edges) s.insert({e.from, e.to});
  return s;
}

}  // namespace

TEST_CASE("pearson on affine, negated and hand-computed columns") {
  const auto m = testing::column_matrix({{1, 2, 3, 4}, {5, 7, 9, 11}, {-1, -2, -3, -4}, {1, 2, 4, 3}});
  CHECK(pearson(m, 0, 1) == doctest::Approx(1.0));
  CHECK(pearson(m, 0, 2) == doctest::Approx(-1.0));
  CHECK(pearson(m, 0, 3) == doctest::Approx(0.8));
  CHECK(pearson(m, 0, 3) == doctest::Approx(testing::oracle_pearson({1, 2, 3, 4}, {1, 2, 4, 3})));
}

TEST_CASE("pearson of a constant column is exactly zero") {
  const auto m = testing::column_matrix({{1, 2, 3, 4}, {2, 2, 2, 2}});
  CHECK(pearson(m, 0, 1) == 0.0);
}

TEST_CASE("hdr examples") {
  CHECK(hdr(0.9, 0.3, 1e-6, 100) == doctest::Approx(2.0));
  CHECK(hdr(0.4, 0.4, 1e-6, 100) == 0.0);
  CHECK(hdr(0.5, 0.0, 1e-6, 100) == 100.0);
  CHECK(hdr(-0.6, 0.2, 1e-6, 100) == doctest::Approx(4.0));
}

TEST_CASE("candidate set is the instigators plus the top |delta| ordinals") {
  SensitivityProfile p;
  p.delta = {0.1, -0.9, 0.5, 0.05, 0.3, 0.0};
  p.instigators = {3};
  // Top 2 by |delta|: 1, 2. The instigator is added separately.
  CHECK(candidate_nodes(p, 2.0) == std::vector<std::size_t>{1, 2, 3});
  // An instigator already in the top list adds nothing.
  p.instigators = {1};
  CHECK(candidate_nodes(p, 2.0) == std::vector<std::size_t>{1, 2});
  CHECK(candidate_nodes(p, 0.0) == std::vector<std::size_t>{1});
}

TEST_CASE("threshold sparsification keeps exactly the pairs at or above tau") {
  const auto t = testing::random_trace(7, 12, 31);
  const std::vector<std::size_t> nodes{0, 1, 2, 3, 4, 5, 6};
  GraphConfig cfg;
  cfg.sparsify.mode = Sparsify::Mode::threshold;
  cfg.sparsify.threshold = 1.0;
  const auto g = build_graph(t, nodes, cfg);
  const auto w = oracle_weights(t, nodes, cfg.epsilon, cfg.hdr_cap);
  std::set<std::pair<std::size_t, std::size_t>> expect;
  for (const auto& [pair, weight] : w) {
    if (weight >= 1.0) expect.insert(pair);
  }
  CHECK(edge_set(g) == expect);
  for (const auto& e : g.edges) {
    CHECK(e.weight == doctest::Approx(w.at({e.from, e.to})).epsilon(1e-6));
    CHECK(e.weight > 0.0);
    CHECK(e.weight <= cfg.hdr_cap);
  }
}

TEST_CASE("top-k keeps the union of per-node maxima") {
  const auto t = testing::random_trace(8, 16, 32);
  const std::vector<std::size_t> nodes{0, 1, 2, 3, 4, 5, 6, 7};
  const auto w = oracle_weights(t, nodes, 1e-6, 100.0);
  for (std::size_t k : {1u, 2u, 3u}) {
    GraphConfig cfg;
    cfg.sparsify.top_k = k;
    const auto g = build_graph(t, nodes, cfg);
    std::set<std::pair<std::size_t, std::size_t>> expect;
    for (std::size_t u : nodes) {
      std::vector<std::pair<double, std::size_t>> nb;
      for (std::size_t v : nodes) {
        if (v == u) continue;
        nb.push_back({w.at({std::min(u, v), std::max(u, v)}), v});
      }
      std::sort(nb.begin(), nb.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      for (std::size_t r = 0; r < k; ++r) expect.insert({std::min(u, nb[r].second), std::max(u, nb[r].second)});
    }
    CHECK(edge_set(g) == expect);
  }
}

TEST_CASE("raising the threshold never adds edges") {
  const auto t = testing::random_trace(9, 10, 33);
  const std::vector<std::size_t> nodes{0, 1, 2, 3, 4, 5, 6, 7, 8};
  std::set<std::pair<std::size_t, std::size_t>> previous;
  bool first = true;
  for (double tau : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    GraphConfig cfg;
    cfg.sparsify.mode = Sparsify::Mode::threshold;
    cfg.sparsify.threshold = tau;
    std::set<std::pair<std::size_t, std::size_t>> now;
    try {
      now = edge_set(build_graph(t, nodes, cfg));
    } catch (const DataError&) {
    }
    if (!first) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
    previous = now;
    first = false;
  }
}

TEST_CASE("identical fact and hall activations give an empty-graph error") {
  auto t = testing::random_trace(4, 8, 34);
  t.conditions[kHall].activations = t.conditions[kFact].activations;
  CHECK_THROWS_WITH_AS(build_graph(t, std::vector<std::size_t>{0, 1, 2, 3}, GraphConfig{}),
                       doctest::Contains("empty graph"), DataError);
}

TEST_CASE("constant columns never produce NaN weights") {
  auto t = testing::random_trace(4, 8, 35);
  for (std::size_t r = 0; r < 8; ++r) t.conditions[kFact].activations(r, 2) = 1.5f;
  GraphConfig cfg;
  cfg.sparsify.mode = Sparsify::Mode::threshold;
  const auto g = build_graph(t, std::vector<std::size_t>{0, 1, 2, 3}, cfg);
  for (const auto& e : g.edges) {
    CHECK(std::isfinite(e.weight));
    CHECK(e.weight <= cfg.hdr_cap);
  }
}

TEST_CASE("layer_forward orients edges from the lower layer") {
  auto t = testing::random_trace(4, 10, 36);
  t.neurons = {{2, 0}, {0, 0}, {1, 0}, {1, 1}};
  GraphConfig cfg;
  cfg.orientation = Orientation::layer_forward;
  cfg.sparsify.mode = Sparsify::Mode::threshold;
  const auto g = build_graph(t, std::vector<std::size_t>{0, 1, 2, 3}, cfg);
  for (const auto& e : g.edges) {
    CHECK(std::pair(t.neurons[e.from].layer, e.from) < std::pair(t.neurons[e.to].layer, e.to));
  }
}

TEST_CASE("abs hall correlation weighting ignores the fact condition") {
  auto t = testing::random_trace(5, 10, 37);
  GraphConfig cfg;
  cfg.weighting = EdgeWeighting::abs_hall_correlation;
  cfg.sparsify.mode = Sparsify::Mode::threshold;
  const auto g = build_graph(t, std::vector<std::size_t>{0, 1, 2, 3, 4}, cfg);
  for (const auto& e : g.edges) CHECK(e.weight == doctest::Approx(std::fabs(pearson(t, kHall, e.from, e.to))));
}

TEST_CASE("graph json round trip") {
  const auto t = testing::random_trace(6, 10, 38);
  GraphConfig cfg;
  cfg.sparsify.top_k = 2;
  const auto g = build_graph(t, std::vector<std::size_t>{0, 1, 2, 3, 4, 5}, cfg);
  CHECK(graph_from_json(graph_to_json(g, cfg)) == g);
}

TEST_CASE("dot export") {
  const auto g = testing::make_graph(2, {{0, 1, 1.5}});
  const auto plain = export_dot(g);
  CHECK(std::count(plain.begin(), plain.end(), '-') == 2);  // exactly one "--" statement
  CHECK(plain.find("fillcolor") == std::string::npos);

  const auto g3 = testing::make_graph(3, {{0, 1, 1.0}, {1, 2, 1.0}});
  const auto p = make_partition(g3, std::vector<std::size_t>{0, 0, 1});
  const auto coloured = export_dot(g3, nullptr, &p);
  std::set<std::string> colours;
  for (std::size_t pos = coloured.find("fillcolor=\""); pos != std::string::npos;
       pos = coloured.find("fillcolor=\"", pos + 1)) {
    colours.insert(coloured.substr(pos + 11, 7));
  }
  CHECK(colours.size() == 2);

  Partition empty;
  CHECK(export_dot(g3, nullptr, &empty).find("fillcolor") == std::string::npos);
}
