#pragma once

// Shared fixtures and independent oracles for the test binaries. The oracles
// recompute quantities from first principles instead of calling library code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "pathcut/hdr_graph.hpp"
#include "pathcut/trace_store.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pathcut_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline pathcut::Matrix column_matrix(const std::vector<std::vector<float>>& columns) {
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  pathcut::Matrix m(rows, columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = columns[c][r];
  }
  return m;
}

// Trace with `n` neurons in layer 0 and random fact/hall data.
inline pathcut::ActivationTrace random_trace(std::size_t n, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> unit(0.0f, 1.0f);
  pathcut::ActivationTrace t;
  for (std::size_t i = 0; i < n; ++i) t.neurons.push_back({0, static_cast<std::uint32_t>(i)});
  for (const char* cond : {pathcut::kFact, pathcut::kHall}) {
    pathcut::ConditionData d{pathcut::Matrix(samples, n), pathcut::Matrix(samples, n)};
    for (auto& v : d.activations.data()) v = unit(rng);
    for (auto& v : d.sensitivities.data()) v = unit(rng);
    t.conditions[cond] = std::move(d);
  }
  return t;
}

struct WeightedEdge {
  std::size_t a, b;
  double w;
};

// Graph over local ordinals 0..n-1 with the given undirected edges.
inline pathcut::HdrGraph make_graph(std::size_t n, const std::vector<WeightedEdge>& edges) {
  pathcut::HdrGraph g;
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(i);
  for (const auto& e : edges) g.edges.push_back({std::min(e.a, e.b), std::max(e.a, e.b), e.w});
  std::sort(g.edges.begin(), g.edges.end(), [](const auto& x, const auto& y) {
    return std::pair(x.from, x.to) < std::pair(y.from, y.to);
  });
  return g;
}

inline pathcut::HdrGraph triangle() { return make_graph(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}}); }

inline pathcut::HdrGraph two_triangles_bridge() {
  return make_graph(6, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}, {2, 3, 1}});
}

// Two-level structural entropy written node by node:
//   sum over modules X of [ -sum_{i in X} d_i/V log2(d_i/vol X) - g_X/V log2(vol X / V) ].
inline double oracle_entropy(std::size_t n, const std::vector<WeightedEdge>& edges,
                             const std::vector<std::size_t>& module_of) {
  std::vector<double> d(n, 0.0);
  for (const auto& e : edges) {
    d[e.a] += e.w;
    d[e.b] += e.w;
  }
  double V = 0.0;
  for (double x : d) V += x;
  if (V <= 0.0) return 0.0;
  std::map<std::size_t, double> vol, cut;
  for (std::size_t i = 0; i < n; ++i) vol[module_of[i]] += d[i];
  for (const auto& e : edges) {
    if (module_of[e.a] != module_of[e.b]) {
      cut[module_of[e.a]] += e.w;
      cut[module_of[e.b]] += e.w;
    }
  }
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0.0) h -= d[i] / V * std::log2(d[i] / vol[module_of[i]]);
  }
  for (const auto& [m, v] : vol) {
    if (v > 0.0 && cut[m] > 0.0) h -= cut[m] / V * std::log2(v / V);
  }
  return h;
}

// Minimum oracle entropy over every set partition (restricted growth strings).
inline double oracle_min_entropy(std::size_t n, const std::vector<WeightedEdge>& edges) {
  std::vector<std::size_t> rgs(n, 0);
  double best = oracle_entropy(n, edges, rgs);
  while (true) {
    // Rightmost position that may grow: rgs[i] <= max(rgs[0..i-1]).
    std::size_t i = n;
    for (std::size_t j = n; j-- > 1;) {
      const std::size_t mx = *std::max_element(rgs.begin(), rgs.begin() + static_cast<std::ptrdiff_t>(j));
      if (rgs[j] <= mx) {
        i = j;
        break;
      }
    }
    if (i == n) break;
    ++rgs[i];
    std::fill(rgs.begin() + static_cast<std::ptrdiff_t>(i) + 1, rgs.end(), 0);
    best = std::min(best, oracle_entropy(n, edges, rgs));
  }
  return best;
}

// Adjusted Rand index by explicit pair counting.
inline double oracle_ari(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const std::size_t n = a.size();
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  }
  const double expected = in_a * in_b / pairs;
  const double maximum = 0.5 * (in_a + in_b);
  if (maximum == expected) return 1.0;
  return (both - expected) / (maximum - expected);
}

// Pearson correlation in long double, two-pass.
inline double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

}  // namespace testing
