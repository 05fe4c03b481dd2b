#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "pathcut/error.hpp"
#include "pathcut/synth.hpp"

using namespace pathcut;
using namespace pathcut::synth;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.hidden_sizes = {60, 60, 40};
  c.samples_per_condition = 256;
  c.eval_samples = 256;
  return c;
}

const World& small_world() {
  static const World w = generate_world(3, small_config());
  return w;
}

InterventionPlan plan_zeroing(const World& w, const std::vector<NeuronId>& targets, Role role) {
  InterventionPlan plan;
  for (const auto& id : w.network.neuron_ids()) {
    PlanEntry e;
    e.neuron = id;
    if (std::find(targets.begin(), targets.end(), id) != targets.end()) {
      e.alpha = 1.0;
      e.role = role;
    }
    plan.entries.push_back(e);
  }
  return plan;
}

}  // namespace

TEST_CASE("single hidden neuron matches the hand chain rule") {
  ToyNetwork net;
  net.layer_sizes = {1, 1};
  net.weights = {{0.7}};
  net.biases = {{-0.2}};
  net.head_fact = {1.3};
  net.head_hall = {-0.4};
  const std::vector<double> x{0.9};
  const double z = 0.7 * 0.9 - 0.2;
  const double h = std::tanh(z);
  for (auto [head, a] : {std::pair{Head::fact, 1.3}, std::pair{Head::hall, -0.4}}) {
    const double y = a * h;
    // d(0.5 y^2)/dz = y * a * (1 - h^2); theta . grad = delta * (w x + b) = delta * z.
    const double expect = y * a * (1 - h * h) * z;
    const auto s = neuron_sensitivities(net, x, head);
    REQUIRE(s.size() == 1);
    CHECK(std::abs(s[0] - expect) < 1e-6);
    CHECK(head_loss(net, x, head) == doctest::Approx(0.5 * y * y));
  }
}

TEST_CASE("1-1-1 chain matches the hand chain rule") {
  ToyNetwork net;
  net.layer_sizes = {1, 1, 1};
  net.weights = {{1.1}, {-0.8}};
  net.biases = {{0.1}, {0.3}};
  net.head_fact = {0.9};
  net.head_hall = {0.5};
  const std::vector<double> x{-0.6};
  const double z1 = 1.1 * -0.6 + 0.1;
  const double h1 = std::tanh(z1);
  const double z2 = -0.8 * h1 + 0.3;
  const double h2 = std::tanh(z2);
  const double y = 0.9 * h2;
  const double d2 = y * 0.9 * (1 - h2 * h2);
  const double d1 = d2 * -0.8 * (1 - h1 * h1);
  const auto s = neuron_sensitivities(net, x, Head::fact);
  REQUIRE(s.size() == 2);
  CHECK(std::abs(s[0] - d1 * z1) < 1e-6);
  CHECK(std::abs(s[1] - d2 * z2) < 1e-6);
}

TEST_CASE("zero-weight network has zero sensitivities") {
  ToyNetwork net;
  net.layer_sizes = {3, 4, 2};
  net.weights = {std::vector<double>(12, 0.0), std::vector<double>(8, 0.0)};
  net.biases = {std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)};
  net.head_fact = {0.0, 0.0};
  net.head_hall = {0.0, 0.0};
  const std::vector<double> x{1.0, -2.0, 0.5};
  for (double s : neuron_sensitivities(net, x, Head::hall)) CHECK(s == 0.0);
}

TEST_CASE("forward pass shapes and finiteness") {
  const auto& w = small_world();
  const auto inputs = sample_inputs(w, kHall, 4, 9);
  for (const auto& x : inputs) {
    const auto fp = forward(w.network, x);
    REQUIRE(fp.post.size() == 3);
    CHECK(fp.post[0].size() == 60);
    CHECK(fp.post[2].size() == 40);
    CHECK(std::isfinite(fp.y_fact));
    CHECK(std::isfinite(fp.y_hall));
  }
}

TEST_CASE("backprop agrees with finite differences") {
  CHECK(max_gradient_error(small_world(), 4) <= 1e-4);
}

TEST_CASE("same seed gives the same world and trace") {
  const auto a = generate_world(3, small_config());
  CHECK(a.network == small_world().network);
  CHECK(a.truth.infected == small_world().truth.infected);
  CHECK(trace_world(a) == trace_world(small_world()));
  const auto b = generate_world(4, small_config());
  CHECK(!(b.network == a.network));
}

TEST_CASE("planted sets are consistent") {
  const auto& w = small_world();
  const std::set<NeuronId> infected(w.truth.infected.begin(), w.truth.infected.end());
  for (const auto& id : w.truth.instigators) CHECK(infected.count(id) == 1);
  for (const auto& id : w.truth.clean_critical) CHECK(infected.count(id) == 0);
  std::set<std::uint32_t> layers;
  for (const auto& id : w.truth.infected) layers.insert(id.layer);
  CHECK(layers.size() == 3);
  CHECK(w.truth.instigators.size() == 2);  // round(0.01 * 160)
}

TEST_CASE("large infected fraction still spans every layer") {
  auto c = small_config();
  c.infected_fraction = 0.4;
  c.margin = 1e-9;
  const auto w = generate_world(5, c);
  std::set<std::uint32_t> layers;
  for (const auto& id : w.truth.infected) layers.insert(id.layer);
  CHECK(layers.size() == 3);
}

TEST_CASE("accepted worlds meet the margin on their own trace") {
  const auto& w = small_world();
  const auto t = trace_world(w);
  CHECK(validate_trace(t).empty());
  const double m = measured_margin(w, t);
  CHECK(m >= w.config.margin);
  CHECK(m == doctest::Approx(w.truth.margin));
}

TEST_CASE("unreachable margin is a data error") {
  auto c = small_config();
  c.margin = 1e6;
  CHECK_THROWS_AS(generate_world(1, c), DataError);
}

TEST_CASE("infeasible layouts are config errors") {
  auto c = small_config();
  c.infected_fraction = 0.001;
  CHECK_THROWS_AS(generate_world(1, c), ConfigError);
  c = small_config();
  c.infected_fraction = 0.6;
  CHECK_THROWS_AS(generate_world(1, c), ConfigError);
  c = small_config();
  c.samples_per_condition = 4;
  CHECK_THROWS_AS(generate_world(1, c), ConfigError);
}

TEST_CASE("identity plan leaves both heads unchanged") {
  const auto& w = small_world();
  const auto ev = evaluate_intervention(w, plan_zeroing(w, {}, Role::untouched));
  CHECK(ev.hall_drop == 0.0);
  CHECK(ev.fact_drop == 0.0);
}

TEST_CASE("silencing the planted instigators cuts hallucination only") {
  const auto& w = small_world();
  const auto ev = evaluate_intervention(w, plan_zeroing(w, w.truth.instigators, Role::instigator));
  CHECK(ev.hall_drop > 0.5);
  CHECK(std::abs(ev.fact_drop) < 0.05);
  CHECK(ev.instigator_precision == 1.0);
  CHECK(ev.instigator_recall == 1.0);
}

TEST_CASE("silencing clean critical neurons hurts the fact head") {
  const auto& w = small_world();
  const auto ev = evaluate_intervention(w, plan_zeroing(w, w.truth.clean_critical, Role::downstream));
  CHECK(ev.fact_drop > 0.3);
}

TEST_CASE("apply_plan scales incoming rows and biases") {
  const auto& w = small_world();
  auto plan = plan_zeroing(w, {}, Role::untouched);
  plan.entries[5].alpha = 0.25;  // layer 0, index 5
  const auto net = apply_plan(w.network, plan);
  const std::size_t in = w.network.layer_sizes[0];
  for (std::size_t j = 0; j < in; ++j) {
    CHECK(net.weights[0][5 * in + j] == doctest::Approx(0.75 * w.network.weights[0][5 * in + j]));
  }
  CHECK(net.biases[0][5] == doctest::Approx(0.75 * w.network.biases[0][5]));
  CHECK(net.weights[0][6 * in] == w.network.weights[0][6 * in]);
}

TEST_CASE("sidecar regenerates the world") {
  const auto& w = small_world();
  const auto back = world_from_sidecar(truth_to_json(w));
  CHECK(back.network == w.network);
  CHECK(back.truth.instigators == w.truth.instigators);
}

TEST_CASE("synthetic config json") {
  const auto c = small_config();
  CHECK(config_from_json(config_to_json(c)) == c);
  auto j = config_to_json(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(c);
  j["gains"]["bogus"] = 1.0;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}
