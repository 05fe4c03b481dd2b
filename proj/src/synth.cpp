#include "pathcut/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pathcut/error.hpp"
#include "pathcut/sensitivity.hpp"

using nlohmann::json;

namespace pathcut::synth {

std::size_t ToyNetwork::hidden_neurons() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) n += layer_sizes[l];
  return n;
}

std::vector<NeuronId> ToyNetwork::neuron_ids() const {
  std::vector<NeuronId> ids;
  ids.reserve(hidden_neurons());
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
    for (std::size_t i = 0; i < layer_sizes[l]; ++i) {
      ids.push_back({static_cast<std::uint32_t>(l - 1), static_cast<std::uint32_t>(i)});
    }
  }
  return ids;
}

ForwardPass forward(const ToyNetwork& net, std::span<const double> input) {
  if (input.size() != net.layer_sizes.front()) throw DataError("input width mismatch");
  ForwardPass fp;
  std::span<const double> prev = input;
  for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
    const std::size_t in = net.layer_sizes[l];
    const std::size_t out = net.layer_sizes[l + 1];
    std::vector<double> z(out), a(out);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = net.biases[l][i];
      const double* row = &net.weights[l][i * in];
      for (std::size_t j = 0; j < in; ++j) acc += row[j] * prev[j];
      z[i] = acc;
      a[i] = std::tanh(acc);
    }
    fp.pre.push_back(std::move(z));
    fp.post.push_back(std::move(a));
    prev = fp.post.back();
  }
  const auto& last = fp.post.back();
  for (std::size_t i = 0; i < last.size(); ++i) {
    fp.y_fact += net.head_fact[i] * last[i];
    fp.y_hall += net.head_hall[i] * last[i];
  }
  return fp;
}

double head_loss(const ToyNetwork& net, std::span<const double> input, Head head) {
  const ForwardPass fp = forward(net, input);
  const double y = head == Head::fact ? fp.y_fact : fp.y_hall;
  return 0.5 * y * y;
}

std::vector<double> neuron_sensitivities(const ToyNetwork& net, std::span<const double> input,
                                         Head head) {
  const ForwardPass fp = forward(net, input);
  const std::size_t layers = net.hidden_layers();
  const auto& w_out = head == Head::fact ? net.head_fact : net.head_hall;
  const double y = head == Head::fact ? fp.y_fact : fp.y_hall;

  // dL/da for the last layer, then dL/dz walking backwards.
  std::vector<std::vector<double>> dz(layers);
  std::vector<double> da(w_out.size());
  for (std::size_t i = 0; i < da.size(); ++i) da[i] = y * w_out[i];
  for (std::size_t l = layers; l-- > 0;) {
    const auto& a = fp.post[l];
    dz[l].resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) dz[l][i] = da[i] * (1.0 - a[i] * a[i]);
    if (l == 0) break;
    const std::size_t in = net.layer_sizes[l];
    std::vector<double> next(in, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double* row = &net.weights[l][i * in];
      for (std::size_t j = 0; j < in; ++j) next[j] += row[j] * dz[l][i];
    }
    da = std::move(next);
  }

  // theta_u . dL/dtheta_u = dL/dz_u * (w_u . a_prev + b_u) = dL/dz_u * z_u
  std::vector<double> out;
  out.reserve(net.hidden_neurons());
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t i = 0; i < dz[l].size(); ++i) out.push_back(dz[l][i] * fp.pre[l][i]);
  }
  return out;
}

namespace {

// Input channels: fact feature, common input, one hall latent per instigator
// chain, then one private noise channel per first-layer neuron.
constexpr std::size_t kChanFact = 0;
constexpr std::size_t kChanCommon = 1;
constexpr std::size_t kChanHall = 2;

std::size_t hall_channels(const ToyNetwork& net) {
  return net.layer_sizes[0] - kChanHall - net.layer_sizes[1];
}

enum class Group { instigator, infected, hub, fact_path, carrier, background };

struct Layout {
  // Per hidden layer, the neuron index of every group member.
  std::vector<std::vector<std::size_t>> infected, hub, fact_path, background;
  std::vector<std::size_t> carrier;
};

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

struct Counts {
  std::size_t instigators = 0;
  std::vector<std::size_t> infected, hubs, fact_path;
};

Counts plan_counts(const SynthConfig& cfg) {
  const auto& sizes = cfg.hidden_sizes;
  if (sizes.empty()) throw ConfigError("hidden_sizes must not be empty");
  for (std::size_t s : sizes) {
    if (s == 0) throw ConfigError("hidden_sizes entries must be positive");
  }
  if (!(cfg.infected_fraction > 0.0 && cfg.infected_fraction < 0.5)) {
    throw ConfigError("infected_fraction must lie in (0, 0.5)");
  }
  if (cfg.samples_per_condition < 16) throw ConfigError("samples_per_condition must be >= 16");
  if (cfg.eval_samples < 1) throw ConfigError("eval_samples must be positive");
  if (!(cfg.margin > 0.0)) throw ConfigError("margin must be positive");
  if (!(cfg.instigator_ratio > 0.0 && cfg.instigator_ratio < 1.0)) {
    throw ConfigError("instigator_ratio must lie in (0, 1)");
  }

  const std::size_t layers = sizes.size();
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  Counts c;
  c.instigators = std::max<std::size_t>(1, round_count(cfg.instigator_ratio * static_cast<double>(n)));
  const std::size_t infected_total = round_count(cfg.infected_fraction * static_cast<double>(n));
  if (infected_total < c.instigators * layers) {
    throw ConfigError("infected set too small to form a path across " + std::to_string(layers) +
                      " hidden layers");
  }
  // Every deeper layer gets one neuron per instigator chain; the surplus is
  // dealt out in whole rounds of chains, shallow layers first.
  c.infected.assign(layers, c.instigators);
  if (layers > 1) {
    const std::size_t rest = infected_total - c.instigators * layers;
    const std::size_t rounds = rest / c.instigators;
    for (std::size_t r = 0; r < rounds; ++r) c.infected[1 + r % (layers - 1)] += c.instigators;
    c.infected[1] += rest % c.instigators;
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const auto w = static_cast<double>(sizes[l]);
    c.hubs.push_back(std::max<std::size_t>(1, round_count(cfg.hub_fraction * w)));
    c.fact_path.push_back(std::max<std::size_t>(1, round_count(cfg.fact_fraction * w)));
    // One carrier plus at least two background relays per layer.
    if (c.infected[l] + c.hubs[l] + c.fact_path[l] + 3 > sizes[l]) {
      throw ConfigError("hidden layer " + std::to_string(l) + " of width " +
                        std::to_string(sizes[l]) + " cannot host the planted groups");
    }
  }
  return c;
}

Layout assign_layout(const Counts& c, const SynthConfig& cfg, std::mt19937_64& rng) {
  Layout lay;
  for (std::size_t l = 0; l < cfg.hidden_sizes.size(); ++l) {
    std::vector<std::size_t> slots(cfg.hidden_sizes[l]);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    auto take = [&, pos = std::size_t{0}](std::size_t k) mutable {
      std::vector<std::size_t> out(slots.begin() + static_cast<std::ptrdiff_t>(pos),
                                   slots.begin() + static_cast<std::ptrdiff_t>(pos + k));
      pos += k;
      return out;
    };
    lay.infected.push_back(take(c.infected[l]));
    lay.hub.push_back(take(c.hubs[l]));
    lay.fact_path.push_back(take(c.fact_path[l]));
    lay.carrier.push_back(take(1).front());
    const std::size_t used = c.infected[l] + c.hubs[l] + c.fact_path[l] + 1;
    lay.background.push_back(take(cfg.hidden_sizes[l] - used));
  }
  return lay;
}

ToyNetwork build_network(const Layout& lay, const SynthConfig& cfg, std::mt19937_64& rng) {
  const Gains& g = cfg.gains;
  ToyNetwork net;
  const std::size_t chains = lay.infected[0].size();
  const std::size_t noise_base = kChanHall + chains;
  net.layer_sizes.push_back(noise_base + cfg.hidden_sizes[0]);
  for (std::size_t s : cfg.hidden_sizes) net.layer_sizes.push_back(s);
  const std::size_t layers = cfg.hidden_sizes.size();

  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = net.layer_sizes[l];
    const std::size_t out = net.layer_sizes[l + 1];
    std::vector<double> w(in * out);
    const double dense_sd = g.dense / std::sqrt(static_cast<double>(in));
    for (double& x : w) x = dense_sd * unit(rng);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(out, 0.0);
  }

  auto add = [&](std::size_t l, std::size_t i, std::size_t j, double v) {
    net.weights[l][i * net.layer_sizes[l] + j] += v;
  };
  // Sum-normalised chain from every member of `from` (previous layer) into i.
  auto chain = [&](std::size_t l, std::size_t i, const std::vector<std::size_t>& from, double total) {
    for (std::size_t j : from) add(l, i, j, total / static_cast<double>(from.size()));
  };

  // First hidden layer reads the inputs directly.
  {
    const double centre = -g.common_mean;
    auto common = [&](std::size_t i, double w) {
      add(0, i, kChanCommon, w);
      net.biases[0][i] += w * centre;
    };
    auto noise = [&](std::size_t i, double w) { add(0, i, noise_base + i, w); };
    for (std::size_t k = 0; k < chains; ++k) {
      const std::size_t i = lay.infected[0][k];
      add(0, i, kChanHall + k, g.hall_drive);
      noise(i, g.source_noise);
    }
    for (std::size_t i : lay.fact_path[0]) {
      add(0, i, kChanFact, g.fact_drive);
      common(i, g.common_load);
      noise(i, g.private_noise);
    }
    for (std::size_t i : lay.hub[0]) {
      add(0, i, kChanCommon, g.hub_drive);
      noise(i, g.private_noise);
    }
    common(lay.carrier[0], 1.0);
    for (std::size_t i : lay.background[0]) {
      common(i, g.common_load);
      noise(i, g.relay);
    }
  }

  for (std::size_t l = 1; l < layers; ++l) {
    const auto& bg_prev = lay.background[l - 1];
    std::size_t next_relay = 0;
    auto private_relay = [&](std::size_t i, double w) {
      add(l, i, bg_prev[next_relay % bg_prev.size()], w);
      ++next_relay;
    };
    auto common = [&](std::size_t i, double w) { add(l, i, lay.carrier[l - 1], w); };

    // Infected neuron k belongs to chain k mod chains and pools the previous
    // layer's members of that chain, so chains share no private noise. The
    // tonic bias keeps downstream neurons active once an instigator is silenced.
    const auto& inf_prev = lay.infected[l - 1];
    for (std::size_t k = 0; k < lay.infected[l].size(); ++k) {
      const std::size_t i = lay.infected[l][k];
      std::vector<std::size_t> preds;
      for (std::size_t m = k % chains; m < inf_prev.size(); m += chains) preds.push_back(inf_prev[m]);
      chain(l, i, preds, g.chain);
      if (l == 1) net.biases[l][i] += g.infected_bias;
      chain(l, i, lay.fact_path[l - 1], g.crosstalk);
      common(i, g.common_load);
      private_relay(i, g.deep_noise);
    }
    for (std::size_t i : lay.fact_path[l]) {
      chain(l, i, lay.fact_path[l - 1], g.chain);
      common(i, g.common_load);
      private_relay(i, g.deep_noise);
    }
    for (std::size_t i : lay.hub[l]) {
      chain(l, i, lay.hub[l - 1], g.chain);
      private_relay(i, g.deep_noise);
    }
    add(l, lay.carrier[l], lay.carrier[l - 1], 1.0);
    for (std::size_t i : lay.background[l]) {
      common(i, g.common_load);
      private_relay(i, g.relay);
    }
  }

  const std::size_t last = layers - 1;
  net.head_fact.assign(cfg.hidden_sizes[last], 0.0);
  net.head_hall.assign(cfg.hidden_sizes[last], 0.0);
  auto head = [&](std::vector<double>& h, const std::vector<std::size_t>& group, double total) {
    for (std::size_t i : group) h[i] += total / static_cast<double>(group.size());
  };
  head(net.head_hall, lay.infected[last], g.head_hall_infected);
  head(net.head_hall, lay.hub[last], g.head_hall_hub);
  head(net.head_fact, lay.fact_path[last], g.head_fact_path);
  head(net.head_fact, lay.hub[last], g.head_fact_hub);
  head(net.head_fact, lay.infected[last], g.head_fact_infected);
  return net;
}

std::vector<NeuronId> collect(const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<NeuronId> ids;
  for (std::size_t l = 0; l < groups.size(); ++l) {
    for (std::size_t i : groups[l]) {
      ids.push_back({static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(i)});
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t condition_code(const std::string& condition) {
  if (condition == kFact) return 1;
  if (condition == kHall) return 2;
  if (condition == kGeneral) return 3;
  throw DataError("unknown synthetic condition: " + condition);
}

Head active_head(const std::string& condition) {
  return condition == kHall ? Head::hall : Head::fact;
}

std::size_t flat_index(const ToyNetwork& net, const NeuronId& id) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < id.layer; ++l) off += net.layer_sizes[l + 1];
  return off + id.index;
}

World build_world(std::uint64_t seed, std::uint64_t sub_seed, const SynthConfig& cfg,
                  const Counts& counts) {
  auto rng = make_rng(sub_seed, 0x5eed, 0);
  const Layout lay = assign_layout(counts, cfg, rng);
  World w;
  w.network = build_network(lay, cfg, rng);
  w.config = cfg;
  w.seed = seed;
  w.accepted_seed = sub_seed;
  w.truth.instigators = collect({lay.infected[0]});
  w.truth.infected = collect(lay.infected);
  std::vector<std::vector<std::size_t>> clean(cfg.hidden_sizes.size());
  for (std::size_t l = 0; l < clean.size(); ++l) {
    clean[l] = lay.hub[l];
    clean[l].insert(clean[l].end(), lay.fact_path[l].begin(), lay.fact_path[l].end());
  }
  w.truth.clean_critical = collect(clean);
  return w;
}

}  // namespace

std::vector<std::vector<double>> sample_inputs(const World& world, const std::string& condition,
                                               std::size_t count, std::uint64_t stream) {
  const Gains& g = world.config.gains;
  auto rng = make_rng(world.accepted_seed, condition_code(condition), stream + 1);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t width = world.network.layer_sizes.front();
  const std::size_t chains = hall_channels(world.network);
  std::vector<std::vector<double>> out(count, std::vector<double>(width, 0.0));
  for (auto& x : out) {
    if (condition == kFact) {
      x[kChanFact] = 1.0 + g.fact_sd * unit(rng);
    } else if (condition == kHall) {
      for (std::size_t k = 0; k < chains; ++k) x[kChanHall + k] = 1.0 + g.feature_sd * unit(rng);
    } else {
      x[kChanFact] = 0.5 + g.fact_sd * unit(rng);
    }
    x[kChanCommon] = g.common_mean + g.common_sd * unit(rng);
    for (std::size_t j = kChanHall + chains; j < width; ++j) x[j] = unit(rng);
  }
  return out;
}

ActivationTrace trace_world(const World& world) {
  const ToyNetwork& net = world.network;
  ActivationTrace trace;
  trace.neurons = net.neuron_ids();
  const std::size_t n = trace.neurons.size();
  const std::size_t samples = world.config.samples_per_condition;
  for (const char* name : {kFact, kHall, kGeneral}) {
    const auto inputs = sample_inputs(world, name, samples, 0);
    ConditionData data{Matrix(samples, n), Matrix(samples, n)};
    for (std::size_t r = 0; r < samples; ++r) {
      const ForwardPass fp = forward(net, inputs[r]);
      std::size_t c = 0;
      for (const auto& layer : fp.post) {
        for (double a : layer) data.activations(r, c++) = static_cast<float>(a);
      }
      const auto s = neuron_sensitivities(net, inputs[r], active_head(name));
      for (std::size_t u = 0; u < n; ++u) data.sensitivities(r, u) = static_cast<float>(s[u]);
    }
    trace.conditions.emplace(name, std::move(data));
  }
  trace.metadata = {{"source", "synthetic"},
                    {"seed", world.seed},
                    {"accepted_seed", world.accepted_seed},
                    {"loss", "0.5 * y^2 on the active head"},
                    {"general_head", "fact"}};
  return trace;
}

double measured_margin(const World& world, const ActivationTrace& trace) {
  const auto delta = sensitivity_delta(importance_scores(trace, kHall), importance_scores(trace, kFact));
  auto mean_over = [&](const std::vector<NeuronId>& ids) {
    double sum = 0.0;
    for (const NeuronId& id : ids) sum += delta[flat_index(world.network, id)];
    return ids.empty() ? 0.0 : sum / static_cast<double>(ids.size());
  };
  return mean_over(world.truth.instigators) - mean_over(world.truth.clean_critical);
}

World generate_world(std::uint64_t seed, const SynthConfig& cfg) {
  const Counts counts = plan_counts(cfg);
  constexpr std::uint64_t kMaxAttempts = 10;
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t sub_seed = attempt == 0 ? seed : seed * 1000003ULL + attempt;
    World w = build_world(seed, sub_seed, cfg, counts);
    const double gap = measured_margin(w, trace_world(w));
    if (gap >= cfg.margin) {
      w.truth.margin = gap;
      return w;
    }
    best = std::max(best, gap);
  }
  throw DataError("no world reached margin " + std::to_string(cfg.margin) + " in " +
                  std::to_string(kMaxAttempts) + " attempts (best " + std::to_string(best) + ")");
}

ToyNetwork apply_plan(const ToyNetwork& net, const InterventionPlan& plan) {
  WeightMap params;
  for (const NeuronId& id : net.neuron_ids()) {
    const std::size_t in = net.layer_sizes[id.layer];
    const auto& w = net.weights[id.layer];
    std::vector<double> row(w.begin() + static_cast<std::ptrdiff_t>(id.index * in),
                            w.begin() + static_cast<std::ptrdiff_t>((id.index + 1) * in));
    row.push_back(net.biases[id.layer][id.index]);
    params.emplace(id, std::move(row));
  }
  const WeightMap scaled = apply_plan_to_weights(plan, params);
  ToyNetwork out = net;
  for (const auto& [id, row] : scaled) {
    const std::size_t in = net.layer_sizes[id.layer];
    std::copy(row.begin(), row.end() - 1,
              out.weights[id.layer].begin() + static_cast<std::ptrdiff_t>(id.index * in));
    out.biases[id.layer][id.index] = row.back();
  }
  return out;
}

Evaluation evaluate_intervention(const World& world, const InterventionPlan& plan) {
  const ToyNetwork edited = apply_plan(world.network, plan);
  const std::size_t m = world.config.eval_samples;

  auto mean_head = [&](const ToyNetwork& net, const std::vector<std::vector<double>>& xs, Head h) {
    double sum = 0.0;
    for (const auto& x : xs) {
      const ForwardPass fp = forward(net, x);
      sum += h == Head::fact ? fp.y_fact : fp.y_hall;
    }
    return sum / static_cast<double>(xs.size());
  };
  auto drop = [](double before, double after) {
    return before == 0.0 ? 0.0 : (before - after) / std::fabs(before);
  };

  Evaluation ev;
  const auto hall_x = sample_inputs(world, kHall, m, 1);
  const auto fact_x = sample_inputs(world, kFact, m, 1);
  ev.hall_drop = drop(mean_head(world.network, hall_x, Head::hall), mean_head(edited, hall_x, Head::hall));
  ev.fact_drop = drop(mean_head(world.network, fact_x, Head::fact), mean_head(edited, fact_x, Head::fact));

  std::set<NeuronId> predicted, flagged;
  for (const PlanEntry& e : plan.entries) {
    if (e.role == Role::instigator) predicted.insert(e.neuron);
    if (e.role == Role::instigator || e.role == Role::downstream) flagged.insert(e.neuron);
  }
  const std::set<NeuronId> truth(world.truth.instigators.begin(), world.truth.instigators.end());
  std::size_t hit = 0;
  for (const NeuronId& id : predicted) hit += truth.count(id);
  ev.instigator_precision = predicted.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(predicted.size());
  ev.instigator_recall = truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());

  const std::set<NeuronId> infected(world.truth.infected.begin(), world.truth.infected.end());
  std::vector<std::size_t> a, b;
  for (const NeuronId& id : world.network.neuron_ids()) {
    a.push_back(flagged.count(id) ? 1 : 0);
    b.push_back(infected.count(id) ? 1 : 0);
  }
  ev.module_ari = adjusted_rand_index(a, b);
  return ev;
}

double max_gradient_error(const World& world, std::size_t samples) {
  // Step on the multiplicative factor; 1e-5 and below is dominated by round-off.
  constexpr double h = 1e-4;
  constexpr double floor = 1e-6;
  const ToyNetwork& base = world.network;
  const auto ids = base.neuron_ids();
  double worst = 0.0;
  for (const char* name : {kFact, kHall, kGeneral}) {
    const Head head = active_head(name);
    for (const auto& x : sample_inputs(world, name, samples, 2)) {
      const auto s = neuron_sensitivities(base, x, head);
      ToyNetwork net = base;
      for (std::size_t u = 0; u < ids.size(); ++u) {
        const NeuronId id = ids[u];
        const std::size_t in = base.layer_sizes[id.layer];
        auto scaled_loss = [&](double factor) {
          for (std::size_t j = 0; j < in; ++j) {
            net.weights[id.layer][id.index * in + j] = base.weights[id.layer][id.index * in + j] * factor;
          }
          net.biases[id.layer][id.index] = base.biases[id.layer][id.index] * factor;
          return head_loss(net, x, head);
        };
        const double fd = (scaled_loss(1.0 + h) - scaled_loss(1.0 - h)) / (2.0 * h);
        scaled_loss(1.0);
        const double err = std::fabs(s[u] - fd) / std::max({std::fabs(fd), std::fabs(s[u]), floor});
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

json config_to_json(const SynthConfig& cfg) {
  const Gains& g = cfg.gains;
  return {{"hidden_sizes", cfg.hidden_sizes},
          {"instigator_ratio", cfg.instigator_ratio},
          {"infected_fraction", cfg.infected_fraction},
          {"hub_fraction", cfg.hub_fraction},
          {"fact_fraction", cfg.fact_fraction},
          {"margin", cfg.margin},
          {"samples_per_condition", cfg.samples_per_condition},
          {"eval_samples", cfg.eval_samples},
          {"gains",
           {{"hall_drive", g.hall_drive},
            {"fact_drive", g.fact_drive},
            {"hub_drive", g.hub_drive},
            {"common_load", g.common_load},
            {"private_noise", g.private_noise},
            {"source_noise", g.source_noise},
            {"deep_noise", g.deep_noise},
            {"chain", g.chain},
            {"crosstalk", g.crosstalk},
            {"infected_bias", g.infected_bias},
            {"relay", g.relay},
            {"dense", g.dense},
            {"head_hall_infected", g.head_hall_infected},
            {"head_hall_hub", g.head_hall_hub},
            {"head_fact_path", g.head_fact_path},
            {"head_fact_hub", g.head_fact_hub},
            {"head_fact_infected", g.head_fact_infected},
            {"common_mean", g.common_mean},
            {"common_sd", g.common_sd},
            {"feature_sd", g.feature_sd},
            {"fact_sd", g.fact_sd}}}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig cfg;
  if (!j.is_object()) throw ConfigError("synthetic config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "hidden_sizes") cfg.hidden_sizes = value.get<std::vector<std::size_t>>();
      else if (key == "instigator_ratio") cfg.instigator_ratio = value.get<double>();
      else if (key == "infected_fraction") cfg.infected_fraction = value.get<double>();
      else if (key == "hub_fraction") cfg.hub_fraction = value.get<double>();
      else if (key == "fact_fraction") cfg.fact_fraction = value.get<double>();
      else if (key == "margin") cfg.margin = value.get<double>();
      else if (key == "samples_per_condition") cfg.samples_per_condition = value.get<std::size_t>();
      else if (key == "eval_samples") cfg.eval_samples = value.get<std::size_t>();
      else if (key == "gains") {
        Gains& g = cfg.gains;
        const std::map<std::string, double*> slots = {
            {"hall_drive", &g.hall_drive},
            {"fact_drive", &g.fact_drive},
            {"hub_drive", &g.hub_drive},
            {"common_load", &g.common_load},
            {"private_noise", &g.private_noise},
            {"source_noise", &g.source_noise},
            {"deep_noise", &g.deep_noise},
            {"chain", &g.chain},
            {"crosstalk", &g.crosstalk},
            {"infected_bias", &g.infected_bias},
            {"relay", &g.relay},
            {"dense", &g.dense},
            {"head_hall_infected", &g.head_hall_infected},
            {"head_hall_hub", &g.head_hall_hub},
            {"head_fact_path", &g.head_fact_path},
            {"head_fact_hub", &g.head_fact_hub},
            {"head_fact_infected", &g.head_fact_infected},
            {"common_mean", &g.common_mean},
            {"common_sd", &g.common_sd},
            {"feature_sd", &g.feature_sd},
            {"fact_sd", &g.fact_sd}};
        for (const auto& [gk, gv] : value.items()) {
          auto it = slots.find(gk);
          if (it == slots.end()) throw ConfigError("unknown gain: " + gk);
          *it->second = gv.get<double>();
        }
      } else {
        throw ConfigError("unknown synthetic config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic config: ") + e.what());
  }
  return cfg;
}

namespace {

json ids_to_json(const std::vector<NeuronId>& ids) {
  json out = json::array();
  for (const NeuronId& id : ids) out.push_back({{"layer", id.layer}, {"index", id.index}});
  return out;
}

}  // namespace

json truth_to_json(const World& world) {
  return {{"seed", world.seed},
          {"accepted_seed", world.accepted_seed},
          {"config", config_to_json(world.config)},
          {"infected", ids_to_json(world.truth.infected)},
          {"instigators", ids_to_json(world.truth.instigators)},
          {"clean_critical", ids_to_json(world.truth.clean_critical)},
          {"margin", world.truth.margin}};
}

World world_from_sidecar(const json& j) {
  std::uint64_t seed = 0;
  std::uint64_t accepted = 0;
  SynthConfig cfg;
  try {
    seed = j.at("seed").get<std::uint64_t>();
    accepted = j.at("accepted_seed").get<std::uint64_t>();
    cfg = config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed world sidecar: ") + e.what());
  }
  World w = generate_world(seed, cfg);
  if (w.accepted_seed != accepted) {
    throw DataError("world sidecar does not regenerate (accepted seed differs)");
  }
  return w;
}

json evaluation_to_json(const Evaluation& e) {
  return {{"hall_drop", e.hall_drop},
          {"fact_drop", e.fact_drop},
          {"instigator_precision", e.instigator_precision},
          {"instigator_recall", e.instigator_recall},
          {"module_ari", e.module_ari}};
}

}  // namespace pathcut::synth
