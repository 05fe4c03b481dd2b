#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathcut/modulation.hpp"
#include "pathcut/trace_store.hpp"

namespace pathcut::synth {

// Dense tanh network with two linear readouts over the last hidden layer.
// weights[l] is row-major (layer_sizes[l+1] x layer_sizes[l]).
struct ToyNetwork {
  std::vector<std::size_t> layer_sizes;  // input width first, then hidden widths
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> head_fact;
  std::vector<double> head_hall;

  std::size_t hidden_layers() const { return layer_sizes.size() - 1; }
  std::size_t hidden_neurons() const;
  std::vector<NeuronId> neuron_ids() const;

  bool operator==(const ToyNetwork&) const = default;
};

enum class Head { fact, hall };

struct ForwardPass {
  std::vector<std::vector<double>> pre;   // per hidden layer
  std::vector<std::vector<double>> post;  // per hidden layer
  double y_fact = 0.0;
  double y_hall = 0.0;
};

ForwardPass forward(const ToyNetwork& net, std::span<const double> input);

// Loss used for sensitivity export: 0.5 * y^2 on the active head (zero target).
double head_loss(const ToyNetwork& net, std::span<const double> input, Head head);

// Per hidden neuron theta_u . dL/dtheta_u, where theta_u is the neuron's
// incoming weight row plus bias, by backpropagation. Hidden neurons are
// flattened layer by layer.
std::vector<double> neuron_sensitivities(const ToyNetwork& net, std::span<const double> input,
                                         Head head);

// Network-construction gains. Group contributions to each head are expressed
// as totals that the generator spreads over the group's neurons.
struct Gains {
  double hall_drive = 0.3;       // instigator weight on its hallucination latent
  double fact_drive = 1.2;       // fact-path weight on the fact feature
  double hub_drive = 0.8;        // hub weight on the common input
  double common_load = 0.17;     // centred common-mode weight
  double private_noise = 0.3;    // first-layer private noise weight
  double source_noise = 0.02;    // instigator private noise weight
  double deep_noise = 0.3;       // deeper-layer private relay weight
  double chain = 2.5;            // total weight along a group chain between layers
  double crosstalk = 1.0;        // fact-path drive into downstream infected neurons
  double infected_bias = 0.1;    // tonic bias of the first downstream infected layer
  double relay = 0.5;            // background relay weight
  double dense = 0.01;           // scale of the dense random weights
  double head_hall_infected = 2.0;
  double head_hall_hub = 0.3;
  double head_fact_path = 0.6;
  double head_fact_hub = 0.8;
  double head_fact_infected = 0.2;
  double common_mean = 0.2;
  double common_sd = 1.0;
  double feature_sd = 1.0;       // spread of the hallucination latents
  double fact_sd = 1.0;          // spread of the fact feature

  bool operator==(const Gains&) const = default;
};

struct SynthConfig {
  std::vector<std::size_t> hidden_sizes = {150, 150, 100};
  double instigator_ratio = 0.01;   // planted instigators = round(ratio * N), at least 1
  double infected_fraction = 0.05;  // infected share of all hidden neurons
  double hub_fraction = 0.06;
  double fact_fraction = 0.04;
  double margin = 0.05;
  std::size_t samples_per_condition = 2048;
  std::size_t eval_samples = 2048;
  Gains gains;

  bool operator==(const SynthConfig&) const = default;
};

struct PlantedTruth {
  std::vector<NeuronId> infected;
  std::vector<NeuronId> instigators;
  std::vector<NeuronId> clean_critical;
  double margin = 0.0;
};

struct World {
  ToyNetwork network;
  PlantedTruth truth;
  SynthConfig config;
  std::uint64_t seed = 0;         // requested seed
  std::uint64_t accepted_seed = 0;  // sub-seed that passed the margin check
};

// Throws ConfigError for infeasible configurations and DataError when no
// attempt reaches the configured margin.
World generate_world(std::uint64_t seed, const SynthConfig& cfg);

// Activations and exact sensitivities for fact, hall and general inputs.
ActivationTrace trace_world(const World& world);

struct Evaluation {
  double hall_drop = 0.0;
  double fact_drop = 0.0;
  double instigator_precision = 0.0;
  double instigator_recall = 0.0;
  double module_ari = 0.0;
};

// Copy of the network with every hidden neuron's incoming row and bias scaled
// by (1 - alpha).
ToyNetwork apply_plan(const ToyNetwork& net, const InterventionPlan& plan);

Evaluation evaluate_intervention(const World& world, const InterventionPlan& plan);

// Largest relative deviation between backprop sensitivities and central
// finite differences of the loss along theta_u, over `samples` inputs per
// condition.
double max_gradient_error(const World& world, std::size_t samples);

// Mean delta-importance of planted instigators minus that of clean critical
// neurons, measured on a trace.
double measured_margin(const World& world, const ActivationTrace& trace);

// Condition inputs drawn from the world's deterministic sample stream.
std::vector<std::vector<double>> sample_inputs(const World& world, const std::string& condition,
                                               std::size_t count, std::uint64_t stream);

nlohmann::json config_to_json(const SynthConfig& cfg);
SynthConfig config_from_json(const nlohmann::json& j);
nlohmann::json truth_to_json(const World& world);
// Regenerates the world recorded in a ground-truth sidecar.
World world_from_sidecar(const nlohmann::json& j);
nlohmann::json evaluation_to_json(const Evaluation& e);

}  // namespace pathcut::synth
