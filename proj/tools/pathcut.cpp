// Command-line front end: one subcommand per pipeline stage plus `run`.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pathcut/error.hpp"
#include "pathcut/pipeline.hpp"
#include "pathcut/synth.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

// --config plus per-key overrides; every flag mirrors a config key.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::string> trace_path, rank_scope, sparsify_mode, orientation, output_dir;
  std::optional<double> select_ratio, general_filter_quantile, epsilon, hdr_cap, sparsify_param,
      candidate_multiplier, alpha0, lambda;
  std::optional<std::size_t> critical_count;
  std::optional<bool> normalize_hdr, use_hdr, use_se, use_hierarchy;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file");
    app->add_option("--trace-path", trace_path);
    app->add_option("--select-ratio", select_ratio);
    app->add_option("--general-filter-quantile", general_filter_quantile);
    app->add_option("--critical-count", critical_count);
    app->add_option("--rank-scope", rank_scope);
    app->add_option("--epsilon", epsilon);
    app->add_option("--hdr-cap", hdr_cap);
    app->add_option("--sparsify-mode", sparsify_mode);
    app->add_option("--sparsify-param", sparsify_param);
    app->add_option("--candidate-multiplier", candidate_multiplier);
    app->add_option("--orientation", orientation);
    app->add_option("--alpha0", alpha0);
    app->add_option("--lambda", lambda);
    app->add_option("--normalize-hdr", normalize_hdr);
    app->add_option("--use-hdr", use_hdr);
    app->add_option("--use-se", use_se);
    app->add_option("--use-hierarchy", use_hierarchy);
    app->add_option("--seed", seed);
    app->add_option("--output-dir", output_dir);
  }

  pathcut::PipelineConfig resolve() const {
    json j = json::object();
    if (!config_file.empty()) {
      try {
        j = json::parse(pathcut::read_text(config_file));
      } catch (const pathcut::DataError&) {
        throw pathcut::ConfigError("cannot open config file " + config_file);
      } catch (const json::exception& e) {
        throw pathcut::ConfigError("config file " + config_file + " is not valid JSON: " + e.what());
      }
    }
    auto set = [&](const char* key, const auto& value) {
      if (value) j[key] = *value;
    };
    set("trace_path", trace_path);
    set("select_ratio", select_ratio);
    set("general_filter_quantile", general_filter_quantile);
    set("critical_count", critical_count);
    set("rank_scope", rank_scope);
    set("epsilon", epsilon);
    set("hdr_cap", hdr_cap);
    set("sparsify_mode", sparsify_mode);
    set("sparsify_param", sparsify_param);
    set("candidate_multiplier", candidate_multiplier);
    set("orientation", orientation);
    set("alpha0", alpha0);
    set("lambda", lambda);
    set("normalize_hdr", normalize_hdr);
    set("seed", seed);
    set("output_dir", output_dir);
    if (use_hdr || use_se || use_hierarchy) {
      if (!j.contains("ablations")) j["ablations"] = json::object();
      if (use_hdr) j["ablations"]["use_hdr"] = *use_hdr;
      if (use_se) j["ablations"]["use_se"] = *use_se;
      if (use_hierarchy) j["ablations"]["use_hierarchy"] = *use_hierarchy;
    }
    return pathcut::config_from_json(j);
  }
};

pathcut::ActivationTrace load_trace(const pathcut::PipelineConfig& cfg) {
  if (cfg.trace_path.empty()) throw pathcut::ConfigError("trace_path is required");
  return pathcut::read_trace(cfg.trace_path);
}

void refresh_summary(const pathcut::PipelineConfig& cfg) {
  pathcut::write_text(fs::path(cfg.output_dir) / pathcut::kSummaryFile,
                      pathcut::summary_document(cfg, cfg.output_dir));
}

fs::path artifact(const pathcut::PipelineConfig& cfg, const char* name) {
  return fs::path(cfg.output_dir) / name;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plan neuron-level interventions from activation and sensitivity traces"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a planted synthetic world and its trace");
  std::uint64_t gen_seed = 1;
  std::string gen_out = "synth_world";
  std::string gen_cfg;
  std::optional<std::size_t> gen_samples;
  gen->add_option("--seed", gen_seed, "World seed");
  gen->add_option("--out", gen_out, "Trace bundle directory (truth.json is written inside)");
  gen->add_option("--synth-config", gen_cfg, "JSON file with synthetic-world settings");
  gen->add_option("--samples-per-condition", gen_samples);

  ConfigFlags flags;
  auto* sens = app.add_subcommand("sensitivity", "Compute importance scores and select instigators");
  auto* graph = app.add_subcommand("build-graph", "Build the HDR propagation graph");
  auto* part = app.add_subcommand("partition", "Partition the graph by structural entropy");
  auto* plan = app.add_subcommand("plan", "Compute per-neuron suppression factors");
  auto* dot = app.add_subcommand("export-dot", "Write graph.dot with module colours");
  auto* eval = app.add_subcommand("evaluate", "Apply a plan to a synthetic world and report drops");
  auto* run = app.add_subcommand("run", "Run every stage and write all artifacts");
  for (auto* sub : {sens, graph, part, plan, dot, eval, run}) flags.attach(sub);

  std::string eval_truth;
  std::string eval_plan;
  eval->add_option("--truth", eval_truth, "Synthetic world sidecar (truth.json)")->required();
  eval->add_option("--plan", eval_plan, "Plan file (defaults to <output_dir>/plan.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      pathcut::synth::SynthConfig sc;
      if (!gen_cfg.empty()) {
        json j;
        try {
          j = json::parse(pathcut::read_text(gen_cfg));
        } catch (const json::exception& e) {
          throw pathcut::ConfigError("synthetic config is not valid JSON: " + std::string(e.what()));
        }
        sc = pathcut::synth::config_from_json(j);
      }
      if (gen_samples) sc.samples_per_condition = *gen_samples;
      const auto world = pathcut::synth::generate_world(gen_seed, sc);
      pathcut::write_trace(pathcut::synth::trace_world(world), gen_out);
      pathcut::write_text(fs::path(gen_out) / "truth.json",
                          pathcut::synth::truth_to_json(world).dump(2) + "\n");
      std::cout << "wrote " << gen_out << " (margin " << world.truth.margin << ")\n";
      return kExitOk;
    }

    const pathcut::PipelineConfig cfg = flags.resolve();

    if (*run) {
      pathcut::run_pipeline(cfg);
      std::cout << "wrote artifacts to " << cfg.output_dir << "\n";
      return kExitOk;
    }
    if (*sens) {
      const auto trace = load_trace(cfg);
      const auto profile = pathcut::stage_sensitivity(trace, cfg);
      pathcut::write_text(artifact(cfg, pathcut::kProfileFile), pathcut::profile_document(profile, cfg));
    } else if (*graph) {
      const auto trace = load_trace(cfg);
      const auto profile = pathcut::profile_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kProfileFile)));
      const auto g = pathcut::stage_graph(trace, profile, cfg);
      pathcut::write_text(artifact(cfg, pathcut::kGraphFile), pathcut::graph_document(g, cfg));
    } else if (*part) {
      const auto g = pathcut::graph_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kGraphFile)));
      const auto p = pathcut::stage_partition(g, cfg);
      pathcut::write_text(artifact(cfg, pathcut::kPartitionFile), pathcut::partition_document(p, cfg));
    } else if (*plan) {
      const auto trace = load_trace(cfg);
      const auto profile = pathcut::profile_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kProfileFile)));
      const auto g = pathcut::graph_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kGraphFile)));
      const auto p = pathcut::partition_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kPartitionFile)));
      const auto result = pathcut::stage_plan(trace, g, p, profile, cfg);
      pathcut::write_text(artifact(cfg, pathcut::kPlanFile), pathcut::plan_document(result, cfg));
    } else if (*dot) {
      const auto g = pathcut::graph_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kGraphFile)));
      const auto p = pathcut::partition_from_json(pathcut::read_artifact(artifact(cfg, pathcut::kPartitionFile)));
      std::optional<pathcut::ActivationTrace> trace;
      if (!cfg.trace_path.empty()) trace = pathcut::read_trace(cfg.trace_path);
      pathcut::write_text(artifact(cfg, pathcut::kDotFile),
                          pathcut::export_dot(g, trace ? &*trace : nullptr, &p));
    } else if (*eval) {
      const fs::path plan_path = eval_plan.empty() ? artifact(cfg, pathcut::kPlanFile) : fs::path(eval_plan);
      const auto world = pathcut::synth::world_from_sidecar(pathcut::read_artifact(eval_truth));
      const auto pl = pathcut::plan_from_json(pathcut::read_artifact(plan_path));
      const json report = pathcut::synth::evaluation_to_json(pathcut::synth::evaluate_intervention(world, pl));
      pathcut::write_text(fs::path(cfg.output_dir) / "evaluation.json", report.dump(2) + "\n");
      std::cout << report.dump(2) << "\n";
      return kExitOk;
    }
    refresh_summary(cfg);
    return kExitOk;
  } catch (const pathcut::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pathcut::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
