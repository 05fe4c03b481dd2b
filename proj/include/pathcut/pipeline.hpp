#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pathcut/hdr_graph.hpp"
#include "pathcut/modulation.hpp"
#include "pathcut/se_partition.hpp"
#include "pathcut/sensitivity.hpp"
#include "pathcut/trace_store.hpp"

namespace pathcut {

struct Ablations {
  bool use_hdr = true;
  bool use_se = true;
  bool use_hierarchy = true;
};

struct PipelineConfig {
  std::string trace_path;
  double select_ratio = 0.01;
  double general_filter_quantile = 0.05;
  std::optional<std::size_t> critical_count;
  RankScope rank_scope = RankScope::global;
  double epsilon = 1e-6;
  double hdr_cap = 100.0;
  std::string sparsify_mode = "top_k";
  double sparsify_param = 10.0;
  double candidate_multiplier = 5.0;
  Orientation orientation = Orientation::undirected;
  double alpha0 = 1.0;
  double lambda = 1.0;
  bool normalize_hdr = true;
  Ablations ablations;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
};

// Unknown keys and out-of-range values raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

SelectionConfig selection_config(const PipelineConfig& cfg);
GraphConfig graph_config(const PipelineConfig& cfg);
PlanParams plan_params(const PipelineConfig& cfg);

// Stage functions shared by run_pipeline and the CLI subcommands. Errors are
// rethrown with the stage name prefixed.
SensitivityProfile stage_sensitivity(const ActivationTrace& trace, const PipelineConfig& cfg);
HdrGraph stage_graph(const ActivationTrace& trace, const SensitivityProfile& profile,
                     const PipelineConfig& cfg);
Partition stage_partition(const HdrGraph& graph, const PipelineConfig& cfg);
InterventionPlan stage_plan(const ActivationTrace& trace, const HdrGraph& graph,
                            const Partition& partition, const SensitivityProfile& profile,
                            const PipelineConfig& cfg);

struct PipelineResult {
  SensitivityProfile profile;
  HdrGraph graph;
  Partition partition;
  InterventionPlan plan;
};

PipelineResult run_stages(const ActivationTrace& trace, const PipelineConfig& cfg);

// Fixed artifact names under output_dir.
inline constexpr const char* kProfileFile = "profile.json";
inline constexpr const char* kGraphFile = "graph.json";
inline constexpr const char* kPartitionFile = "partition.json";
inline constexpr const char* kPlanFile = "plan.json";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kDotFile = "graph.dot";

// Artifact serialisations; each embeds the config echo.
std::string profile_document(const SensitivityProfile& profile, const PipelineConfig& cfg);
std::string graph_document(const HdrGraph& graph, const PipelineConfig& cfg);
std::string partition_document(const Partition& partition, const PipelineConfig& cfg);
std::string plan_document(const InterventionPlan& plan, const PipelineConfig& cfg);

// Summary over the artifacts currently present in output_dir.
std::string summary_document(const PipelineConfig& cfg, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
// Reads an upstream artifact; a missing file raises DataError naming it.
nlohmann::json read_artifact(const std::filesystem::path& path);

// Reads the trace, runs every stage and writes all artifacts plus the summary.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace pathcut
