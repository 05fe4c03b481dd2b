#include "pathcut/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "pathcut/digest.hpp"
#include "pathcut/error.hpp"

using nlohmann::json;

namespace pathcut {

namespace {

template <typename T>
T get_key(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void validate(const PipelineConfig& c) {
  if (!(c.select_ratio > 0.0 && c.select_ratio <= 1.0)) throw ConfigError("select_ratio must lie in (0, 1]");
  if (!(c.general_filter_quantile >= 0.0 && c.general_filter_quantile < 1.0)) {
    throw ConfigError("general_filter_quantile must lie in [0, 1)");
  }
  if (c.critical_count && *c.critical_count == 0) throw ConfigError("critical_count must be positive");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(c.hdr_cap > 0.0)) throw ConfigError("hdr_cap must be positive");
  if (c.sparsify_mode == "top_k") {
    if (!(c.sparsify_param >= 1.0) || c.sparsify_param != std::floor(c.sparsify_param)) {
      throw ConfigError("top_k sparsify_param must be a positive integer");
    }
  } else if (c.sparsify_mode == "threshold") {
    if (!(c.sparsify_param >= 0.0)) throw ConfigError("threshold sparsify_param must be non-negative");
  } else {
    throw ConfigError("sparsify_mode must be 'top_k' or 'threshold'");
  }
  if (!(c.candidate_multiplier >= 0.0)) throw ConfigError("candidate_multiplier must be non-negative");
  if (!(c.alpha0 > 0.0 && c.alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in (0, 1]");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

// Rethrows with the stage name prefixed, keeping the error category.
template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  }
}

json with_config(json body, const PipelineConfig& cfg) {
  body["run_config"] = config_to_json(cfg);
  return body;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "trace_path") c.trace_path = get_key<std::string>(v, key);
    else if (key == "select_ratio") c.select_ratio = get_key<double>(v, key);
    else if (key == "general_filter_quantile") c.general_filter_quantile = get_key<double>(v, key);
    else if (key == "critical_count") {
      if (v.is_null()) c.critical_count.reset();
      else c.critical_count = get_key<std::size_t>(v, key);
    } else if (key == "rank_scope") c.rank_scope = rank_scope_from_string(get_key<std::string>(v, key));
    else if (key == "epsilon") c.epsilon = get_key<double>(v, key);
    else if (key == "hdr_cap") c.hdr_cap = get_key<double>(v, key);
    else if (key == "sparsify_mode") c.sparsify_mode = get_key<std::string>(v, key);
    else if (key == "sparsify_param") c.sparsify_param = get_key<double>(v, key);
    else if (key == "candidate_multiplier") c.candidate_multiplier = get_key<double>(v, key);
    else if (key == "orientation") c.orientation = orientation_from_string(get_key<std::string>(v, key));
    else if (key == "alpha0") c.alpha0 = get_key<double>(v, key);
    else if (key == "lambda") c.lambda = get_key<double>(v, key);
    else if (key == "normalize_hdr") c.normalize_hdr = get_key<bool>(v, key);
    else if (key == "seed") c.seed = get_key<std::uint64_t>(v, key);
    else if (key == "output_dir") c.output_dir = get_key<std::string>(v, key);
    else if (key == "ablations") {
      if (!v.is_object()) throw ConfigError("ablations must be an object");
      for (const auto& [ak, av] : v.items()) {
        if (ak == "use_hdr") c.ablations.use_hdr = get_key<bool>(av, ak);
        else if (ak == "use_se") c.ablations.use_se = get_key<bool>(av, ak);
        else if (ak == "use_hierarchy") c.ablations.use_hierarchy = get_key<bool>(av, ak);
        else throw ConfigError("unknown ablation key: " + ak);
      }
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  validate(c);
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return {{"trace_path", c.trace_path},
          {"select_ratio", c.select_ratio},
          {"general_filter_quantile", c.general_filter_quantile},
          {"critical_count", c.critical_count ? json(*c.critical_count) : json(nullptr)},
          {"rank_scope", to_string(c.rank_scope)},
          {"epsilon", c.epsilon},
          {"hdr_cap", c.hdr_cap},
          {"sparsify_mode", c.sparsify_mode},
          {"sparsify_param", c.sparsify_param},
          {"candidate_multiplier", c.candidate_multiplier},
          {"orientation", to_string(c.orientation)},
          {"alpha0", c.alpha0},
          {"lambda", c.lambda},
          {"normalize_hdr", c.normalize_hdr},
          {"ablations",
           {{"use_hdr", c.ablations.use_hdr},
            {"use_se", c.ablations.use_se},
            {"use_hierarchy", c.ablations.use_hierarchy}}},
          {"seed", c.seed},
          {"output_dir", c.output_dir}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

SelectionConfig selection_config(const PipelineConfig& c) {
  SelectionConfig s;
  s.select_ratio = c.select_ratio;
  s.general_filter_quantile = c.general_filter_quantile;
  s.critical_count = c.critical_count;
  s.rank_scope = c.rank_scope;
  return s;
}

GraphConfig graph_config(const PipelineConfig& c) {
  GraphConfig g;
  g.epsilon = c.epsilon;
  g.hdr_cap = c.hdr_cap;
  if (c.sparsify_mode == "top_k") {
    g.sparsify.mode = Sparsify::Mode::top_k;
    g.sparsify.top_k = static_cast<std::size_t>(c.sparsify_param);
  } else {
    g.sparsify.mode = Sparsify::Mode::threshold;
    g.sparsify.threshold = c.sparsify_param;
  }
  g.orientation = c.orientation;
  g.weighting = c.ablations.use_hdr ? EdgeWeighting::hdr : EdgeWeighting::abs_hall_correlation;
  return g;
}

PlanParams plan_params(const PipelineConfig& c) {
  PlanParams p;
  p.alpha0 = c.alpha0;
  p.lambda = c.lambda;
  p.normalize_hdr = c.normalize_hdr;
  p.uniform = !c.ablations.use_hierarchy;
  return p;
}

SensitivityProfile stage_sensitivity(const ActivationTrace& trace, const PipelineConfig& cfg) {
  return in_stage("sensitivity", [&] { return build_profile(trace, selection_config(cfg)); });
}

HdrGraph stage_graph(const ActivationTrace& trace, const SensitivityProfile& profile,
                     const PipelineConfig& cfg) {
  return in_stage("build-graph", [&] {
    const auto nodes = candidate_nodes(profile, cfg.candidate_multiplier);
    return build_graph(trace, nodes, graph_config(cfg));
  });
}

Partition stage_partition(const HdrGraph& graph, const PipelineConfig& cfg) {
  return in_stage("partition", [&] {
    return cfg.ablations.use_se ? find_partition(graph) : single_module_partition(graph);
  });
}

InterventionPlan stage_plan(const ActivationTrace& trace, const HdrGraph& graph,
                            const Partition& partition, const SensitivityProfile& profile,
                            const PipelineConfig& cfg) {
  return in_stage("plan", [&] { return build_plan(trace, graph, partition, profile, plan_params(cfg)); });
}

PipelineResult run_stages(const ActivationTrace& trace, const PipelineConfig& cfg) {
  PipelineResult r;
  r.profile = stage_sensitivity(trace, cfg);
  r.graph = stage_graph(trace, r.profile, cfg);
  r.partition = stage_partition(r.graph, cfg);
  r.plan = stage_plan(trace, r.graph, r.partition, r.profile, cfg);
  return r;
}

std::string profile_document(const SensitivityProfile& profile, const PipelineConfig& cfg) {
  return with_config(profile_to_json(profile), cfg).dump(2) + "\n";
}

std::string graph_document(const HdrGraph& graph, const PipelineConfig& cfg) {
  return with_config(graph_to_json(graph, graph_config(cfg)), cfg).dump(2) + "\n";
}

std::string partition_document(const Partition& partition, const PipelineConfig& cfg) {
  return with_config(partition_to_json(partition), cfg).dump(2) + "\n";
}

std::string plan_document(const InterventionPlan& plan, const PipelineConfig& cfg) {
  return with_config(plan_to_json(plan), cfg).dump(2) + "\n";
}

std::string summary_document(const PipelineConfig& cfg, const std::filesystem::path& dir) {
  json artifacts = json::object();
  for (const char* name : {kProfileFile, kGraphFile, kPartitionFile, kPlanFile, kDotFile}) {
    const auto path = dir / name;
    if (std::filesystem::exists(path)) artifacts[name] = sha256_file(path);
  }
  json j = {{"version", "1"}, {"artifacts", std::move(artifacts)}};
  return with_config(std::move(j), cfg).dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_artifact(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("missing upstream artifact: expected " + path.string());
  }
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError("artifact " + path.string() + " is not valid JSON: " + e.what());
  }
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  if (cfg.trace_path.empty()) throw ConfigError("trace_path is required");
  const ActivationTrace trace = in_stage("trace", [&] { return read_trace(cfg.trace_path); });
  PipelineResult r = run_stages(trace, cfg);

  const std::filesystem::path dir = cfg.output_dir;
  write_text(dir / kProfileFile, profile_document(r.profile, cfg));
  write_text(dir / kGraphFile, graph_document(r.graph, cfg));
  write_text(dir / kPartitionFile, partition_document(r.partition, cfg));
  write_text(dir / kPlanFile, plan_document(r.plan, cfg));
  write_text(dir / kDotFile, export_dot(r.graph, &trace, &r.partition));
  write_text(dir / kSummaryFile, summary_document(cfg, dir));
  return r;
}

}  // namespace pathcut
