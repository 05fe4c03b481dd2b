#include "pathcut/trace_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "pathcut/digest.hpp"
#include "pathcut/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pathcut {

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string matrix_file_name(const std::string& condition, const char* kind) {
  return condition + "." + kind + ".f32";
}

// Little-endian binary32 encoding independent of host byte order.
std::string encode_matrix(const Matrix& m) {
  std::string bytes(m.data().size() * 4, '\0');
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(m.data()[i]);
    bytes[4 * i + 0] = static_cast<char>(bits & 0xffu);
    bytes[4 * i + 1] = static_cast<char>((bits >> 8) & 0xffu);
    bytes[4 * i + 2] = static_cast<char>((bits >> 16) & 0xffu);
    bytes[4 * i + 3] = static_cast<char>((bits >> 24) & 0xffu);
  }
  return bytes;
}

Matrix decode_matrix(const std::string& bytes, std::size_t rows, std::size_t cols) {
  std::vector<float> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                               (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
    values[i] = std::bit_cast<float>(bits);
  }
  return Matrix(rows, cols, std::move(values));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void check_finite(const Matrix& m, const std::string& condition, const char* kind,
                  std::vector<std::string>& out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream msg;
        msg << "non-finite entry at (" << condition << ", " << r << ", " << c << ") in "
            << kind;
        out.push_back(msg.str());
        return;
      }
    }
  }
}

}  // namespace

std::string to_string(const NeuronId& id) {
  return "L" + std::to_string(id.layer) + "." + std::to_string(id.index);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("matrix payload does not match its shape");
  }
}

const ConditionData& ActivationTrace::condition(const std::string& name) const {
  auto it = conditions.find(name);
  if (it == conditions.end()) throw DataError("unknown condition: " + name);
  return it->second;
}

std::vector<std::string> validate_trace(const ActivationTrace& trace) {
  std::vector<std::string> violations;
  const std::size_t n = trace.neurons.size();

  if (n == 0) violations.emplace_back("neuron list is empty");
  std::set<NeuronId> seen;
  for (std::size_t k = 0; k < n; ++k) {
    if (!seen.insert(trace.neurons[k]).second) {
      violations.push_back("duplicate neuron " + to_string(trace.neurons[k]) + " at ordinal " +
                           std::to_string(k));
    }
  }

  for (const char* required : {kFact, kHall}) {
    if (!trace.has_condition(required)) {
      violations.push_back(std::string("missing required condition ") + required);
    }
  }

  for (const auto& [name, cond] : trace.conditions) {
    const Matrix& a = cond.activations;
    const Matrix& s = cond.sensitivities;
    if (a.rows() < 2) violations.push_back("sample_count < 2 for " + name);
    if (a.rows() != s.rows()) {
      violations.push_back("row-count mismatch for " + name + ": activations " +
                           std::to_string(a.rows()) + " vs sensitivities " +
                           std::to_string(s.rows()));
    }
    if (a.cols() != n) {
      violations.push_back("column mismatch for " + name + " activations: " +
                           std::to_string(a.cols()) + " columns, " + std::to_string(n) +
                           " neurons");
    }
    if (s.cols() != n) {
      violations.push_back("column mismatch for " + name + " sensitivities: " +
                           std::to_string(s.cols()) + " columns, " + std::to_string(n) +
                           " neurons");
    }
    check_finite(a, name, "activations", violations);
    check_finite(s, name, "sensitivities", violations);
  }
  return violations;
}

void write_trace(const ActivationTrace& trace, const fs::path& destination) {
  if (auto violations = validate_trace(trace); !violations.empty()) {
    throw DataError("invalid trace: " + violations.front());
  }
  fs::create_directories(destination);

  json manifest;
  manifest["version"] = kTraceFormatVersion;
  json neurons = json::array();
  for (const auto& id : trace.neurons) neurons.push_back({{"layer", id.layer}, {"index", id.index}});
  manifest["neurons"] = std::move(neurons);
  json conditions = json::object();
  for (const auto& [name, cond] : trace.conditions) {
    const std::string act = matrix_file_name(name, "activations");
    const std::string sen = matrix_file_name(name, "sensitivities");
    write_file(destination / act, encode_matrix(cond.activations));
    write_file(destination / sen, encode_matrix(cond.sensitivities));
    conditions[name] = {{"samples", cond.samples()}, {"activations", act}, {"sensitivities", sen}};
  }
  manifest["conditions"] = std::move(conditions);
  if (!trace.metadata.empty()) manifest["metadata"] = trace.metadata;
  write_file(destination / kManifestName, manifest.dump(2) + "\n");
}

ActivationTrace read_trace(const fs::path& source) {
  const fs::path manifest_path = source / kManifestName;
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  try {
    const auto version = manifest.at("version").get<std::string>();
    if (version != kTraceFormatVersion) {
      throw DataError("unsupported trace version \"" + version + "\" in " +
                      manifest_path.string());
    }

    ActivationTrace trace;
    for (const auto& n : manifest.at("neurons")) {
      trace.neurons.push_back({n.at("layer").get<std::uint32_t>(), n.at("index").get<std::uint32_t>()});
    }
    const std::size_t cols = trace.neurons.size();

    for (const auto& [name, entry] : manifest.at("conditions").items()) {
      const auto samples = entry.at("samples").get<std::size_t>();
      ConditionData cond;
      for (const char* kind : {"activations", "sensitivities"}) {
        const fs::path file = source / entry.at(kind).get<std::string>();
        const std::string bytes = read_file(file);
        const std::size_t expected = samples * cols * 4;
        if (bytes.size() != expected) {
          throw DataError("shape mismatch in " + file.string() + ": expected " +
                          std::to_string(expected) + " bytes for " + std::to_string(samples) +
                          "x" + std::to_string(cols) + ", found " + std::to_string(bytes.size()));
        }
        Matrix m = decode_matrix(bytes, samples, cols);
        if (std::string(kind) == "activations") {
          cond.activations = std::move(m);
        } else {
          cond.sensitivities = std::move(m);
        }
      }
      trace.conditions.emplace(name, std::move(cond));
    }
    if (manifest.contains("metadata")) trace.metadata = manifest["metadata"];

    if (auto violations = validate_trace(trace); !violations.empty()) {
      throw DataError("invalid trace " + source.string() + ": " + violations.front());
    }
    return trace;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

std::string trace_digest(const ActivationTrace& trace) {
  std::string buffer;
  for (const auto& id : trace.neurons) buffer += to_string(id) + ";";
  for (const auto& [name, cond] : trace.conditions) {
    buffer += name + ":" + std::to_string(cond.samples()) + ";";
    buffer += encode_matrix(cond.activations);
    buffer += encode_matrix(cond.sensitivities);
  }
  return sha256_hex(buffer);
}

}  // namespace pathcut
