#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pathcut {

inline constexpr const char* kFact = "fact";
inline constexpr const char* kHall = "hall";
inline constexpr const char* kGeneral = "general";
inline constexpr const char* kTraceFormatVersion = "1";

struct NeuronId {
  std::uint32_t layer = 0;
  std::uint32_t index = 0;

  auto operator<=>(const NeuronId&) const = default;
};

std::string to_string(const NeuronId& id);

// Dense row-major matrix of binary32 values; rows are samples, columns are
// neuron ordinals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct ConditionData {
  Matrix activations;
  Matrix sensitivities;

  std::size_t samples() const { return activations.rows(); }
  bool operator==(const ConditionData&) const = default;
};

struct ActivationTrace {
  std::vector<NeuronId> neurons;
  std::map<std::string, ConditionData> conditions;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t neuron_count() const { return neurons.size(); }
  bool has_condition(const std::string& name) const { return conditions.count(name) != 0; }
  // Throws DataError naming the condition when it is absent.
  const ConditionData& condition(const std::string& name) const;

  bool operator==(const ActivationTrace&) const = default;
};

// Every invariant violation found, as human-readable messages. Empty iff the
// trace is well formed.
std::vector<std::string> validate_trace(const ActivationTrace& trace);

// Writes manifest.json plus two raw little-endian binary32 files per
// condition. Throws DataError on invariant violations, std::runtime_error on
// I/O failure.
void write_trace(const ActivationTrace& trace, const std::filesystem::path& destination);

ActivationTrace read_trace(const std::filesystem::path& source);

// Stable content digest over neuron ids and matrix payloads.
std::string trace_digest(const ActivationTrace& trace);

}  // namespace pathcut
