#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedpart/data.hpp"
#include "fedpart/nn.hpp"
#include "fedpart/strategy.hpp"

namespace fedpart {

// Invalid experiment configuration. `key` is the dotted path of the offending
// entry, e.g. "federation.C".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class Generator { Blobs, ConflictingModes, Csv };

struct DataConfig {
  Generator generator = Generator::Blobs;
  std::size_t num_classes = 10;
  std::size_t per_class = 100;
  std::size_t dim = 16;
  double spread = 1.0;
  std::size_t num_modes = 2;
  bool label_conflict = true;
  std::filesystem::path csv_path;
  PartitionPolicy partition = PartitionPolicy::Iid;
  double alpha = 0.5;
  std::size_t classes_per_client = 2;
  double test_frac = 0.2;
};

struct SeedConfig {
  std::uint64_t init = 0;
  std::uint64_t selection = 0;
  std::uint64_t train = 0;
  std::uint64_t data = 0;
};

struct OutputConfig {
  std::filesystem::path csv = "metrics.csv";
  std::optional<std::filesystem::path> checkpoint;
};

struct ExperimentConfig {
  ModelSpec model;
  DataConfig data;
  FederationConfig federation;
  SeedConfig seeds;
  OutputConfig output;
  std::optional<double> report_target;  // rounds_to_target in the summary
};

// "DENSE(4,8)", "RELU", "CONV1D(1,4,3)", "FLATTEN".
LayerSpec parse_layer(std::string_view text);
// Comma-separated list of the above, e.g. "DENSE(4,8),RELU,DENSE(8,3)".
std::vector<LayerSpec> parse_layers(std::string_view text);

nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const nlohmann::json& j, const std::string& key = "model");

// Strict parse: unknown keys and out-of-range values throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Only the data section is required; other sections are checked if present.
DataConfig parse_data_section(const nlohmann::json& j);

struct GeneratedData {
  Dataset dataset;
  std::optional<std::vector<std::size_t>> mode_tags;
};

GeneratedData build_dataset(const DataConfig& data, std::uint64_t seed);

// Dataset -> partition -> per-client train/test split, all seeded from
// seeds.data. Throws ConfigError if the data disagrees with the model head.
std::vector<ClientShard> build_shards(const ExperimentConfig& cfg);

}  // namespace fedpart
