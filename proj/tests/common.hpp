#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedpart/data.hpp"
#include "fedpart/federation.hpp"
#include "fedpart/nn.hpp"

namespace fedpart::testing {

inline ModelSpec mlp(std::size_t in, std::size_t hidden, std::size_t classes) {
  ModelSpec spec;
  spec.input_shape = {in};
  spec.layers = {LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, classes)};
  spec.specific_from = 2;
  spec.num_classes = classes;
  return spec;
}

inline Batch random_batch(const ModelSpec& spec, std::size_t b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, spec.num_classes - 1);
  const std::size_t row = Tensor::element_count(spec.input_shape);
  Batch batch;
  batch.inputs = Tensor::zeros({b, row});
  for (auto& v : batch.inputs.data) v = g(rng);
  for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(label(rng));
  return batch;
}

inline ParamSet random_params(const ModelSpec& spec, std::uint64_t seed, double scale = 0.5) {
  const ParamSet zero = ParamSet::zeros(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(zero.size());
  for (auto& x : v) x = g(rng);
  return zero.with_values(std::move(v));
}

// Blob data split into `k` clients, each with a local test set.
inline std::vector<ClientShard> blob_shards(std::size_t k, PartitionPolicy policy,
                                            std::uint64_t seed, std::size_t classes = 4,
                                            std::size_t per_class = 40, std::size_t dim = 6) {
  const Dataset data = gen_blobs(classes, per_class, dim, 0.8, seed);
  PartitionPlan plan;
  plan.policy = policy;
  plan.num_clients = k;
  plan.alpha = 1.0;
  plan.classes_per_client = classes / k > 0 ? classes / k : 1;
  plan.seed = seed + 1;
  auto shards = partition(data, plan);
  for (auto& s : shards) s = train_test_split(s, 0.25, seed + 2 + s.client_id);
  return shards;
}

inline FederationConfig small_config(std::size_t k, std::size_t c, std::size_t t, Strategy s) {
  FederationConfig cfg;
  cfg.num_clients = k;
  cfg.clients_per_round = c;
  cfg.max_rounds = t;
  cfg.local_epochs = 1;
  cfg.lr = 0.1;
  cfg.batch_size = 8;
  cfg.strategy = s;
  cfg.seed_selection = 11;
  cfg.seed_init = 12;
  cfg.seed_train = 13;
  cfg.threads = 1;
  return cfg;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fedpart_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fedpart::testing
