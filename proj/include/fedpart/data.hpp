#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedpart/tensor.hpp"

namespace fedpart {

struct Dataset {
  Tensor features;  // [n, ...feature dims]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t feature_size() const { return features.row_size(); }

  // Rows at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
  // Throws if the feature rows, labels and num_classes disagree.
  void check() const;
};

struct ClientShard {
  std::size_t client_id = 0;
  Dataset train;
  Dataset test;
  std::size_t n_k = 0;
};

enum class PartitionPolicy { Iid, NonIidDirichlet, Disjoint };

struct PartitionPlan {
  PartitionPolicy policy = PartitionPolicy::Iid;
  std::size_t num_clients = 1;
  double alpha = 0.5;                  // NonIidDirichlet
  std::size_t classes_per_client = 2;  // Disjoint
  std::uint64_t seed = 0;
};

struct ModalDataset {
  Dataset data;
  std::vector<std::size_t> mode_tags;
};

Dataset gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                  std::uint64_t seed);

// Each class gets `num_modes` cluster centers. With `label_conflict`, mode m
// of class c sits on the base center of class (c + m) mod num_classes, so the
// same point carries different labels in different modes.
ModalDataset gen_conflicting_modes(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                   double spread, std::size_t num_modes, std::uint64_t seed,
                                   bool label_conflict = true);

// Splits `dataset` into plan.num_clients shards; every sample lands in the
// shard's train set and test sets are left empty (see train_test_split).
// With mode tags, the Dirichlet policy skews (class, mode) groups
// independently so modes of one class spread over different clients.
std::vector<ClientShard> partition(const Dataset& dataset, const PartitionPlan& plan,
                                   std::optional<std::span<const std::size_t>> mode_tags = std::nullopt);

ClientShard train_test_split(const ClientShard& shard, double test_frac, std::uint64_t seed);

Dataset load_csv(const std::filesystem::path& path,
                 std::optional<std::size_t> num_classes = std::nullopt);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace fedpart
