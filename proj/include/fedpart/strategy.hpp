#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "fedpart/nn.hpp"

namespace fedpart {

// Which slice of the parameter vector is exchanged with the server.
enum class Strategy {
  FedAvg,        // everything
  Hdafl,         // generic slice; the classification head stays on the client
  LgComplement,  // specific slice; feature extractor stays on the client
};

std::string_view to_string(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view name);

SliceRange shared_range(Strategy strategy, const ParamSet& layout);
SliceRange shared_range(Strategy strategy, const ModelSpec& spec);

struct FederationConfig {
  std::size_t num_clients = 1;        // K
  std::size_t clients_per_round = 1;  // C
  std::size_t max_rounds = 1;         // T
  std::size_t local_epochs = 1;       // E
  double lr = 0.1;
  std::size_t batch_size = 10;
  Strategy strategy = Strategy::Hdafl;
  std::uint64_t seed_selection = 0;
  std::uint64_t seed_init = 0;
  std::uint64_t seed_train = 0;
  std::optional<double> target_accuracy;  // early stop, off by default
  std::size_t threads = 0;                // 0: FEDPART_THREADS or hardware

  // Throws Error(BadC) for C outside [1, K], InvalidArgument otherwise.
  void validate() const;
};

// Worker count: FEDPART_THREADS when set, else `requested`, else hardware.
std::size_t resolve_threads(std::size_t requested);

}  // namespace fedpart
