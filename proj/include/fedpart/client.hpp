#pragma once

#include <cstddef>
#include <vector>

#include "fedpart/data.hpp"
#include "fedpart/nn.hpp"

namespace fedpart {

struct ServerState {
  std::size_t round = 0;
  std::vector<double> shared_params;  // the strategy's shared slice
};

// A client's full parameter vector; the non-shared part never leaves it.
struct ClientState {
  std::size_t client_id = 0;
  ClientShard shard;
  ParamSet params;
  std::size_t n_k = 0;
};

struct ClientUpdateResult {
  std::size_t client_id = 0;
  std::vector<double> shared_slice;
  std::size_t n_k = 0;
  double train_loss = 0.0;
};

}  // namespace fedpart
