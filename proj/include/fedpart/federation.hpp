#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "fedpart/client.hpp"
#include "fedpart/metrics.hpp"
#include "fedpart/strategy.hpp"

namespace fedpart {

struct Message {
  enum class Direction { Downlink, Uplink };

  std::size_t round = 0;
  std::size_t client_id = 0;
  Direction direction = Direction::Downlink;
  std::vector<double> payload;
};

// Records every parameter payload exchanged between server and clients.
// Safe to append from concurrent client updates.
class MessageTrace {
 public:
  void record(Message message);
  // Messages sorted by (round, direction, client id).
  std::vector<Message> messages() const;

 private:
  mutable std::mutex mu_;
  std::vector<Message> messages_;
};

// Round-0 state: every client starts from the full initial vector.
ClientState client_init(std::size_t client_id, ClientShard shard, const ParamSet& full_init);

// Sorted ids of the C clients picked in round t. Depends only on
// (seed_selection, t, K, C), never on the strategy.
std::vector<std::size_t> select_clients(std::size_t round, const FederationConfig& cfg);

// Downloads `shared_in` into the client's shared slice, then runs E epochs of
// minibatch SGD over all of the client's parameters. `client` keeps the
// updated private slice; only the shared slice is returned.
ClientUpdateResult client_update(ClientState& client, std::span<const double> shared_in,
                                 const ModelSpec& spec, const FederationConfig& cfg,
                                 std::size_t round);

// Sample-count-weighted mean of the updates' shared slices, reduced in
// ascending client id order.
std::vector<double> aggregate(std::span<const ClientUpdateResult> updates);

struct RoundOutcome {
  ServerState server;
  RoundLog log;
};

// One round: select, broadcast, local updates, aggregate, evaluate all
// clients. `cumulative_bytes_before` seeds the log's running byte total.
RoundOutcome run_round(const ServerState& server, std::vector<ClientState>& clients,
                       const ModelSpec& spec, const FederationConfig& cfg,
                       std::uint64_t cumulative_bytes_before = 0, MessageTrace* trace = nullptr);

struct Federation {
  ServerState server;
  std::vector<ClientState> clients;
};

// Initializes the server from seed_init and broadcasts to every shard.
Federation init_federation(const ModelSpec& spec, const FederationConfig& cfg,
                           std::vector<ClientShard> shards);

ExperimentResult run_experiment(const FederationConfig& cfg, const ModelSpec& spec,
                                std::vector<ClientShard> shards, MessageTrace* trace = nullptr,
                                Federation* final_state = nullptr);

}  // namespace fedpart
