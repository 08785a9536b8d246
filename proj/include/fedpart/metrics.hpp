#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpart/client.hpp"
#include "fedpart/strategy.hpp"

namespace fedpart {

inline constexpr std::uint64_t kBytesPerParam = 4;

struct RoundLog {
  std::size_t round = 0;
  double mean_client_accuracy = 0.0;
  double mean_client_loss = 0.0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  std::uint64_t cumulative_bytes = 0;
  std::vector<std::size_t> selected;

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

struct ExperimentResult {
  FederationConfig config;
  ModelSpec spec;
  std::vector<RoundLog> logs;
  double wall_seconds = 0.0;
};

struct CommCost {
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;

  std::uint64_t total() const { return uplink_bytes + downlink_bytes; }
};

// Parameter payload per round: C clients, 4 bytes per shared parameter,
// counted once in each direction.
CommCost comm_cost_round(Strategy strategy, const ModelSpec& spec, std::size_t clients_per_round);

// Client `client`'s parameters as seen at evaluation time: the server's
// current shared slice combined with the client's own private slice.
ParamSet evaluation_params(const ClientState& client, Strategy strategy,
                           std::span<const double> server_shared);

// Unweighted mean over all clients of (accuracy, loss) on each client's own
// test set. Throws EmptyTestSet(client_id).
EvalResult eval_all_clients(const ModelSpec& spec, Strategy strategy,
                            std::span<const ClientState> clients,
                            std::span<const double> server_shared, std::size_t threads = 1);

std::optional<std::size_t> rounds_to_target(const ExperimentResult& result, double target_accuracy);

double total_megabytes(const ExperimentResult& result);

std::string format_csv(const ExperimentResult& result);
void write_csv(const ExperimentResult& result, const std::filesystem::path& path);
// Parses a CSV produced by write_csv. Used for round-trip checks.
std::vector<RoundLog> read_csv(const std::filesystem::path& path);

}  // namespace fedpart
