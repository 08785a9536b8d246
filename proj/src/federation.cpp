#include "fedpart/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "fedpart/numeric.hpp"
#include "fedpart/parallel.hpp"

namespace fedpart {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::FedAvg: return "FED_AVG";
    case Strategy::Hdafl: return "HDAFL";
    case Strategy::LgComplement: return "LG_COMPLEMENT";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::FedAvg, Strategy::Hdafl, Strategy::LgComplement}) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

SliceRange shared_range(Strategy strategy, const ParamSet& layout) {
  switch (strategy) {
    case Strategy::FedAvg: return {0, layout.size()};
    case Strategy::Hdafl: return layout.generic_range();
    case Strategy::LgComplement: return layout.specific_range();
  }
  return {0, layout.size()};
}

SliceRange shared_range(Strategy strategy, const ModelSpec& spec) {
  return shared_range(strategy, ParamSet::zeros(spec));
}

void FederationConfig::validate() const {
  if (num_clients < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    throw Error(ErrorCode::BadC, "C must lie in [1, K]");
  }
  if (max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "lr must be > 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
}

std::size_t resolve_threads(std::size_t requested) {
  if (const char* env = std::getenv("FEDPART_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

void MessageTrace::record(Message message) {
  std::lock_guard lock(mu_);
  messages_.push_back(std::move(message));
}

std::vector<Message> MessageTrace::messages() const {
  std::vector<Message> out;
  {
    std::lock_guard lock(mu_);
    out = messages_;
  }
  std::ranges::stable_sort(out, [](const Message& a, const Message& b) {
    return std::tie(a.round, a.direction, a.client_id) < std::tie(b.round, b.direction, b.client_id);
  });
  return out;
}

ClientState client_init(std::size_t client_id, ClientShard shard, const ParamSet& full_init) {
  if (shard.client_id != client_id || shard.n_k != shard.train.size()) {
    throw Error(ErrorCode::LayoutMismatch, "shard does not belong to this client", client_id);
  }
  ClientState client;
  client.client_id = client_id;
  client.n_k = shard.n_k;
  client.shard = std::move(shard);
  client.params = full_init;
  return client;
}

std::vector<std::size_t> select_clients(std::size_t round, const FederationConfig& cfg) {
  if (cfg.clients_per_round < 1 || cfg.clients_per_round > cfg.num_clients) {
    throw Error(ErrorCode::BadC, "C must lie in [1, K]");
  }
  std::vector<std::size_t> population(cfg.num_clients);
  std::iota(population.begin(), population.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(cfg.clients_per_round);
  std::mt19937_64 rng(derive_seed({cfg.seed_selection, round}));
  // std::sample keeps population order, so the result comes out sorted.
  std::sample(population.begin(), population.end(), std::back_inserter(picked),
              cfg.clients_per_round, rng);
  return picked;
}

ClientUpdateResult client_update(ClientState& client, std::span<const double> shared_in,
                                 const ModelSpec& spec, const FederationConfig& cfg,
                                 std::size_t round) {
  const SliceRange range = shared_range(cfg.strategy, client.params);
  if (shared_in.size() != range.length) {
    throw Error(ErrorCode::LayoutMismatch, "broadcast slice does not match the strategy slice",
                client.client_id);
  }
  ParamSet params = client.params.with_slice(range, shared_in);

  const Dataset& train = client.shard.train;
  const std::size_t n = train.size();
  const std::size_t row = train.feature_size();
  std::vector<std::size_t> order(n);
  CompensatedSum loss_sum;
  std::size_t steps = 0;

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed({cfg.seed_train, client.client_id, round, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Batch batch;
      batch.inputs = Tensor::zeros({count, row});
      batch.labels.resize(count);
      for (std::size_t s = 0; s < count; ++s) {
        const std::size_t idx = order[start + s];
        std::ranges::copy(train.features.row(idx), batch.inputs.data.begin() +
                                                       static_cast<std::ptrdiff_t>(s * row));
        batch.labels[s] = train.labels[idx];
      }
      const auto step = loss_and_grad(spec, params, batch);
      params = sgd_step(params, step.grads, cfg.lr);
      loss_sum.add(step.loss);
      ++steps;
    }
  }
  client.params = std::move(params);

  ClientUpdateResult result;
  result.client_id = client.client_id;
  const auto slice = client.params.slice(range);
  result.shared_slice.assign(slice.begin(), slice.end());
  result.n_k = client.n_k;
  result.train_loss = steps == 0 ? 0.0 : loss_sum.value() / static_cast<double>(steps);
  return result;
}

std::vector<double> aggregate(std::span<const ClientUpdateResult> updates) {
  if (updates.empty()) throw Error(ErrorCode::EmptyUpdateSet, "no client updates to aggregate");
  std::vector<const ClientUpdateResult*> sorted;
  sorted.reserve(updates.size());
  for (const auto& u : updates) sorted.push_back(&u);
  std::ranges::stable_sort(sorted, {}, &ClientUpdateResult::client_id);

  const std::size_t len = sorted.front()->shared_slice.size();
  double total = 0.0;
  for (const auto* u : sorted) {
    if (u->shared_slice.size() != len) {
      throw Error(ErrorCode::LengthMismatch, "update slices differ in length", u->client_id);
    }
    total += static_cast<double>(u->n_k);
  }
  const bool uniform = !(total > 0.0);
  if (uniform) total = static_cast<double>(sorted.size());

  // Accumulate offsets from the first update: identical inputs come back
  // bit-identical, and clamping to the per-component range keeps rounding
  // from escaping the convex hull.
  const auto& ref = sorted.front()->shared_slice;
  std::vector<double> out(len);
  for (std::size_t j = 0; j < len; ++j) {
    double acc = 0.0;
    double lo = ref[j];
    double hi = ref[j];
    for (const auto* u : sorted) {
      const double x = u->shared_slice[j];
      const double w = uniform ? 1.0 : static_cast<double>(u->n_k);
      acc += w * (x - ref[j]);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    out[j] = std::clamp(ref[j] + acc / total, lo, hi);
  }
  return out;
}

RoundOutcome run_round(const ServerState& server, std::vector<ClientState>& clients,
                       const ModelSpec& spec, const FederationConfig& cfg,
                       std::uint64_t cumulative_bytes_before, MessageTrace* trace) {
  if (clients.size() != cfg.num_clients) {
    throw Error(ErrorCode::LayoutMismatch, "client count does not match K");
  }
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].client_id != k) {
      throw Error(ErrorCode::LayoutMismatch, "clients must be stored by id", k);
    }
  }
  const std::size_t round = server.round + 1;
  const auto selected = select_clients(round, cfg);
  const std::size_t threads = resolve_threads(cfg.threads);

  if (trace != nullptr) {
    for (std::size_t k : selected) {
      trace->record({round, k, Message::Direction::Downlink, server.shared_params});
    }
  }

  std::vector<ClientUpdateResult> updates(selected.size());
  parallel_for(selected.size(), threads, [&](std::size_t i) {
    updates[i] = client_update(clients[selected[i]], server.shared_params, spec, cfg, round);
    if (trace != nullptr) {
      trace->record({round, selected[i], Message::Direction::Uplink, updates[i].shared_slice});
    }
  });

  RoundOutcome outcome;
  outcome.server.round = round;
  outcome.server.shared_params = aggregate(updates);

  const auto eval = eval_all_clients(spec, cfg.strategy, clients, outcome.server.shared_params,
                                     threads);
  const auto cost = comm_cost_round(cfg.strategy, spec, selected.size());
  outcome.log.round = round;
  outcome.log.mean_client_accuracy = eval.accuracy;
  outcome.log.mean_client_loss = eval.mean_loss;
  outcome.log.uplink_bytes = cost.uplink_bytes;
  outcome.log.downlink_bytes = cost.downlink_bytes;
  outcome.log.cumulative_bytes = cumulative_bytes_before + cost.total();
  outcome.log.selected = selected;
  return outcome;
}

Federation init_federation(const ModelSpec& spec, const FederationConfig& cfg,
                           std::vector<ClientShard> shards) {
  cfg.validate();
  validate_spec(spec);
  if (shards.size() != cfg.num_clients) {
    throw Error(ErrorCode::InvalidArgument,
                "expected " + std::to_string(cfg.num_clients) + " shards, got " +
                    std::to_string(shards.size()));
  }
  const ParamSet init = init_params(spec, cfg.seed_init);
  Federation fed;
  const auto shared = init.slice(shared_range(cfg.strategy, init));
  fed.server.shared_params.assign(shared.begin(), shared.end());
  fed.clients.reserve(shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    fed.clients.push_back(client_init(k, std::move(shards[k]), init));
  }
  return fed;
}

ExperimentResult run_experiment(const FederationConfig& cfg, const ModelSpec& spec,
                                std::vector<ClientShard> shards, MessageTrace* trace,
                                Federation* final_state) {
  const auto start = std::chrono::steady_clock::now();
  Federation fed = init_federation(spec, cfg, std::move(shards));

  ExperimentResult result;
  result.config = cfg;
  result.spec = spec;
  std::uint64_t cumulative = 0;
  for (std::size_t t = 0; t < cfg.max_rounds; ++t) {
    auto outcome = run_round(fed.server, fed.clients, spec, cfg, cumulative, trace);
    fed.server = std::move(outcome.server);
    cumulative = outcome.log.cumulative_bytes;
    const bool reached =
        cfg.target_accuracy && outcome.log.mean_client_accuracy >= *cfg.target_accuracy;
    result.logs.push_back(std::move(outcome.log));
    if (reached) break;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (final_state != nullptr) *final_state = std::move(fed);
  return result;
}

}  // namespace fedpart
