#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <bit>
#include <random>
#include <set>
#include <unordered_set>

#include "common.hpp"
#include "fedpart/federation.hpp"

using namespace fedpart;
using fedpart::testing::blob_shards;
using fedpart::testing::mlp;
using fedpart::testing::small_config;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

ClientUpdateResult update(std::size_t id, std::vector<double> slice, std::size_t n) {
  return {id, std::move(slice), n, 0.0};
}

}  // namespace

TEST_CASE("strategy slices") {
  const auto spec = mlp(4, 5, 3);
  const auto layout = ParamSet::zeros(spec);
  CHECK(shared_range(Strategy::FedAvg, layout) == SliceRange{0, layout.size()});
  CHECK(shared_range(Strategy::Hdafl, layout) == SliceRange{0, 25});
  CHECK(shared_range(Strategy::LgComplement, layout) == SliceRange{25, 18});
  for (auto s : {Strategy::FedAvg, Strategy::Hdafl, Strategy::LgComplement}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_FALSE(parse_strategy("FEDPROX").has_value());
}

TEST_CASE("client_init copies the initial vector to every client") {
  const auto spec = mlp(6, 5, 4);
  auto cfg = small_config(3, 2, 1, Strategy::Hdafl);
  const auto fed = init_federation(spec, cfg, blob_shards(3, PartitionPolicy::Iid, 1));
  const auto init = init_params(spec, cfg.seed_init);
  for (const auto& c : fed.clients) {
    CHECK(c.params == init);
    CHECK(c.params == fed.clients.front().params);
  }
  CHECK(std::ranges::equal(fed.server.shared_params, init.generic()));

  auto single = small_config(1, 1, 1, Strategy::Hdafl);
  CHECK(init_federation(spec, single, blob_shards(1, PartitionPolicy::Iid, 1)).clients.size() == 1);

  auto shards = blob_shards(2, PartitionPolicy::Iid, 1);
  CHECK(code_of([&] { client_init(1, shards[0], init); }) == ErrorCode::LayoutMismatch);
}

TEST_CASE("select_clients") {
  auto cfg = small_config(7, 7, 1, Strategy::Hdafl);
  CHECK(select_clients(3, cfg) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});

  cfg = small_config(100, 10, 1, Strategy::FedAvg);
  auto other = cfg;
  other.strategy = Strategy::Hdafl;
  std::set<std::vector<std::size_t>> distinct;
  for (std::size_t t = 1; t <= 100; ++t) {
    const auto s = select_clients(t, cfg);
    CHECK(s == select_clients(t, other));
    CHECK(s.size() == 10);
    CHECK(std::ranges::is_sorted(s));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
    CHECK(s.back() < 100);
    distinct.insert(s);
  }
  CHECK(distinct.size() >= 2);

  cfg.clients_per_round = 0;
  CHECK(code_of([&] { select_clients(1, cfg); }) == ErrorCode::BadC);
  cfg.clients_per_round = 101;
  CHECK(code_of([&] { select_clients(1, cfg); }) == ErrorCode::BadC);
}

TEST_CASE("client_update") {
  const auto spec = mlp(6, 5, 4);
  auto cfg = small_config(2, 2, 1, Strategy::Hdafl);
  auto fed = init_federation(spec, cfg, blob_shards(2, PartitionPolicy::Iid, 3));
  auto& client = fed.clients[0];

  SUBCASE("no epochs returns the broadcast unchanged") {
    cfg.local_epochs = 0;
    std::vector<double> shared(fed.server.shared_params.size(), 0.25);
    const auto before = client.params.specific();
    const std::vector<double> private_before(before.begin(), before.end());
    const auto r = client_update(client, shared, spec, cfg, 1);
    CHECK(r.shared_slice == shared);
    CHECK(std::ranges::equal(client.params.specific(), private_before));
    CHECK(r.n_k == client.n_k);
  }
  SUBCASE("one full-batch epoch equals one hand SGD step") {
    cfg.batch_size = client.shard.train.size();
    ModelSpec single{{6}, {LayerSpec::dense(6, 4)}, 1, 4};
    cfg.strategy = Strategy::FedAvg;
    auto f = init_federation(single, cfg, blob_shards(2, PartitionPolicy::Iid, 3));
    auto& c = f.clients[0];
    const ParamSet start = c.params;
    Batch batch{c.shard.train.features, c.shard.train.labels};
    const auto step = loss_and_grad(single, start, batch);
    std::vector<double> expected(start.values().begin(), start.values().end());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] -= cfg.lr * step.grads.values[i];
    const auto r = client_update(c, f.server.shared_params, single, cfg, 1);
    REQUIRE(r.shared_slice.size() == expected.size());
    // Shuffled row order changes the summation order, not the value.
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(r.shared_slice[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
    CHECK(r.train_loss == doctest::Approx(step.loss).epsilon(1e-12));
  }
  SUBCASE("training moves both slices but only the shared one is returned") {
    const ParamSet before = client.params;
    const auto r = client_update(client, fed.server.shared_params, spec, cfg, 1);
    CHECK(r.shared_slice.size() == before.boundary());
    CHECK_FALSE(std::ranges::equal(client.params.specific(), before.specific()));
    CHECK(std::ranges::equal(client.params.generic(), r.shared_slice));
  }
  SUBCASE("wrong broadcast length") {
    std::vector<double> bad(3, 0.0);
    CHECK(code_of([&] { client_update(client, bad, spec, cfg, 1); }) == ErrorCode::LayoutMismatch);
  }
}

TEST_CASE("aggregate") {
  CHECK(aggregate(std::vector{update(0, {1.5, -2.0}, 7)}) == std::vector<double>{1.5, -2.0});
  CHECK(aggregate(std::vector{update(0, {0.0}, 1), update(1, {4.0}, 3)}) == std::vector<double>{3.0});

  const std::vector<double> w{0.1, -3.3, 1e-7, 42.0};
  CHECK(aggregate(std::vector{update(0, w, 3), update(4, w, 1), update(2, w, 19)}) == w);

  CHECK(code_of([] { aggregate(std::vector<ClientUpdateResult>{}); }) == ErrorCode::EmptyUpdateSet);
  CHECK(code_of([] { aggregate(std::vector{update(0, {1.0}, 1), update(1, {1.0, 2.0}, 1)}); }) ==
        ErrorCode::LengthMismatch);

  SUBCASE("randomized properties") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 3.0);
    std::uniform_int_distribution<std::size_t> n(1, 500);
    std::uniform_int_distribution<std::size_t> count(1, 9);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t len = count(rng);
      std::vector<ClientUpdateResult> ups;
      const std::size_t m = count(rng);
      for (std::size_t k = 0; k < m; ++k) {
        std::vector<double> v(len);
        for (auto& x : v) x = g(rng);
        ups.push_back(update(m - k, v, n(rng)));  // deliberately unsorted ids
      }
      const auto agg = aggregate(ups);
      const double c = g(rng);
      auto scaled = ups;
      for (auto& u : scaled) {
        for (auto& x : u.shared_slice) x *= c;
      }
      const auto agg_scaled = aggregate(scaled);
      auto reversed = ups;
      std::ranges::reverse(reversed);
      CHECK(aggregate(reversed) == agg);
      for (std::size_t j = 0; j < len; ++j) {
        double lo = ups[0].shared_slice[j];
        double hi = lo;
        for (const auto& u : ups) {
          lo = std::min(lo, u.shared_slice[j]);
          hi = std::max(hi, u.shared_slice[j]);
        }
        CHECK(agg[j] >= lo);
        CHECK(agg[j] <= hi);
        CHECK(std::fabs(agg_scaled[j] - c * agg[j]) <= 1e-12 * std::max(1.0, std::fabs(c * agg[j])));
      }
    }
  }
}

TEST_CASE("run_round protocol") {
  const auto spec = mlp(6, 5, 4);

  SUBCASE("identity round") {
    auto cfg = small_config(1, 1, 1, Strategy::Hdafl);
    cfg.local_epochs = 0;
    auto fed = init_federation(spec, cfg, blob_shards(1, PartitionPolicy::Iid, 2));
    const auto out = run_round(fed.server, fed.clients, spec, cfg);
    CHECK(out.server.shared_params == fed.server.shared_params);
    CHECK(out.server.round == 1);
    CHECK(out.log.selected == std::vector<std::size_t>{0});
  }
  SUBCASE("clients outside the selection are untouched") {
    auto cfg = small_config(4, 2, 1, Strategy::Hdafl);
    auto fed = init_federation(spec, cfg, blob_shards(4, PartitionPolicy::Iid, 2));
    const auto before = fed.clients;
    const auto out = run_round(fed.server, fed.clients, spec, cfg);
    const std::set<std::size_t> picked(out.log.selected.begin(), out.log.selected.end());
    for (std::size_t k = 0; k < 4; ++k) {
      if (!picked.contains(k)) {
        CHECK(fed.clients[k].params == before[k].params);
      } else {
        CHECK_FALSE(fed.clients[k].params == before[k].params);
      }
    }
  }
  SUBCASE("log accounting") {
    auto cfg = small_config(4, 3, 1, Strategy::Hdafl);
    auto fed = init_federation(spec, cfg, blob_shards(4, PartitionPolicy::Iid, 2));
    const auto out = run_round(fed.server, fed.clients, spec, cfg, 1000);
    const auto cost = comm_cost_round(Strategy::Hdafl, spec, 3);
    CHECK(out.log.uplink_bytes == cost.uplink_bytes);
    CHECK(out.log.cumulative_bytes == 1000 + cost.total());
    const auto eval = eval_all_clients(spec, cfg.strategy, fed.clients, out.server.shared_params);
    CHECK(out.log.mean_client_accuracy == eval.accuracy);
    CHECK(out.log.mean_client_loss == eval.mean_loss);
  }
}

TEST_CASE("run_experiment") {
  const auto spec = mlp(6, 5, 4);
  auto cfg = small_config(4, 2, 3, Strategy::Hdafl);
  const auto shards = blob_shards(4, PartitionPolicy::NonIidDirichlet, 5);

  const auto a = run_experiment(cfg, spec, shards);
  CHECK(a.logs.size() == 3);
  const auto b = run_experiment(cfg, spec, shards);
  CHECK(a.logs == b.logs);

  auto fedavg = cfg;
  fedavg.strategy = Strategy::FedAvg;
  const auto c = run_experiment(fedavg, spec, shards);
  for (std::size_t t = 0; t < 3; ++t) CHECK(c.logs[t].selected == a.logs[t].selected);

  SUBCASE("early stop at target") {
    auto stop = cfg;
    stop.max_rounds = 50;
    stop.target_accuracy = 0.0;
    CHECK(run_experiment(stop, spec, shards).logs.size() == 1);
  }
  SUBCASE("worker count does not change results") {
    auto wide = cfg;
    wide.threads = 4;
    wide.clients_per_round = 4;
    auto narrow = wide;
    narrow.threads = 1;
    Federation fa;
    Federation fb;
    const auto ra = run_experiment(wide, spec, shards, nullptr, &fa);
    const auto rb = run_experiment(narrow, spec, shards, nullptr, &fb);
    CHECK(ra.logs == rb.logs);
    CHECK(fa.server.shared_params == fb.server.shared_params);
    for (std::size_t k = 0; k < 4; ++k) CHECK(fa.clients[k].params == fb.clients[k].params);
  }
}

TEST_CASE("empty specific segment makes HDAFL and FED_AVG identical") {
  auto spec = mlp(6, 5, 4);
  spec.specific_from = spec.layers.size();
  const auto shards = blob_shards(4, PartitionPolicy::Iid, 8);
  auto h = small_config(4, 2, 5, Strategy::Hdafl);
  auto f = h;
  f.strategy = Strategy::FedAvg;
  Federation fh;
  Federation ff;
  CHECK(run_experiment(h, spec, shards, nullptr, &fh).logs ==
        run_experiment(f, spec, shards, nullptr, &ff).logs);
  CHECK(fh.server.shared_params == ff.server.shared_params);
}

TEST_CASE("message trace holds no HDAFL private values") {
  const auto spec = mlp(6, 5, 4);
  auto cfg = small_config(4, 2, 6, Strategy::Hdafl);
  const auto shards = blob_shards(4, PartitionPolicy::NonIidDirichlet, 9);

  auto private_bits = [](const Federation& fed) {
    std::unordered_set<std::uint64_t> bits;
    for (const auto& c : fed.clients) {
      for (double v : c.params.specific()) {
        if (v != 0.0) bits.insert(std::bit_cast<std::uint64_t>(v));
      }
    }
    return bits;
  };
  auto leaks = [](const MessageTrace& trace, const std::unordered_set<std::uint64_t>& bits) {
    std::size_t hits = 0;
    for (const auto& m : trace.messages()) {
      for (double v : m.payload) hits += bits.contains(std::bit_cast<std::uint64_t>(v)) ? 1 : 0;
    }
    return hits;
  };

  MessageTrace trace;
  Federation fed;
  const auto result = run_experiment(cfg, spec, shards, &trace, &fed);
  CHECK(trace.messages().size() == 2 * 2 * 6);
  for (const auto& m : trace.messages()) CHECK(m.payload.size() == fed.server.shared_params.size());
  CHECK(leaks(trace, private_bits(fed)) == 0);

  // negative control: FED_AVG ships the head, so the same search must fire
  auto fedavg = cfg;
  fedavg.strategy = Strategy::FedAvg;
  MessageTrace avg_trace;
  Federation avg_fed;
  run_experiment(fedavg, spec, shards, &avg_trace, &avg_fed);
  CHECK(leaks(avg_trace, private_bits(avg_fed)) > 0);
}

TEST_CASE("config validation") {
  auto cfg = small_config(3, 4, 1, Strategy::Hdafl);
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::BadC);
  cfg = small_config(3, 2, 0, Strategy::Hdafl);
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg = small_config(3, 2, 1, Strategy::Hdafl);
  cfg.lr = 0.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
}
