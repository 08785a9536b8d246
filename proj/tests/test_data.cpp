#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "common.hpp"
#include "fedpart/data.hpp"

using namespace fedpart;
using fedpart::testing::scratch_dir;

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

using Sample = std::pair<std::size_t, std::vector<double>>;

std::multiset<Sample> samples_of(const Dataset& d) {
  std::multiset<Sample> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = d.features.row(i);
    out.insert({d.labels[i], {r.begin(), r.end()}});
  }
  return out;
}

std::multiset<Sample> union_of(const std::vector<ClientShard>& shards) {
  std::multiset<Sample> out;
  for (const auto& s : shards) {
    auto part = samples_of(s.train);
    out.insert(part.begin(), part.end());
    auto test = samples_of(s.test);
    out.insert(test.begin(), test.end());
  }
  return out;
}

std::set<std::size_t> label_support(const ClientShard& s) {
  return {s.train.labels.begin(), s.train.labels.end()};
}

// Largest |client class frequency - global class frequency| / global.
double max_relative_skew(const Dataset& data, const std::vector<ClientShard>& shards) {
  const auto global = data.class_counts();
  double worst = 0.0;
  for (const auto& s : shards) {
    const auto local = s.train.class_counts();
    for (std::size_t c = 0; c < global.size(); ++c) {
      const double g = static_cast<double>(global[c]) / static_cast<double>(data.size());
      const double l = static_cast<double>(local[c]) / static_cast<double>(s.train.size());
      worst = std::max(worst, std::fabs(l - g) / g);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gen_blobs") {
  const auto d = gen_blobs(20, 50, 8, 0.7, 3);
  CHECK(d.size() == 1000);
  CHECK(d.features.shape == std::vector<std::size_t>{1000, 8});
  const auto counts = d.class_counts();
  CHECK(std::ranges::all_of(counts, [](std::size_t c) { return c == 50; }));

  const auto again = gen_blobs(20, 50, 8, 0.7, 3);
  CHECK(again.features.data == d.features.data);
  CHECK(again.labels == d.labels);

  const auto tight = gen_blobs(4, 6, 3, 0.0, 9);
  for (std::size_t i = 0; i < tight.size(); ++i) {
    const std::size_t first = tight.labels[i] * 6;
    CHECK(std::ranges::equal(tight.features.row(i), tight.features.row(first)));
  }
  CHECK_FALSE(std::ranges::equal(tight.features.row(0), tight.features.row(6)));
  CHECK(code_of([] { gen_blobs(1, 5, 3, 1.0, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { gen_blobs(3, 5, 3, -1.0, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("gen_conflicting_modes") {
  SUBCASE("degenerate clusters give num_modes points per class") {
    const auto m = gen_conflicting_modes(5, 10, 4, 0.0, 2, 1, false);
    for (std::size_t c = 0; c < 5; ++c) {
      std::set<std::vector<double>> distinct;
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (m.data.labels[i] == c) {
          const auto r = m.data.features.row(i);
          distinct.insert({r.begin(), r.end()});
        }
      }
      CHECK(distinct.size() == 2);
    }
    CHECK(m.mode_tags.size() == m.data.size());
  }
  SUBCASE("determinism") {
    const auto a = gen_conflicting_modes(6, 12, 5, 0.4, 3, 8);
    const auto b = gen_conflicting_modes(6, 12, 5, 0.4, 3, 8);
    CHECK(a.data.features.data == b.data.features.data);
    CHECK(a.mode_tags == b.mode_tags);
  }
  SUBCASE("label conflict defeats any shared head on the two-group instance") {
    const std::size_t classes = 6;
    const auto m = gen_conflicting_modes(classes, 8, 4, 0.0, 2, 5, true);
    // class a mode 1 shares its center with class b = a + 1 mode 0
    const std::size_t a = 2;
    const std::size_t b = 3;
    std::vector<std::size_t> group;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      const bool a1 = m.data.labels[i] == a && m.mode_tags[i] == 1;
      const bool b0 = m.data.labels[i] == b && m.mode_tags[i] == 0;
      if (a1 || b0) group.push_back(i);
    }
    REQUIRE(group.size() == 8);
    for (std::size_t i : group) {
      CHECK(std::ranges::equal(m.data.features.row(i), m.data.features.row(group.front())));
    }
    // Every input in the union is the same point, so any classifier emits a
    // single class for all of them. Enumerate every possible output.
    double best = 0.0;
    for (std::size_t predicted = 0; predicted < classes; ++predicted) {
      std::size_t hits = 0;
      for (std::size_t i : group) hits += m.data.labels[i] == predicted ? 1 : 0;
      best = std::max(best, static_cast<double>(hits) / static_cast<double>(group.size()));
    }
    CHECK(best <= 0.5);
  }
  CHECK(code_of([] { gen_conflicting_modes(4, 5, 3, 0.1, 1, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("partition conserves samples for every policy") {
  const auto data = gen_blobs(8, 30, 3, 1.0, 4);
  for (auto policy : {PartitionPolicy::Iid, PartitionPolicy::NonIidDirichlet, PartitionPolicy::Disjoint}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      PartitionPlan plan{policy, 4, 0.5, 2, seed};
      const auto shards = partition(data, plan);
      REQUIRE(shards.size() == 4);
      CHECK(union_of(shards) == samples_of(data));
      for (std::size_t k = 0; k < shards.size(); ++k) {
        CHECK(shards[k].client_id == k);
        CHECK(shards[k].n_k == shards[k].train.size());
        CHECK(shards[k].test.empty());
      }
      const auto again = partition(data, plan);
      for (std::size_t k = 0; k < shards.size(); ++k) {
        CHECK(again[k].train.labels == shards[k].train.labels);
        CHECK(again[k].train.features.data == shards[k].train.features.data);
      }
    }
  }
}

TEST_CASE("single client receives everything") {
  const auto data = gen_blobs(4, 10, 2, 1.0, 1);
  for (auto policy : {PartitionPolicy::Iid, PartitionPolicy::NonIidDirichlet, PartitionPolicy::Disjoint}) {
    const auto shards = partition(data, {policy, 1, 0.5, 4, 3});
    REQUIRE(shards.size() == 1);
    CHECK(samples_of(shards[0].train) == samples_of(data));
  }
}

TEST_CASE("disjoint policy") {
  const auto many = gen_blobs(62, 2, 2, 1.0, 1);
  CHECK(partition(many, {PartitionPolicy::Disjoint, 31, 0.5, 2, 1}).size() == 31);
  CHECK(code_of([&] { partition(many, {PartitionPolicy::Disjoint, 32, 0.5, 2, 1}); }) ==
        ErrorCode::TooManyClients);

  const auto data = gen_blobs(20, 5, 2, 1.0, 2);
  const auto shards = partition(data, {PartitionPolicy::Disjoint, 10, 0.5, 2, 9});
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    CHECK(label_support(shards[i]).size() == 2);
    for (std::size_t j = i + 1; j < shards.size(); ++j) {
      const auto a = label_support(shards[i]);
      const auto b = label_support(shards[j]);
      std::vector<std::size_t> both;
      std::ranges::set_intersection(a, b, std::back_inserter(both));
      CHECK(both.empty());
      ++pairs;
    }
  }
  CHECK(pairs == 45);

  // fewer owners than classes: unowned classes are dropped, owners keep all
  const auto partial = partition(data, {PartitionPolicy::Disjoint, 3, 0.5, 2, 9});
  for (const auto& s : partial) CHECK(s.train.size() == 10);
}

TEST_CASE("iid policy balances class frequencies") {
  // n >= 100 * K * classes
  const auto data = gen_blobs(5, 400, 2, 1.0, 6);
  const auto shards = partition(data, {PartitionPolicy::Iid, 4, 0.5, 2, 17});
  CHECK(max_relative_skew(data, shards) <= 0.30);
  for (const auto& s : shards) CHECK(s.train.size() == 500);
}

TEST_CASE("dirichlet skew shrinks as alpha grows") {
  const auto data = gen_blobs(10, 200, 2, 1.0, 6);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto skewed = partition(data, {PartitionPolicy::NonIidDirichlet, 5, 0.1, 2, seed});
    const auto flat = partition(data, {PartitionPolicy::NonIidDirichlet, 5, 1e4, 2, seed});
    CHECK(max_relative_skew(data, flat) < max_relative_skew(data, skewed));
  }
}

TEST_CASE("mode tags spread modes of a class over clients") {
  const auto m = gen_conflicting_modes(4, 100, 3, 0.1, 2, 2);
  PartitionPlan plan{PartitionPolicy::NonIidDirichlet, 6, 0.2, 2, 5};
  const auto shards = partition(m.data, plan, std::span<const std::size_t>(m.mode_tags));
  CHECK(union_of(shards) == samples_of(m.data));
  const std::vector<std::size_t> short_tags(3, 0);
  CHECK(code_of([&] { partition(m.data, plan, std::span<const std::size_t>(short_tags)); }) ==
        ErrorCode::LengthMismatch);
}

TEST_CASE("empty shards are rejected") {
  const auto data = gen_blobs(2, 1, 2, 1.0, 1);
  CHECK(code_of([&] { partition(data, {PartitionPolicy::Iid, 3, 0.5, 1, 1}); }) == ErrorCode::EmptyShard);
}

TEST_CASE("train_test_split") {
  SUBCASE("half split of one class") {
    ClientShard s;
    s.train = gen_blobs(2, 10, 2, 1.0, 1).subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    s.n_k = 10;
    const auto out = train_test_split(s, 0.5, 3);
    CHECK(out.train.size() == 5);
    CHECK(out.test.size() == 5);
    CHECK(out.n_k == 5);
  }
  SUBCASE("singleton class stays in train") {
    const auto d = gen_blobs(3, 4, 2, 1.0, 1);
    ClientShard s;
    s.train = d.subset(std::vector<std::size_t>{0, 1, 2, 3, 4});  // class 1 has one sample
    s.n_k = 5;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto out = train_test_split(s, 0.5, seed);
      CHECK(std::ranges::count(out.train.labels, 1u) == 1);
      CHECK(std::ranges::count(out.test.labels, 1u) == 0);
    }
  }
  SUBCASE("train and test partition the shard") {
    const auto data = gen_blobs(6, 37, 3, 1.0, 2);
    auto shards = partition(data, {PartitionPolicy::NonIidDirichlet, 3, 0.5, 2, 8});
    for (auto& s : shards) {
      const auto before = samples_of(s.train);
      const auto split = train_test_split(s, 0.2, 4);
      auto after = samples_of(split.train);
      const auto test = samples_of(split.test);
      after.insert(test.begin(), test.end());
      CHECK(after == before);
      CHECK(split.n_k == split.train.size());
    }
  }
  ClientShard empty;
  empty.train = Dataset{Tensor({0, 2}, {}), {}, 2};
  CHECK(code_of([&] { train_test_split(empty, 0.2, 1); }) == ErrorCode::EmptyShard);
}

TEST_CASE("csv loader") {
  const auto dir = scratch_dir("csv");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name, std::ios::binary) << text;
    return dir / name;
  };

  const auto ok = load_csv(write("ok.csv", "1,0.5,0.5\n0,1.0,0.0\n"));
  CHECK(ok.size() == 2);
  CHECK(ok.feature_size() == 2);
  CHECK(ok.num_classes == 2);
  CHECK(ok.labels == std::vector<std::size_t>{1, 0});

  const auto crlf = load_csv(write("crlf.csv", "1,0.5,0.5\r\n0,1.0,0.0\r\n"));
  CHECK(crlf.features.data == ok.features.data);
  CHECK(load_csv(dir / "ok.csv", 5).num_classes == 5);

  auto error_at = [](const std::filesystem::path& p) -> std::pair<ErrorCode, std::size_t> {
    try {
      load_csv(p);
    } catch (const Error& e) {
      return {e.code(), e.index().value_or(0)};
    }
    return {ErrorCode::InvalidArgument, 0};
  };
  CHECK(error_at(write("ragged.csv", "0,1,2\n1,1,2,3\n")) == std::pair{ErrorCode::RaggedRow, std::size_t{2}});
  CHECK(error_at(write("label.csv", "0,1\n-1,2\n")) == std::pair{ErrorCode::BadLabel, std::size_t{2}});
  CHECK(error_at(write("label2.csv", "x,1\n")) == std::pair{ErrorCode::BadLabel, std::size_t{1}});
  CHECK(error_at(write("value.csv", "0,1\n1,abc\n")) == std::pair{ErrorCode::ParseError, std::size_t{2}});
  CHECK(error_at(dir / "missing.csv").first == ErrorCode::IoError);
  CHECK(code_of([&] { load_csv(dir / "ok.csv", 1); }) == ErrorCode::BadLabel);

  const auto data = gen_blobs(5, 20, 7, 1.3, 11);
  save_csv(data, dir / "round.csv");
  const auto back = load_csv(dir / "round.csv");
  CHECK(back.labels == data.labels);
  REQUIRE(back.features.data.size() == data.features.data.size());
  for (std::size_t i = 0; i < data.features.data.size(); ++i) {
    CHECK(std::fabs(back.features.data[i] - data.features.data[i]) <= 1e-9);
  }
}
