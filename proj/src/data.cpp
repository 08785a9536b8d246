#include "fedpart/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>

namespace fedpart {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t row = feature_size();
  std::vector<std::size_t> shape = features.shape;
  if (shape.empty()) shape = {0, row};
  shape[0] = indices.size();
  std::vector<double> data;
  data.reserve(indices.size() * row);
  std::vector<std::size_t> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto r = features.row(i);
    data.insert(data.end(), r.begin(), r.end());
    picked.push_back(labels[i]);
  }
  return Dataset{Tensor(std::move(shape), std::move(data)), std::move(picked), num_classes};
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) ++counts.at(l);
  return counts;
}

void Dataset::check() const {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows and labels disagree");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw Error(ErrorCode::BadLabel, "label out of range", i);
  }
}

namespace {

std::vector<std::vector<double>> draw_centers(std::size_t count, std::size_t dim,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centers(count, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& v : c) v = gauss(rng);
  }
  return centers;
}

void check_generator_args(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                          double spread) {
  if (num_classes < 2 || per_class < 1 || dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "need num_classes >= 2, per_class >= 1, dim >= 1");
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) {
    throw Error(ErrorCode::InvalidArgument, "spread must be finite and >= 0");
  }
}

}  // namespace

Dataset gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                  std::uint64_t seed) {
  check_generator_args(num_classes, per_class, dim, spread);
  std::mt19937_64 rng(seed);
  const auto means = draw_centers(num_classes, dim, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset out;
  out.num_classes = num_classes;
  std::vector<double> data;
  data.reserve(num_classes * per_class * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t d = 0; d < dim; ++d) data.push_back(means[c][d] + spread * gauss(rng));
      out.labels.push_back(c);
    }
  }
  out.features = Tensor({num_classes * per_class, dim}, std::move(data));
  return out;
}

ModalDataset gen_conflicting_modes(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                   double spread, std::size_t num_modes, std::uint64_t seed,
                                   bool label_conflict) {
  check_generator_args(num_classes, per_class, dim, spread);
  if (num_modes < 2) throw Error(ErrorCode::InvalidArgument, "num_modes must be >= 2");
  std::mt19937_64 rng(seed);
  const auto base = draw_centers(label_conflict ? num_classes : num_classes * num_modes, dim, rng);
  auto center = [&](std::size_t c, std::size_t m) -> const std::vector<double>& {
    return label_conflict ? base[(c + m) % num_classes] : base[c * num_modes + m];
  };
  std::normal_distribution<double> gauss(0.0, 1.0);

  ModalDataset out;
  out.data.num_classes = num_classes;
  std::vector<double> data;
  data.reserve(num_classes * per_class * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t m = i % num_modes;
      const auto& mu = center(c, m);
      for (std::size_t d = 0; d < dim; ++d) data.push_back(mu[d] + spread * gauss(rng));
      out.data.labels.push_back(c);
      out.mode_tags.push_back(m);
    }
  }
  out.data.features = Tensor({num_classes * per_class, dim}, std::move(data));
  return out;
}

namespace {

ClientShard make_shard(const Dataset& dataset, std::size_t client_id,
                       std::vector<std::size_t> indices) {
  std::ranges::sort(indices);
  ClientShard shard;
  shard.client_id = client_id;
  shard.train = dataset.subset(indices);
  shard.test = dataset.subset({});
  shard.n_k = shard.train.size();
  return shard;
}

std::vector<std::vector<std::size_t>> split_iid(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out(k);
  std::size_t at = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t take = n / k + (c < n % k ? 1 : 0);
    out[c].assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                  perm.begin() + static_cast<std::ptrdiff_t>(at + take));
    at += take;
  }
  return out;
}

std::vector<double> draw_dirichlet(std::size_t k, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& v : p) {
    v = gamma(rng);
    total += v;
  }
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny alpha): put the whole group on one client.
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::ranges::fill(p, 0.0);
    p[pick(rng)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

std::vector<std::vector<std::size_t>> split_dirichlet(
    const Dataset& dataset, const PartitionPlan& plan,
    std::optional<std::span<const std::size_t>> mode_tags, std::mt19937_64& rng) {
  // Group key: (class, mode); mode is 0 without tags.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t mode = mode_tags ? (*mode_tags)[i] : 0;
    groups[{dataset.labels[i], mode}].push_back(i);
  }
  const std::size_t k = plan.num_clients;
  std::vector<std::vector<std::size_t>> out(k);
  for (auto& [key, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto p = draw_dirichlet(k, plan.alpha, rng);
    const double n = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t at = 0;
    for (std::size_t c = 0; c < k; ++c) {
      cumulative += p[c];
      std::size_t cut = c + 1 == k ? members.size()
                                   : static_cast<std::size_t>(std::llround(cumulative * n));
      cut = std::clamp(cut, at, members.size());
      out[c].insert(out[c].end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                    members.begin() + static_cast<std::ptrdiff_t>(cut));
      at = cut;
    }
  }
  return out;
}

}  // namespace

std::vector<ClientShard> partition(const Dataset& dataset, const PartitionPlan& plan,
                                   std::optional<std::span<const std::size_t>> mode_tags) {
  dataset.check();
  const std::size_t k = plan.num_clients;
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "need at least one client");
  if (mode_tags && mode_tags->size() != dataset.size()) {
    throw Error(ErrorCode::LengthMismatch, "mode tags do not match the dataset");
  }
  std::mt19937_64 rng(plan.seed);
  std::vector<std::vector<std::size_t>> assignment;

  switch (plan.policy) {
    case PartitionPolicy::Iid:
      assignment = split_iid(dataset.size(), k, rng);
      break;
    case PartitionPolicy::NonIidDirichlet: {
      if (!(plan.alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
      // Redraw until no client is left empty; the redraws consume the same
      // seeded stream so the outcome stays a function of the seed.
      constexpr int kAttempts = 100;
      bool ok = false;
      for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
        assignment = split_dirichlet(dataset, plan, mode_tags, rng);
        ok = std::ranges::none_of(assignment, [](const auto& a) { return a.empty(); });
      }
      break;
    }
    case PartitionPolicy::Disjoint: {
      const std::size_t m = plan.classes_per_client;
      if (m < 1) throw Error(ErrorCode::InvalidArgument, "classes_per_client must be >= 1");
      if (k * m > dataset.num_classes) {
        throw Error(ErrorCode::TooManyClients,
                    std::to_string(k) + " clients x " + std::to_string(m) + " classes exceeds " +
                        std::to_string(dataset.num_classes) + " classes");
      }
      std::vector<std::size_t> classes(dataset.num_classes);
      std::iota(classes.begin(), classes.end(), std::size_t{0});
      std::shuffle(classes.begin(), classes.end(), rng);
      constexpr std::size_t kUnowned = static_cast<std::size_t>(-1);
      std::vector<std::size_t> owner(dataset.num_classes, kUnowned);
      for (std::size_t i = 0; i < k * m; ++i) owner[classes[i]] = i / m;
      assignment.assign(k, {});
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::size_t o = owner[dataset.labels[i]];
        if (o != kUnowned) assignment[o].push_back(i);
      }
      break;
    }
  }

  std::vector<ClientShard> shards;
  shards.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (assignment[c].empty()) throw Error(ErrorCode::EmptyShard, "client received no samples", c);
    shards.push_back(make_shard(dataset, c, std::move(assignment[c])));
  }
  return shards;
}

ClientShard train_test_split(const ClientShard& shard, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_frac must be in (0, 1)");
  }
  // Pool whatever the shard holds; a fresh partition has an empty test set.
  Dataset pool = shard.train;
  if (!shard.test.empty()) {
    pool.features.data.insert(pool.features.data.end(), shard.test.features.data.begin(),
                              shard.test.features.data.end());
    pool.features.shape[0] += shard.test.size();
    pool.labels.insert(pool.labels.end(), shard.test.labels.begin(), shard.test.labels.end());
  }
  if (pool.empty()) throw Error(ErrorCode::EmptyShard, "shard has no samples", shard.client_id);

  std::vector<std::vector<std::size_t>> by_class(pool.num_classes);
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& members : by_class) {
    if (members.size() < 2) {
      train.insert(train.end(), members.begin(), members.end());
      continue;
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    const auto want = static_cast<std::size_t>(std::llround(test_frac * n));
    const std::size_t n_test = std::clamp<std::size_t>(want, 1, members.size() - 1);
    test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::ranges::sort(train);
  std::ranges::sort(test);

  ClientShard out;
  out.client_id = shard.client_id;
  out.train = pool.subset(train);
  out.test = pool.subset(test);
  out.n_k = out.train.size();
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::vector<double> data;
  std::vector<std::size_t> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() < 2) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": no features", line_no);
    }

    const auto label_text = trim(fields[0]);
    std::size_t label = 0;
    const auto [lp, lec] =
        std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (lec != std::errc() || lp != label_text.data() + label_text.size() ||
        (num_classes && label >= *num_classes)) {
      throw Error(ErrorCode::BadLabel, "line " + std::to_string(line_no) + ": bad label", line_no);
    }

    const std::size_t features = fields.size() - 1;
    if (width == 0) {
      width = features;
    } else if (features != width) {
      throw Error(ErrorCode::RaggedRow,
                  "line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " features, got " + std::to_string(features),
                  line_no);
    }
    for (std::size_t f = 1; f < fields.size(); ++f) {
      const auto text = trim(fields[f]);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": bad feature value", line_no);
      }
      data.push_back(v);
    }
    labels.push_back(label);
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed on " + path.string());
  if (labels.empty()) throw Error(ErrorCode::ParseError, "no data rows in " + path.string(), 0);

  Dataset out;
  out.num_classes = num_classes.value_or(*std::ranges::max_element(labels) + 1);
  out.features = Tensor({labels.size(), width}, std::move(data));
  out.labels = std::move(labels);
  return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[i];
    for (double v : dataset.features.row(i)) {
      // Shortest representation that parses back to the same double.
      const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed on " + path.string());
}

}  // namespace fedpart
