#include "fedpart/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>

#include "fedpart/numeric.hpp"

namespace fedpart {

using nlohmann::json;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::ranges::transform(out, out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::size_t> parse_args(std::string_view body, std::string_view text) {
  std::vector<std::size_t> args;
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    const auto tok = trim(body.substr(start, comma - start));
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) {
      throw ConfigError("model.layers", "bad layer arguments in '" + std::string(text) + "'");
    }
    args.push_back(v);
    start = comma + 1;
  }
  return args;
}

}  // namespace

LayerSpec parse_layer(std::string_view text) {
  const auto t = trim(text);
  const auto open = t.find('(');
  const std::string name = upper(trim(t.substr(0, open)));
  std::vector<std::size_t> args;
  if (open != std::string_view::npos) {
    if (t.back() != ')') throw ConfigError("model.layers", "unterminated layer '" + std::string(t) + "'");
    args = parse_args(t.substr(open + 1, t.size() - open - 2), t);
  }
  if (name == "DENSE" && args.size() == 2) return LayerSpec::dense(args[0], args[1]);
  if (name == "CONV1D" && args.size() == 3) return LayerSpec::conv1d(args[0], args[1], args[2]);
  if (name == "RELU" && args.empty()) return LayerSpec::relu();
  if (name == "FLATTEN" && args.empty()) return LayerSpec::flatten();
  throw ConfigError("model.layers", "unknown layer '" + std::string(t) + "'");
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  std::size_t depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] == '(') ++depth;
    if (i < text.size() && text[i] == ')' && depth > 0) --depth;
    if (i == text.size() || (text[i] == ',' && depth == 0)) {
      const auto tok = trim(text.substr(start, i - start));
      if (!tok.empty()) layers.push_back(parse_layer(tok));
      start = i + 1;
    }
  }
  if (layers.empty()) throw ConfigError("model.layers", "no layers given");
  return layers;
}

json model_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(to_string(l));
  return {{"input_shape", spec.input_shape},
          {"layers", layers},
          {"specific_from", spec.specific_from},
          {"num_classes", spec.num_classes}};
}

namespace {

void reject_unknown(const json& j, const std::string& section, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError(section, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(section + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& j, const std::string& section, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key, "wrong type");
  }
}

template <typename T>
T require(const json& j, const std::string& section, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(section + "." + key, "missing required key");
  return get_or<T>(j, section, key, T{});
}

std::size_t get_count(const json& j, const std::string& section, const std::string& key,
                      std::size_t fallback, std::size_t min_value) {
  if (j.contains(key) && !j.at(key).is_number_unsigned() &&
      !(j.at(key).is_number_integer() && j.at(key).get<long long>() >= 0)) {
    throw ConfigError(section + "." + key, "expected a non-negative integer");
  }
  const auto v = get_or<std::size_t>(j, section, key, fallback);
  if (v < min_value) {
    throw ConfigError(section + "." + key, "must be >= " + std::to_string(min_value));
  }
  return v;
}

LayerSpec layer_from_json(const json& j, const std::string& key) {
  if (j.is_string()) return parse_layer(j.get<std::string>());
  reject_unknown(j, key, {"kind", "in", "out", "in_channels", "out_channels", "kernel"});
  const auto kind = upper(require<std::string>(j, key, "kind"));
  if (kind == "DENSE") {
    return LayerSpec::dense(get_count(j, key, "in", 0, 1), get_count(j, key, "out", 0, 1));
  }
  if (kind == "CONV1D") {
    return LayerSpec::conv1d(get_count(j, key, "in_channels", 0, 1),
                             get_count(j, key, "out_channels", 0, 1),
                             get_count(j, key, "kernel", 0, 1));
  }
  if (kind == "RELU") return LayerSpec::relu();
  if (kind == "FLATTEN") return LayerSpec::flatten();
  throw ConfigError(key + ".kind", "unknown layer kind '" + kind + "'");
}

}  // namespace

ModelSpec model_from_json(const json& j, const std::string& key) {
  reject_unknown(j, key, {"input_shape", "layers", "specific_from", "num_classes"});
  ModelSpec spec;
  spec.input_shape = require<std::vector<std::size_t>>(j, key, "input_shape");
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty()) {
    throw ConfigError(key + ".layers", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < j.at("layers").size(); ++i) {
    spec.layers.push_back(layer_from_json(j.at("layers")[i], key + ".layers[" + std::to_string(i) + "]"));
  }
  spec.specific_from = get_count(j, key, "specific_from", spec.layers.size() - 1, 0);
  const std::size_t head = spec.layers.back().kind == LayerKind::Dense ? spec.layers.back().out : 0;
  spec.num_classes = get_count(j, key, "num_classes", head, 1);
  try {
    validate_spec(spec);
  } catch (const Error& e) {
    std::string where = key;
    if (e.code() == ErrorCode::DimensionMismatch && e.index()) {
      where += ".layers[" + std::to_string(*e.index()) + "]";
    } else if (e.code() == ErrorCode::BadBoundary) {
      where += ".specific_from";
    } else if (e.code() == ErrorCode::BadHead) {
      where += ".layers";
    }
    throw ConfigError(where, e.what());
  }
  return spec;
}

DataConfig parse_data_section(const json& j) {
  const std::string s = "data";
  reject_unknown(j, s,
                 {"generator", "num_classes", "per_class", "dim", "spread", "num_modes",
                  "label_conflict", "csv_path", "partition", "alpha", "classes_per_client",
                  "test_frac"});
  DataConfig d;
  const auto gen = get_or<std::string>(j, s, "generator", "blobs");
  if (gen == "blobs") {
    d.generator = Generator::Blobs;
  } else if (gen == "conflicting_modes") {
    d.generator = Generator::ConflictingModes;
  } else if (gen == "csv") {
    d.generator = Generator::Csv;
  } else {
    throw ConfigError("data.generator", "expected blobs, conflicting_modes or csv");
  }
  d.num_classes = get_count(j, s, "num_classes", d.num_classes, 2);
  d.per_class = get_count(j, s, "per_class", d.per_class, 1);
  d.dim = get_count(j, s, "dim", d.dim, 1);
  d.spread = get_or<double>(j, s, "spread", d.spread);
  if (!(d.spread >= 0.0)) throw ConfigError("data.spread", "must be >= 0");
  d.num_modes = get_count(j, s, "num_modes", d.num_modes, 2);
  d.label_conflict = get_or<bool>(j, s, "label_conflict", d.label_conflict);
  if (d.generator == Generator::Csv) {
    d.csv_path = require<std::string>(j, s, "csv_path");
  } else if (j.contains("csv_path")) {
    throw ConfigError("data.csv_path", "only valid with generator \"csv\"");
  }

  const auto policy = get_or<std::string>(j, s, "partition", "IID");
  if (policy == "IID") {
    d.partition = PartitionPolicy::Iid;
  } else if (policy == "NONIID_DIRICHLET") {
    d.partition = PartitionPolicy::NonIidDirichlet;
  } else if (policy == "DISJOINT") {
    d.partition = PartitionPolicy::Disjoint;
  } else {
    throw ConfigError("data.partition", "expected IID, NONIID_DIRICHLET or DISJOINT");
  }
  d.alpha = get_or<double>(j, s, "alpha", d.alpha);
  if (!(d.alpha > 0.0)) throw ConfigError("data.alpha", "must be > 0");
  d.classes_per_client = get_count(j, s, "classes_per_client", d.classes_per_client, 1);
  d.test_frac = get_or<double>(j, s, "test_frac", d.test_frac);
  if (!(d.test_frac > 0.0 && d.test_frac < 1.0)) throw ConfigError("data.test_frac", "must be in (0, 1)");
  return d;
}

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j, "config", {"model", "data", "federation", "seeds", "output"});
  for (const char* section : {"model", "data", "federation"}) {
    if (!j.contains(section)) throw ConfigError(section, "missing required section");
  }
  ExperimentConfig cfg;
  cfg.model = model_from_json(j.at("model"));
  cfg.data = parse_data_section(j.at("data"));

  const std::string f = "federation";
  const json& fj = j.at(f);
  reject_unknown(fj, f,
                 {"K", "C", "T", "E", "lr", "batch_size", "strategy", "target_accuracy",
                  "early_stop", "threads"});
  auto& fed = cfg.federation;
  fed.num_clients = get_count(fj, f, "K", 1, 1);
  fed.clients_per_round = get_count(fj, f, "C", fed.num_clients, 1);
  if (fed.clients_per_round > fed.num_clients) throw ConfigError("federation.C", "C must be <= K");
  fed.max_rounds = get_count(fj, f, "T", 1, 1);
  fed.local_epochs = get_count(fj, f, "E", 1, 0);
  fed.lr = get_or<double>(fj, f, "lr", fed.lr);
  if (!(fed.lr > 0.0)) throw ConfigError("federation.lr", "must be > 0");
  fed.batch_size = get_count(fj, f, "batch_size", fed.batch_size, 1);
  const auto strategy = get_or<std::string>(fj, f, "strategy", "HDAFL");
  const auto parsed = parse_strategy(strategy);
  if (!parsed) throw ConfigError("federation.strategy", "unknown strategy '" + strategy + "'");
  fed.strategy = *parsed;
  if (fj.contains("target_accuracy")) {
    const double target = get_or<double>(fj, f, "target_accuracy", 0.0);
    if (!(target >= 0.0 && target <= 1.0)) {
      throw ConfigError("federation.target_accuracy", "must be in [0, 1]");
    }
    cfg.report_target = target;
  }
  if (get_or<bool>(fj, f, "early_stop", false)) {
    if (!cfg.report_target) throw ConfigError("federation.early_stop", "requires target_accuracy");
    fed.target_accuracy = cfg.report_target;
  }
  fed.threads = get_count(fj, f, "threads", 0, 0);

  if (j.contains("seeds")) {
    const json& sj = j.at("seeds");
    reject_unknown(sj, "seeds", {"init", "selection", "train", "data"});
    cfg.seeds.init = get_or<std::uint64_t>(sj, "seeds", "init", 0);
    cfg.seeds.selection = get_or<std::uint64_t>(sj, "seeds", "selection", 0);
    cfg.seeds.train = get_or<std::uint64_t>(sj, "seeds", "train", 0);
    cfg.seeds.data = get_or<std::uint64_t>(sj, "seeds", "data", 0);
  }
  fed.seed_init = cfg.seeds.init;
  fed.seed_selection = cfg.seeds.selection;
  fed.seed_train = cfg.seeds.train;

  if (j.contains("output")) {
    const json& oj = j.at("output");
    reject_unknown(oj, "output", {"csv", "checkpoint"});
    cfg.output.csv = get_or<std::string>(oj, "output", "csv", cfg.output.csv.string());
    if (oj.contains("checkpoint")) {
      cfg.output.checkpoint = get_or<std::string>(oj, "output", "checkpoint", "");
    }
  }

  if (cfg.data.generator != Generator::Csv && cfg.model.num_classes != cfg.data.num_classes) {
    throw ConfigError("model.num_classes", "model head does not match data.num_classes");
  }
  if (cfg.data.generator != Generator::Csv &&
      Tensor::element_count(cfg.model.input_shape) != cfg.data.dim) {
    throw ConfigError("model.input_shape", "input size does not match data.dim");
  }
  if (cfg.data.partition == PartitionPolicy::Disjoint && cfg.data.generator != Generator::Csv &&
      fed.num_clients * cfg.data.classes_per_client > cfg.data.num_classes) {
    throw ConfigError("federation.K", "DISJOINT needs K * classes_per_client <= num_classes");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

GeneratedData build_dataset(const DataConfig& data, std::uint64_t seed) {
  switch (data.generator) {
    case Generator::Blobs:
      return {gen_blobs(data.num_classes, data.per_class, data.dim, data.spread, seed), std::nullopt};
    case Generator::ConflictingModes: {
      auto modal = gen_conflicting_modes(data.num_classes, data.per_class, data.dim, data.spread,
                                         data.num_modes, seed, data.label_conflict);
      return {std::move(modal.data), std::move(modal.mode_tags)};
    }
    case Generator::Csv:
      return {load_csv(data.csv_path), std::nullopt};
  }
  throw ConfigError("data.generator", "unsupported generator");
}

std::vector<ClientShard> build_shards(const ExperimentConfig& cfg) {
  auto generated = build_dataset(cfg.data, cfg.seeds.data);
  const Dataset& dataset = generated.dataset;
  if (dataset.num_classes > cfg.model.num_classes) {
    throw ConfigError("model.num_classes", "data has " + std::to_string(dataset.num_classes) +
                                               " classes, model head emits " +
                                               std::to_string(cfg.model.num_classes));
  }
  if (dataset.feature_size() != Tensor::element_count(cfg.model.input_shape)) {
    throw ConfigError("model.input_shape", "input size does not match the data");
  }
  Dataset widened = dataset;
  widened.num_classes = cfg.model.num_classes;

  PartitionPlan plan;
  plan.policy = cfg.data.partition;
  plan.num_clients = cfg.federation.num_clients;
  plan.alpha = cfg.data.alpha;
  plan.classes_per_client = cfg.data.classes_per_client;
  plan.seed = derive_seed({cfg.seeds.data, 1});
  std::optional<std::span<const std::size_t>> tags;
  if (generated.mode_tags) tags = std::span<const std::size_t>(*generated.mode_tags);
  auto shards = partition(widened, plan, tags);
  for (auto& shard : shards) {
    shard = train_test_split(shard, cfg.data.test_frac, derive_seed({cfg.seeds.data, 2, shard.client_id}));
  }
  return shards;
}

}  // namespace fedpart
