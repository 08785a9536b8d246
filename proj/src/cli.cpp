#include "fedpart/cli.hpp"

#include <fstream>
#include <ostream>
#include <random>

#include "fedpart/checkpoint.hpp"
#include "fedpart/federation.hpp"
#include "fedpart/numeric.hpp"

namespace fedpart::cli {

using nlohmann::json;

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed_init) cfg.seeds.init = *o.seed_init;
  if (o.seed_selection) cfg.seeds.selection = *o.seed_selection;
  if (o.seed_train) cfg.seeds.train = *o.seed_train;
  if (o.seed_data) cfg.seeds.data = *o.seed_data;
  if (o.csv) cfg.output.csv = *o.csv;
  cfg.federation.seed_init = cfg.seeds.init;
  cfg.federation.seed_selection = cfg.seeds.selection;
  cfg.federation.seed_train = cfg.seeds.train;
}

json summary(const ExperimentResult& result, std::optional<double> target) {
  json j;
  j["strategy"] = to_string(result.config.strategy);
  j["final_accuracy"] = result.logs.empty() ? 0.0 : result.logs.back().mean_client_accuracy;
  j["total_MB"] = total_megabytes(result);
  j["rounds"] = result.logs.size();
  if (target) {
    const auto r = rounds_to_target(result, *target);
    j["rounds_to_target"] = r ? json(*r) : json(nullptr);
  }
  return j;
}

std::filesystem::path strategy_csv_path(const std::filesystem::path& base, Strategy strategy) {
  std::filesystem::path out = base;
  out.replace_filename(base.stem().string() + "_" + std::string(to_string(strategy)) +
                       base.extension().string());
  return out;
}

namespace {

// Shared error handling: config problems exit 1, everything else 2.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

ExperimentResult run_one(const ExperimentConfig& cfg, std::vector<ClientShard> shards,
                         const std::filesystem::path& csv) {
  Federation final_state;
  auto result = run_experiment(cfg.federation, cfg.model, std::move(shards), nullptr, &final_state);
  write_csv(result, csv);
  if (cfg.output.checkpoint) {
    write_checkpoint(*cfg.output.checkpoint, cfg.model, cfg.federation.strategy, final_state);
  }
  return result;
}

}  // namespace

int cmd_run(const std::filesystem::path& config, const Overrides& overrides, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_config(config);
    apply_overrides(cfg, overrides);
    auto shards = build_shards(cfg);
    const auto result = run_one(cfg, std::move(shards), cfg.output.csv);
    out << summary(result, cfg.report_target).dump() << '\n';
    return kExitOk;
  });
}

int cmd_compare(const std::filesystem::path& config, const std::vector<std::string>& strategies,
                const Overrides& overrides, std::ostream& out, std::ostream& err) {
  std::vector<Strategy> parsed;
  for (const auto& name : strategies) {
    const auto s = parse_strategy(name);
    if (!s) {
      err << "config error: strategies: unknown strategy '" << name << "'\n";
      return kExitConfig;
    }
    parsed.push_back(*s);
  }
  if (parsed.empty()) {
    err << "config error: strategies: at least one strategy is required\n";
    return kExitConfig;
  }
  if (parsed.size() == 1) {
    return guarded(err, [&] {
      auto cfg = load_config(config);
      apply_overrides(cfg, overrides);
      cfg.federation.strategy = parsed.front();
      auto shards = build_shards(cfg);
      const auto result = run_one(cfg, std::move(shards), cfg.output.csv);
      out << summary(result, cfg.report_target).dump() << '\n';
      return kExitOk;
    });
  }
  return guarded(err, [&] {
    auto cfg = load_config(config);
    apply_overrides(cfg, overrides);
    // One dataset and one set of shards for every strategy; client selection
    // depends only on the selection seed, so S_t matches across runs.
    const auto shards = build_shards(cfg);
    json comparison = json::object();
    for (Strategy s : parsed) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.federation.strategy = s;
      if (run_cfg.output.checkpoint) {
        run_cfg.output.checkpoint = strategy_csv_path(*cfg.output.checkpoint, s);
      }
      const auto result = run_one(run_cfg, shards, strategy_csv_path(cfg.output.csv, s));
      json entry = summary(result, cfg.report_target);
      entry.erase("strategy");
      if (!cfg.report_target) entry["rounds_to_target"] = nullptr;
      comparison[std::string(to_string(s))] = entry;
    }
    auto json_path = cfg.output.csv;
    json_path.replace_filename(cfg.output.csv.stem().string() + "_compare.json");
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw Error(ErrorCode::IoError, "cannot write " + json_path.string());
    js << comparison.dump(2) << '\n';
    out << comparison.dump() << '\n';
    return kExitOk;
  });
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  ModelSpec spec;
  try {
    spec.input_shape = options.input_shape;
    spec.layers = parse_layers(options.layers);
    spec.specific_from = spec.layers.size() - 1;
    spec.num_classes = options.num_classes.value_or(
        spec.layers.back().kind == LayerKind::Dense ? spec.layers.back().out : 0);
    validate_spec(spec);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const ParamSet zero = ParamSet::zeros(spec);
  if (zero.size() > kGradcheckParamCap) {
    err << "config error: spec has " << zero.size() << " parameters, gradcheck cap is "
        << kGradcheckParamCap << '\n';
    return kExitConfig;
  }
  if (options.batch_size < 1) {
    err << "config error: batch size must be >= 1\n";
    return kExitConfig;
  }

  return guarded(err, [&] {
    // Random weights and biases (not init_params) so every parameter carries
    // a non-trivial gradient.
    std::mt19937_64 rng(derive_seed({options.seed, 0x67726164}));
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::vector<double> values(zero.size());
    for (auto& v : values) v = gauss(rng);
    const ParamSet params = zero.with_values(std::move(values));

    const std::size_t row = Tensor::element_count(spec.input_shape);
    Batch batch;
    batch.inputs = Tensor::zeros({options.batch_size, row});
    std::normal_distribution<double> input(0.0, 1.0);
    for (auto& v : batch.inputs.data) v = input(rng);
    std::uniform_int_distribution<std::size_t> label(0, spec.num_classes - 1);
    for (std::size_t i = 0; i < options.batch_size; ++i) batch.labels.push_back(label(rng));

    auto analytic = loss_and_grad(spec, params, batch).grads;
    if (options.corrupt_gradient) analytic.values[analytic.values.size() / 2] += 0.1;
    const auto report = gradient_check(spec, params, batch, analytic);
    out << json{{"params", report.checked},
                {"max_relative_error", report.max_relative_error},
                {"worst_index", report.worst_index}}
               .dump()
        << '\n';
    if (report.max_relative_error < 1e-4) return kExitOk;
    err << "gradient check failed: relative error " << report.max_relative_error
        << " at parameter " << report.worst_index << '\n';
    return kExitRuntime;
  });
}

int cmd_gen_data(const std::filesystem::path& config, const std::filesystem::path& out_path,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(config);
    if (!in) throw ConfigError("config", "cannot open " + config.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("data")) throw ConfigError("data", "missing required section");
    // A full experiment config is validated as a whole; a bare data section
    // (plus optional seeds) is accepted too.
    DataConfig data;
    std::uint64_t seed = 0;
    if (j.contains("model") || j.contains("federation")) {
      const auto cfg = parse_config(j);
      data = cfg.data;
      seed = cfg.seeds.data;
    } else {
      for (const auto& [key, value] : j.items()) {
        if (key != "data" && key != "seeds") throw ConfigError(key, "unknown key");
      }
      data = parse_data_section(j.at("data"));
      if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        for (const auto& [key, value] : s.items()) {
          if (key != "data") throw ConfigError("seeds." + key, "unknown key");
        }
        seed = s.value("data", std::uint64_t{0});
      }
    }
    if (data.generator == Generator::Csv) {
      throw ConfigError("data.generator", "gen-data needs a synthetic generator");
    }
    const auto generated = build_dataset(data, seed);
    save_csv(generated.dataset, out_path);
    out << json{{"rows", generated.dataset.size()},
                {"features", generated.dataset.feature_size()},
                {"num_classes", generated.dataset.num_classes},
                {"path", out_path.string()}}
               .dump()
        << '\n';
    return kExitOk;
  });
}

}  // namespace fedpart::cli
