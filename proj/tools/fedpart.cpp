// fedpart: federated learning experiment driver.
//
//   fedpart run <config.json> [--csv out.csv] [--seed-init N] ...
//   fedpart compare <config.json> --strategies FED_AVG,HDAFL
//   fedpart gradcheck --layers "DENSE(4,8),RELU,DENSE(8,3)" --input 4 --seed 1
//   fedpart gen-data <config.json> <out.csv>

#include <iostream>

#include <CLI11.hpp>

#include "fedpart/cli.hpp"

namespace {

void add_overrides(CLI::App* cmd, fedpart::cli::Overrides& o) {
  cmd->add_option("--seed-init", o.seed_init, "Override seeds.init");
  cmd->add_option("--seed-selection", o.seed_selection, "Override seeds.selection");
  cmd->add_option("--seed-train", o.seed_train, "Override seeds.train");
  cmd->add_option("--seed-data", o.seed_data, "Override seeds.data");
  cmd->add_option("--csv", o.csv, "Override output.csv");
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = fedpart::cli;
  CLI::App app{"Federated learning simulator with partitioned parameter sharing"};
  app.require_subcommand(1);

  std::string config;
  std::string out_path;
  cli::Overrides overrides;

  auto* run = app.add_subcommand("run", "Run one experiment and write per-round CSV metrics");
  run->add_option("config", config, "Experiment config (JSON)")->required();
  add_overrides(run, overrides);

  std::vector<std::string> strategies{"FED_AVG", "HDAFL"};
  auto* compare = app.add_subcommand("compare", "Run several strategies on identical shards and seeds");
  compare->add_option("config", config, "Experiment config (JSON)")->required();
  compare->add_option("--strategies", strategies, "FED_AVG, HDAFL, LG_COMPLEMENT")
      ->delimiter(',')
      ->capture_default_str();
  add_overrides(compare, overrides);

  cli::GradcheckOptions grad;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare backprop against central differences");
  gradcheck->add_option("--layers", grad.layers, "Layer list")->capture_default_str();
  gradcheck->add_option("--input", grad.input_shape, "Input shape: n or channels,length")
      ->delimiter(',');
  gradcheck->add_option("--classes", grad.num_classes, "Number of classes (default: head width)");
  gradcheck->add_option("--seed", grad.seed, "Seed for weights, inputs and labels");
  gradcheck->add_option("--batch", grad.batch_size, "Batch size")->capture_default_str();
  gradcheck->add_flag("--corrupt-gradient", grad.corrupt_gradient,
                      "Perturb one analytic gradient component (negative control)")
      ->group("");

  auto* gen = app.add_subcommand("gen-data", "Write the configured synthetic dataset as CSV");
  gen->add_option("config", config, "Config with a data section (JSON)")->required();
  gen->add_option("out", out_path, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  if (*run) return cli::cmd_run(config, overrides, std::cout, std::cerr);
  if (*compare) return cli::cmd_compare(config, strategies, overrides, std::cout, std::cerr);
  if (*gradcheck) return cli::cmd_gradcheck(grad, std::cout, std::cerr);
  if (*gen) return cli::cmd_gen_data(config, out_path, std::cout, std::cerr);
  return cli::kExitConfig;
}
