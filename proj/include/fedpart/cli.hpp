#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedpart/config.hpp"
#include "fedpart/metrics.hpp"

namespace fedpart::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr std::size_t kGradcheckParamCap = 5000;

struct Overrides {
  std::optional<std::uint64_t> seed_init;
  std::optional<std::uint64_t> seed_selection;
  std::optional<std::uint64_t> seed_train;
  std::optional<std::uint64_t> seed_data;
  std::optional<std::filesystem::path> csv;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides);

// {final_accuracy, total_MB, rounds, rounds_to_target when a target is set}.
nlohmann::json summary(const ExperimentResult& result, std::optional<double> target);

// out.csv -> out_HDAFL.csv
std::filesystem::path strategy_csv_path(const std::filesystem::path& base, Strategy strategy);

int cmd_run(const std::filesystem::path& config, const Overrides& overrides, std::ostream& out,
            std::ostream& err);

int cmd_compare(const std::filesystem::path& config, const std::vector<std::string>& strategies,
                const Overrides& overrides, std::ostream& out, std::ostream& err);

struct GradcheckOptions {
  std::string layers = "DENSE(4,8),RELU,DENSE(8,3)";
  std::vector<std::size_t> input_shape = {4};
  std::optional<std::size_t> num_classes;  // default: head width
  std::uint64_t seed = 0;
  std::size_t batch_size = 4;
  bool corrupt_gradient = false;  // negative-control hook
};

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

int cmd_gen_data(const std::filesystem::path& config, const std::filesystem::path& out_path,
                 std::ostream& out, std::ostream& err);

}  // namespace fedpart::cli
