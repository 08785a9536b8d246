#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "fedpart/federation.hpp"

namespace fedpart {

// <stem>.bin holds the server's shared slice followed by each client's
// private slice in client id order, as little-endian IEEE-754 doubles.
// <stem>.json describes the model, strategy and the offsets into the blob.
struct Checkpoint {
  ModelSpec spec;
  Strategy strategy = Strategy::Hdafl;
  std::size_t round = 0;
  std::vector<double> server_shared;
  std::vector<std::vector<double>> private_slices;  // indexed by client id
};

void write_checkpoint(const std::filesystem::path& stem, const ModelSpec& spec, Strategy strategy,
                      const Federation& fed);
Checkpoint read_checkpoint(const std::filesystem::path& stem);

}  // namespace fedpart
