#include "fedpart/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "fedpart/config.hpp"

namespace fedpart {

namespace {

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
  stem += suffix;
  return stem;
}

void put_f64(std::ofstream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (auto& b : bytes) {
    b = static_cast<char>(bits & 0xffU);
    bits >>= 8;
  }
  out.write(bytes.data(), bytes.size());
}

std::vector<double> get_f64s(std::ifstream& in, std::size_t count) {
  std::vector<double> out(count);
  std::array<unsigned char, 8> bytes{};
  for (auto& v : out) {
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
      throw Error(ErrorCode::IoError, "checkpoint blob is truncated");
    }
    std::uint64_t bits = 0;
    for (std::size_t i = bytes.size(); i-- > 0;) bits = (bits << 8) | bytes[i];
    v = std::bit_cast<double>(bits);
  }
  return out;
}

SliceRange private_range(Strategy strategy, const ParamSet& layout) {
  const SliceRange shared = shared_range(strategy, layout);
  return shared.offset == 0 ? SliceRange{shared.end(), layout.size() - shared.end()}
                            : SliceRange{0, shared.offset};
}

}  // namespace

void write_checkpoint(const std::filesystem::path& stem, const ModelSpec& spec, Strategy strategy,
                      const Federation& fed) {
  const ParamSet layout = ParamSet::zeros(spec);
  const SliceRange shared = shared_range(strategy, layout);
  const SliceRange priv = private_range(strategy, layout);

  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot write checkpoint " + stem.string());
  for (double v : fed.server.shared_params) put_f64(bin, v);

  nlohmann::json clients = nlohmann::json::array();
  std::size_t offset = fed.server.shared_params.size();
  for (const auto& c : fed.clients) {
    for (double v : c.params.slice(priv)) put_f64(bin, v);
    clients.push_back({{"id", c.client_id}, {"offset", offset}, {"length", priv.length}});
    offset += priv.length;
  }
  if (!bin) throw Error(ErrorCode::IoError, "checkpoint write failed");

  nlohmann::json meta = {
      {"format", "fedpart-checkpoint"},
      {"version", 1},
      {"dtype", "float64"},
      {"byte_order", "little"},
      {"strategy", to_string(strategy)},
      {"round", fed.server.round},
      {"model", model_to_json(spec)},
      {"param_count", layout.size()},
      {"shared", {{"param_offset", shared.offset}, {"length", shared.length}, {"blob_offset", 0}}},
      {"private", {{"param_offset", priv.offset}, {"length", priv.length}}},
      {"clients", clients},
  };
  std::ofstream js(with_suffix(stem, ".json"), std::ios::binary);
  if (!js) throw Error(ErrorCode::IoError, "cannot write checkpoint sidecar");
  js << meta.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& stem) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw Error(ErrorCode::IoError, "cannot open checkpoint sidecar");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint sidecar: ") + e.what());
  }
  Checkpoint ck;
  ck.spec = model_from_json(meta.at("model"));
  const auto strategy = parse_strategy(meta.at("strategy").get<std::string>());
  if (!strategy) throw Error(ErrorCode::ParseError, "checkpoint names an unknown strategy");
  ck.strategy = *strategy;
  ck.round = meta.at("round").get<std::size_t>();

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot open checkpoint blob");
  ck.server_shared = get_f64s(bin, meta.at("shared").at("length").get<std::size_t>());
  for (const auto& c : meta.at("clients")) {
    ck.private_slices.push_back(get_f64s(bin, c.at("length").get<std::size_t>()));
  }
  return ck;
}

}  // namespace fedpart
