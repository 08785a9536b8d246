#include "fedpart/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "fedpart/parallel.hpp"

namespace fedpart {

CommCost comm_cost_round(Strategy strategy, const ModelSpec& spec, std::size_t clients_per_round) {
  const std::uint64_t shared = shared_range(strategy, spec).length;
  const std::uint64_t bytes = clients_per_round * shared * kBytesPerParam;
  return {bytes, bytes};
}

ParamSet evaluation_params(const ClientState& client, Strategy strategy,
                           std::span<const double> server_shared) {
  return client.params.with_slice(shared_range(strategy, client.params), server_shared);
}

EvalResult eval_all_clients(const ModelSpec& spec, Strategy strategy,
                            std::span<const ClientState> clients,
                            std::span<const double> server_shared, std::size_t threads) {
  if (clients.empty()) throw Error(ErrorCode::EmptyTestSet, "no clients to evaluate");
  for (const auto& c : clients) {
    if (c.shard.test.empty()) {
      throw Error(ErrorCode::EmptyTestSet,
                  "client " + std::to_string(c.client_id) + " has no test samples", c.client_id);
    }
  }
  std::vector<EvalResult> per_client(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    per_client[i] = evaluate(spec, evaluation_params(clients[i], strategy, server_shared),
                             clients[i].shard.test);
  });
  // Fixed summation order keeps the mean independent of the worker count.
  double acc = 0.0;
  double loss = 0.0;
  for (const auto& r : per_client) {
    acc += r.accuracy;
    loss += r.mean_loss;
  }
  const auto k = static_cast<double>(clients.size());
  return {acc / k, loss / k};
}

std::optional<std::size_t> rounds_to_target(const ExperimentResult& result, double target_accuracy) {
  for (const auto& log : result.logs) {
    if (log.mean_client_accuracy >= target_accuracy) return log.round;
  }
  return std::nullopt;
}

double total_megabytes(const ExperimentResult& result) {
  if (result.logs.empty()) return 0.0;
  return static_cast<double>(result.logs.back().cumulative_bytes) / 1e6;
}

namespace {

std::string six_digits(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string format_csv(const ExperimentResult& result) {
  std::string out = "round,accuracy,loss,uplink_bytes,downlink_bytes,cumulative_bytes,selected\n";
  for (const auto& log : result.logs) {
    out += std::to_string(log.round);
    out += ',' + six_digits(log.mean_client_accuracy);
    out += ',' + six_digits(log.mean_client_loss);
    out += ',' + std::to_string(log.uplink_bytes);
    out += ',' + std::to_string(log.downlink_bytes);
    out += ',' + std::to_string(log.cumulative_bytes);
    out += ',';
    for (std::size_t i = 0; i < log.selected.size(); ++i) {
      if (i > 0) out += ';';
      out += std::to_string(log.selected[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const ExperimentResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << format_csv(result);
  if (!out) throw Error(ErrorCode::IoError, "write failed on " + path.string());
}

namespace {

template <typename T>
T parse_number(std::string_view text, std::size_t line_no) {
  T v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad number", line_no);
  }
  return v;
}

}  // namespace

std::vector<RoundLog> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<RoundLog> logs;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() == 6) cols.emplace_back();  // empty selection list
    if (cols.size() != 7) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 7 columns",
                  line_no);
    }
    RoundLog log;
    log.round = parse_number<std::size_t>(cols[0], line_no);
    log.mean_client_accuracy = parse_number<double>(cols[1], line_no);
    log.mean_client_loss = parse_number<double>(cols[2], line_no);
    log.uplink_bytes = parse_number<std::uint64_t>(cols[3], line_no);
    log.downlink_bytes = parse_number<std::uint64_t>(cols[4], line_no);
    log.cumulative_bytes = parse_number<std::uint64_t>(cols[5], line_no);
    std::stringstream sel(cols[6]);
    std::string id;
    while (std::getline(sel, id, ';')) log.selected.push_back(parse_number<std::size_t>(id, line_no));
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace fedpart
