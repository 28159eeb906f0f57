// SPDX-License-Identifier: Apache-2.0
#include "decaylens/metrics_log.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "decaylens/errors.hpp"
#include "decaylens/io.hpp"

namespace decaylens {

CheckpointRecord make_checkpoint_record(std::int64_t step, double lambda, std::uint64_t seed,
                                        const TokenMetricsStore& store) {
  CheckpointRecord record;
  record.step = step;
  record.lambda = lambda;
  record.seed = seed;
  record.avg_loss = store.average_loss();
  record.tok_bal_loss = store.token_balanced_loss();
  record.ppl = store.per_token_perplexity();
  record.acc = store.per_token_accuracy();
  for (TokenId id = 0; id < store.vocab_size(); ++id) {
    const auto& counters = store.counters(id);
    if (counters.occurrences == 0) {
      continue;
    }
    PerTokenRecord row;
    row.id = id;
    row.n = counters.occurrences;
    row.loss_mean = counters.loss_sum / static_cast<double>(counters.occurrences);
    row.acc = static_cast<double>(counters.correct) / static_cast<double>(counters.occurrences);
    record.per_token.push_back(row);
  }
  return record;
}

std::string checkpoint_record_json(const CheckpointRecord& record) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["step"] = record.step;
  j["lambda"] = record.lambda;
  j["seed"] = record.seed;
  j["global"] = {{"avg_loss", record.avg_loss},
                 {"tok_bal_loss", record.tok_bal_loss},
                 {"ppl", record.ppl},
                 {"acc", record.acc}};
  nlohmann::ordered_json per_token = nlohmann::json::array();
  for (const auto& row : record.per_token) {
    per_token.push_back(nlohmann::ordered_json{
        {"id", row.id}, {"n", row.n}, {"loss_mean", row.loss_mean}, {"acc", row.acc}});
  }
  j["per_token"] = std::move(per_token);
  return j.dump();
}

std::vector<CheckpointRecord> read_metric_log(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<CheckpointRecord> records;
  records.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path.string(), "(line " + std::to_string(i + 1) + ")", e.what());
    }
    try {
      CheckpointRecord record;
      record.step = j.at("step").get<std::int64_t>();
      record.lambda = j.at("lambda").get<double>();
      record.seed = j.at("seed").get<std::uint64_t>();
      const auto& global = j.at("global");
      record.avg_loss = global.at("avg_loss").get<double>();
      record.tok_bal_loss = global.at("tok_bal_loss").get<double>();
      record.ppl = global.at("ppl").get<double>();
      record.acc = global.at("acc").get<double>();
      for (const auto& row : j.at("per_token")) {
        PerTokenRecord token_row;
        token_row.id = row.at("id").get<TokenId>();
        token_row.n = row.at("n").get<std::int64_t>();
        token_row.loss_mean = row.at("loss_mean").get<double>();
        token_row.acc = row.at("acc").get<double>();
        record.per_token.push_back(token_row);
      }
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string(), "(line " + std::to_string(i + 1) + ")", e.what());
    }
  }
  return records;
}

std::vector<TokenTrajectory> trajectories_from_log(const std::vector<CheckpointRecord>& records) {
  std::map<TokenId, TokenTrajectory> by_token;
  for (const auto& record : records) {
    for (const auto& row : record.per_token) {
      auto& trajectory = by_token[row.id];
      trajectory.token = row.id;
      trajectory.checkpoints.push_back(TrajectoryPoint{record.step, row.loss_mean});
    }
  }
  std::vector<TokenTrajectory> out;
  out.reserve(by_token.size());
  for (auto& [id, trajectory] : by_token) {
    out.push_back(std::move(trajectory));
  }
  return out;
}

JsonlMetricsSink::JsonlMetricsSink(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  tmp_path_ = path;
  tmp_path_ += ".tmp";
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) {
    throw std::runtime_error("JsonlMetricsSink: cannot open " + tmp_path_.string());
  }
}

void JsonlMetricsSink::on_checkpoint(const CheckpointRecord& record) {
  out_ << checkpoint_record_json(record) << '\n';
  if (!out_) {
    throw std::runtime_error("JsonlMetricsSink: write failed: " + tmp_path_.string());
  }
}

void JsonlMetricsSink::close() {
  if (out_.is_open()) {
    out_.close();
    std::filesystem::rename(tmp_path_, path_);
  }
}

}  // namespace decaylens
