// SPDX-License-Identifier: Apache-2.0
#include "decaylens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "decaylens/io.hpp"
#include "decaylens/parallel.hpp"

namespace decaylens {

namespace {

struct WindowIndex {
  // (doc, start) for every valid context window with a next-token label.
  std::vector<std::uint32_t> doc;
  std::vector<std::uint32_t> start;

  std::size_t size() const { return doc.size(); }
};

WindowIndex build_window_index(std::span<const std::vector<TokenId>> corpus, int context) {
  WindowIndex index;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto len = static_cast<std::int64_t>(corpus[d].size());
    for (std::int64_t s = 0; s + context < len; ++s) {
      index.doc.push_back(static_cast<std::uint32_t>(d));
      index.start.push_back(static_cast<std::uint32_t>(s));
    }
  }
  return index;
}

void fill_batch(std::span<const std::vector<TokenId>> corpus, const WindowIndex& index,
                std::span<const std::size_t> which, int context, WindowBatch& batch) {
  batch.batch = static_cast<int>(which.size());
  batch.context = context;
  batch.tokens.resize(which.size() * static_cast<std::size_t>(context));
  batch.labels.resize(which.size());
  for (std::size_t b = 0; b < which.size(); ++b) {
    const auto& doc = corpus[index.doc[which[b]]];
    const auto start = index.start[which[b]];
    for (int p = 0; p < context; ++p) {
      batch.tokens[b * static_cast<std::size_t>(context) + static_cast<std::size_t>(p)] =
          doc[start + static_cast<std::size_t>(p)];
    }
    batch.labels[b] = doc[start + static_cast<std::size_t>(context)];
  }
}

TokenMetricsStore evaluate_slice(const ModelParams& params, const TrainConfig& config,
                                 std::span<const std::vector<TokenId>> corpus,
                                 const WindowIndex& index,
                                 std::span<const std::size_t> eval_windows) {
  TokenMetricsStore store(config.vocab_size);
  constexpr std::size_t kChunk = 512;
  WindowBatch batch;
  ForwardCache cache;
  for (std::size_t begin = 0; begin < eval_windows.size(); begin += kChunk) {
    const std::size_t end = std::min(eval_windows.size(), begin + kChunk);
    fill_batch(corpus, index, eval_windows.subspan(begin, end - begin), config.context_length,
               batch);
    forward(params, batch, cache);
    Eigen::VectorXd logits_row;
    for (int b = 0; b < batch.batch; ++b) {
      const TokenId label = batch.labels[static_cast<std::size_t>(b)];
      logits_row = cache.logits.row(b);  // contiguous copy of the strided row
      const std::span<const double> row_span(logits_row.data(),
                                             static_cast<std::size_t>(logits_row.size()));
      const double loss = per_token_ce(row_span, label);
      const bool correct = argmax_predict(row_span) == label;
      store.accumulate(label, loss, correct);
    }
  }
  return store;
}

}  // namespace

const EvalSnapshot& TrainResult::final_checkpoint() const {
  if (checkpoints.empty()) {
    throw std::logic_error("TrainResult: no checkpoints recorded");
  }
  return checkpoints.back();
}

TrainResult train(const TrainConfig& config, std::span<const std::vector<TokenId>> corpus,
                  MetricsSink* sink) {
  config.validate();
  const WindowIndex index = build_window_index(corpus, config.context_length);
  if (index.size() == 0) {
    throw std::invalid_argument(
        "train: corpus provides no full context window (need documents longer than "
        "context_length)");
  }

  TrainResult result;
  result.config = config;
  result.frequency = count_frequencies(corpus, config.vocab_size);

  Rng rng(config.seed);
  ModelParams params = ModelParams::init(config, rng);

  // Fixed evaluation slice, chosen once per run.
  const auto slice_target = static_cast<std::size_t>(std::min<double>(
      static_cast<double>(config.eval_max_windows),
      std::max(1.0, std::floor(config.eval_fraction * static_cast<double>(index.size())))));
  std::vector<std::size_t> all_windows(index.size());
  std::iota(all_windows.begin(), all_windows.end(), std::size_t{0});
  for (std::size_t i = 0; i < slice_target && i + 1 < all_windows.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(all_windows.size() - i));
    std::swap(all_windows[i], all_windows[j]);
  }
  std::vector<std::size_t> eval_windows(all_windows.begin(),
                                        all_windows.begin() + static_cast<std::ptrdiff_t>(
                                                                  std::min(slice_target,
                                                                           all_windows.size())));
  std::sort(eval_windows.begin(), eval_windows.end());
  all_windows.clear();
  all_windows.shrink_to_fit();

  OptimizerState state = OptimizerState::zeros(config);
  Gradients grads = ModelParams::zeros(config);
  WindowBatch batch;
  ForwardCache cache;
  std::vector<std::size_t> draws(static_cast<std::size_t>(config.batch_size));

  const auto emit_checkpoint = [&](std::int64_t step) {
    TokenMetricsStore store = evaluate_slice(params, config, corpus, index, eval_windows);
    if (sink != nullptr) {
      sink->on_checkpoint(make_checkpoint_record(step, config.lambda, config.seed, store));
    }
    result.checkpoints.push_back(EvalSnapshot{step, std::move(store)});
  };

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    for (auto& draw : draws) {
      draw = static_cast<std::size_t>(rng.below(index.size()));
    }
    fill_batch(corpus, index, draws, config.context_length, batch);
    forward(params, batch, cache);
    const double loss = backward(params, batch, cache, grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (lambda=" + format_double(config.lambda) + ")");
    }
    adamw_step(params, grads, state, cosine_lr(step, config), config.lambda);
    const std::int64_t done = step + 1;
    if (done % config.eval_every == 0 || done == config.total_steps) {
      emit_checkpoint(done);
    }
  }

  result.params = std::move(params);
  return result;
}

namespace {

std::filesystem::path run_log_path(const std::filesystem::path& dir, double lambda,
                                   std::uint64_t seed) {
  return dir / ("run_lambda" + format_double(lambda) + "_seed" + std::to_string(seed) + ".jsonl");
}

double sample_std(std::span<const double> values, double mean) {
  if (values.size() < 2) {
    return 0.0;
  }
  double sq = 0.0;
  for (const double v : values) {
    sq += (v - mean) * (v - mean);
  }
  return std::sqrt(sq / static_cast<double>(values.size() - 1));
}

}  // namespace

SweepResult sweep(const TrainConfig& base_config, std::span<const double> lambdas,
                  std::span<const std::uint64_t> seeds,
                  std::span<const std::vector<TokenId>> corpus,
                  const std::optional<std::filesystem::path>& out_dir) {
  if (lambdas.empty() || seeds.empty()) {
    throw std::invalid_argument("sweep: lambda grid and seed list must be non-empty");
  }
  SweepResult result;
  result.runs.resize(lambdas.size() * seeds.size());

  std::vector<std::function<void()>> jobs;
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const std::size_t slot = li * seeds.size() + si;
      jobs.push_back([&, li, si, slot] {
        SweepRunOutcome& outcome = result.runs[slot];
        outcome.lambda = lambdas[li];
        outcome.seed = seeds[si];
        try {
          TrainConfig config = base_config;
          config.lambda = lambdas[li];
          config.seed = seeds[si];
          std::unique_ptr<JsonlMetricsSink> sink;
          if (out_dir.has_value()) {
            outcome.log_path = run_log_path(*out_dir, config.lambda, config.seed);
            sink = std::make_unique<JsonlMetricsSink>(outcome.log_path);
          }
          TrainResult run = train(config, corpus, sink.get());
          if (sink) {
            sink->close();
          }
          const auto& store = run.final_checkpoint().store;
          outcome.final_avg_loss = store.average_loss();
          outcome.final_tok_bal_loss = store.token_balanced_loss();
          outcome.final_ppl = store.per_token_perplexity();
          outcome.final_acc = store.per_token_accuracy();
          outcome.ok = true;
        } catch (const std::exception& e) {
          outcome.ok = false;
          outcome.error = e.what();
        }
      });
    }
  }
  parallel_jobs(jobs);

  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    SweepAggregate agg;
    agg.lambda = lambdas[li];
    std::vector<double> avg, bal, ppl, acc;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& outcome = result.runs[li * seeds.size() + si];
      if (!outcome.ok) {
        continue;
      }
      avg.push_back(outcome.final_avg_loss);
      bal.push_back(outcome.final_tok_bal_loss);
      ppl.push_back(outcome.final_ppl);
      acc.push_back(outcome.final_acc);
    }
    agg.runs = static_cast<int>(avg.size());
    if (!avg.empty()) {
      const auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      };
      agg.avg_loss_mean = mean(avg);
      agg.avg_loss_std = sample_std(avg, agg.avg_loss_mean);
      agg.tok_bal_loss_mean = mean(bal);
      agg.tok_bal_loss_std = sample_std(bal, agg.tok_bal_loss_mean);
      agg.ppl_mean = mean(ppl);
      agg.ppl_std = sample_std(ppl, agg.ppl_mean);
      agg.acc_mean = mean(acc);
      agg.acc_std = sample_std(acc, agg.acc_mean);
    }
    result.aggregates.push_back(agg);
  }
  result.all_ok = std::all_of(result.runs.begin(), result.runs.end(),
                              [](const SweepRunOutcome& o) { return o.ok; });
  return result;
}

}  // namespace decaylens
