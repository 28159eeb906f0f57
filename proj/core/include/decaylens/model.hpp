// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "decaylens/rng.hpp"
#include "decaylens/types.hpp"

namespace decaylens {

struct TrainConfig {
  std::int32_t vocab_size = 2000;
  int context_length = 16;   // c
  int embed_dim = 64;        // e
  int hidden_dim = 128;      // h
  int batch_size = 64;
  std::int64_t total_steps = 3000;
  std::int64_t warmup_steps = 10;
  double base_lr = 1e-3;
  double lambda = 0.0;  // decoupled weight-decay coefficient
  std::uint64_t seed = 1;
  std::int64_t eval_every = 100;
  // Checkpoint evaluation runs over a fixed sample of training windows,
  // chosen once per run: eval_fraction of all windows, capped at
  // eval_max_windows to bound eval cost.
  double eval_fraction = 0.10;
  std::int64_t eval_max_windows = 20000;

  void validate() const;
};

// JSON config file mirroring TrainConfig field names.
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& config, const std::filesystem::path& path);

// Concatenated-context embedding -> ReLU hidden layer -> softmax output.
struct ModelParams {
  Eigen::MatrixXd embedding;      // V x e
  Eigen::MatrixXd hidden_weight;  // h x (e*c)
  Eigen::VectorXd hidden_bias;    // h
  Eigen::MatrixXd output_weight;  // V x h
  Eigen::VectorXd output_bias;    // V

  static ModelParams zeros(const TrainConfig& config);
  static ModelParams init(const TrainConfig& config, Rng& rng);

  double squared_norm() const;
};

using Gradients = ModelParams;

struct WindowBatch {
  int batch = 0;
  int context = 0;
  std::vector<TokenId> tokens;  // batch * context, row-major
  std::vector<TokenId> labels;  // batch

  TokenId token(int b, int p) const { return tokens[static_cast<std::size_t>(b) * context + p]; }
};

struct ForwardCache {
  Eigen::MatrixXd input;       // B x (e*c)
  Eigen::MatrixXd hidden_pre;  // B x h
  Eigen::MatrixXd hidden_act;  // B x h
  Eigen::MatrixXd logits;      // B x V
};

// Deterministic; throws if a token id is outside the embedding table.
void forward(const ModelParams& params, const WindowBatch& batch, ForwardCache& cache);

// Exact gradients of the mean cross-entropy over the batch (weight decay
// excluded; decay is applied by the optimizer, decoupled). Returns the mean
// loss. The cache must come from forward() on the same batch.
double backward(const ModelParams& params, const WindowBatch& batch, const ForwardCache& cache,
                Gradients& grads);

struct OptimizerState {
  Gradients m1;
  Gradients m2;
  std::int64_t step = 0;

  static OptimizerState zeros(const TrainConfig& config);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Bias-corrected adaptive-moment update; weight decay applied as
// params *= (1 - lr*lambda) separately from the gradient-derived update.
void adamw_step(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr,
                double lambda);

// Linear ramp 0 -> base_lr over warmup_steps, then cosine decay to 0 at
// total_steps.
double cosine_lr(std::int64_t step, const TrainConfig& config);

void save_params(const ModelParams& params, const std::filesystem::path& path);

}  // namespace decaylens
