// SPDX-License-Identifier: Apache-2.0
#include "decaylens/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "decaylens/errors.hpp"
#include "decaylens/io.hpp"

namespace decaylens {

void TrainConfig::validate() const {
  if (vocab_size < 2) {
    throw std::invalid_argument("TrainConfig: vocab_size must be >= 2");
  }
  if (context_length < 1 || embed_dim < 1 || hidden_dim < 1 || batch_size < 1) {
    throw std::invalid_argument("TrainConfig: dimensions must be positive");
  }
  if (total_steps < 1 || warmup_steps < 0 || warmup_steps >= total_steps) {
    throw std::invalid_argument("TrainConfig: requires 0 <= warmup_steps < total_steps");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("TrainConfig: lambda must be >= 0");
  }
  if (eval_every < 1) {
    throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  }
  if (!(base_lr >= 0.0)) {
    throw std::invalid_argument("TrainConfig: base_lr must be >= 0");
  }
  if (!(eval_fraction > 0.0) || eval_fraction > 1.0 || eval_max_windows < 1) {
    throw std::invalid_argument("TrainConfig: eval slice must be non-empty");
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string(), "(document)", e.what());
  }
  TrainConfig config;
  const auto get = [&](const char* field, auto& out, bool required) {
    if (!j.contains(field)) {
      if (required) {
        throw SchemaError(path.string(), field, "missing required field");
      }
      return;
    }
    try {
      out = j.at(field).get<std::remove_reference_t<decltype(out)>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string(), field, e.what());
    }
  };
  get("vocab_size", config.vocab_size, true);
  get("context_length", config.context_length, false);
  get("embed_dim", config.embed_dim, false);
  get("hidden_dim", config.hidden_dim, false);
  get("batch_size", config.batch_size, false);
  get("total_steps", config.total_steps, false);
  get("warmup_steps", config.warmup_steps, false);
  get("base_lr", config.base_lr, false);
  get("lambda", config.lambda, false);
  get("seed", config.seed, false);
  get("eval_every", config.eval_every, false);
  get("eval_fraction", config.eval_fraction, false);
  get("eval_max_windows", config.eval_max_windows, false);
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw SchemaError(path.string(), "(values)", e.what());
  }
  return config;
}

void save_train_config(const TrainConfig& config, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["vocab_size"] = config.vocab_size;
  j["context_length"] = config.context_length;
  j["embed_dim"] = config.embed_dim;
  j["hidden_dim"] = config.hidden_dim;
  j["batch_size"] = config.batch_size;
  j["total_steps"] = config.total_steps;
  j["warmup_steps"] = config.warmup_steps;
  j["base_lr"] = config.base_lr;
  j["lambda"] = config.lambda;
  j["seed"] = config.seed;
  j["eval_every"] = config.eval_every;
  j["eval_fraction"] = config.eval_fraction;
  j["eval_max_windows"] = config.eval_max_windows;
  atomic_write_file(path, j.dump(2));
}

ModelParams ModelParams::zeros(const TrainConfig& config) {
  ModelParams params;
  params.embedding = Eigen::MatrixXd::Zero(config.vocab_size, config.embed_dim);
  params.hidden_weight =
      Eigen::MatrixXd::Zero(config.hidden_dim, config.embed_dim * config.context_length);
  params.hidden_bias = Eigen::VectorXd::Zero(config.hidden_dim);
  params.output_weight = Eigen::MatrixXd::Zero(config.vocab_size, config.hidden_dim);
  params.output_bias = Eigen::VectorXd::Zero(config.vocab_size);
  return params;
}

ModelParams ModelParams::init(const TrainConfig& config, Rng& rng) {
  ModelParams params = zeros(config);
  const auto fill_uniform = [&rng](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = rng.uniform(-scale, scale);
      }
    }
  };
  fill_uniform(params.embedding, 0.05);
  fill_uniform(params.hidden_weight,
               std::sqrt(6.0 / (config.embed_dim * config.context_length + config.hidden_dim)));
  fill_uniform(params.output_weight, std::sqrt(6.0 / (config.hidden_dim + config.vocab_size)));
  // biases start at zero
  return params;
}

double ModelParams::squared_norm() const {
  return embedding.squaredNorm() + hidden_weight.squaredNorm() + hidden_bias.squaredNorm() +
         output_weight.squaredNorm() + output_bias.squaredNorm();
}

void forward(const ModelParams& params, const WindowBatch& batch, ForwardCache& cache) {
  const auto e = params.embedding.cols();
  const auto v = params.embedding.rows();
  cache.input.resize(batch.batch, e * batch.context);
  for (int b = 0; b < batch.batch; ++b) {
    for (int p = 0; p < batch.context; ++p) {
      const TokenId id = batch.token(b, p);
      if (id < 0 || id >= v) {
        throw std::out_of_range("forward: token id out of range: " + std::to_string(id));
      }
      cache.input.row(b).segment(p * e, e) = params.embedding.row(id);
    }
  }
  cache.hidden_pre = cache.input * params.hidden_weight.transpose();
  cache.hidden_pre.rowwise() += params.hidden_bias.transpose();
  cache.hidden_act = cache.hidden_pre.cwiseMax(0.0);
  cache.logits = cache.hidden_act * params.output_weight.transpose();
  cache.logits.rowwise() += params.output_bias.transpose();
}

double backward(const ModelParams& params, const WindowBatch& batch, const ForwardCache& cache,
                Gradients& grads) {
  const auto e = params.embedding.cols();
  const int b_count = batch.batch;
  // softmax and mean CE, numerically stable per row
  Eigen::MatrixXd dlogits = cache.logits;
  double loss_sum = 0.0;
  for (int b = 0; b < b_count; ++b) {
    const double zmax = dlogits.row(b).maxCoeff();
    Eigen::ArrayXd ex = (dlogits.row(b).array() - zmax).exp();
    const double denom = ex.sum();
    loss_sum += std::log(denom) - (cache.logits(b, batch.labels[static_cast<std::size_t>(b)]) -
                                   zmax);
    dlogits.row(b) = (ex / denom).matrix().transpose();
    dlogits(b, batch.labels[static_cast<std::size_t>(b)]) -= 1.0;
  }
  if (!std::isfinite(loss_sum)) {
    throw std::runtime_error("backward: non-finite loss");
  }
  dlogits /= static_cast<double>(b_count);

  grads.output_weight = dlogits.transpose() * cache.hidden_act;
  grads.output_bias = dlogits.colwise().sum().transpose();
  Eigen::MatrixXd dact = dlogits * params.output_weight;
  const Eigen::MatrixXd dpre =
      (cache.hidden_pre.array() > 0.0).select(dact, Eigen::MatrixXd::Zero(dact.rows(), dact.cols()));
  grads.hidden_weight = dpre.transpose() * cache.input;
  grads.hidden_bias = dpre.colwise().sum().transpose();
  const Eigen::MatrixXd dinput = dpre * params.hidden_weight;
  grads.embedding.setZero(params.embedding.rows(), params.embedding.cols());
  for (int b = 0; b < b_count; ++b) {
    for (int p = 0; p < batch.context; ++p) {
      grads.embedding.row(batch.token(b, p)) += dinput.row(b).segment(p * e, e);
    }
  }
  return loss_sum / static_cast<double>(b_count);
}

OptimizerState OptimizerState::zeros(const TrainConfig& config) {
  OptimizerState state;
  state.m1 = ModelParams::zeros(config);
  state.m2 = ModelParams::zeros(config);
  state.step = 0;
  return state;
}

namespace {

template <typename Block>
void adamw_update_block(Block& param, const Block& grad, Block& m1, Block& m2, double lr,
                        double lambda, double bias1, double bias2) {
  m1 = kAdamBeta1 * m1 + (1.0 - kAdamBeta1) * grad;
  m2 = (kAdamBeta2 * m2.array() + (1.0 - kAdamBeta2) * grad.array().square()).matrix();
  // decoupled decay first, then the gradient-derived update
  param *= (1.0 - lr * lambda);
  param.array() -= lr * (m1.array() / bias1) / ((m2.array() / bias2).sqrt() + kAdamEps);
}

}  // namespace

void adamw_step(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr,
                double lambda) {
  if (lr < 0.0) {
    throw std::invalid_argument("adamw_step: lr must be >= 0");
  }
  state.step += 1;
  const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  adamw_update_block(params.embedding, grads.embedding, state.m1.embedding, state.m2.embedding,
                     lr, lambda, bias1, bias2);
  adamw_update_block(params.hidden_weight, grads.hidden_weight, state.m1.hidden_weight,
                     state.m2.hidden_weight, lr, lambda, bias1, bias2);
  adamw_update_block(params.hidden_bias, grads.hidden_bias, state.m1.hidden_bias,
                     state.m2.hidden_bias, lr, lambda, bias1, bias2);
  adamw_update_block(params.output_weight, grads.output_weight, state.m1.output_weight,
                     state.m2.output_weight, lr, lambda, bias1, bias2);
  adamw_update_block(params.output_bias, grads.output_bias, state.m1.output_bias,
                     state.m2.output_bias, lr, lambda, bias1, bias2);
}

double cosine_lr(std::int64_t step, const TrainConfig& config) {
  if (step > config.total_steps) {
    throw std::invalid_argument("cosine_lr: step beyond total_steps");
  }
  if (step < config.warmup_steps) {
    return config.base_lr * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  }
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.total_steps - config.warmup_steps);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::string blob;
  const auto append_matrix = [&blob](const Eigen::MatrixXd& m) {
    const std::int64_t rows = m.rows();
    const std::int64_t cols = m.cols();
    blob.append(reinterpret_cast<const char*>(&rows), sizeof(rows));
    blob.append(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        blob.append(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  };
  blob.append("DLNS0001", 8);
  append_matrix(params.embedding);
  append_matrix(params.hidden_weight);
  append_matrix(params.hidden_bias);
  append_matrix(params.output_weight);
  append_matrix(params.output_bias);
  atomic_write_file(path, blob);
}

}  // namespace decaylens
