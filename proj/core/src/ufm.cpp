// SPDX-License-Identifier: Apache-2.0
#include "decaylens/ufm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "decaylens/errors.hpp"
#include "decaylens/io.hpp"
#include "decaylens/rng.hpp"

namespace decaylens {

namespace {

double h_penalty_factor(HPenalty penalty) { return penalty == HPenalty::Full ? 1.0 : 0.5; }

void check_shapes(const UfmProblem& problem, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h) {
  const auto n = problem.total_samples();
  if (w.rows() != problem.num_classes || w.cols() != problem.feature_dim) {
    throw std::invalid_argument("ufm: W must be V x d");
  }
  if (h.rows() != problem.feature_dim || h.cols() != n) {
    throw std::invalid_argument("ufm: H must be d x N");
  }
}

std::vector<TokenId> expand_labels(const UfmProblem& problem) {
  std::vector<TokenId> labels;
  labels.reserve(static_cast<std::size_t>(problem.total_samples()));
  for (int k = 0; k < problem.num_classes; ++k) {
    labels.insert(labels.end(), static_cast<std::size_t>(problem.class_counts[k]),
                  static_cast<TokenId>(k));
  }
  return labels;
}

// Column-wise stable softmax cross-entropy; fills per-sample losses and
// optionally the softmax probabilities (for gradients).
double mean_ce(const Eigen::MatrixXd& z, const std::vector<TokenId>& labels,
               std::vector<double>* per_sample, Eigen::MatrixXd* probs) {
  const auto n = z.cols();
  double sum = 0.0;
  if (probs != nullptr) {
    probs->resize(z.rows(), n);
  }
  if (per_sample != nullptr) {
    per_sample->resize(static_cast<std::size_t>(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zmax = z.col(i).maxCoeff();
    const Eigen::ArrayXd e = (z.col(i).array() - zmax).exp();
    const double denom = e.sum();
    const double loss = std::log(denom) - (z(labels[static_cast<std::size_t>(i)], i) - zmax);
    sum += loss;
    if (per_sample != nullptr) {
      (*per_sample)[static_cast<std::size_t>(i)] = loss;
    }
    if (probs != nullptr) {
      probs->col(i) = (e / denom).matrix();
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

std::int64_t UfmProblem::total_samples() const {
  std::int64_t n = 0;
  for (const auto c : class_counts) {
    n += c;
  }
  return n;
}

void UfmProblem::validate() const {
  if (num_classes < 2) {
    throw std::invalid_argument("ufm: need at least 2 classes");
  }
  if (feature_dim < 1) {
    throw std::invalid_argument("ufm: feature_dim must be >= 1");
  }
  if (static_cast<int>(class_counts.size()) != num_classes) {
    throw std::invalid_argument("ufm: class_counts length must equal num_classes");
  }
  for (const auto c : class_counts) {
    if (c < 1) {
      throw std::invalid_argument("ufm: every class count must be >= 1");
    }
  }
  if (!(lambda_w > 0.0) || !(lambda_h > 0.0)) {
    throw std::invalid_argument("ufm: both regularizers must be strictly positive");
  }
}

UfmObjectiveParts ufm_objective_parts(const UfmProblem& problem, const Eigen::MatrixXd& w,
                                      const Eigen::MatrixXd& h, HPenalty penalty) {
  problem.validate();
  check_shapes(problem, w, h);
  if ((h.array() < 0.0).any()) {
    throw std::invalid_argument("ufm: H must be entrywise non-negative");
  }
  const auto labels = expand_labels(problem);
  const Eigen::MatrixXd z = w * h;
  UfmObjectiveParts parts;
  parts.ce = mean_ce(z, labels, nullptr, nullptr);
  parts.w_penalty = 0.5 * problem.lambda_w * w.squaredNorm();
  parts.h_penalty = h_penalty_factor(penalty) * problem.lambda_h * h.squaredNorm();
  return parts;
}

double ufm_objective(const UfmProblem& problem, const Eigen::MatrixXd& w,
                     const Eigen::MatrixXd& h, HPenalty penalty) {
  return ufm_objective_parts(problem, w, h, penalty).total();
}

void ufm_gradients(const UfmProblem& problem, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                   HPenalty penalty, Eigen::MatrixXd& grad_w, Eigen::MatrixXd& grad_h) {
  check_shapes(problem, w, h);
  const auto labels = expand_labels(problem);
  const auto n = static_cast<double>(problem.total_samples());
  Eigen::MatrixXd probs;
  const Eigen::MatrixXd z = w * h;
  mean_ce(z, labels, nullptr, &probs);
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    probs(labels[static_cast<std::size_t>(i)], i) -= 1.0;
  }
  grad_w = (probs * h.transpose()) / n + problem.lambda_w * w;
  grad_h = (w.transpose() * probs) / n + 2.0 * h_penalty_factor(penalty) * problem.lambda_h * h;
}

double logit_gap(const UfmProblem& problem, int k) {
  problem.validate();
  if (k < 0 || k >= problem.num_classes) {
    throw std::out_of_range("logit_gap: class index out of range");
  }
  const double v = problem.num_classes;
  const double n_total = static_cast<double>(problem.total_samples());
  const double n_k = static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]);
  const double inner =
      (v - 1.0) * (std::sqrt(n_k) /
                       (n_total * std::sqrt((v - 1.0) / v * problem.lambda_w * problem.lambda_h)) -
                   1.0);
  if (!(inner > 0.0)) {
    return 0.0;
  }
  const double gap = std::log(inner);
  return gap > 0.0 ? gap : 0.0;
}

double neglect_threshold(const UfmProblem& problem) {
  const double v = problem.num_classes;
  const double n_total = static_cast<double>(problem.total_samples());
  return problem.lambda_w * problem.lambda_h * n_total * n_total * (v - 1.0) / v;
}

std::vector<int> neglect_set(const UfmProblem& problem) {
  problem.validate();
  const double threshold = neglect_threshold(problem);
  std::vector<int> out;
  for (int k = 0; k < problem.num_classes; ++k) {
    if (static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]) <= threshold) {
      out.push_back(k);
    }
  }
  return out;
}

double per_token_loss_closed_form(const UfmProblem& problem, int k, LossVariant variant) {
  problem.validate();
  if (k < 0 || k >= problem.num_classes) {
    throw std::out_of_range("per_token_loss_closed_form: class index out of range");
  }
  const double v = problem.num_classes;
  const double v_sq = v * v;
  const double gap_k = logit_gap(problem, k);
  double denom = 0.0;
  for (int j = 0; j < problem.num_classes; ++j) {
    const double gap_j = logit_gap(problem, j);
    if (variant == LossVariant::FullOwnLogit && j == k) {
      denom += std::exp(gap_k);
    } else {
      denom += std::exp(gap_j / v_sq);
    }
  }
  return std::log(denom) - gap_k;
}

double per_token_loss_gap_form(const UfmProblem& problem, int k) {
  const double v = problem.num_classes;
  return std::log1p((v - 1.0) * std::exp(-logit_gap(problem, k)));
}

double ClosedFormPrediction::objective(const UfmProblem& problem, HPenalty penalty) const {
  const auto n_total = static_cast<double>(problem.total_samples());
  double ce = 0.0;
  double h_sq = 0.0;
  double w_sq = 0.0;
  for (int k = 0; k < problem.num_classes; ++k) {
    const double n_k = static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]);
    ce += n_k * per_token_loss_gap_form(problem, k);
    h_sq += n_k * mu_sq_norms[static_cast<std::size_t>(k)];  // within-class collapse
    w_sq += w_sq_norms[static_cast<std::size_t>(k)];
  }
  return ce / n_total + 0.5 * problem.lambda_w * w_sq +
         h_penalty_factor(penalty) * problem.lambda_h * h_sq;
}

ClosedFormPrediction closed_form(const UfmProblem& problem, LossVariant variant) {
  problem.validate();
  if (problem.feature_dim < problem.num_classes) {
    throw std::invalid_argument(
        "closed_form: requires feature_dim >= num_classes (global-minimum "
        "characterization precondition)");
  }
  const double v = problem.num_classes;
  ClosedFormPrediction pred;
  pred.variant = variant;
  pred.logit_gaps.resize(static_cast<std::size_t>(problem.num_classes));
  pred.mu_sq_norms.resize(static_cast<std::size_t>(problem.num_classes));
  pred.w_sq_norms.resize(static_cast<std::size_t>(problem.num_classes));
  pred.per_token_loss.resize(static_cast<std::size_t>(problem.num_classes));

  double weighted_gap_sum = 0.0;  // sum_j sqrt(n_j) M_j
  for (int k = 0; k < problem.num_classes; ++k) {
    const double n_k = static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]);
    const double gap = logit_gap(problem, k);
    pred.logit_gaps[static_cast<std::size_t>(k)] = gap;
    pred.mu_sq_norms[static_cast<std::size_t>(k)] =
        std::sqrt(problem.lambda_w * (v - 1.0) / (problem.lambda_h * v * n_k)) * gap;
    weighted_gap_sum += std::sqrt(n_k) * gap;
    if (gap == 0.0) {
      pred.neglected.push_back(k);
    }
  }
  const double w_prefactor =
      std::sqrt(problem.lambda_h / (problem.lambda_w * v * v * v * (v - 1.0)));
  for (int k = 0; k < problem.num_classes; ++k) {
    const double n_k = static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]);
    const double own = std::sqrt(n_k) * pred.logit_gaps[static_cast<std::size_t>(k)];
    // cross-class sum excludes the class's own term (numerically verified
    // reading; the all-j reading is reported by verify_solution)
    pred.w_sq_norms[static_cast<std::size_t>(k)] =
        w_prefactor * ((v - 1.0) * (v - 1.0) * own + (weighted_gap_sum - own));
    pred.per_token_loss[static_cast<std::size_t>(k)] =
        per_token_loss_closed_form(problem, k, variant);
  }
  return pred;
}

LossLambdaDerivative loss_lambda_derivative(const UfmProblem& problem, int k,
                                            LossVariant variant) {
  problem.validate();
  if (k < 0 || k >= problem.num_classes) {
    throw std::out_of_range("loss_lambda_derivative: class index out of range");
  }
  if (problem.lambda_w != problem.lambda_h) {
    throw std::invalid_argument("loss_lambda_derivative: requires lambda_w == lambda_h");
  }
  const double lambda = problem.lambda_w;
  const double v = problem.num_classes;
  const double v_sq = v * v;
  const double n_total = static_cast<double>(problem.total_samples());

  // Gap-transition boundaries in n_k at this lambda: the indicator edge
  // lambda^2 N^2 (V-1)/V and the clamp edge lambda^2 N^2 V/(V-1).
  const double edge_lo = lambda * lambda * n_total * n_total * (v - 1.0) / v;
  const double edge_hi = lambda * lambda * n_total * n_total * v / (v - 1.0);
  const double n_k = static_cast<double>(problem.class_counts[static_cast<std::size_t>(k)]);
  for (const double edge : {edge_lo, edge_hi}) {
    if (std::abs(n_k - edge) <= 1e-12 * std::max(1.0, edge)) {
      throw std::invalid_argument(
          "loss_lambda_derivative: n_k sits on a gap-transition boundary; the "
          "derivative is undefined there");
    }
  }

  // dM_j/dlambda, zero wherever the clamp is active.
  const auto gap_derivative = [&](int j) {
    if (logit_gap(problem, j) <= 0.0) {
      return 0.0;
    }
    const double n_j = static_cast<double>(problem.class_counts[static_cast<std::size_t>(j)]);
    const double root = std::sqrt(n_j * v);
    return -root / (lambda * (root - lambda * n_total * std::sqrt(v - 1.0)));
  };

  double denom = 0.0;
  double denom_derivative = 0.0;
  for (int j = 0; j < problem.num_classes; ++j) {
    const double gap_j = logit_gap(problem, j);
    if (variant == LossVariant::FullOwnLogit && j == k) {
      const double term = std::exp(gap_j);
      denom += term;
      denom_derivative += term * gap_derivative(j);
    } else {
      const double term = std::exp(gap_j / v_sq);
      denom += term;
      denom_derivative += term * gap_derivative(j) / v_sq;
    }
  }
  LossLambdaDerivative result;
  result.total = denom_derivative / denom - gap_derivative(k);
  result.gap_part = -gap_derivative(k);  // the k-dependent neglect-rate term
  result.base_part = result.total - result.gap_part;
  return result;
}

UfmSolution solve_numeric(const UfmProblem& problem, std::uint64_t seed,
                          const SolveOptions& options) {
  problem.validate();
  const auto labels = expand_labels(problem);
  const auto n = static_cast<Eigen::Index>(problem.total_samples());
  const Eigen::Index v = problem.num_classes;
  const Eigen::Index d = problem.feature_dim;
  const double hp = h_penalty_factor(options.penalty);

  UfmSolution best;
  bool have_best = false;

  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    Rng rng(seed + static_cast<std::uint64_t>(restart) * 0x9e3779b97f4a7c15ULL);
    Eigen::MatrixXd w(v, d);
    Eigen::MatrixXd h(d, n);
    for (Eigen::Index i = 0; i < v; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        w(i, j) = rng.uniform(0.0, options.init_scale);
      }
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        h(i, j) = rng.uniform(0.0, options.init_scale);
      }
    }

    const auto objective_of = [&](const Eigen::MatrixXd& wm, const Eigen::MatrixXd& hm) {
      const Eigen::MatrixXd z = wm * hm;
      double ce = mean_ce(z, labels, nullptr, nullptr);
      return ce + 0.5 * problem.lambda_w * wm.squaredNorm() +
             hp * problem.lambda_h * hm.squaredNorm();
    };
    const auto gradients_of = [&](const Eigen::MatrixXd& wm, const Eigen::MatrixXd& hm,
                                  Eigen::MatrixXd& gw, Eigen::MatrixXd& gh) {
      Eigen::MatrixXd probs;
      const Eigen::MatrixXd z = wm * hm;
      mean_ce(z, labels, nullptr, &probs);
      for (Eigen::Index i = 0; i < probs.cols(); ++i) {
        probs(labels[static_cast<std::size_t>(i)], i) -= 1.0;
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      gw = probs * hm.transpose() * inv_n + problem.lambda_w * wm;
      gh = wm.transpose() * probs * inv_n + 2.0 * hp * problem.lambda_h * hm;
    };

    double f = objective_of(w, h);
    Eigen::MatrixXd gw(v, d), gh(d, n), prev_w, prev_h, prev_gw, prev_gh;
    double step = 1.0;
    bool converged = false;
    double pgn = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < options.max_iters; ++it) {
      gradients_of(w, h, gw, gh);
      // projected gradient: H components pinned at the boundary do not count
      double pg_sq = gw.squaredNorm();
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const double g = gh(i, j);
          if (h(i, j) > 0.0 || g < 0.0) {
            pg_sq += g * g;
          }
        }
      }
      pgn = std::sqrt(pg_sq);
      if (!std::isfinite(f) || !std::isfinite(pgn)) {
        throw std::runtime_error("solve_numeric: non-finite objective at iteration " +
                                 std::to_string(it) + " (objective=" + format_double(f) + ")");
      }
      if (pgn <= options.tolerance * (1.0 + std::abs(f))) {
        converged = true;
        break;
      }
      if (it > 0) {
        const Eigen::MatrixXd sw = w - prev_w;
        const Eigen::MatrixXd sh = h - prev_h;
        const double sy = (sw.array() * (gw - prev_gw).array()).sum() +
                          (sh.array() * (gh - prev_gh).array()).sum();
        const double ss = sw.squaredNorm() + sh.squaredNorm();
        step = (sy > 1e-300) ? std::clamp(ss / sy, 1e-12, 1e6) : 1.0;
      }
      prev_w = w;
      prev_h = h;
      prev_gw = gw;
      prev_gh = gh;
      double t = step;
      bool accepted = false;
      for (int half = 0; half < 60; ++half) {
        Eigen::MatrixXd wn = prev_w - t * gw;
        Eigen::MatrixXd hn = (prev_h - t * gh).cwiseMax(0.0);
        const double fn = objective_of(wn, hn);
        if (fn <= f + 1e-12 * (1.0 + std::abs(f))) {
          w = std::move(wn);
          h = std::move(hn);
          f = fn;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        break;  // line search stalled at numerical resolution
      }
    }

    UfmSolution sol;
    sol.w = std::move(w);
    sol.h = std::move(h);
    sol.objective = f;
    sol.sample_labels = labels;
    const Eigen::MatrixXd z = sol.w * sol.h;
    mean_ce(z, labels, &sol.per_sample_losses, nullptr);
    sol.converged = converged;
    sol.iterations = it;
    sol.projected_grad_norm = pgn;
    if (!have_best || sol.objective < best.objective) {
      best = std::move(sol);
      have_best = true;
    }
  }
  return best;
}

const CheckResult& VerifyReport::check(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) {
      return c;
    }
  }
  throw std::out_of_range("VerifyReport: no check named " + name);
}

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

VerifyReport verify_solution(const UfmProblem& problem, const UfmSolution& solution,
                             const ClosedFormPrediction& prediction,
                             const VerifyTolerances& tolerances) {
  problem.validate();
  const int v = problem.num_classes;
  const auto& labels = solution.sample_labels;

  // class means and spreads
  std::vector<Eigen::VectorXd> mus(static_cast<std::size_t>(v));
  std::vector<double> spreads(static_cast<std::size_t>(v), 0.0);
  for (int k = 0; k < v; ++k) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(problem.feature_dim);
    std::int64_t count = 0;
    for (Eigen::Index i = 0; i < solution.h.cols(); ++i) {
      if (labels[static_cast<std::size_t>(i)] == k) {
        mu += solution.h.col(i);
        ++count;
      }
    }
    mu /= static_cast<double>(count);
    for (Eigen::Index i = 0; i < solution.h.cols(); ++i) {
      if (labels[static_cast<std::size_t>(i)] == k) {
        spreads[static_cast<std::size_t>(k)] = std::max(
            spreads[static_cast<std::size_t>(k)], (solution.h.col(i) - mu).norm());
      }
    }
    mus[static_cast<std::size_t>(k)] = std::move(mu);
  }

  const auto neglected = [&](int k) {
    return prediction.logit_gaps[static_cast<std::size_t>(k)] == 0.0;
  };

  VerifyReport report;
  const auto add = [&](std::string name, double residual, double tolerance) {
    report.checks.push_back(
        CheckResult{std::move(name), residual <= tolerance, residual, tolerance});
  };

  double collapse = 0.0;
  for (int k = 0; k < v; ++k) {
    collapse = std::max(collapse, spreads[static_cast<std::size_t>(k)] /
                                      (1.0 + mus[static_cast<std::size_t>(k)].norm()));
  }
  add("collapse", collapse, tolerances.collapse);

  double ortho = 0.0;
  for (int k = 0; k < v; ++k) {
    for (int l = k + 1; l < v; ++l) {
      if (neglected(k) || neglected(l)) {
        continue;
      }
      const double denom =
          mus[static_cast<std::size_t>(k)].norm() * mus[static_cast<std::size_t>(l)].norm();
      ortho = std::max(
          ortho, std::abs(mus[static_cast<std::size_t>(k)].dot(mus[static_cast<std::size_t>(l)])) /
                     denom);
    }
  }
  add("orthogonality", ortho, tolerances.orthogonality);

  double mu_rel = 0.0;
  double neglected_mu = 0.0;
  for (int k = 0; k < v; ++k) {
    const double actual = mus[static_cast<std::size_t>(k)].squaredNorm();
    const double predicted = prediction.mu_sq_norms[static_cast<std::size_t>(k)];
    if (neglected(k)) {
      neglected_mu = std::max(neglected_mu, mus[static_cast<std::size_t>(k)].norm());
    } else {
      mu_rel = std::max(mu_rel, std::abs(actual - predicted) / predicted);
    }
  }
  add("mu_norms", mu_rel, tolerances.norm_rel);
  add("neglected_mu", neglected_mu, tolerances.neglected_mu);

  double w_rel = 0.0;
  double w_rel_all_j = 0.0;
  double weighted_gap_sum = 0.0;
  for (int j = 0; j < v; ++j) {
    weighted_gap_sum += std::sqrt(static_cast<double>(problem.class_counts[j])) *
                        prediction.logit_gaps[static_cast<std::size_t>(j)];
  }
  const double w_prefactor = std::sqrt(
      problem.lambda_h / (problem.lambda_w * static_cast<double>(v) * v * v * (v - 1.0)));
  for (int k = 0; k < v; ++k) {
    const double actual = solution.w.row(k).squaredNorm();
    const double predicted = prediction.w_sq_norms[static_cast<std::size_t>(k)];
    const double own = std::sqrt(static_cast<double>(problem.class_counts[k])) *
                       prediction.logit_gaps[static_cast<std::size_t>(k)];
    const double predicted_all_j =
        w_prefactor * ((v - 1.0) * (v - 1.0) * own + weighted_gap_sum);
    w_rel = std::max(w_rel, std::abs(actual - predicted) / std::max(predicted, 1e-8));
    w_rel_all_j =
        std::max(w_rel_all_j, std::abs(actual - predicted_all_j) / std::max(predicted_all_j, 1e-8));
  }
  add("w_norms", w_rel, tolerances.norm_rel);
  add("w_norms_all_j", w_rel_all_j, tolerances.norm_rel);  // alternative reading, reported

  // logit identities under both readings
  double own_vs_gap = 0.0;
  double own_vs_scaled_gap = 0.0;
  double cross_vs_scaled_gap = 0.0;
  double cross_vs_neg_gap = 0.0;
  for (int k = 0; k < v; ++k) {
    const double gap_k = prediction.logit_gaps[static_cast<std::size_t>(k)];
    const double own = solution.w.row(k).dot(mus[static_cast<std::size_t>(k)]);
    own_vs_gap = std::max(own_vs_gap, std::abs(own - gap_k));
    own_vs_scaled_gap =
        std::max(own_vs_scaled_gap, std::abs(own - (v - 1.0) * gap_k / static_cast<double>(v)));
    for (int j = 0; j < v; ++j) {
      if (j == k) {
        continue;
      }
      const double gap_j = prediction.logit_gaps[static_cast<std::size_t>(j)];
      const double cross = solution.w.row(j).dot(mus[static_cast<std::size_t>(k)]);
      cross_vs_scaled_gap = std::max(
          cross_vs_scaled_gap, std::abs(cross - gap_j / (static_cast<double>(v) * v)));
      cross_vs_neg_gap =
          std::max(cross_vs_neg_gap, std::abs(cross + gap_k / static_cast<double>(v)));
    }
  }
  add("logit_own_vs_gap", own_vs_gap, tolerances.logit_abs);
  add("logit_own_vs_scaled_gap", own_vs_scaled_gap, tolerances.logit_abs);
  add("logit_cross_vs_scaled_gap", cross_vs_scaled_gap, tolerances.logit_abs);
  add("logit_cross_vs_neg_gap", cross_vs_neg_gap, tolerances.logit_abs);

  // per-sample CE against both closed-form variants and the gap form
  double ce_scaled = 0.0;
  double ce_full = 0.0;
  double ce_gap = 0.0;
  for (std::size_t i = 0; i < solution.per_sample_losses.size(); ++i) {
    const int k = labels[i];
    const double actual = solution.per_sample_losses[i];
    ce_scaled = std::max(
        ce_scaled,
        std::abs(actual - per_token_loss_closed_form(problem, k, LossVariant::ScaledOwnLogit)));
    ce_full = std::max(
        ce_full,
        std::abs(actual - per_token_loss_closed_form(problem, k, LossVariant::FullOwnLogit)));
    ce_gap = std::max(ce_gap, std::abs(actual - per_token_loss_gap_form(problem, k)));
  }
  add("ce_scaled_own", ce_scaled, tolerances.ce_abs);
  add("ce_full_own", ce_full, tolerances.ce_abs);
  add("ce_gap_form", ce_gap, tolerances.ce_abs);

  return report;
}

UfmProblem load_ufm_problem(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string(), "(document)", e.what());
  }
  const auto require = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) {
      throw SchemaError(path.string(), field, "missing required field");
    }
    return j.at(field);
  };
  UfmProblem problem;
  try {
    problem.num_classes = require("V").get<int>();
    problem.feature_dim = require("d").get<int>();
    problem.class_counts = require("n").get<std::vector<std::int64_t>>();
    problem.lambda_w = require("lambda_W").get<double>();
    problem.lambda_h = require("lambda_H").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string(), "(type)", e.what());
  }
  try {
    problem.validate();
  } catch (const std::exception& e) {
    throw SchemaError(path.string(), "(values)", e.what());
  }
  return problem;
}

void save_ufm_problem(const UfmProblem& problem, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["V"] = problem.num_classes;
  j["d"] = problem.feature_dim;
  j["n"] = problem.class_counts;
  j["lambda_W"] = problem.lambda_w;
  j["lambda_H"] = problem.lambda_h;
  atomic_write_file(path, j.dump());
}

}  // namespace decaylens
