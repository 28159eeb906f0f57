// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "decaylens/types.hpp"

namespace decaylens {

// Regularized unconstrained-features problem: V classes, free feature matrix
// H (d x N, entrywise >= 0) and linear head W (V x d), mean cross-entropy
// plus (lambda_w/2)|W|_F^2 and a lambda_h |H|_F^2 penalty.
struct UfmProblem {
  int num_classes = 0;                   // V
  int feature_dim = 0;                   // d
  std::vector<std::int64_t> class_counts;  // n_k, one per class, >= 1
  double lambda_w = 0.0;
  double lambda_h = 0.0;

  std::int64_t total_samples() const;  // N
  void validate() const;               // throws on malformed instances
};

// The H-penalty as defined above uses the full lambda_h |H|^2. The halved
// variant uses (lambda_h/2)|H|^2, which is the form the closed-form
// predictions below are exact for (verified numerically by the test suite).
enum class HPenalty { Full, Halved };

struct UfmObjectiveParts {
  double ce = 0.0;
  double w_penalty = 0.0;
  double h_penalty = 0.0;
  double total() const { return ce + w_penalty + h_penalty; }
};

UfmObjectiveParts ufm_objective_parts(const UfmProblem& problem, const Eigen::MatrixXd& w,
                                      const Eigen::MatrixXd& h, HPenalty penalty);
double ufm_objective(const UfmProblem& problem, const Eigen::MatrixXd& w,
                     const Eigen::MatrixXd& h, HPenalty penalty);
void ufm_gradients(const UfmProblem& problem, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h,
                   HPenalty penalty, Eigen::MatrixXd& grad_w, Eigen::MatrixXd& grad_h);

// Clamped log quantity governing class-k geometry at the global optimum:
// the gap between the class's own logit and the (equal) cross logits.
// Zero exactly for neglected classes. Total over all inputs.
double logit_gap(const UfmProblem& problem, int k);

// Classes whose count is at or below lambda_w*lambda_h*N^2*(V-1)/V. Every
// member has logit_gap == 0; the converse does not hold exactly (the gap
// also vanishes on a thin band above this threshold, up to the V/(V-1)
// multiple).
std::vector<int> neglect_set(const UfmProblem& problem);
double neglect_threshold(const UfmProblem& problem);

// Closed-form per-sample CE at the optimum. The two variants differ in the
// own-class term of the softmax denominator; both are kept so the numeric
// solver can adjudicate between them.
enum class LossVariant {
  ScaledOwnLogit,  // log(sum_j exp(M_j/V^2)) - M_k
  FullOwnLogit,    // log(exp(M_k) + sum_{j!=k} exp(M_j/V^2)) - M_k
};
double per_token_loss_closed_form(const UfmProblem& problem, int k, LossVariant variant);

// Loss implied by the orthogonal-optimum logit structure (own logit
// (V-1)M_k/V, cross logits -M_k/V): log(1 + (V-1)exp(-M_k)). This is the
// form the numeric optimum actually attains; reported by verify_solution as
// a diagnostic alongside the two variants above.
double per_token_loss_gap_form(const UfmProblem& problem, int k);

struct ClosedFormPrediction {
  std::vector<double> logit_gaps;   // M_k per class
  std::vector<double> mu_sq_norms;  // |mu_k|^2
  std::vector<double> w_sq_norms;   // |w_k|^2 (cross-class sum over j != k)
  std::vector<int> neglected;       // classes with logit_gap == 0
  std::vector<double> per_token_loss;
  LossVariant variant = LossVariant::FullOwnLogit;

  // Objective value reconstructed from the predictions (CE mean plus
  // penalties implied by the predicted norms), for the given H-penalty.
  double objective(const UfmProblem& problem, HPenalty penalty) const;
};

// Requires feature_dim >= num_classes; throws otherwise.
ClosedFormPrediction closed_form(const UfmProblem& problem,
                                 LossVariant variant = LossVariant::FullOwnLogit);

// d/dlambda of the closed-form per-sample loss at lambda_w == lambda_h ==
// lambda. base_part differentiates the k-independent log-sum term;
// gap_part equals -dM_k/dlambda, i.e.
//   (1/lambda + N*sqrt(V-1)/(sqrt(n_k V) - lambda N sqrt(V-1)))
// whenever M_k > 0 and 0 otherwise. Throws when n_k sits exactly on a
// gap-transition boundary (non-differentiable point).
struct LossLambdaDerivative {
  double total = 0.0;
  double base_part = 0.0;
  double gap_part = 0.0;
};
LossLambdaDerivative loss_lambda_derivative(const UfmProblem& problem, int k,
                                            LossVariant variant = LossVariant::FullOwnLogit);

struct SolveOptions {
  int max_iters = 200000;
  double tolerance = 1e-8;  // projected-gradient norm <= tol * (1 + |objective|)
  int restarts = 3;
  double init_scale = 0.1;  // entries drawn uniformly from [0, init_scale]
  HPenalty penalty = HPenalty::Halved;
};

struct UfmSolution {
  Eigen::MatrixXd w;  // V x d
  Eigen::MatrixXd h;  // d x N, entrywise >= 0
  double objective = 0.0;
  std::vector<double> per_sample_losses;  // length N
  std::vector<TokenId> sample_labels;     // class of each column of h
  bool converged = false;
  int iterations = 0;
  double projected_grad_norm = 0.0;
};

// Projected first-order descent on (W, H): Barzilai-Borwein step with
// backtracking, H clipped to the non-negative orthant after every step.
// Multi-restart; best objective kept. Deterministic given the seed.
UfmSolution solve_numeric(const UfmProblem& problem, std::uint64_t seed,
                          const SolveOptions& options = {});

struct CheckResult {
  std::string name;
  bool pass = false;
  double residual = 0.0;
  double tolerance = 0.0;
};

struct VerifyTolerances {
  double collapse = 1e-4;        // spread <= tol * (1 + |mu_k|)
  double orthogonality = 1e-4;   // |mu_k.mu_l| <= tol * |mu_k||mu_l| (non-neglected)
  double norm_rel = 0.01;        // squared-norm relative error
  double neglected_mu = 1e-3;    // |mu_k| for closed-form-neglected classes
  double ce_abs = 1e-3;          // per-sample CE absolute error
  double logit_abs = 1e-3;       // logit identity absolute error
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  const CheckResult& check(const std::string& name) const;
  bool all_pass() const;
};

// Report-only comparison of a numeric solution against the closed form:
// collapse, class-mean orthogonality, both squared-norm families (including
// the alternative all-j weight-norm reading), the logit identities under
// both readings, and per-sample CE against both variants plus the gap form.
VerifyReport verify_solution(const UfmProblem& problem, const UfmSolution& solution,
                             const ClosedFormPrediction& prediction,
                             const VerifyTolerances& tolerances = {});

// JSON instance schema: {V, d, n[], lambda_W, lambda_H}.
UfmProblem load_ufm_problem(const std::filesystem::path& path);
void save_ufm_problem(const UfmProblem& problem, const std::filesystem::path& path);

}  // namespace decaylens
