#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sptok/logreg/sparse.hpp"

namespace sptok::logreg {

// min over (W, b) of  (1/N) sum_i NLL(y_i | b + W x_i)  +  lambda * sum_{penalized j} sum_c |W[c][j]|
//
// Multinomial softmax over C classes with class 0's weight row and intercept
// pinned at zero; for C = 2 this is ordinary binomial logistic regression.
// Intercepts are never penalized.
struct LassoProblem {
  SparseMatrix x;
  std::vector<int> labels;
  int num_classes = 2;
  double lambda = 0.0;
  std::vector<std::uint8_t> penalized;  // per column; empty means all penalized

  std::size_t num_samples() const { return x.rows(); }
  std::size_t num_features() const { return x.cols(); }
  bool is_penalized(std::size_t j) const { return penalized.empty() || penalized[j] != 0; }
  void validate() const;
};

struct LassoModel {
  int num_classes = 2;
  std::size_t num_features = 0;
  // (C x D) row-major; row 0 stays zero.
  std::vector<double> weights;
  std::vector<double> intercepts;  // C, entry 0 stays zero
  bool converged = false;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;  // objective after each iteration, when requested

  double weight(int c, std::size_t j) const { return weights[static_cast<std::size_t>(c) * num_features + j]; }
  // C = 2 single-vector view: P(y = 1 | x) = sigmoid(intercept + w . x).
  std::vector<double> binomial_weights() const;
  double binomial_intercept() const { return intercepts.at(1); }

  // Columns whose weight is nonzero in any class row.
  std::vector<std::size_t> support() const;
  std::size_t support_size(std::span<const std::uint8_t> eligible = {}) const;

  // Row-wise class probabilities (N x C, row-major).
  std::vector<double> predict_proba(const SparseMatrix& x) const;

  static LassoModel zeros(int num_classes, std::size_t num_features);
};

enum class Formulation { kAuto, kBinomial, kMultinomial };

struct FitOptions {
  double tol = 1e-7;
  std::size_t max_iter = 20000;
  // kAuto: binomial sigmoid path for C = 2, multinomial otherwise.
  Formulation formulation = Formulation::kAuto;
  double backtrack = 0.5;
  std::size_t power_iterations = 30;
  bool record_trace = false;
  // Iterate on columns rescaled to unit mean square, with per-column
  // thresholds so the objective is unchanged.
  bool equilibrate = true;
};

// FISTA with backtracking line search and monotone restart. Converged when
// the objective decrease falls below tol and kkt_residual < 10 * tol. On
// hitting max_iter the best iterate is returned with converged = false.
LassoModel fit(const LassoProblem& problem, const FitOptions& options = {}, const LassoModel* warm_start = nullptr);

// Max violation of the subgradient optimality conditions.
double kkt_residual(const LassoModel& model, const LassoProblem& problem);

// Smallest lambda at which the all-zero weight solution (intercepts at the
// class log-prior ratios) is optimal.
double lambda_max(const LassoProblem& problem);

// Penalized objective at the model.
double objective(const LassoModel& model, const LassoProblem& problem);

// Gradient of the mean NLL: (C x D) weights then C intercepts.
void smooth_gradient(const LassoModel& model, const LassoProblem& problem, std::vector<double>& grad_w,
                     std::vector<double>& grad_b);

// Soft-threshold: sign(v) * max(|v| - threshold, 0).
double soft_threshold(double v, double threshold);

struct PathPoint {
  double lambda = 0.0;
  std::size_t nnz = 0;  // eligible columns with any nonzero class weight
  double objective = 0.0;
  bool converged = false;
  LassoModel model;
};

// Warm-started fits along a grid sorted in descending order.
std::vector<PathPoint> sparsity_path(const LassoProblem& problem, std::span<const double> lambdas_descending,
                                     const FitOptions& options = {}, std::span<const std::uint8_t> eligible = {});

}  // namespace sptok::logreg
