#include "sptok/logreg/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sptok/error.hpp"

namespace sptok::logreg {

void LassoProblem::validate() const {
  require(num_classes >= 2, ErrorCode::kInvalidArgument, "need at least two classes");
  require(labels.size() == x.rows(), ErrorCode::kLengthMismatch, "labels vs design rows");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
  require(penalized.empty() || penalized.size() == x.cols(), ErrorCode::kLengthMismatch, "penalty mask length");
  require(x.rows() > 0, ErrorCode::kEmptySplit, "empty design matrix");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    require(y >= 0 && y < num_classes, ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    counts[static_cast<std::size_t>(y)] += 1;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    require(counts[c] > 0, ErrorCode::kInvalidArgument, "class " + std::to_string(c) + " has no samples");
  }
}

std::vector<double> LassoModel::binomial_weights() const {
  require(num_classes == 2, ErrorCode::kInvalidArgument, "binomial view needs two classes");
  return {weights.begin() + static_cast<std::ptrdiff_t>(num_features), weights.end()};
}

std::vector<std::size_t> LassoModel::support() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < num_features; ++j) {
    for (int c = 0; c < num_classes; ++c) {
      if (weight(c, j) != 0.0) {
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

std::size_t LassoModel::support_size(std::span<const std::uint8_t> eligible) const {
  std::size_t n = 0;
  for (std::size_t j : support()) {
    if (eligible.empty() || eligible[j]) ++n;
  }
  return n;
}

LassoModel LassoModel::zeros(int num_classes, std::size_t num_features) {
  LassoModel m;
  m.num_classes = num_classes;
  m.num_features = num_features;
  m.weights.assign(static_cast<std::size_t>(num_classes) * num_features, 0.0);
  m.intercepts.assign(static_cast<std::size_t>(num_classes), 0.0);
  return m;
}

double soft_threshold(double v, double threshold) {
  if (v > threshold) return v - threshold;
  if (v < -threshold) return v + threshold;
  return 0.0;
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Free parameters: classes 1..C-1. Weights stored feature-major (D x K) so
// a sparse row touches K contiguous values per nonzero.
struct Params {
  std::vector<double> w;
  std::vector<double> b;
};

class Engine {
 public:
  // With equilibrate, parameters live in scaled units u_j = s_j * w_j
  // against columns x_j / s_j.
  Engine(const LassoProblem& p, bool binomial, bool equilibrate = false)
      : p_(p),
        n_(p.num_samples()),
        d_(p.num_features()),
        k_(static_cast<std::size_t>(p.num_classes - 1)),
        binomial_(binomial),
        scale_(d_, 1.0),
        scores_(n_ * k_),
        resid_(n_ * k_) {
    if (equilibrate) {
      const auto sq = p.x.column_sq_sums();
      std::vector<double> inv(d_, 1.0);
      for (std::size_t j = 0; j < d_; ++j) {
        if (sq[j] > 0.0) {
          scale_[j] = std::sqrt(sq[j] / static_cast<double>(n_));
          inv[j] = 1.0 / scale_[j];
        }
      }
      scaled_ = p.x.scale_columns(inv);
      x_ = &scaled_;
    } else {
      x_ = &p.x;
    }
  }

  std::size_t d() const { return d_; }
  std::size_t k() const { return k_; }
  // Proximal threshold multiplier for column j in iteration units.
  double threshold_scale(std::size_t j) const { return 1.0 / scale_[j]; }

  Params from_model(const LassoModel& m) const {
    Params q{std::vector<double>(d_ * k_), std::vector<double>(k_)};
    for (std::size_t c = 1; c <= k_; ++c) {
      q.b[c - 1] = m.intercepts[c];
      for (std::size_t j = 0; j < d_; ++j) q.w[j * k_ + c - 1] = m.weights[c * d_ + j] * scale_[j];
    }
    return q;
  }

  LassoModel to_model(const Params& q) const {
    LassoModel m = LassoModel::zeros(p_.num_classes, d_);
    for (std::size_t c = 1; c <= k_; ++c) {
      m.intercepts[c] = q.b[c - 1];
      for (std::size_t j = 0; j < d_; ++j) m.weights[c * d_ + j] = q.w[j * k_ + c - 1] / scale_[j];
    }
    return m;
  }

  // Mean NLL; leaves scores_ populated for a following gradient() call.
  double loss(const Params& q) {
    compute_scores(q);
    double total = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double* z = &scores_[i * k_];
      const int y = p_.labels[i];
      if (binomial_) {
        total += softplus(z[0]) - (y == 1 ? z[0] : 0.0);
      } else {
        double mx = 0.0;
        for (std::size_t c = 0; c < k_; ++c) mx = std::max(mx, z[c]);
        double s = std::exp(-mx);
        for (std::size_t c = 0; c < k_; ++c) s += std::exp(z[c] - mx);
        total += mx + std::log(s) - (y == 0 ? 0.0 : z[static_cast<std::size_t>(y - 1)]);
      }
    }
    return total / static_cast<double>(n_);
  }

  // Gradient of the mean NLL at the parameters of the last loss() call.
  void gradient(std::vector<double>& gw, std::vector<double>& gb) {
    gw.assign(d_ * k_, 0.0);
    gb.assign(k_, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* z = &scores_[i * k_];
      double* r = &resid_[i * k_];
      const int y = p_.labels[i];
      if (binomial_) {
        r[0] = sigmoid(z[0]) - (y == 1 ? 1.0 : 0.0);
      } else {
        double mx = 0.0;
        for (std::size_t c = 0; c < k_; ++c) mx = std::max(mx, z[c]);
        double s = std::exp(-mx);
        for (std::size_t c = 0; c < k_; ++c) s += std::exp(z[c] - mx);
        for (std::size_t c = 0; c < k_; ++c) {
          r[c] = std::exp(z[c] - mx) / s - (static_cast<std::size_t>(y) == c + 1 ? 1.0 : 0.0);
        }
      }
      for (std::size_t c = 0; c < k_; ++c) gb[c] += r[c];
      const auto idx = x_->row_indices(i);
      const auto val = x_->row_values(i);
      for (std::size_t t = 0; t < idx.size(); ++t) {
        double* g = &gw[idx[t] * k_];
        for (std::size_t c = 0; c < k_; ++c) g[c] += val[t] * r[c];
      }
    }
    for (auto& v : gw) v *= inv_n;
    for (auto& v : gb) v *= inv_n;
  }

  double penalty(const Params& q) const {
    double s = 0;
    for (std::size_t j = 0; j < d_; ++j) {
      if (!p_.is_penalized(j)) continue;
      for (std::size_t c = 0; c < k_; ++c) s += std::abs(q.w[j * k_ + c]) / scale_[j];
    }
    return p_.lambda * s;
  }

  double kkt(const Params& q, const std::vector<double>& gw, const std::vector<double>& gb) const {
    double worst = 0;
    for (double g : gb) worst = std::max(worst, std::abs(g));
    for (std::size_t j = 0; j < d_; ++j) {
      const bool pen = p_.is_penalized(j);
      for (std::size_t c = 0; c < k_; ++c) {
        // Back to original units.
        const double w = q.w[j * k_ + c] / scale_[j];
        const double g = gw[j * k_ + c] * scale_[j];
        double v;
        if (!pen) {
          v = std::abs(g);
        } else if (w == 0.0) {
          v = std::max(std::abs(g) - p_.lambda, 0.0);
        } else {
          v = std::abs(g + p_.lambda * (w > 0 ? 1.0 : -1.0));
        }
        worst = std::max(worst, v);
      }
    }
    return worst;
  }

  // Upper bound on the gradient's Lipschitz constant via power iteration
  // on [X 1]^T [X 1] / N.
  double lipschitz_estimate(std::size_t iterations) const {
    std::vector<double> v(d_ + 1, 1.0 / std::sqrt(static_cast<double>(d_ + 1)));
    std::vector<double> xv(n_), out(d_ + 1);
    double eig = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
      for (std::size_t i = 0; i < n_; ++i) {
        double s = v[d_];
        const auto idx = x_->row_indices(i);
        const auto val = x_->row_values(i);
        for (std::size_t t = 0; t < idx.size(); ++t) s += val[t] * v[idx[t]];
        xv[i] = s;
      }
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < n_; ++i) {
        out[d_] += xv[i];
        const auto idx = x_->row_indices(i);
        const auto val = x_->row_values(i);
        for (std::size_t t = 0; t < idx.size(); ++t) out[idx[t]] += val[t] * xv[i];
      }
      double norm = 0;
      for (double& o : out) {
        o /= static_cast<double>(n_);
        norm += o * o;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      eig = norm;
      for (std::size_t j = 0; j <= d_; ++j) v[j] = out[j] / norm;
    }
    // Power iteration under-estimates; pad slightly.
    const double curvature = binomial_ ? 0.25 : 0.5;
    return std::max(1e-12, curvature * eig * 1.05);
  }

 private:
  void compute_scores(const Params& q) {
    for (std::size_t i = 0; i < n_; ++i) {
      double* z = &scores_[i * k_];
      for (std::size_t c = 0; c < k_; ++c) z[c] = q.b[c];
      const auto idx = x_->row_indices(i);
      const auto val = x_->row_values(i);
      for (std::size_t t = 0; t < idx.size(); ++t) {
        const double* w = &q.w[idx[t] * k_];
        for (std::size_t c = 0; c < k_; ++c) z[c] += val[t] * w[c];
      }
    }
  }

  const LassoProblem& p_;
  std::size_t n_, d_, k_;
  bool binomial_;
  std::vector<double> scale_;
  SparseMatrix scaled_;
  const SparseMatrix* x_ = nullptr;
  std::vector<double> scores_;
  std::vector<double> resid_;
};

bool use_binomial(const LassoProblem& p, Formulation f) {
  if (f == Formulation::kBinomial) {
    require(p.num_classes == 2, ErrorCode::kInvalidArgument, "binomial formulation needs two classes");
    return true;
  }
  return f == Formulation::kAuto && p.num_classes == 2;
}

std::vector<double> log_prior_intercepts(const LassoProblem& p) {
  std::vector<double> counts(static_cast<std::size_t>(p.num_classes), 0.0);
  for (int y : p.labels) counts[static_cast<std::size_t>(y)] += 1.0;
  std::vector<double> b(counts.size(), 0.0);
  for (std::size_t c = 1; c < counts.size(); ++c) b[c] = std::log(counts[c] / counts[0]);
  return b;
}

}  // namespace

double lambda_max(const LassoProblem& problem) {
  problem.validate();
  LassoModel m = LassoModel::zeros(problem.num_classes, problem.num_features());
  m.intercepts = log_prior_intercepts(problem);
  std::vector<double> gw, gb;
  smooth_gradient(m, problem, gw, gb);
  double lmax = 0;
  for (int c = 1; c < problem.num_classes; ++c) {
    for (std::size_t j = 0; j < problem.num_features(); ++j) {
      if (problem.is_penalized(j)) lmax = std::max(lmax, std::abs(gw[static_cast<std::size_t>(c) * m.num_features + j]));
    }
  }
  return lmax;
}

void smooth_gradient(const LassoModel& model, const LassoProblem& problem, std::vector<double>& grad_w,
                     std::vector<double>& grad_b) {
  Engine eng(problem, problem.num_classes == 2);
  const Params q = eng.from_model(model);
  eng.loss(q);
  std::vector<double> gw, gb;
  eng.gradient(gw, gb);
  const std::size_t d = problem.num_features();
  const std::size_t k = eng.k();
  grad_w.assign(static_cast<std::size_t>(problem.num_classes) * d, 0.0);
  grad_b.assign(static_cast<std::size_t>(problem.num_classes), 0.0);
  for (std::size_t c = 1; c <= k; ++c) {
    grad_b[c] = gb[c - 1];
    for (std::size_t j = 0; j < d; ++j) grad_w[c * d + j] = gw[j * k + c - 1];
  }
}

double objective(const LassoModel& model, const LassoProblem& problem) {
  Engine eng(problem, problem.num_classes == 2);
  const Params q = eng.from_model(model);
  return eng.loss(q) + eng.penalty(q);
}

double kkt_residual(const LassoModel& model, const LassoProblem& problem) {
  problem.validate();
  require(model.num_classes == problem.num_classes && model.num_features == problem.num_features(),
          ErrorCode::kShapeMismatch, "model does not match problem");
  Engine eng(problem, problem.num_classes == 2);
  const Params q = eng.from_model(model);
  eng.loss(q);
  std::vector<double> gw, gb;
  eng.gradient(gw, gb);
  return eng.kkt(q, gw, gb);
}

std::vector<double> LassoModel::predict_proba(const SparseMatrix& x) const {
  require(x.cols() == num_features, ErrorCode::kDimensionMismatch, "feature count");
  const auto c_count = static_cast<std::size_t>(num_classes);
  std::vector<double> out(x.rows() * c_count);
  std::vector<double> z(c_count);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < c_count; ++c) z[c] = intercepts[c];
    const auto idx = x.row_indices(i);
    const auto val = x.row_values(i);
    for (std::size_t t = 0; t < idx.size(); ++t) {
      for (std::size_t c = 1; c < c_count; ++c) z[c] += val[t] * weights[c * num_features + idx[t]];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (std::size_t c = 0; c < c_count; ++c) s += std::exp(z[c] - mx);
    for (std::size_t c = 0; c < c_count; ++c) out[i * c_count + c] = std::exp(z[c] - mx) / s;
  }
  return out;
}

LassoModel fit(const LassoProblem& problem, const FitOptions& options, const LassoModel* warm_start) {
  problem.validate();
  require(options.tol > 0, ErrorCode::kInvalidArgument, "tol must be positive");
  require(options.backtrack > 0 && options.backtrack < 1, ErrorCode::kInvalidArgument, "backtrack in (0,1)");

  Engine eng(problem, use_binomial(problem, options.formulation), options.equilibrate);
  const std::size_t d = eng.d();
  const std::size_t k = eng.k();
  const double lambda = problem.lambda;

  Params x;
  if (warm_start != nullptr) {
    require(warm_start->num_classes == problem.num_classes && warm_start->num_features == d,
            ErrorCode::kShapeMismatch, "warm start does not match problem");
    x = eng.from_model(*warm_start);
  } else {
    LassoModel init = LassoModel::zeros(problem.num_classes, d);
    init.intercepts = log_prior_intercepts(problem);
    x = eng.from_model(init);
  }

  double fx = eng.loss(x) + eng.penalty(x);
  Params y = x;
  Params cand{std::vector<double>(d * k), std::vector<double>(k)};
  std::vector<double> gw, gb;
  double t = 1.0;
  double lip = eng.lipschitz_estimate(options.power_iterations);
  const double grow = 1.0 / options.backtrack;

  LassoModel result;
  bool converged = false;
  std::size_t it = 0;
  for (; it < options.max_iter; ++it) {
    const double fy = eng.loss(y);
    eng.gradient(gw, gb);

    double f_cand = 0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const double step = 1.0 / lip;
      for (std::size_t j = 0; j < d; ++j) {
        const bool pen = problem.is_penalized(j);
        for (std::size_t c = 0; c < k; ++c) {
          const double v = y.w[j * k + c] - step * gw[j * k + c];
          cand.w[j * k + c] = pen ? soft_threshold(v, step * lambda * eng.threshold_scale(j)) : v;
        }
      }
      for (std::size_t c = 0; c < k; ++c) cand.b[c] = y.b[c] - step * gb[c];

      f_cand = eng.loss(cand);
      double lin = 0, sq = 0;
      for (std::size_t i = 0; i < d * k; ++i) {
        const double diff = cand.w[i] - y.w[i];
        lin += gw[i] * diff;
        sq += diff * diff;
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double diff = cand.b[c] - y.b[c];
        lin += gb[c] * diff;
        sq += diff * diff;
      }
      const double model_bound = fy + lin + 0.5 * lip * sq;
      if (f_cand <= model_bound + 1e-14 * std::max(1.0, std::abs(fy))) break;
      lip *= grow;
    }

    const double f_new = f_cand + eng.penalty(cand);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double decrease;
    // Without momentum the step is a plain proximal step from the best
    // iterate, which cannot increase the objective beyond rounding.
    const bool plain_step = (y.w == x.w && y.b == x.b);
    if (f_new <= fx || plain_step) {
      decrease = std::max(fx - f_new, 0.0);
      const double momentum = (t - 1.0) / t_next;
      for (std::size_t i = 0; i < d * k; ++i) y.w[i] = cand.w[i] + momentum * (cand.w[i] - x.w[i]);
      for (std::size_t c = 0; c < k; ++c) y.b[c] = cand.b[c] + momentum * (cand.b[c] - x.b[c]);
      std::swap(x, cand);
      fx = std::min(fx, f_new);
      t = t_next;
    } else {
      // Monotone restart: drop momentum and retry from the best iterate.
      decrease = 0.0;
      y = x;
      t = 1.0;
    }

    if (options.record_trace) result.trace.push_back(fx);
    if (decrease < options.tol) {
      eng.loss(x);
      std::vector<double> kw, kb;
      eng.gradient(kw, kb);
      if (eng.kkt(x, kw, kb) < 10.0 * options.tol) {
        converged = true;
        ++it;
        break;
      }
    }
  }

  std::vector<double> trace = std::move(result.trace);
  result = eng.to_model(x);
  result.trace = std::move(trace);
  result.converged = converged;
  result.objective = fx;
  result.iterations = it;
  return result;
}

std::vector<PathPoint> sparsity_path(const LassoProblem& problem, std::span<const double> lambdas_descending,
                                     const FitOptions& options, std::span<const std::uint8_t> eligible) {
  for (std::size_t i = 1; i < lambdas_descending.size(); ++i) {
    require(lambdas_descending[i] <= lambdas_descending[i - 1], ErrorCode::kInvalidArgument,
            "lambda grid must be descending");
  }
  require(eligible.empty() || eligible.size() == problem.num_features(), ErrorCode::kLengthMismatch,
          "eligible mask length");
  std::vector<PathPoint> out;
  out.reserve(lambdas_descending.size());
  LassoProblem p = problem;
  const LassoModel* warm = nullptr;
  for (double lambda : lambdas_descending) {
    p.lambda = lambda;
    PathPoint pt;
    pt.lambda = lambda;
    pt.model = fit(p, options, warm);
    pt.nnz = pt.model.support_size(eligible);
    pt.objective = pt.model.objective;
    pt.converged = pt.model.converged;
    out.push_back(std::move(pt));
    warm = &out.back().model;
  }
  return out;
}

}  // namespace sptok::logreg
