#include "sptok/selection/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>

#include "sptok/error.hpp"
#include "sptok/log.hpp"
#include "sptok/numerics/rng.hpp"

namespace sptok::selection {
namespace {

using logreg::LassoModel;
using logreg::LassoProblem;

struct Probe {
  double lambda;
  LassoModel model;
  double measure;
};

// Searches log(lambda) for a fit whose measure lands in [lo, hi]. The
// measure is assumed to shrink as lambda grows.
SelectionResult bisect_lambda(const BowMatrix& bow, std::span<const int> labels, int num_classes,
                              const L1SelectionConfig& config, double target, double band_lo, double band_hi,
                              const std::function<double(const LassoModel&)>& measure, const char* what) {
  require(config.bracket_low_ratio > 0 && config.bracket_low_ratio < 1, ErrorCode::kInvalidArgument,
          "bracket_low_ratio must be in (0,1)");
  LassoProblem problem{bow.counts, std::vector<int>(labels.begin(), labels.end()), num_classes, 0.0, {}};
  problem.validate();
  const double lambda_hi = logreg::lambda_max(problem);
  const double lambda_lo = lambda_hi * config.bracket_low_ratio;

  auto probe = [&](double lambda, const LassoModel* warm) {
    problem.lambda = lambda;
    LassoModel m = logreg::fit(problem, config.fit, warm);
    if (!m.converged) SPTOK_LOG_WARN("lasso fit at lambda %.4g did not converge", lambda);
    const double v = measure(m);
    SPTOK_LOG_DEBUG("lambda %.6g -> %s %.3f", lambda, what, v);
    return Probe{lambda, std::move(m), v};
  };

  auto finish = [&](const Probe& p) { return selection_from_model(p.model, bow, p.lambda); };

  // Warm-started descent from lambda_max brackets the band; bisection on
  // log(lambda) then refines inside the bracket.
  Probe upper = probe(lambda_hi, nullptr);
  if (upper.measure >= band_lo && upper.measure <= band_hi) return finish(upper);
  std::optional<Probe> lower;
  for (double lambda = lambda_hi * config.scan_factor;; lambda *= config.scan_factor) {
    lambda = std::max(lambda, lambda_lo);
    Probe p = probe(lambda, &upper.model);
    if (p.measure >= band_lo && p.measure <= band_hi) return finish(p);
    if (p.measure > band_hi) {
      lower = std::move(p);
      break;
    }
    upper = std::move(p);
    if (lambda <= lambda_lo) {
      fail(ErrorCode::kTargetUnreachable, std::string(what) + " target " + std::to_string(target) +
                                              " unreachable: " + std::to_string(upper.measure) +
                                              " at the smallest lambda in the bracket");
    }
  }

  for (std::size_t it = 0; it < config.max_bisection; ++it) {
    const double lambda = std::sqrt(upper.lambda * lower->lambda);
    Probe mid = probe(lambda, &upper.model);
    if (mid.measure >= band_lo && mid.measure <= band_hi) {
      SPTOK_LOG_INFO("selected %s %.2f at lambda %.6g after %zu bisection steps", what, mid.measure, mid.lambda, it + 1);
      return finish(mid);
    }
    if (mid.measure > band_hi) {
      lower = std::move(mid);
    } else {
      upper = std::move(mid);
    }
  }
  fail(ErrorCode::kTargetUnreachable, std::string(what) + " target " + std::to_string(target) + " not reached within " +
                                          std::to_string(config.max_bisection) + " bisection steps");
}

}  // namespace

std::vector<std::uint8_t> BowMatrix::audio_mask() const {
  std::vector<std::uint8_t> mask(kinds.size());
  for (std::size_t j = 0; j < kinds.size(); ++j) mask[j] = kinds[j] == ColumnKind::kAudio;
  return mask;
}

BowMatrix build_bow(std::span<const std::vector<std::int32_t>> text, std::span<const std::vector<std::int32_t>> audio,
                    const MultimodalVocab& vocab) {
  require(text.size() == audio.size(), ErrorCode::kLengthMismatch, "text and audio sample counts differ");
  std::vector<logreg::SparseMatrix::Triplet> triplets;
  for (std::size_t i = 0; i < text.size(); ++i) {
    for (std::int32_t t : text[i]) {
      require(t >= 0 && static_cast<std::size_t>(t) < vocab.text_size, ErrorCode::kUnknownToken,
              "text token " + std::to_string(t) + " outside the text vocabulary");
      triplets.push_back({i, static_cast<std::size_t>(t), 1.0});
    }
    for (std::int32_t a : audio[i]) {
      require(a >= 0 && static_cast<std::size_t>(a) < vocab.audio_size, ErrorCode::kUnknownToken,
              "audio token " + std::to_string(a) + " outside the audio vocabulary");
      triplets.push_back({i, vocab.audio_column(a), 1.0});
    }
  }
  BowMatrix bow;
  bow.vocab = vocab;
  bow.counts = logreg::SparseMatrix::from_triplets(text.size(), vocab.size(), std::move(triplets));
  bow.kinds.assign(vocab.size(), ColumnKind::kText);
  std::fill(bow.kinds.begin() + static_cast<std::ptrdiff_t>(vocab.text_size), bow.kinds.end(), ColumnKind::kAudio);
  return bow;
}

std::string method_name(Method m) { return m == Method::kLasso ? "lasso" : "random"; }

Method parse_method(const std::string& name) {
  if (name == "lasso" || name == "l1") return Method::kLasso;
  if (name == "random") return Method::kRandom;
  fail(ErrorCode::kInvalidArgument, "unknown selection method '" + name + "'");
}

bool SelectionResult::contains(std::int32_t id) const {
  return std::binary_search(selected_ids.begin(), selected_ids.end(), id);
}

nlohmann::json SelectionResult::to_json() const {
  nlohmann::json j{{"method", method_name(method)}, {"selected_ids", selected_ids}, {"counts", class_support}};
  j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
  return j;
}

SelectionResult SelectionResult::from_json(const nlohmann::json& j) {
  SelectionResult r;
  try {
    r.method = parse_method(j.at("method").get<std::string>());
    if (!j.at("lambda").is_null()) r.lambda = j["lambda"].get<double>();
    r.selected_ids = j.at("selected_ids").get<std::vector<std::int32_t>>();
    r.class_support = j.at("counts").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("selection JSON: ") + e.what());
  }
  require(std::is_sorted(r.selected_ids.begin(), r.selected_ids.end()), ErrorCode::kFormatError,
          "selection ids must be sorted");
  return r;
}

SelectionResult selection_from_model(const LassoModel& model, const BowMatrix& bow, double lambda) {
  SelectionResult r;
  r.method = Method::kLasso;
  r.lambda = lambda;
  r.class_support.assign(static_cast<std::size_t>(model.num_classes), 0);
  for (std::size_t j = 0; j < model.num_features; ++j) {
    if (!bow.vocab.is_audio_column(j)) continue;
    bool any = false;
    for (int c = 0; c < model.num_classes; ++c) {
      if (model.weight(c, j) != 0.0) {
        any = true;
        ++r.class_support[static_cast<std::size_t>(c)];
      }
    }
    if (any) r.selected_ids.push_back(bow.vocab.audio_id(j));
  }
  return r;
}

SelectionResult select_tokens_l1(const BowMatrix& bow, std::span<const int> labels, int num_classes,
                                 std::size_t target_count, const L1SelectionConfig& config) {
  require(target_count > 0 && target_count <= bow.vocab.audio_size, ErrorCode::kInvalidArgument,
          "target_count must be in (0, audio vocabulary size]");
  const double target = static_cast<double>(target_count);
  const auto eligible = bow.audio_mask();
  return bisect_lambda(
      bow, labels, num_classes, config, target, target * (1.0 - config.tolerance), target * (1.0 + config.tolerance),
      [&](const LassoModel& m) { return static_cast<double>(m.support_size(eligible)); }, "support size");
}

SelectionResult select_tokens_l1_length_matched(const BowMatrix& bow, std::span<const int> labels, int num_classes,
                                                std::span<const std::vector<std::int32_t>> audio,
                                                double target_mean_length, const L1SelectionConfig& config) {
  require(target_mean_length > 0, ErrorCode::kInvalidArgument, "target length must be positive");
  require(!audio.empty(), ErrorCode::kInvalidArgument, "no audio sequences to match");
  auto mean_length = [&](const LassoModel& m) {
    const SelectionResult s = selection_from_model(m, bow, 0.0);
    double total = 0.0;
    for (const auto& seq : audio) total += static_cast<double>(filter_tokens(seq, s).size());
    return total / static_cast<double>(audio.size());
  };
  return bisect_lambda(bow, labels, num_classes, config, target_mean_length,
                       target_mean_length * (1.0 - config.tolerance), target_mean_length * (1.0 + config.tolerance),
                       mean_length, "mean filtered length");
}

std::vector<std::int32_t> observed_audio_ids(std::span<const std::vector<std::int32_t>> audio) {
  std::vector<std::int32_t> ids;
  for (const auto& seq : audio) ids.insert(ids.end(), seq.begin(), seq.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

SelectionResult select_tokens_random(std::span<const std::int32_t> observed, std::size_t count, std::uint64_t seed) {
  std::vector<std::int32_t> pool(observed.begin(), observed.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  require(count <= pool.size(), ErrorCode::kCountExceedsVocab,
          "requested " + std::to_string(count) + " tokens from " + std::to_string(pool.size()) + " observed");
  Rng rng(derive_seed(seed, "random-selection"));
  // Partial Fisher-Yates over the sorted pool.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, pool.size() - 1 - i)(rng);
    std::swap(pool[i], pool[j]);
  }
  SelectionResult r;
  r.method = Method::kRandom;
  r.selected_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(r.selected_ids.begin(), r.selected_ids.end());
  return r;
}

std::vector<std::int32_t> filter_tokens(std::span<const std::int32_t> sequence, const SelectionResult& selection) {
  std::vector<std::int32_t> out;
  for (std::int32_t id : sequence) {
    if (selection.contains(id)) out.push_back(id);
  }
  return out;
}

}  // namespace sptok::selection
