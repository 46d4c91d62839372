#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sptok::metrics {

// Rows are gold labels, columns predictions.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major C x C
  std::vector<std::string> class_names;

  std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts[gold * num_classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t gold_count(std::size_t c) const;
  std::uint64_t predicted_count(std::size_t c) const;

  nlohmann::json to_json() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> gold, std::span<const int> predicted, std::size_t num_classes,
                                 std::vector<std::string> class_names = {});

// F1 of one class; 0 when precision + recall has a zero denominator.
double class_f1(const ConfusionMatrix& cm, std::size_t c);
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1. A class with no gold and no predicted
// samples contributes 0 (it is not dropped from the mean).
double macro_f1(const ConfusionMatrix& cm);

double positive_f1(const ConfusionMatrix& cm, std::size_t positive_class);

enum class MetricKind { kMacroF1, kPositiveF1 };
MetricKind parse_metric(const std::string& name);
std::string metric_name(MetricKind kind);
double task_metric(const ConfusionMatrix& cm, MetricKind kind, std::size_t positive_class = 1);

// Unimodal-vs-multimodal comparison over one evaluation set.
struct Disagreement {
  std::size_t sample = 0;
  std::string sample_id;
  int gold = 0;
  int pred_a = 0;
  int pred_b = 0;
};

struct TokenAssociation {
  std::int64_t token = 0;
  std::uint64_t occurrences = 0;         // over the whole set
  std::vector<std::uint64_t> per_class;  // occurrences inside samples of each gold class
  // per_class[c] / num_samples; sums over classes to occurrences / num_samples.
  std::vector<double> class_frequency;
  // per_class[c] / occurrences: share of the token's occurrences in class c.
  std::vector<double> class_share;
};

struct DiscrepancyReport {
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Disagreement> disagreements;
  std::vector<std::uint64_t> flips;  // C x C, [pred_a][pred_b] over disagreeing samples
  std::uint64_t a_correct_b_wrong = 0;
  std::uint64_t a_wrong_b_correct = 0;
  std::vector<TokenAssociation> tokens;  // sorted by token id

  // Tokens ranked for one class by class_share, then occurrences, then id.
  std::vector<std::int64_t> ranked_tokens(std::size_t c, std::uint64_t min_occurrences = 1) const;

  nlohmann::json to_json() const;
  std::string to_markdown(std::size_t top_k = 10) const;
};

DiscrepancyReport discrepancy_report(std::span<const int> gold, std::span<const int> preds_a,
                                     std::span<const int> preds_b,
                                     std::span<const std::vector<std::int64_t>> token_occurrences,
                                     std::size_t num_classes, std::span<const std::string> sample_ids = {},
                                     std::vector<std::string> class_names = {});

}  // namespace sptok::metrics
