#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptok/logreg/lasso.hpp"

namespace sptok::selection {

// Text ids occupy [0, text_size); global audio id a maps to column
// text_size + a.
struct MultimodalVocab {
  std::size_t text_size = 0;
  std::size_t audio_size = 0;

  std::size_t size() const { return text_size + audio_size; }
  std::size_t audio_column(std::int32_t audio_id) const { return text_size + static_cast<std::size_t>(audio_id); }
  bool is_audio_column(std::size_t col) const { return col >= text_size && col < size(); }
  std::int32_t audio_id(std::size_t col) const { return static_cast<std::int32_t>(col - text_size); }
};

enum class ColumnKind : std::uint8_t { kText, kAudio };

struct BowMatrix {
  MultimodalVocab vocab;
  logreg::SparseMatrix counts;  // samples x vocab.size()
  std::vector<ColumnKind> kinds;

  std::vector<std::uint8_t> audio_mask() const;
};

// Entry (i, j) is the occurrence count of token j in sample i. text[i] and
// audio[i] hold sample i's text ids and global audio ids.
BowMatrix build_bow(std::span<const std::vector<std::int32_t>> text, std::span<const std::vector<std::int32_t>> audio,
                    const MultimodalVocab& vocab);

enum class Method { kLasso, kRandom };
std::string method_name(Method m);
Method parse_method(const std::string& name);

struct SelectionResult {
  Method method = Method::kLasso;
  std::optional<double> lambda;
  std::vector<std::int32_t> selected_ids;  // sorted global audio ids
  // Lasso: nonzero audio weights per class row. Random: empty.
  std::vector<std::size_t> class_support;

  bool contains(std::int32_t id) const;
  std::size_t size() const { return selected_ids.size(); }
  nlohmann::json to_json() const;
  static SelectionResult from_json(const nlohmann::json& j);
};

struct L1SelectionConfig {
  double tolerance = 0.10;  // relative band around the target
  std::size_t max_bisection = 30;
  // Lower end of the lambda bracket as a fraction of lambda_max.
  double bracket_low_ratio = 1e-4;
  // Ratio between successive lambdas of the initial descending scan.
  double scan_factor = 0.7;
  logreg::FitOptions fit;
};

// Search over lambda in [ratio * lambda_max, lambda_max] (warm-started
// descending scan, then at most max_bisection bisection steps on
// log(lambda)) until the number of audio columns with any nonzero class
// weight is within the band.
// Text columns are penalized covariates but never selected.
SelectionResult select_tokens_l1(const BowMatrix& bow, std::span<const int> labels, int num_classes,
                                 std::size_t target_count, const L1SelectionConfig& config = {});

// Same search, but the band is on the mean filtered audio length of the
// given sequences (corpus-average length matching).
SelectionResult select_tokens_l1_length_matched(const BowMatrix& bow, std::span<const int> labels, int num_classes,
                                                std::span<const std::vector<std::int32_t>> audio,
                                                double target_mean_length, const L1SelectionConfig& config = {});

// Selection from a fitted model's support.
SelectionResult selection_from_model(const logreg::LassoModel& model, const BowMatrix& bow, double lambda);

// Sorted distinct audio ids occurring in the sequences.
std::vector<std::int32_t> observed_audio_ids(std::span<const std::vector<std::int32_t>> audio);

// Uniform sample without replacement, deterministic per seed.
SelectionResult select_tokens_random(std::span<const std::int32_t> observed, std::size_t count, std::uint64_t seed);

std::vector<std::int32_t> filter_tokens(std::span<const std::int32_t> sequence, const SelectionResult& selection);

}  // namespace sptok::selection
