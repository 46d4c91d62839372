#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptok/experiment/config.hpp"
#include "sptok/lm/training.hpp"

namespace sptok::experiment {

struct RunSpec {
  corpus::Task task = corpus::Task::kAfd;
  Modality modality = Modality::kTextAudio;
  std::optional<selection::Method> selection = selection::Method::kLasso;  // none for text-only
  bool semantic_filter = true;
  bool audio_pretrain = true;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  void validate() const;
  nlohmann::json to_json() const;
  static RunSpec from_json(const nlohmann::json& j);
  static RunSpec from_config(const PipelineConfig& config);
  std::string label() const;
};

using ProbMatrix = std::vector<std::vector<double>>;  // samples x classes

struct SeedResult {
  std::uint64_t seed = 0;
  double metric = 0;
  std::vector<double> per_class_f1;
  metrics::ConfusionMatrix confusion;
  std::vector<int> gold;
  ProbMatrix test_probs;
  std::size_t selected_count = 0;
  double mean_audio_length = 0;  // train split, after filtering
  std::filesystem::path dir;
};

struct RunSummary {
  RunSpec spec;
  std::string hash;
  std::string metric_name;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  double mean = 0;
  double stdev = 0;  // sample stdev; 0 for one seed
  double bagged = 0;

  nlohmann::json to_json() const;
};

struct BaggedPrediction {
  ProbMatrix probs;
  std::vector<int> labels;
};

// Per-sample mean of member probability vectors, then argmax with ties to
// the lowest class. Each entry's mean is taken over sorted member values,
// so the result is independent of member order and exact for identical
// members.
BaggedPrediction bag_predict(std::span<const ProbMatrix> members);

// Ablation rows: text-only, then (PT, semantic filter, l1) in
// {(no,yes,no), (no,yes,yes), (yes,no,no), (yes,no,yes), (yes,yes,no),
// (yes,yes,yes)}. Task and seeds come from `base`.
std::vector<RunSpec> ablation_grid(const RunSpec& base);

std::string corpus_hash(const corpus::Corpus& corpus);

// Owns the corpus and the caches shared between runs (text backbones and
// lasso selections).
class Pipeline {
 public:
  Pipeline(PipelineConfig config, corpus::Corpus corpus, std::filesystem::path run_root);

  // Text backbone extended for the spec's modality, with audio embeddings
  // trained when the spec asks for it. Stored as <run>/<seed>/pretrained.sptk
  // and reused when present.
  lm::Checkpoint pretrain_seed(const RunSpec& spec, std::uint64_t seed);
  // Fine-tunes the pretrained checkpoint and evaluates on test. Writes
  // <run>/<seed>/ metrics.json, predictions.json, selection.json and
  // checkpoint.sptk.
  SeedResult run_seed(const RunSpec& spec, std::uint64_t seed);
  // Re-evaluates <run>/<seed>/checkpoint.sptk and rewrites the metric and
  // prediction files.
  SeedResult evaluate_seed(const RunSpec& spec, std::uint64_t seed);
  RunSummary run_seeded(const RunSpec& spec);

  std::string spec_hash(const RunSpec& spec) const;
  std::filesystem::path run_dir(const RunSpec& spec) const;

  const PipelineConfig& config() const { return config_; }
  const corpus::Corpus& corpus() const { return corpus_; }
  const std::filesystem::path& run_root() const { return run_root_; }

  // Selection for the train split; lasso results are cached per filter flag.
  selection::SelectionResult select(const RunSpec& spec, std::uint64_t seed);
  // Text-only backbone after the text pretraining pass, cached per seed.
  lm::Checkpoint text_backbone(std::uint64_t seed);

  // When set, a missing upstream artifact (selection, backbone, pretrained
  // or fine-tuned checkpoint) raises MissingPrerequisite instead of being
  // produced on the spot.
  void set_require_artifacts(bool on) { require_artifacts_ = on; }
  std::filesystem::path selection_cache_path(bool semantic_filter) const;
  std::filesystem::path backbone_cache_path(std::uint64_t seed) const;

 private:
  struct Inputs {
    lm::LmConfig config;  // with audio_vocab set for the spec
    selection::SelectionResult selection;
    std::size_t audio_vocab = 0;
    std::size_t soft_dim = 0;
    std::map<corpus::Split, std::vector<lm::FusedSequence>> seqs;
    std::vector<std::string> test_ids;
    double mean_audio_length = 0;
  };

  std::vector<std::int32_t> audio_ids(std::size_t record, bool semantic_filter) const;
  lm::LmConfig backbone_config(std::uint64_t seed) const;
  Inputs prepare(const RunSpec& spec, std::uint64_t seed);
  SeedResult score(const RunSpec& spec, std::uint64_t seed, const lm::Checkpoint& ckpt, const Inputs& inputs);

  PipelineConfig config_;
  corpus::Corpus corpus_;
  std::filesystem::path run_root_;
  std::string corpus_hash_;
  std::map<bool, selection::SelectionResult> lasso_cache_;
  std::map<std::uint64_t, lm::Checkpoint> backbone_cache_;
  bool require_artifacts_ = false;
};

// Recomputes a run's summary from its stored artifacts.
RunSummary summarize_run(const std::filesystem::path& run_dir);

struct AblationReport {
  std::vector<RunSummary> rows;

  std::string to_markdown() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Runs every grid row and writes <run_root>/ablation-<config-hash>.json
// listing the row directories.
AblationReport run_ablation(Pipeline& pipeline, const RunSpec& base);

// Rebuilds the report from an ablation index file.
AblationReport load_ablation_report(const std::filesystem::path& index);

}  // namespace sptok::experiment
