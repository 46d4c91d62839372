#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptok/corpus/corpus.hpp"
#include "sptok/lm/config.hpp"
#include "sptok/lm/training.hpp"
#include "sptok/metrics/metrics.hpp"
#include "sptok/rvq/rvq.hpp"
#include "sptok/selection/selection.hpp"

namespace sptok::experiment {

enum class Modality { kText, kTextAudio, kContinuous };
std::string modality_name(Modality m);
Modality parse_modality(const std::string& name);

struct CorpusSection {
  // "synthetic" generates from `synthetic`; otherwise a JSONL path.
  std::string source = "synthetic";
  corpus::Task task = corpus::Task::kAfd;
  corpus::SyntheticSpec synthetic;
};

struct TokenizerSection {
  rvq::FeatureOptions features;
  rvq::CodebookOptions codebooks;
};

enum class SelectionMode { kCount, kLengthMatched };

struct SelectionSection {
  selection::Method method = selection::Method::kLasso;
  SelectionMode mode = SelectionMode::kCount;
  // Target support sizes with and without the semantic layer.
  std::size_t target_acoustic = 73;
  std::size_t target_all_layers = 80;
  // Length matching aims the mean filtered audio length at this multiple
  // of the mean text length.
  double length_ratio = 1.0;
  double tolerance = 0.10;
  std::size_t max_bisection = 30;
  double bracket_low_ratio = 1e-4;
};

struct ExperimentSection {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  metrics::MetricKind metric = metrics::MetricKind::kMacroF1;
  Modality modality = Modality::kTextAudio;
  bool semantic_filter = true;
  bool audio_pretrain = true;
};

struct PipelineConfig {
  static constexpr int kVersion = 1;

  CorpusSection corpus;
  TokenizerSection tokenizer;
  SelectionSection selection;
  lm::LmConfig lm;
  lm::TextPretrainConfig stage0;
  lm::AudioPretrainConfig stage2;
  lm::FinetuneConfig stage3;
  ExperimentSection experiment;
  std::string run_root = "runs";

  void validate() const;
  nlohmann::json to_json() const;
  // Rejects unknown keys anywhere and requires "version".
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  // "section.key=value"; the value is parsed as JSON, falling back to a
  // plain string.
  void apply_override(const std::string& assignment);

  std::string hash() const;
};

}  // namespace sptok::experiment
