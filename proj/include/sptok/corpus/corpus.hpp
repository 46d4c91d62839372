#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sptok/rvq/rvq.hpp"

namespace sptok::corpus {

enum class Task { kAfd, kAfc };
Task parse_task(const std::string& name);
std::string task_name(Task task);
// AFD: {No Fallacy, Fallacy}; AFC: the six fallacy categories.
const std::vector<std::string>& task_class_names(Task task);

enum class Split { kTrain, kVal, kTest };
Split parse_split(const std::string& name);
std::string split_name(Split split);

struct UtteranceRecord {
  std::string id;
  std::string text;
  std::vector<std::int32_t> text_tokens;
  std::optional<std::string> audio_path;  // relative to the corpus root
  std::optional<std::string> grid_path;   // relative to the corpus root
  std::optional<rvq::TokenGrid> grid;
  int label = 0;
  Split split = Split::kTrain;
};

struct Corpus {
  Task task = Task::kAfd;
  std::vector<std::string> class_names;
  std::size_t text_vocab = 0;
  std::vector<UtteranceRecord> records;
  // Sidecar metadata: planted ids, generator spec and its hash.
  nlohmann::json metadata = nlohmann::json::object();
  std::filesystem::path root;

  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> split_indices(Split split) const;
  std::vector<std::int32_t> planted_ids() const;
};

// JSONL, one record per line: {id, text, tokens?, audio_path?, grid_path?,
// label, split}. Labels may be class names or indices. Without "tokens",
// text is split on whitespace against a vocabulary built in file order.
Corpus load_corpus(const std::filesystem::path& jsonl, Task task);

// Writes <dir>/corpus.jsonl, <dir>/corpus.meta.json and one grid file per
// in-memory grid under <dir>/grids/.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

struct SyntheticSpec {
  std::size_t samples = 2000;
  std::size_t num_classes = 2;
  // Probability of the positive class when num_classes == 2; other class
  // counts use a uniform prior.
  double positive_prior = 0.1177;
  std::size_t planted_per_class = 5;
  double emission = 0.3;
  // Probability that an acoustic cell holds a random non-planted token
  // instead of the silence codeword 0.
  double noise = 0.5;
  // Log-scale spread of class-specific preferences over noise tokens; 0
  // gives label-independent noise, larger values many weakly informative
  // tokens.
  double noise_tilt = 0.5;
  std::size_t layers = 8;
  std::size_t vocab = 64;
  std::size_t text_vocab = 200;
  double mean_text_length = 16.0;
  double mean_frames = 10.0;
  std::size_t cue_words_per_class = 4;
  // Probability that a sample carries one cue word of its own class, and
  // of a random other class.
  double text_cue = 0.55;
  double text_decoy = 0.1;
  // Probability that a semantic-layer cell echoes a text token.
  double semantic_echo = 0.8;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Grid-level generator. Planted ids live in acoustic layers and are
// disjoint across classes; they are recorded in metadata["planted"].
Corpus synth_generate(const SyntheticSpec& spec, Task task = Task::kAfd);

struct LengthSummary {
  double mean = 0.0;
  double median = 0.0;
};

struct CorpusStats {
  std::size_t records = 0;
  LengthSummary text;
  LengthSummary audio;           // flattened grid, all layers
  std::optional<LengthSummary> audio_filtered;
  std::optional<LengthSummary> duration_seconds;
  std::vector<std::size_t> class_counts;
  std::vector<std::string> class_names;

  nlohmann::json to_json() const;
};

// audio_filter, when given, is applied to each flattened sequence for the
// post-filtering summary.
CorpusStats corpus_stats(const Corpus& corpus, const std::vector<std::size_t>& indices,
                         const std::function<std::vector<std::int32_t>(const UtteranceRecord&)>& audio_filter = {});
CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace sptok::corpus
