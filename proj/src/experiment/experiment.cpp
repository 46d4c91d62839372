#include "sptok/experiment/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sptok/error.hpp"
#include "sptok/io/hash.hpp"
#include "sptok/log.hpp"
#include "sptok/numerics/rng.hpp"

namespace sptok::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorCode::kIoError, "write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kMissingPrerequisite, "missing artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

double sample_stdev(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

template <typename T>
void hash_bytes(std::uint64_t& h, const T* data, std::size_t count) {
  h = io::fnv1a(std::string_view(reinterpret_cast<const char*>(data), count * sizeof(T)), h);
}

}  // namespace

void RunSpec::validate() const {
  require(!seeds.empty(), ErrorCode::kInvalidConfig, "run spec needs at least one seed");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      require(seeds[i] != seeds[j], ErrorCode::kInvalidConfig, "run spec seeds must be distinct");
    }
  }
  require(selection.has_value() == (modality == Modality::kTextAudio), ErrorCode::kInvalidConfig,
          "selection method 'none' goes with, and only with, a modality without discrete audio tokens");
  require(modality == Modality::kTextAudio || !audio_pretrain, ErrorCode::kInvalidConfig,
          "audio pretraining needs discrete audio tokens");
}

json RunSpec::to_json() const {
  return {{"task", corpus::task_name(task)},
          {"modality", modality_name(modality)},
          {"selection", selection ? selection::method_name(*selection) : "none"},
          {"semantic_filter", semantic_filter},
          {"audio_pretrain", audio_pretrain},
          {"seeds", seeds}};
}

RunSpec RunSpec::from_json(const json& j) {
  RunSpec s;
  try {
    s.task = corpus::parse_task(j.at("task").get<std::string>());
    s.modality = parse_modality(j.at("modality").get<std::string>());
    const auto sel = j.at("selection").get<std::string>();
    s.selection = sel == "none" ? std::nullopt : std::optional(selection::parse_method(sel));
    s.semantic_filter = j.at("semantic_filter").get<bool>();
    s.audio_pretrain = j.at("audio_pretrain").get<bool>();
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("run spec: ") + e.what());
  }
  s.validate();
  return s;
}

RunSpec RunSpec::from_config(const PipelineConfig& config) {
  RunSpec s;
  s.task = config.corpus.task;
  s.modality = config.experiment.modality;
  s.selection = s.modality == Modality::kTextAudio ? std::optional(config.selection.method) : std::nullopt;
  s.semantic_filter = config.experiment.semantic_filter;
  s.audio_pretrain = s.modality == Modality::kTextAudio && config.experiment.audio_pretrain;
  s.seeds = config.experiment.seeds;
  s.validate();
  return s;
}

std::string RunSpec::label() const {
  switch (modality) {
    case Modality::kText:
      return "text-only";
    case Modality::kContinuous:
      return "continuous filter=" + yes_no(semantic_filter);
    case Modality::kTextAudio:
      break;
  }
  return "pt=" + yes_no(audio_pretrain) + " filter=" + yes_no(semantic_filter) + " sel=" +
         selection::method_name(*selection);
}

json RunSummary::to_json() const {
  return {{"spec", spec.to_json()}, {"label", spec.label()}, {"hash", hash},   {"metric_name", metric_name},
          {"seeds", seeds},         {"values", values},      {"mean", mean},   {"stdev", stdev},
          {"bagged", bagged}};
}

BaggedPrediction bag_predict(std::span<const ProbMatrix> members) {
  require(!members.empty(), ErrorCode::kInvalidArgument, "bagging needs at least one member");
  const std::size_t samples = members[0].size();
  const std::size_t classes = samples > 0 ? members[0][0].size() : 0;
  for (const auto& m : members) {
    require(m.size() == samples, ErrorCode::kLengthMismatch, "bagging members cover different sample counts");
    for (const auto& row : m) {
      require(row.size() == classes, ErrorCode::kHeterogeneousHeads, "bagging members differ in class count");
    }
  }
  BaggedPrediction out;
  out.probs.assign(samples, std::vector<double>(classes));
  std::vector<double> values(members.size());
  for (std::size_t i = 0; i < samples; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < members.size(); ++k) values[k] = members[k][i][c];
      std::sort(values.begin(), values.end());
      double shift = 0;
      for (double v : values) shift += v - values[0];
      out.probs[i][c] = values[0] + shift / static_cast<double>(values.size());
    }
    out.labels.push_back(lm::argmax(out.probs[i]));
  }
  return out;
}

std::vector<RunSpec> ablation_grid(const RunSpec& base) {
  std::vector<RunSpec> rows;
  RunSpec text = base;
  text.modality = Modality::kText;
  text.selection.reset();
  text.semantic_filter = false;
  text.audio_pretrain = false;
  rows.push_back(text);
  const struct {
    bool pt, filter, l1;
  } combos[] = {{false, true, false}, {false, true, true}, {true, false, false},
                {true, false, true},  {true, true, false}, {true, true, true}};
  for (const auto& c : combos) {
    RunSpec s = base;
    s.modality = Modality::kTextAudio;
    s.audio_pretrain = c.pt;
    s.semantic_filter = c.filter;
    s.selection = c.l1 ? selection::Method::kLasso : selection::Method::kRandom;
    rows.push_back(s);
  }
  for (const auto& r : rows) r.validate();
  return rows;
}

std::string corpus_hash(const corpus::Corpus& corpus) {
  std::uint64_t h = io::fnv1a(corpus::task_name(corpus.task));
  for (const auto& name : corpus.class_names) h = io::fnv1a(name, h);
  hash_bytes(h, &corpus.text_vocab, 1);
  for (const auto& r : corpus.records) {
    h = io::fnv1a(r.id, h);
    hash_bytes(h, r.text_tokens.data(), r.text_tokens.size());
    hash_bytes(h, &r.label, 1);
    hash_bytes(h, &r.split, 1);
    if (r.grid) {
      const std::size_t dims[] = {r.grid->layers, r.grid->frames, r.grid->vocab, r.grid->layer_offset};
      hash_bytes(h, dims, 4);
      hash_bytes(h, r.grid->indices.data(), r.grid->indices.size());
    }
  }
  return io::hex64(h);
}

Pipeline::Pipeline(PipelineConfig config, corpus::Corpus corpus, fs::path run_root)
    : config_(std::move(config)), corpus_(std::move(corpus)), run_root_(std::move(run_root)) {
  config_.validate();
  require(!corpus_.records.empty(), ErrorCode::kEmptyCorpus, "corpus has no records");
  corpus_hash_ = corpus_hash(corpus_);
}

std::string Pipeline::spec_hash(const RunSpec& spec) const {
  json j = {{"spec", spec.to_json()}, {"config", config_.to_json()}, {"corpus", corpus_hash_}};
  // Seeds and output location do not change per-seed artifacts.
  j["spec"].erase("seeds");
  j["config"]["experiment"].erase("seeds");
  j["config"].erase("paths");
  return io::hex64(io::fnv1a(j.dump()));
}

fs::path Pipeline::run_dir(const RunSpec& spec) const { return run_root_ / spec_hash(spec); }

std::vector<std::int32_t> Pipeline::audio_ids(std::size_t record, bool semantic_filter) const {
  const auto& r = corpus_.records[record];
  require(r.grid.has_value(), ErrorCode::kMissingPrerequisite, "record " + r.id + " has no token grid");
  if (!semantic_filter) return rvq::flatten_grid(*r.grid);
  return rvq::flatten_grid(r.grid->layer_offset == 1 ? rvq::drop_semantic_layer(*r.grid) : *r.grid);
}

fs::path Pipeline::selection_cache_path(bool semantic_filter) const {
  const json key = {{"corpus", corpus_hash_}, {"selection", config_.to_json()["selection"]}, {"filter", semantic_filter}};
  return run_root_ / "cache" / ("selection-" + io::hex64(io::fnv1a(key.dump())) + ".json");
}

lm::LmConfig Pipeline::backbone_config(std::uint64_t seed) const {
  lm::LmConfig cfg = config_.lm;
  cfg.text_vocab = corpus_.text_vocab;
  cfg.audio_vocab = 0;
  cfg.seed = seed;
  return cfg;
}

fs::path Pipeline::backbone_cache_path(std::uint64_t seed) const {
  const json key = {
      {"corpus", corpus_hash_}, {"lm", backbone_config(seed).to_json()}, {"stage0", config_.stage0.to_json()}};
  return run_root_ / "cache" / ("backbone-" + io::hex64(io::fnv1a(key.dump())) + ".sptk");
}

selection::SelectionResult Pipeline::select(const RunSpec& spec, std::uint64_t seed) {
  require(spec.selection.has_value(), ErrorCode::kInvalidArgument, "run spec selects no audio tokens");
  const bool filter = spec.semantic_filter;
  if (!lasso_cache_.contains(filter)) {
    const fs::path cache = selection_cache_path(filter);
    if (fs::exists(cache)) {
      lasso_cache_[filter] = selection::SelectionResult::from_json(read_json(cache));
    } else {
      require(!require_artifacts_, ErrorCode::kMissingPrerequisite,
              "token selection " + cache.string() + " not found; run the select stage first");
      const auto train = corpus_.split_indices(corpus::Split::kTrain);
      require(!train.empty(), ErrorCode::kEmptySplit, "train split is empty");
      std::vector<std::vector<std::int32_t>> text, audio;
      std::vector<int> labels;
      std::size_t full_layers = 0, vocab = 0;
      for (std::size_t i : train) {
        const auto& r = corpus_.records[i];
        text.push_back(r.text_tokens);
        audio.push_back(audio_ids(i, filter));
        labels.push_back(r.label);
        full_layers = std::max(full_layers, r.grid->layers + r.grid->layer_offset - 1);
        vocab = std::max(vocab, r.grid->vocab);
      }
      const selection::MultimodalVocab mv{corpus_.text_vocab, full_layers * vocab};
      const auto bow = selection::build_bow(text, audio, mv);
      selection::L1SelectionConfig l1;
      l1.tolerance = config_.selection.tolerance;
      l1.max_bisection = config_.selection.max_bisection;
      l1.bracket_low_ratio = config_.selection.bracket_low_ratio;
      const int classes = static_cast<int>(corpus_.num_classes());
      selection::SelectionResult result;
      if (config_.selection.mode == SelectionMode::kCount) {
        const std::size_t target = filter ? config_.selection.target_acoustic : config_.selection.target_all_layers;
        result = selection::select_tokens_l1(bow, labels, classes, target, l1);
      } else {
        double text_len = 0;
        for (const auto& t : text) text_len += static_cast<double>(t.size());
        text_len /= static_cast<double>(text.size());
        result = selection::select_tokens_l1_length_matched(bow, labels, classes, audio,
                                                            config_.selection.length_ratio * text_len, l1);
      }
      SPTOK_LOG_INFO("lasso selection (filter=%d): %zu audio tokens at lambda %.4g", filter ? 1 : 0, result.size(),
                     result.lambda.value_or(0.0));
      write_json(cache, result.to_json());
      lasso_cache_[filter] = result;
    }
  }
  const auto& lasso = lasso_cache_.at(filter);
  if (*spec.selection == selection::Method::kLasso) return lasso;
  std::vector<std::vector<std::int32_t>> audio;
  for (std::size_t i : corpus_.split_indices(corpus::Split::kTrain)) audio.push_back(audio_ids(i, filter));
  return selection::select_tokens_random(selection::observed_audio_ids(audio), lasso.size(), seed);
}

lm::Checkpoint Pipeline::text_backbone(std::uint64_t seed) {
  if (auto it = backbone_cache_.find(seed); it != backbone_cache_.end()) return it->second;
  const lm::LmConfig cfg = backbone_config(seed);
  const fs::path cache = backbone_cache_path(seed);
  lm::Checkpoint ckpt;
  if (fs::exists(cache)) {
    ckpt = lm::load_checkpoint(cache);
  } else {
    require(!require_artifacts_, ErrorCode::kMissingPrerequisite,
            "text backbone " + cache.string() + " not found; run the pretrain stage first");
    ckpt.config = cfg;
    ckpt.params = lm::init_params<float>(cfg);
    std::vector<lm::FusedSequence> train;
    for (std::size_t i : corpus_.split_indices(corpus::Split::kTrain)) {
      train.push_back(lm::build_fused_sequence(corpus_.records[i].text_tokens, {}, cfg));
    }
    lm::TextPretrainConfig options = config_.stage0;
    options.seed = seed;
    const auto report = lm::pretrain_text(ckpt.params, cfg, train, options);
    ckpt.meta = {{"stage0", report.to_json()}};
    fs::create_directories(cache.parent_path());
    lm::save_checkpoint(cache.string() + ".tmp", ckpt);
    fs::rename(cache.string() + ".tmp", cache);
  }
  backbone_cache_[seed] = ckpt;
  return ckpt;
}

Pipeline::Inputs Pipeline::prepare(const RunSpec& spec, std::uint64_t seed) {
  spec.validate();
  require(spec.task == corpus_.task, ErrorCode::kInvalidConfig, "run spec task differs from the corpus task");
  Inputs in;
  in.config = backbone_config(seed);
  lm::AudioIndex index;
  if (spec.modality == Modality::kTextAudio) {
    in.selection = select(spec, seed);
    index = lm::AudioIndex(in.selection.selected_ids);
    in.audio_vocab = index.size();
    in.config.audio_vocab = index.size();
  } else if (spec.modality == Modality::kContinuous) {
    for (const auto& r : corpus_.records) {
      require(r.grid.has_value(), ErrorCode::kMissingPrerequisite, "record " + r.id + " has no token grid");
      in.soft_dim = std::max(in.soft_dim, (r.grid->layers + r.grid->layer_offset - 1) * r.grid->vocab);
    }
  }
  double audio_len = 0;
  for (std::size_t i = 0; i < corpus_.records.size(); ++i) {
    const auto& r = corpus_.records[i];
    lm::FusedSequence s;
    if (spec.modality == Modality::kText) {
      s = lm::build_fused_sequence(r.text_tokens, {}, in.config, r.label);
    } else if (spec.modality == Modality::kTextAudio) {
      s = lm::build_fused_sequence(r.text_tokens, index.map(audio_ids(i, spec.semantic_filter)), in.config, r.label);
    } else {
      std::vector<float> hist(in.soft_dim, 0.0f);
      const auto ids = audio_ids(i, spec.semantic_filter);
      for (std::int32_t a : ids) hist[static_cast<std::size_t>(a)] += 1.0f;
      if (!ids.empty()) {
        for (float& v : hist) v /= static_cast<float>(ids.size());
      }
      s = lm::build_soft_sequence(r.text_tokens, hist, in.config, r.label);
    }
    if (r.split == corpus::Split::kTrain) audio_len += static_cast<double>(s.audio_length());
    if (r.split == corpus::Split::kTest) in.test_ids.push_back(r.id);
    in.seqs[r.split].push_back(std::move(s));
  }
  for (auto split : {corpus::Split::kTrain, corpus::Split::kVal, corpus::Split::kTest}) {
    require(!in.seqs[split].empty(), ErrorCode::kEmptySplit, "split " + corpus::split_name(split) + " is empty");
  }
  in.mean_audio_length = audio_len / static_cast<double>(in.seqs[corpus::Split::kTrain].size());
  return in;
}

lm::Checkpoint Pipeline::pretrain_seed(const RunSpec& spec, std::uint64_t seed) {
  const fs::path path = run_dir(spec) / std::to_string(seed) / "pretrained.sptk";
  Inputs in = prepare(spec, seed);
  if (fs::exists(path)) return lm::load_checkpoint(path);
  lm::Checkpoint ckpt = text_backbone(seed);
  lm::LmConfig& cfg = ckpt.config;
  ParamStore& params = ckpt.params;
  json meta = {{"spec", spec.to_json()}, {"seed", seed}};
  if (spec.modality == Modality::kTextAudio) {
    lm::add_audio_embeddings(params, cfg, in.audio_vocab, derive_seed(seed, "audio-embeddings"));
    if (spec.audio_pretrain) {
      params.freeze_all();
      params.set_trainable("embed.audio", true);
      lm::AudioPretrainConfig options = config_.stage2;
      options.seed = seed;
      meta["stage2"] = lm::pretrain_audio_embeddings(params, cfg, in.seqs[corpus::Split::kTrain],
                                                     in.seqs[corpus::Split::kVal], options)
                           .to_json();
    }
  } else if (spec.modality == Modality::kContinuous) {
    lm::attach_projection(params, cfg, in.soft_dim, derive_seed(seed, "projection"));
  }
  params.freeze_all();
  ckpt.meta = meta;
  fs::create_directories(path.parent_path());
  lm::save_checkpoint(path.string() + ".tmp", ckpt);
  fs::rename(path.string() + ".tmp", path);
  return ckpt;
}

SeedResult Pipeline::run_seed(const RunSpec& spec, std::uint64_t seed) {
  SPTOK_LOG_INFO("run %s seed %llu", spec.label().c_str(), static_cast<unsigned long long>(seed));
  const fs::path pretrained = run_dir(spec) / std::to_string(seed) / "pretrained.sptk";
  require(!require_artifacts_ || fs::exists(pretrained), ErrorCode::kMissingPrerequisite,
          "pretrained checkpoint " + pretrained.string() + " not found; run the pretrain stage first");
  lm::Checkpoint ckpt = pretrain_seed(spec, seed);
  const Inputs in = prepare(spec, seed);
  lm::LmConfig& cfg = ckpt.config;
  ParamStore& params = ckpt.params;

  params.freeze_all();
  ckpt.adapters = lm::attach_lora(params, lm::default_lora_targets(cfg), config_.stage3.lora_rank,
                                  config_.stage3.lora_alpha, derive_seed(seed, "lora"));
  lm::attach_head(params, cfg, corpus_.num_classes(), derive_seed(seed, "head"));
  if (spec.modality == Modality::kContinuous) {
    params.set_trainable("proj.weight", true);
    params.set_trainable("proj.bias", true);
  }
  lm::FinetuneConfig options = config_.stage3;
  options.metric = config_.experiment.metric;
  options.seed = seed;
  ckpt.meta["class_names"] = corpus_.class_names;
  ckpt.meta["stage3"] = lm::finetune(params, cfg, ckpt.adapters, in.seqs.at(corpus::Split::kTrain),
                                     in.seqs.at(corpus::Split::kVal), options)
                            .to_json();
  params.freeze_all();
  const SeedResult result = score(spec, seed, ckpt, in);
  lm::save_checkpoint(result.dir / "checkpoint.sptk", ckpt);
  SPTOK_LOG_INFO("run %s seed %llu: %s %.4f", spec.label().c_str(), static_cast<unsigned long long>(seed),
                 metrics::metric_name(config_.experiment.metric).c_str(), result.metric);
  return result;
}

SeedResult Pipeline::evaluate_seed(const RunSpec& spec, std::uint64_t seed) {
  const fs::path path = run_dir(spec) / std::to_string(seed) / "checkpoint.sptk";
  require(fs::exists(path), ErrorCode::kMissingPrerequisite,
          "fine-tuned checkpoint " + path.string() + " not found; run the finetune stage first");
  const lm::Checkpoint ckpt = lm::load_checkpoint(path);
  return score(spec, seed, ckpt, prepare(spec, seed));
}

SeedResult Pipeline::score(const RunSpec& spec, std::uint64_t seed, const lm::Checkpoint& ckpt, const Inputs& in) {
  const auto& test = in.seqs.at(corpus::Split::kTest);
  SeedResult result;
  result.seed = seed;
  result.dir = run_dir(spec) / std::to_string(seed);
  result.selected_count = in.selection.size();
  result.mean_audio_length = in.mean_audio_length;
  result.test_probs = lm::predict_proba(test, ckpt.params, ckpt.config, ckpt.adapters);
  std::vector<int> pred;
  for (std::size_t i = 0; i < test.size(); ++i) {
    result.gold.push_back(*test[i].label);
    pred.push_back(lm::argmax(result.test_probs[i]));
  }
  result.confusion = metrics::confusion_matrix(result.gold, pred, corpus_.num_classes(), corpus_.class_names);
  result.metric = metrics::task_metric(result.confusion, config_.experiment.metric);
  result.per_class_f1 = metrics::per_class_f1(result.confusion);

  fs::create_directories(result.dir);
  write_json(result.dir / "metrics.json", {{"task", corpus::task_name(spec.task)},
                                           {"metric_name", metrics::metric_name(config_.experiment.metric)},
                                           {"value", result.metric},
                                           {"per_class_f1", result.per_class_f1},
                                           {"confusion", result.confusion.to_json()},
                                           {"selected_count", result.selected_count},
                                           {"mean_audio_length", result.mean_audio_length}});
  write_json(result.dir / "predictions.json",
             {{"ids", in.test_ids}, {"gold", result.gold}, {"pred", pred}, {"probs", result.test_probs}});
  write_json(result.dir / "selection.json", spec.selection ? in.selection.to_json() : json{{"method", "none"}});
  return result;
}

RunSummary Pipeline::run_seeded(const RunSpec& spec) {
  spec.validate();
  if (spec.seeds.size() == 1) SPTOK_LOG_WARN("single-seed run: standard deviation reported as 0");
  const fs::path dir = run_dir(spec);
  fs::create_directories(dir);
  write_json(dir / "spec.json", {{"spec", spec.to_json()},
                                 {"hash", spec_hash(spec)},
                                 {"metric_name", metrics::metric_name(config_.experiment.metric)},
                                 {"num_classes", corpus_.num_classes()}});
  for (std::uint64_t seed : spec.seeds) run_seed(spec, seed);
  const RunSummary summary = summarize_run(dir);
  write_json(dir / "summary.json", summary.to_json());
  return summary;
}

RunSummary summarize_run(const fs::path& run_dir) {
  const json head = read_json(run_dir / "spec.json");
  RunSummary s;
  s.spec = RunSpec::from_json(head.at("spec"));
  s.hash = head.at("hash").get<std::string>();
  s.metric_name = head.at("metric_name").get<std::string>();
  const auto kind = metrics::parse_metric(s.metric_name);
  const std::size_t classes = head.at("num_classes").get<std::size_t>();
  std::vector<ProbMatrix> members;
  std::vector<int> gold;
  for (std::uint64_t seed : s.spec.seeds) {
    const fs::path dir = run_dir / std::to_string(seed);
    const json m = read_json(dir / "metrics.json");
    const json p = read_json(dir / "predictions.json");
    s.seeds.push_back(seed);
    s.values.push_back(m.at("value").get<double>());
    members.push_back(p.at("probs").get<ProbMatrix>());
    const auto g = p.at("gold").get<std::vector<int>>();
    require(gold.empty() || gold == g, ErrorCode::kLengthMismatch, "seeds were evaluated on different test sets");
    gold = g;
  }
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(s.values.size());
  s.stdev = sample_stdev(s.values, s.mean);
  const auto bag = bag_predict(members);
  s.bagged = metrics::task_metric(metrics::confusion_matrix(gold, bag.labels, classes), kind);
  return s;
}

std::string AblationReport::to_markdown() const {
  std::ostringstream out;
  const std::string metric = rows.empty() ? "metric" : rows.front().metric_name;
  out << "| Audio PT | Filtering Semantic | l1 | " << metric << " mean | stdev | " << metric << " bagged | seeds |\n";
  out << "|---|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& r : rows) {
    const bool text = r.spec.modality != Modality::kTextAudio;
    out << "| " << (text ? "-" : yes_no(r.spec.audio_pretrain)) << " | " << (text ? "-" : yes_no(r.spec.semantic_filter))
        << " | " << (text ? "-" : yes_no(*r.spec.selection == selection::Method::kLasso)) << " | ";
    std::snprintf(buf, sizeof(buf), "%.4f | %.4f | %.4f", r.mean, r.stdev, r.bagged);
    out << buf << " | " << r.seeds.size() << " |\n";
  }
  return out.str();
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out << "label,audio_pretrain,semantic_filter,selection,metric,mean,stdev,bagged,seeds\n";
  char buf[96];
  for (const auto& r : rows) {
    const bool text = r.spec.modality != Modality::kTextAudio;
    out << r.spec.label() << "," << (text ? "" : yes_no(r.spec.audio_pretrain)) << ","
        << (text ? "" : yes_no(r.spec.semantic_filter)) << ","
        << (r.spec.selection ? selection::method_name(*r.spec.selection) : "none") << "," << r.metric_name << ",";
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", r.mean, r.stdev, r.bagged);
    out << buf << "," << r.seeds.size() << "\n";
  }
  return out.str();
}

json AblationReport::to_json() const {
  json j = json::array();
  for (const auto& r : rows) j.push_back(r.to_json());
  return j;
}

AblationReport run_ablation(Pipeline& pipeline, const RunSpec& base) {
  AblationReport report;
  json index = {{"config_hash", pipeline.config().hash()}, {"rows", json::array()}};
  for (const auto& spec : ablation_grid(base)) {
    report.rows.push_back(pipeline.run_seeded(spec));
    index["rows"].push_back({{"label", spec.label()}, {"dir", pipeline.spec_hash(spec)}});
  }
  write_json(pipeline.run_root() / ("ablation-" + pipeline.config().hash() + ".json"), index);
  return report;
}

AblationReport load_ablation_report(const fs::path& index_path) {
  const json index = read_json(index_path);
  AblationReport report;
  for (const auto& row : index.at("rows")) {
    report.rows.push_back(summarize_run(index_path.parent_path() / row.at("dir").get<std::string>()));
  }
  return report;
}

}  // namespace sptok::experiment
