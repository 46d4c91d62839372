#include "sptok/experiment/config.hpp"

#include <fstream>

#include "sptok/error.hpp"
#include "sptok/io/hash.hpp"

namespace sptok::experiment {

namespace {

using nlohmann::json;

// LmConfig keys filled in per run rather than configured.
constexpr const char* kRuntimeLmKeys[] = {"text_vocab", "audio_vocab", "seed"};

void reject_unknown(const json& j, const json& known, const std::string& section) {
  require(j.is_object(), ErrorCode::kInvalidConfig, section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    require(known.contains(key), ErrorCode::kInvalidConfig, "unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string selection_mode_name(SelectionMode m) { return m == SelectionMode::kCount ? "count" : "length_matched"; }

SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "count") return SelectionMode::kCount;
  if (s == "length_matched") return SelectionMode::kLengthMatched;
  fail(ErrorCode::kInvalidConfig, "unknown selection mode '" + s + "'");
}

json tokenizer_json(const TokenizerSection& t) {
  return {{"bands", t.features.bands},       {"frame_period_ms", t.features.frame_period_ms},
          {"energy_floor", t.features.energy_floor}, {"layers", t.codebooks.layers},
          {"vocab", t.codebooks.vocab},       {"epochs", t.codebooks.epochs},
          {"reserve_zero", t.codebooks.reserve_zero}, {"seed", t.codebooks.seed}};
}

json selection_json(const SelectionSection& s) {
  return {{"method", selection::method_name(s.method)},
          {"mode", selection_mode_name(s.mode)},
          {"target_acoustic", s.target_acoustic},
          {"target_all_layers", s.target_all_layers},
          {"length_ratio", s.length_ratio},
          {"tolerance", s.tolerance},
          {"max_bisection", s.max_bisection},
          {"bracket_low_ratio", s.bracket_low_ratio}};
}

json experiment_json(const ExperimentSection& e) {
  return {{"seeds", e.seeds},
          {"metric", metrics::metric_name(e.metric)},
          {"modality", modality_name(e.modality)},
          {"semantic_filter", e.semantic_filter},
          {"audio_pretrain", e.audio_pretrain}};
}

json lm_json(const lm::LmConfig& c) {
  json j = c.to_json();
  for (const char* key : kRuntimeLmKeys) j.erase(key);
  return j;
}

}  // namespace

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kText:
      return "text";
    case Modality::kTextAudio:
      return "text+audio";
    case Modality::kContinuous:
      return "continuous";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "text") return Modality::kText;
  if (name == "text+audio") return Modality::kTextAudio;
  if (name == "continuous") return Modality::kContinuous;
  fail(ErrorCode::kInvalidConfig, "unknown modality '" + name + "'");
}

void PipelineConfig::validate() const {
  corpus.synthetic.validate();
  lm::LmConfig probe = lm;
  probe.text_vocab = std::max<std::size_t>(probe.text_vocab, 1);
  probe.validate();
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kInvalidConfig, what); };
  check(!corpus.source.empty(), "corpus.source must be set");
  check(tokenizer.features.bands > 0 && tokenizer.features.frame_period_ms > 0, "tokenizer features must be positive");
  check(tokenizer.codebooks.layers >= 1 && tokenizer.codebooks.vocab >= 1, "tokenizer layers and vocab must be >= 1");
  check(selection.target_acoustic > 0 && selection.target_all_layers > 0, "selection targets must be positive");
  check(selection.tolerance > 0 && selection.tolerance < 1, "selection.tolerance must lie in (0, 1)");
  check(selection.bracket_low_ratio > 0 && selection.bracket_low_ratio < 1, "selection.bracket_low_ratio in (0, 1)");
  check(selection.length_ratio > 0, "selection.length_ratio must be positive");
  check(!experiment.seeds.empty(), "experiment.seeds must not be empty");
  for (std::size_t i = 0; i < experiment.seeds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) check(experiment.seeds[i] != experiment.seeds[j], "experiment.seeds repeat");
  }
  check(!run_root.empty(), "paths.run_root must be set");
}

json PipelineConfig::to_json() const {
  return {{"version", kVersion},
          {"corpus",
           {{"source", corpus.source}, {"task", corpus::task_name(corpus.task)}, {"synthetic", corpus.synthetic.to_json()}}},
          {"tokenizer", tokenizer_json(tokenizer)},
          {"selection", selection_json(selection)},
          {"lm", lm_json(lm)},
          {"stage0", stage0.to_json()},
          {"stage2", stage2.to_json()},
          {"stage3", stage3.to_json()},
          {"experiment", experiment_json(experiment)},
          {"paths", {{"run_root", run_root}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  const json known = c.to_json();
  reject_unknown(j, known, "config");
  require(j.contains("version"), ErrorCode::kInvalidConfig, "config has no version field");
  try {
    require(j.at("version").get<int>() == kVersion, ErrorCode::kInvalidConfig,
            "unsupported config version " + j.at("version").dump());
    if (j.contains("corpus")) {
      const json& s = j["corpus"];
      reject_unknown(s, known["corpus"], "corpus");
      read(s, "source", c.corpus.source);
      if (s.contains("task")) c.corpus.task = corpus::parse_task(s["task"].get<std::string>());
      if (s.contains("synthetic")) c.corpus.synthetic = corpus::SyntheticSpec::from_json(s["synthetic"]);
    }
    if (j.contains("tokenizer")) {
      const json& s = j["tokenizer"];
      reject_unknown(s, known["tokenizer"], "tokenizer");
      read(s, "bands", c.tokenizer.features.bands);
      read(s, "frame_period_ms", c.tokenizer.features.frame_period_ms);
      read(s, "energy_floor", c.tokenizer.features.energy_floor);
      read(s, "layers", c.tokenizer.codebooks.layers);
      read(s, "vocab", c.tokenizer.codebooks.vocab);
      read(s, "epochs", c.tokenizer.codebooks.epochs);
      read(s, "reserve_zero", c.tokenizer.codebooks.reserve_zero);
      read(s, "seed", c.tokenizer.codebooks.seed);
    }
    if (j.contains("selection")) {
      const json& s = j["selection"];
      reject_unknown(s, known["selection"], "selection");
      if (s.contains("method")) c.selection.method = selection::parse_method(s["method"].get<std::string>());
      if (s.contains("mode")) c.selection.mode = parse_selection_mode(s["mode"].get<std::string>());
      read(s, "target_acoustic", c.selection.target_acoustic);
      read(s, "target_all_layers", c.selection.target_all_layers);
      read(s, "length_ratio", c.selection.length_ratio);
      read(s, "tolerance", c.selection.tolerance);
      read(s, "max_bisection", c.selection.max_bisection);
      read(s, "bracket_low_ratio", c.selection.bracket_low_ratio);
    }
    if (j.contains("lm")) {
      const json& s = j["lm"];
      for (const char* key : kRuntimeLmKeys) {
        require(!s.contains(key), ErrorCode::kInvalidConfig, std::string("lm.") + key + " is set per run, not configured");
      }
      reject_unknown(s, known["lm"], "lm");
      c.lm = lm::LmConfig::from_json(s);
    }
    if (j.contains("stage0")) c.stage0 = lm::TextPretrainConfig::from_json(j["stage0"]);
    if (j.contains("stage2")) c.stage2 = lm::AudioPretrainConfig::from_json(j["stage2"]);
    if (j.contains("stage3")) c.stage3 = lm::FinetuneConfig::from_json(j["stage3"]);
    if (j.contains("experiment")) {
      const json& s = j["experiment"];
      reject_unknown(s, known["experiment"], "experiment");
      read(s, "seeds", c.experiment.seeds);
      if (s.contains("metric")) c.experiment.metric = metrics::parse_metric(s["metric"].get<std::string>());
      if (s.contains("modality")) c.experiment.modality = parse_modality(s["modality"].get<std::string>());
      read(s, "semantic_filter", c.experiment.semantic_filter);
      read(s, "audio_pretrain", c.experiment.audio_pretrain);
    }
    if (j.contains("paths")) {
      reject_unknown(j["paths"], known["paths"], "paths");
      read(j["paths"], "run_root", c.run_root);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) throw;
    fail(ErrorCode::kInvalidConfig, e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kInvalidConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  return from_json(j);
}

void PipelineConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kInvalidConfig,
          "override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json doc = to_json();
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(part), ErrorCode::kInvalidConfig, "unknown override key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
  *this = from_json(doc);
}

std::string PipelineConfig::hash() const { return io::hex64(io::fnv1a(to_json().dump())); }

}  // namespace sptok::experiment
