#include "sptok/corpus/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

#include "sptok/error.hpp"
#include "sptok/io/hash.hpp"
#include "sptok/log.hpp"
#include "sptok/numerics/rng.hpp"

namespace sptok::corpus {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::kSchemaError, "line " + std::to_string(line) + ": " + what);
}

int parse_label(const json& value, const std::vector<std::string>& names, std::size_t line) {
  if (value.is_number_integer()) {
    const auto v = value.get<long long>();
    require(v >= 0 && static_cast<std::size_t>(v) < names.size(), ErrorCode::kUnknownLabel,
            "line " + std::to_string(line) + ": label index " + std::to_string(v) + " out of range");
    return static_cast<int>(v);
  }
  if (!value.is_string()) schema_error(line, "label must be a string or an integer");
  const auto s = value.get<std::string>();
  const auto it = std::find(names.begin(), names.end(), s);
  require(it != names.end(), ErrorCode::kUnknownLabel, "line " + std::to_string(line) + ": unknown label '" + s + "'");
  return static_cast<int>(it - names.begin());
}

std::filesystem::path meta_path_for(const std::filesystem::path& jsonl) {
  auto p = jsonl;
  p.replace_extension(".meta.json");
  return p;
}

LengthSummary summarize(std::vector<double> v) {
  LengthSummary s;
  if (v.empty()) return s;
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

json summary_json(const LengthSummary& s) { return {{"mean", s.mean}, {"median", s.median}}; }

std::size_t poisson_at_least(Rng& rng, double mean, std::size_t floor) {
  return std::max<std::size_t>(floor, std::poisson_distribution<std::size_t>(mean)(rng));
}

}  // namespace

Task parse_task(const std::string& name) {
  if (name == "afd" || name == "AFD") return Task::kAfd;
  if (name == "afc" || name == "AFC") return Task::kAfc;
  fail(ErrorCode::kInvalidArgument, "unknown task '" + name + "' (expected afd or afc)");
}

std::string task_name(Task task) { return task == Task::kAfd ? "afd" : "afc"; }

const std::vector<std::string>& task_class_names(Task task) {
  static const std::vector<std::string> afd{"No Fallacy", "Fallacy"};
  static const std::vector<std::string> afc{"Ad Hominem",  "Appeal to Authority", "Appeal to Emotion",
                                            "False Cause", "Slippery Slope",      "Slogan"};
  return task == Task::kAfd ? afd : afc;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "dev" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kSchemaError, "unknown split '" + name + "'");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::vector<std::size_t> Corpus::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::int32_t> Corpus::planted_ids() const {
  std::vector<std::int32_t> out;
  if (!metadata.contains("planted")) return out;
  for (const auto& [cls, ids] : metadata["planted"].items()) {
    for (const auto& id : ids) out.push_back(id.get<std::int32_t>());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Corpus load_corpus(const std::filesystem::path& jsonl, Task task) {
  std::ifstream in(jsonl);
  require(in.good(), ErrorCode::kIoError, "cannot open corpus " + jsonl.string());
  Corpus corpus;
  corpus.task = task;
  corpus.class_names = task_class_names(task);
  corpus.root = jsonl.parent_path();

  const auto meta_path = meta_path_for(jsonl);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream meta_in(meta_path);
    try {
      corpus.metadata = json::parse(meta_in);
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchemaError, meta_path.string() + ": " + e.what());
    }
    if (corpus.metadata.contains("class_names")) {
      corpus.class_names = corpus.metadata["class_names"].get<std::vector<std::string>>();
    }
  }

  std::unordered_map<std::string, std::int32_t> word_ids;
  std::set<std::string> seen_ids;
  std::int32_t max_token = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      schema_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error(line_no, "record must be an object");
    for (const char* field : {"id", "label", "split"}) {
      if (!j.contains(field)) schema_error(line_no, std::string("missing \"") + field + "\"");
    }
    UtteranceRecord r;
    if (!j["id"].is_string()) schema_error(line_no, "\"id\" must be a string");
    r.id = j["id"].get<std::string>();
    if (!seen_ids.insert(r.id).second) schema_error(line_no, "duplicate id '" + r.id + "'");
    r.label = parse_label(j["label"], corpus.class_names, line_no);
    if (!j["split"].is_string()) schema_error(line_no, "\"split\" must be a string");
    try {
      r.split = parse_split(j["split"].get<std::string>());
    } catch (const Error& e) {
      schema_error(line_no, e.what());
    }
    if (j.contains("text")) {
      if (!j["text"].is_string()) schema_error(line_no, "\"text\" must be a string");
      r.text = j["text"].get<std::string>();
    }
    if (j.contains("tokens")) {
      if (!j["tokens"].is_array()) schema_error(line_no, "\"tokens\" must be an array");
      for (const auto& t : j["tokens"]) {
        if (!t.is_number_integer() || t.get<long long>() < 0) schema_error(line_no, "tokens must be non-negative integers");
        r.text_tokens.push_back(t.get<std::int32_t>());
      }
    } else if (j.contains("text")) {
      std::istringstream words(r.text);
      std::string w;
      while (words >> w) {
        auto [it, inserted] = word_ids.emplace(w, static_cast<std::int32_t>(word_ids.size()));
        r.text_tokens.push_back(it->second);
      }
    } else {
      schema_error(line_no, "record needs \"text\" or \"tokens\"");
    }
    for (std::int32_t t : r.text_tokens) max_token = std::max(max_token, t);
    if (j.contains("audio_path")) r.audio_path = j["audio_path"].get<std::string>();
    if (j.contains("grid_path")) {
      r.grid_path = j["grid_path"].get<std::string>();
      r.grid = rvq::load_grid(corpus.root / *r.grid_path);
    }
    corpus.records.push_back(std::move(r));
  }

  corpus.text_vocab = static_cast<std::size_t>(max_token + 1);
  if (corpus.metadata.contains("text_vocab")) {
    const auto declared = corpus.metadata["text_vocab"].get<std::size_t>();
    require(declared >= corpus.text_vocab, ErrorCode::kSchemaError, "metadata text_vocab smaller than the largest token");
    corpus.text_vocab = declared;
  }

  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    std::vector<std::size_t> counts(corpus.num_classes(), 0);
    for (std::size_t i : corpus.split_indices(s)) ++counts[corpus.records[i].label];
    std::string msg;
    for (std::size_t c = 0; c < counts.size(); ++c) msg += " " + corpus.class_names[c] + "=" + std::to_string(counts[c]);
    SPTOK_LOG_INFO("corpus %s split:%s", split_name(s).c_str(), msg.c_str());
  }
  if (task == Task::kAfd && !corpus.records.empty()) {
    std::size_t pos = 0;
    for (const auto& r : corpus.records) pos += r.label == 1;
    SPTOK_LOG_INFO("positive ratio %.4f over %zu records (reference corpus: 0.1177)",
                   static_cast<double>(pos) / static_cast<double>(corpus.records.size()), corpus.records.size());
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "grids");
  const auto jsonl = dir / "corpus.jsonl";
  std::ofstream out(jsonl, std::ios::binary);
  require(out.good(), ErrorCode::kIoError, "cannot write " + jsonl.string());
  for (const auto& r : corpus.records) {
    json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["tokens"] = r.text_tokens;
    j["label"] = corpus.class_names.at(static_cast<std::size_t>(r.label));
    j["split"] = split_name(r.split);
    if (r.audio_path) j["audio_path"] = *r.audio_path;
    if (r.grid) {
      const std::string rel = r.grid_path.value_or("grids/" + r.id + ".tgrd");
      rvq::save_grid(dir / rel, *r.grid);
      j["grid_path"] = rel;
    } else if (r.grid_path) {
      j["grid_path"] = *r.grid_path;
    }
    out << j.dump() << '\n';
  }
  require(out.good(), ErrorCode::kIoError, "write failed for " + jsonl.string());

  json meta = corpus.metadata;
  meta["version"] = 1;
  meta["task"] = task_name(corpus.task);
  meta["class_names"] = corpus.class_names;
  meta["text_vocab"] = corpus.text_vocab;
  std::ofstream meta_out(meta_path_for(jsonl), std::ios::binary);
  meta_out << meta.dump(2) << '\n';
  require(meta_out.good(), ErrorCode::kIoError, "write failed for corpus metadata");
}

void SyntheticSpec::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kInvalidSpec, what); };
  check(samples > 0, "samples must be positive");
  check(num_classes >= 2, "need at least two classes");
  check(positive_prior > 0 && positive_prior < 1, "positive_prior must be in (0,1)");
  check(emission > 0 && emission <= 1, "emission must be in (0,1]");
  check(noise >= 0 && noise <= 1, "noise must be in [0,1]");
  check(noise_tilt >= 0 && noise_tilt <= 5, "noise_tilt must be in [0,5]");
  check(layers >= 2, "need a semantic and at least one acoustic layer");
  check(vocab >= 2, "vocab must be at least 2");
  check(planted_per_class >= 1, "planted_per_class must be positive");
  check(num_classes * planted_per_class <= (layers - 1) * (vocab - 1) / 2,
        "too many planted ids for the acoustic vocabulary");
  check(num_classes * cue_words_per_class < text_vocab, "text vocabulary too small for cue words");
  check(mean_text_length >= 1 && mean_frames >= 1, "mean lengths must be at least 1");
  check(text_cue >= 0 && text_cue <= 1 && text_decoy >= 0 && text_decoy <= 1, "text cue rates must be in [0,1]");
  check(semantic_echo >= 0 && semantic_echo <= 1, "semantic_echo must be in [0,1]");
  check(val_fraction >= 0 && test_fraction >= 0 && val_fraction + test_fraction < 1, "bad split fractions");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"samples", samples},
          {"num_classes", num_classes},
          {"positive_prior", positive_prior},
          {"planted_per_class", planted_per_class},
          {"emission", emission},
          {"noise", noise},
          {"noise_tilt", noise_tilt},
          {"layers", layers},
          {"vocab", vocab},
          {"text_vocab", text_vocab},
          {"mean_text_length", mean_text_length},
          {"mean_frames", mean_frames},
          {"cue_words_per_class", cue_words_per_class},
          {"text_cue", text_cue},
          {"text_decoy", text_decoy},
          {"semantic_echo", semantic_echo},
          {"val_fraction", val_fraction},
          {"test_fraction", test_fraction},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  const json defaults = s.to_json();
  for (const auto& [key, value] : j.items()) {
    require(defaults.contains(key), ErrorCode::kInvalidSpec, "unknown synthetic spec key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  get("samples", s.samples);
  get("num_classes", s.num_classes);
  get("positive_prior", s.positive_prior);
  get("planted_per_class", s.planted_per_class);
  get("emission", s.emission);
  get("noise", s.noise);
  get("noise_tilt", s.noise_tilt);
  get("layers", s.layers);
  get("vocab", s.vocab);
  get("text_vocab", s.text_vocab);
  get("mean_text_length", s.mean_text_length);
  get("mean_frames", s.mean_frames);
  get("cue_words_per_class", s.cue_words_per_class);
  get("text_cue", s.text_cue);
  get("text_decoy", s.text_decoy);
  get("semantic_echo", s.semantic_echo);
  get("val_fraction", s.val_fraction);
  get("test_fraction", s.test_fraction);
  get("seed", s.seed);
  return s;
}

Corpus synth_generate(const SyntheticSpec& spec, Task task) {
  spec.validate();
  const auto& names = task_class_names(task);
  require(names.size() == spec.num_classes, ErrorCode::kInvalidSpec,
          "task " + task_name(task) + " has " + std::to_string(names.size()) + " classes, spec has " +
              std::to_string(spec.num_classes));
  Rng rng(derive_seed(spec.seed, "synthetic-corpus"));
  const std::size_t classes = spec.num_classes;
  const std::size_t acoustic = spec.layers - 1;

  // planted[c][j] = (0-based layer, local index); planted ids of one class
  // sit in distinct layers while planted_per_class <= acoustic layers.
  std::vector<std::vector<std::pair<std::size_t, std::uint32_t>>> planted(classes);
  std::vector<std::vector<bool>> is_planted(spec.layers, std::vector<bool>(spec.vocab, false));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < spec.planted_per_class; ++j) {
      const std::size_t layer = 1 + (c * spec.planted_per_class + j) % acoustic;
      std::uint32_t local;
      do {
        local = std::uniform_int_distribution<std::uint32_t>(1, static_cast<std::uint32_t>(spec.vocab - 1))(rng);
      } while (is_planted[layer][local]);
      is_planted[layer][local] = true;
      planted[c].emplace_back(layer, local);
    }
  }
  std::vector<std::vector<std::uint32_t>> noise_pool(spec.layers);
  for (std::size_t l = 1; l < spec.layers; ++l) {
    for (std::uint32_t v = 1; v < spec.vocab; ++v) {
      if (!is_planted[l][v]) noise_pool[l].push_back(v);
    }
  }

  // noise_cdf[c][l]: cumulative class-c preference over noise_pool[l].
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> noise_cdf(classes, std::vector<std::vector<double>>(spec.layers));
  for (std::size_t l = 1; l < spec.layers; ++l) {
    for (std::size_t c = 0; c < classes; ++c) {
      double total = 0.0;
      for (std::size_t k = 0; k < noise_pool[l].size(); ++k) {
        total += std::exp(spec.noise_tilt * normal(rng));
        noise_cdf[c][l].push_back(total);
      }
      for (double& v : noise_cdf[c][l]) v /= total;
    }
  }

  const std::size_t cue_region = classes * spec.cue_words_per_class;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
    return std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng);
  };

  Corpus corpus;
  corpus.task = task;
  corpus.class_names = names;
  corpus.text_vocab = spec.text_vocab;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    UtteranceRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    r.id = id;
    r.label = classes == 2 ? (unif(rng) < spec.positive_prior ? 1 : 0) : static_cast<int>(pick(0, classes));
    const auto y = static_cast<std::size_t>(r.label);

    const std::size_t n = poisson_at_least(rng, spec.mean_text_length - 1.0, 0) + 1;
    for (std::size_t k = 0; k < n; ++k) r.text_tokens.push_back(static_cast<std::int32_t>(pick(cue_region, spec.text_vocab)));
    auto cue_of = [&](std::size_t c) {
      return static_cast<std::int32_t>(c * spec.cue_words_per_class + pick(0, spec.cue_words_per_class));
    };
    if (unif(rng) < spec.text_cue) r.text_tokens[pick(0, n)] = cue_of(y);
    if (unif(rng) < spec.text_decoy) {
      std::size_t other = pick(0, classes - 1);
      if (other >= y) ++other;
      r.text_tokens[pick(0, n)] = cue_of(other);
    }
    for (std::size_t k = 0; k < n; ++k) r.text += (k ? " w" : "w") + std::to_string(r.text_tokens[k]);

    const std::size_t frames = poisson_at_least(rng, spec.mean_frames - 1.0, 0) + 1;
    rvq::TokenGrid grid{spec.layers, frames, spec.vocab, 1, std::vector<std::uint32_t>(spec.layers * frames, 0)};
    for (std::size_t t = 0; t < frames; ++t) {
      const std::int32_t w = r.text_tokens[t * n / frames];
      grid.indices[t] = unif(rng) < spec.semantic_echo
                            ? static_cast<std::uint32_t>(1 + w % static_cast<std::int32_t>(spec.vocab - 1))
                            : static_cast<std::uint32_t>(pick(1, spec.vocab));
      for (std::size_t l = 1; l < spec.layers; ++l) {
        if (unif(rng) < spec.noise) {
          const auto& cdf = noise_cdf[y][l];
          const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), unif(rng)) - cdf.begin());
          grid.indices[l * frames + t] = noise_pool[l][std::min(k, cdf.size() - 1)];
        }
      }
    }
    for (const auto& [layer, local] : planted[y]) {
      if (unif(rng) < spec.emission) grid.indices[layer * frames + pick(0, frames)] = local;
    }
    r.grid = std::move(grid);

    const double u = unif(rng);
    r.split = u < spec.test_fraction ? Split::kTest : (u < spec.test_fraction + spec.val_fraction ? Split::kVal : Split::kTrain);
    corpus.records.push_back(std::move(r));
  }

  json planted_json = json::object();
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::int32_t> ids;
    for (const auto& [layer, local] : planted[c]) ids.push_back(static_cast<std::int32_t>(layer * spec.vocab + local));
    std::sort(ids.begin(), ids.end());
    planted_json[names[c]] = ids;
  }
  std::vector<std::int32_t> cues;
  for (std::size_t k = 0; k < cue_region; ++k) cues.push_back(static_cast<std::int32_t>(k));
  const json spec_json = spec.to_json();
  corpus.metadata = {{"planted", planted_json},
                     {"cue_words", cues},
                     {"audio", {{"layers", spec.layers}, {"vocab", spec.vocab}}},
                     {"spec", spec_json},
                     {"spec_hash", io::hex64(io::fnv1a(spec_json.dump()))}};
  return corpus;
}

nlohmann::json CorpusStats::to_json() const {
  json j{{"records", records}, {"text_length", summary_json(text)}, {"audio_length", summary_json(audio)}};
  if (audio_filtered) j["audio_length_filtered"] = summary_json(*audio_filtered);
  if (duration_seconds) j["duration_seconds"] = summary_json(*duration_seconds);
  json classes = json::object();
  for (std::size_t c = 0; c < class_counts.size(); ++c) classes[class_names[c]] = class_counts[c];
  j["class_counts"] = classes;
  return j;
}

CorpusStats corpus_stats(const Corpus& corpus, const std::vector<std::size_t>& indices,
                         const std::function<std::vector<std::int32_t>(const UtteranceRecord&)>& audio_filter) {
  require(!indices.empty(), ErrorCode::kEmptyCorpus, "no records to summarize");
  CorpusStats s;
  s.records = indices.size();
  s.class_names = corpus.class_names;
  s.class_counts.assign(corpus.num_classes(), 0);
  std::vector<double> text, audio, filtered, durations;
  for (std::size_t i : indices) {
    const auto& r = corpus.records.at(i);
    ++s.class_counts.at(static_cast<std::size_t>(r.label));
    text.push_back(static_cast<double>(r.text_tokens.size()));
    audio.push_back(r.grid ? static_cast<double>(r.grid->layers * r.grid->frames) : 0.0);
    if (audio_filter) filtered.push_back(static_cast<double>(audio_filter(r).size()));
    if (r.audio_path && std::filesystem::exists(corpus.root / *r.audio_path)) {
      durations.push_back(rvq::read_wav(corpus.root / *r.audio_path).duration_seconds());
    }
  }
  s.text = summarize(text);
  s.audio = summarize(audio);
  if (audio_filter) s.audio_filtered = summarize(filtered);
  if (!durations.empty()) s.duration_seconds = summarize(durations);
  return s;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  std::vector<std::size_t> all(corpus.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return corpus_stats(corpus, all);
}

}  // namespace sptok::corpus
