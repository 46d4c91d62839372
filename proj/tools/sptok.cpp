// Stage-oriented front end: sptok run <stage> [--config path] [--seed n]
// [--override key=value]... [--dry-run]

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sptok/corpus/corpus.hpp"
#include "sptok/error.hpp"
#include "sptok/experiment/experiment.hpp"
#include "sptok/log.hpp"
#include "sptok/rvq/audio.hpp"
#include "sptok/rvq/rvq.hpp"

namespace fs = std::filesystem;
using namespace sptok;
using experiment::Modality;
using experiment::PipelineConfig;
using experiment::RunSpec;

namespace {

enum ExitCode { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumerical = 3 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kUnknownTarget:
      return kExitConfig;
    case ErrorCode::kNumericalFailure:
    case ErrorCode::kNonDeterministicLoss:
    case ErrorCode::kTargetUnreachable:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

// Exclusive marker file in the run root, removed on scope exit.
class RunLock {
 public:
  explicit RunLock(const fs::path& root) : path_(root / ".lock") {
    fs::create_directories(root);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      require(errno != EEXIST, ErrorCode::kIoError,
              "run root is locked by another invocation (" + path_.string() + ")");
      fail(ErrorCode::kIoError, "cannot create lock " + path_.string());
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct Context {
  PipelineConfig config;
  fs::path root;

  fs::path corpus_dir() const { return root / "corpus"; }
  fs::path corpus_file() const { return corpus_dir() / "corpus.jsonl"; }
  fs::path codebooks_file() const { return root / "tokenizer" / "codebooks.bin"; }
  fs::path ablation_index() const { return root / ("ablation-" + config.hash() + ".json"); }
  bool synthetic() const { return config.corpus.source == "synthetic"; }
  RunSpec spec() const { return RunSpec::from_config(config); }

  void need(const fs::path& path, const std::string& hint) const {
    require(fs::exists(path), ErrorCode::kMissingPrerequisite, "missing " + path.string() + "; " + hint);
  }
  void need_raw_corpus() const {
    require(!synthetic(), ErrorCode::kInvalidConfig,
            "corpus.source is synthetic: its token grids come from the synth stage");
    need(config.corpus.source, "corpus.source must name a JSONL corpus");
  }
  void need_tokens() const { need(corpus_file(), "run the tokenize (or synth) stage first"); }

  experiment::Pipeline pipeline() const {
    need_tokens();
    return experiment::Pipeline(config, corpus::load_corpus(corpus_file(), config.corpus.task), root);
  }
  std::string fmt(const char* format, double v) const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
  }
};

struct Stage {
  std::function<void(const Context&)> check;  // prerequisites only, no writes
  std::function<std::string(const Context&)> run;
};

std::string summary_line(const experiment::RunSummary& s) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s mean %.4f stdev %.4f bagged %.4f over %zu seeds", s.metric_name.c_str(), s.mean,
                s.stdev, s.bagged, s.values.size());
  out << s.spec.label() << ": " << buf << " (" << s.hash << ")";
  return out.str();
}

std::map<std::string, Stage> stages() {
  std::map<std::string, Stage> m;

  m["synth"] = {[](const Context& c) {
                  require(c.synthetic(), ErrorCode::kInvalidConfig, "synth needs corpus.source = \"synthetic\"");
                },
                [](const Context& c) {
                  const auto corpus = corpus::synth_generate(c.config.corpus.synthetic, c.config.corpus.task);
                  corpus::save_corpus(c.corpus_dir(), corpus);
                  return std::to_string(corpus.records.size()) + " synthetic records, " +
                         std::to_string(corpus.planted_ids().size()) + " planted ids -> " + c.corpus_file().string();
                }};

  m["tokenize-train"] = {[](const Context& c) { c.need_raw_corpus(); },
                         [](const Context& c) {
                           const auto corpus = corpus::load_corpus(c.config.corpus.source, c.config.corpus.task);
                           rvq::FrameSeq frames;
                           for (const auto& r : corpus.records) {
                             if (r.split != corpus::Split::kTrain || !r.audio_path) continue;
                             frames.append(rvq::frame_features(rvq::read_wav(corpus.root / *r.audio_path),
                                                               c.config.tokenizer.features));
                           }
                           require(frames.length() > 0, ErrorCode::kInsufficientData,
                                   "no training audio referenced by the corpus");
                           const auto books = rvq::train_codebooks(frames, c.config.tokenizer.codebooks);
                           fs::create_directories(c.codebooks_file().parent_path());
                           rvq::save_codebooks(c.codebooks_file(), books);
                           return "codebooks " + std::to_string(books.layers) + "x" + std::to_string(books.vocab) +
                                  " from " + std::to_string(frames.length()) + " frames -> " +
                                  c.codebooks_file().string();
                         }};

  m["tokenize"] = {[](const Context& c) {
                     c.need_raw_corpus();
                     c.need(c.codebooks_file(), "run the tokenize-train stage first");
                   },
                   [](const Context& c) {
                     auto corpus = corpus::load_corpus(c.config.corpus.source, c.config.corpus.task);
                     const auto books = rvq::load_codebooks(c.codebooks_file());
                     std::size_t encoded = 0;
                     for (auto& r : corpus.records) {
                       require(r.audio_path.has_value(), ErrorCode::kMissingPrerequisite,
                               "record " + r.id + " has no audio_path");
                       const fs::path audio = fs::absolute(corpus.root / *r.audio_path);
                       r.grid = rvq::encode(rvq::frame_features(rvq::read_wav(audio), c.config.tokenizer.features),
                                            books);
                       r.audio_path = audio.string();
                       r.grid_path.reset();
                       ++encoded;
                     }
                     corpus::save_corpus(c.corpus_dir(), corpus);
                     return std::to_string(encoded) + " utterances encoded -> " + c.corpus_file().string();
                   }};

  m["select"] = {[](const Context& c) { c.need_tokens(); },
                 [](const Context& c) {
                   const RunSpec spec = c.spec();
                   if (spec.modality != Modality::kTextAudio) return std::string("modality has no token selection");
                   auto pipeline = c.pipeline();
                   const auto sel = pipeline.select(spec, spec.seeds.front());
                   return std::to_string(sel.size()) + " audio tokens selected (" +
                          selection::method_name(sel.method) + c.fmt(", lambda %.4g)", sel.lambda.value_or(0.0));
                 }};

  m["pretrain"] = {[](const Context& c) {
                     c.need_tokens();
                     const RunSpec spec = c.spec();
                     if (spec.modality != Modality::kTextAudio) return;
                     auto pipeline = c.pipeline();
                     c.need(pipeline.selection_cache_path(spec.semantic_filter), "run the select stage first");
                   },
                   [](const Context& c) {
                     const RunSpec spec = c.spec();
                     auto pipeline = c.pipeline();
                     std::size_t audio = 0;
                     for (std::uint64_t seed : spec.seeds) audio = pipeline.pretrain_seed(spec, seed).config.audio_vocab;
                     return std::to_string(spec.seeds.size()) + " pretrained checkpoints (" + std::to_string(audio) +
                            " audio embeddings) -> " + pipeline.run_dir(spec).string();
                   }};

  m["finetune"] = {[](const Context& c) {
                     const RunSpec spec = c.spec();
                     auto pipeline = c.pipeline();
                     for (std::uint64_t seed : spec.seeds) {
                       c.need(pipeline.run_dir(spec) / std::to_string(seed) / "pretrained.sptk",
                              "run the pretrain stage first");
                     }
                   },
                   [](const Context& c) {
                     auto pipeline = c.pipeline();
                     pipeline.set_require_artifacts(true);
                     return summary_line(pipeline.run_seeded(c.spec()));
                   }};

  m["eval"] = {[](const Context& c) {
                 const RunSpec spec = c.spec();
                 auto pipeline = c.pipeline();
                 c.need(pipeline.run_dir(spec) / "spec.json", "run the finetune stage first");
                 for (std::uint64_t seed : spec.seeds) {
                   c.need(pipeline.run_dir(spec) / std::to_string(seed) / "checkpoint.sptk",
                          "run the finetune stage first");
                 }
               },
               [](const Context& c) {
                 const RunSpec spec = c.spec();
                 auto pipeline = c.pipeline();
                 for (std::uint64_t seed : spec.seeds) pipeline.evaluate_seed(spec, seed);
                 const auto summary = experiment::summarize_run(pipeline.run_dir(spec));
                 std::ofstream(pipeline.run_dir(spec) / "summary.json") << summary.to_json().dump(2) << "\n";
                 return summary_line(summary);
               }};

  m["ablate"] = {[](const Context& c) { c.need_tokens(); },
                 [](const Context& c) {
                   auto pipeline = c.pipeline();
                   const auto report = experiment::run_ablation(pipeline, c.spec());
                   std::cout << report.to_markdown();
                   return std::to_string(report.rows.size()) + " ablation rows -> " + c.ablation_index().string();
                 }};

  m["report"] = {[](const Context& c) { c.need(c.ablation_index(), "run the ablate stage first"); },
                 [](const Context& c) {
                   const auto report = experiment::load_ablation_report(c.ablation_index());
                   const std::string md = report.to_markdown();
                   std::ofstream(c.root / ("report-" + c.config.hash() + ".md"), std::ios::binary) << md;
                   std::ofstream(c.root / ("report-" + c.config.hash() + ".csv"), std::ios::binary)
                       << report.to_csv();
                   std::cout << md;
                   return std::to_string(report.rows.size()) + " rows -> " +
                          (c.root / ("report-" + c.config.hash() + ".md")).string();
                 }};
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-token selection and fusion pipeline"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run one pipeline stage");
  const auto table = stages();
  std::vector<std::string> names;
  for (const auto& [name, stage] : table) names.push_back(name);

  std::string stage_name;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool dry_run = false;
  run->add_option("stage", stage_name, "Stage name")->required()->check(CLI::IsMember(names));
  run->add_option("--config", config_path, "Pipeline config (JSON); built-in defaults when omitted");
  run->add_option("--seed", seed, "Run a single seed instead of experiment.seeds");
  run->add_option("--override", overrides, "Config override key=value (repeatable)");
  run->add_flag("--dry-run", dry_run, "Validate config and prerequisites without writing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    Context ctx;
    ctx.config = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    for (const auto& o : overrides) ctx.config.apply_override(o);
    if (seed) ctx.config.experiment.seeds = {*seed};
    if (const char* env = std::getenv("SPTOK_RUN_ROOT"); env && *env) ctx.config.run_root = env;
    ctx.config.validate();
    ctx.root = ctx.config.run_root;

    const Stage& stage = table.at(stage_name);
    stage.check(ctx);
    if (dry_run) {
      std::cout << stage_name << ": dry run ok (config " << ctx.config.hash() << ", root " << ctx.root.string()
                << ")\n";
      return kExitOk;
    }
    RunLock lock(ctx.root);
    const std::string summary = stage.run(ctx);
    std::cout << stage_name << ": " << summary << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "sptok: " << stage_name << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "sptok: " << stage_name << ": " << e.what() << "\n";
    return kExitData;
  }
}
