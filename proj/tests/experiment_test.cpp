#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "sptok/error.hpp"
#include "sptok/experiment/experiment.hpp"
#include "sptok/io/hash.hpp"

namespace sptok::experiment {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

TEST(BagPredict, AveragesThenTakesArgmax) {
  const std::vector<ProbMatrix> members{{{0.6, 0.4}}, {{0.2, 0.8}}};
  const auto bag = bag_predict(members);
  ASSERT_EQ(bag.labels.size(), 1u);
  EXPECT_EQ(bag.labels[0], 1);
  EXPECT_NEAR(bag.probs[0][0], 0.4, 1e-15);
  EXPECT_NEAR(bag.probs[0][1], 0.6, 1e-15);
}

TEST(BagPredict, TiesGoToLowestClass) {
  const std::vector<ProbMatrix> members{{{0.7, 0.3}}, {{0.3, 0.7}}};
  EXPECT_EQ(bag_predict(members).labels[0], 0);
}

TEST(BagPredict, IdenticalMembersReproduceTheSingleModelExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbMatrix single(50, std::vector<double>(6));
  for (auto& row : single) {
    double z = 0;
    for (double& v : row) z += v = u(rng);
    for (double& v : row) v /= z;
  }
  const std::vector<ProbMatrix> members(5, single);
  const auto bag = bag_predict(members);
  EXPECT_EQ(bag.probs, single);
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_EQ(bag.labels[i], std::max_element(single[i].begin(), single[i].end()) - single[i].begin());
  }
}

TEST(BagPredict, InvariantToMemberOrder) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ProbMatrix> members(5, ProbMatrix(20, std::vector<double>(3)));
  for (auto& m : members) {
    for (auto& row : m) {
      double z = 0;
      for (double& v : row) z += v = u(rng);
      for (double& v : row) v /= z;
    }
  }
  const auto reference = bag_predict(members);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto bag = bag_predict(members);
    EXPECT_EQ(bag.probs, reference.probs);
    EXPECT_EQ(bag.labels, reference.labels);
  }
}

TEST(BagPredict, RejectsMismatchedMembers) {
  const std::vector<ProbMatrix> heads{{{0.5, 0.5}}, {{0.2, 0.3, 0.5}}};
  try {
    bag_predict(heads);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHeterogeneousHeads);
  }
  const std::vector<ProbMatrix> lengths{{{0.5, 0.5}}, {{0.5, 0.5}, {0.1, 0.9}}};
  try {
    bag_predict(lengths);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
  EXPECT_THROW(bag_predict(std::vector<ProbMatrix>{}), Error);
}

TEST(AblationGrid, HasTheSevenRowsInOrder) {
  RunSpec base;
  base.seeds = {3, 4};
  const auto grid = ablation_grid(base);
  ASSERT_EQ(grid.size(), 7u);
  EXPECT_EQ(grid[0].modality, Modality::kText);
  EXPECT_FALSE(grid[0].selection.has_value());
  const bool expected[6][3] = {{false, true, false}, {false, true, true}, {true, false, false},
                               {true, false, true},  {true, true, false}, {true, true, true}};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& row = grid[i + 1];
    EXPECT_EQ(row.modality, Modality::kTextAudio);
    EXPECT_EQ(row.audio_pretrain, expected[i][0]);
    EXPECT_EQ(row.semantic_filter, expected[i][1]);
    EXPECT_EQ(row.selection, expected[i][2] ? selection::Method::kLasso : selection::Method::kRandom);
    EXPECT_EQ(row.seeds, base.seeds);
  }
  for (const auto& row : grid) EXPECT_NO_THROW(row.validate());
}

TEST(RunSpec, ValidationAndJson) {
  RunSpec s;
  s.seeds = {1, 1};
  EXPECT_THROW(s.validate(), Error);
  s.seeds = {};
  EXPECT_THROW(s.validate(), Error);
  s.seeds = {1};
  s.modality = Modality::kText;
  EXPECT_THROW(s.validate(), Error);  // text-only with a selection
  s.selection.reset();
  s.audio_pretrain = false;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(RunSpec::from_json(s.to_json()).to_json(), s.to_json());
  EXPECT_EQ(s.label(), "text-only");
}

TEST(PipelineConfig, StrictParsing) {
  const PipelineConfig defaults;
  const json j = defaults.to_json();
  EXPECT_EQ(PipelineConfig::from_json(j).to_json(), j);

  auto expect_invalid = [](const json& doc) {
    try {
      PipelineConfig::from_json(doc);
      FAIL() << doc.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    }
  };
  json missing_version = j;
  missing_version.erase("version");
  expect_invalid(missing_version);
  json unknown_section = j;
  unknown_section["extras"] = 1;
  expect_invalid(unknown_section);
  json unknown_key = j;
  unknown_key["stage3"]["dropout"] = 0.1;
  expect_invalid(unknown_key);
  json runtime_key = j;
  runtime_key["lm"]["text_vocab"] = 10;
  expect_invalid(runtime_key);
  json bad_type = j;
  bad_type["selection"]["target_acoustic"] = "many";
  expect_invalid(bad_type);
  json bad_version = j;
  bad_version["version"] = 99;
  expect_invalid(bad_version);
  // Sections may be partial.
  EXPECT_EQ(PipelineConfig::from_json({{"version", 1}, {"stage3", {{"lr", 0.5}}}}).stage3.lr, 0.5);
}

TEST(PipelineConfig, OverridesAndHash) {
  PipelineConfig c;
  const std::string h0 = c.hash();
  c.apply_override("stage3.lr=0.25");
  EXPECT_EQ(c.stage3.lr, 0.25);
  c.apply_override("experiment.modality=text");
  EXPECT_EQ(c.experiment.modality, Modality::kText);
  c.apply_override("experiment.seeds=[7,8]");
  EXPECT_EQ(c.experiment.seeds, (std::vector<std::uint64_t>{7, 8}));
  EXPECT_NE(c.hash(), h0);
  EXPECT_THROW(c.apply_override("stage3.nope=1"), Error);
  EXPECT_THROW(c.apply_override("stage3.lr"), Error);
  EXPECT_THROW(c.apply_override("experiment.seeds=[1,1]"), Error);
  EXPECT_EQ(c.stage3.lr, 0.25);  // failed overrides leave the config unchanged
}

// Small enough to run every stage in a few seconds.
PipelineConfig tiny_config() {
  PipelineConfig c;
  c.corpus.synthetic.samples = 240;
  c.corpus.synthetic.positive_prior = 0.4;
  c.corpus.synthetic.emission = 0.6;
  c.corpus.synthetic.seed = 11;
  c.selection.target_acoustic = 20;
  c.selection.target_all_layers = 20;
  c.selection.tolerance = 0.5;
  c.lm.d_model = 16;
  c.lm.n_layers = 1;
  c.lm.n_heads = 2;
  c.lm.context = 96;
  c.lm.mlp_ratio = 2;
  c.stage0.epochs = 1;
  c.stage2.max_steps = 10;
  c.stage2.eval_every = 5;
  c.stage3.epochs = 2;
  c.stage3.lora_rank = 2;
  c.stage3.lora_alpha = 4;
  c.experiment.seeds = {0, 1};
  return c;
}

class PipelineRun : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("sptok_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  static std::map<std::string, std::uint64_t> artifact_hashes(const fs::path& dir) {
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::file_hash(e.path());
    }
    return out;
  }

  fs::path root_;
};

TEST_F(PipelineRun, RerunsProduceIdenticalArtifacts) {
  const PipelineConfig config = tiny_config();
  const auto corpus = corpus::synth_generate(config.corpus.synthetic);
  const RunSpec spec = RunSpec::from_config(config);
  Pipeline first(config, corpus, root_ / "a");
  const RunSummary s1 = first.run_seeded(spec);
  Pipeline second(config, corpus, root_ / "b");
  const RunSummary s2 = second.run_seeded(spec);
  EXPECT_EQ(first.spec_hash(spec), second.spec_hash(spec));
  const auto h1 = artifact_hashes(first.run_dir(spec));
  EXPECT_EQ(h1, artifact_hashes(second.run_dir(spec)));
  EXPECT_TRUE(h1.contains("0/checkpoint.sptk"));
  EXPECT_TRUE(h1.contains("1/predictions.json"));
  EXPECT_EQ(s1.to_json(), s2.to_json());
  EXPECT_EQ(s1.values.size(), 2u);

  // Re-evaluating a stored checkpoint rewrites byte-identical outputs.
  first.evaluate_seed(spec, 0);
  EXPECT_EQ(artifact_hashes(first.run_dir(spec)), h1);
  EXPECT_EQ(summarize_run(first.run_dir(spec)).to_json(), s1.to_json());
}

TEST_F(PipelineRun, SingleSeedHasZeroStdevAndBagEqualsSeed) {
  PipelineConfig config = tiny_config();
  config.experiment.seeds = {3};
  config.experiment.modality = Modality::kText;
  config.experiment.audio_pretrain = false;
  Pipeline pipeline(config, corpus::synth_generate(config.corpus.synthetic), root_);
  RunSpec spec = RunSpec::from_config(config);
  const RunSummary s = pipeline.run_seeded(spec);
  EXPECT_EQ(s.stdev, 0.0);
  EXPECT_EQ(s.bagged, s.mean);
}

TEST_F(PipelineRun, StrictModeReportsMissingArtifacts) {
  const PipelineConfig config = tiny_config();
  Pipeline pipeline(config, corpus::synth_generate(config.corpus.synthetic), root_);
  pipeline.set_require_artifacts(true);
  const RunSpec spec = RunSpec::from_config(config);
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code_of([&] { pipeline.pretrain_seed(spec, 0); }), ErrorCode::kMissingPrerequisite);
  EXPECT_EQ(code_of([&] { pipeline.run_seed(spec, 0); }), ErrorCode::kMissingPrerequisite);
  EXPECT_EQ(code_of([&] { pipeline.evaluate_seed(spec, 0); }), ErrorCode::kMissingPrerequisite);

  pipeline.set_require_artifacts(false);
  pipeline.select(spec, 0);
  pipeline.text_backbone(0);
  pipeline.set_require_artifacts(true);
  EXPECT_EQ(code_of([&] { pipeline.run_seed(spec, 0); }), ErrorCode::kMissingPrerequisite);
  const auto ckpt = pipeline.pretrain_seed(spec, 0);
  EXPECT_EQ(ckpt.params.trainable_count(), 0u);
  EXPECT_NO_THROW(pipeline.run_seed(spec, 0));
}

TEST_F(PipelineRun, ContinuousBaselineRuns) {
  PipelineConfig config = tiny_config();
  config.experiment.seeds = {0};
  config.experiment.modality = Modality::kContinuous;
  config.experiment.audio_pretrain = false;
  Pipeline pipeline(config, corpus::synth_generate(config.corpus.synthetic), root_);
  RunSpec spec = RunSpec::from_config(config);
  const auto result = pipeline.run_seed(spec, 0);
  EXPECT_GE(result.metric, 0.0);
  EXPECT_LE(result.metric, 1.0);
  EXPECT_EQ(result.selected_count, 0u);
}

TEST(AblationReport, MarkdownLayout) {
  AblationReport report;
  RunSummary text;
  text.spec.modality = Modality::kText;
  text.spec.selection.reset();
  text.spec.audio_pretrain = false;
  text.values = {0.5, 0.7};
  text.mean = 0.6;
  text.stdev = 0.1414;
  text.bagged = 0.65;
  RunSummary best;
  best.values = {0.9};
  best.mean = 0.9;
  best.bagged = 0.9;
  report.rows = {text, best};
  const std::string md = report.to_markdown();
  EXPECT_NE(md.find("| Audio PT | Filtering Semantic | l1 |"), std::string::npos);
  EXPECT_NE(md.find("| - | - | - |"), std::string::npos);
  EXPECT_NE(md.find("| yes | yes | yes |"), std::string::npos);
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 4);
}

}  // namespace
}  // namespace sptok::experiment
