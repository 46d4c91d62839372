// Acceptance harness: one PASS/FAIL line per criterion.
//
//   sptok_acceptance [--only 1,5,...] [--config configs/synthetic.json]
//                    [--work DIR] [--report FILE] [--lenient]
//
// Exits non-zero when any selected criterion fails unless --lenient.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "logreg_oracles.hpp"
#include "sptok/corpus/corpus.hpp"
#include "sptok/experiment/experiment.hpp"
#include "sptok/io/hash.hpp"
#include "sptok/log.hpp"
#include "sptok/logreg/lasso.hpp"
#include "sptok/lm/training.hpp"
#include "sptok/metrics/metrics.hpp"
#include "sptok/numerics/grad_check.hpp"
#include "sptok/numerics/rng.hpp"
#include "sptok/rvq/rvq.hpp"
#include "sptok/selection/selection.hpp"

namespace fs = std::filesystem;
using namespace sptok;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1. Lasso KKT oracle ---------------------------------------------------

Verdict lasso_kkt_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t converged = 0, kkt_ok = 0;
  double worst_kkt = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto dp = testing::make_dense_problem(200, 500, seed, 0.3, 1.0, 10);
    const double ratio = 0.05 + 0.45 * static_cast<double>(seed - 1) / 19.0;
    dp.problem.lambda = ratio * logreg::lambda_max(dp.problem);
    const auto m = logreg::fit(dp.problem);
    if (!m.converged) continue;
    ++converged;
    const double r = logreg::kkt_residual(m, dp.problem);
    worst_kkt = std::max(worst_kkt, r);
    kkt_ok += r <= 1e-6;
  }
  // Unpenalized fits against the Newton reference on full-rank problems.
  double worst_coef = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto dp = testing::make_dense_problem(200, 4, seed, 1.0, 0.7, 4);
    dp.problem.lambda = 0.0;
    const auto ref = testing::newton_logistic(dp.x, dp.y);
    const auto m = logreg::fit(dp.problem, logreg::FitOptions{.tol = 1e-12, .max_iter = 200000});
    worst_coef = std::max(worst_coef, std::abs(m.binomial_intercept() - ref[0]));
    const auto w = m.binomial_weights();
    for (std::size_t j = 0; j < w.size(); ++j) worst_coef = std::max(worst_coef, std::abs(w[j] - ref[j + 1]));
  }
  const double elapsed = seconds_since(t0);
  return {converged == 20 && kkt_ok == converged && worst_coef <= 1e-4 && elapsed < 60.0,
          format("%zu/20 converged, %zu within kkt 1e-6 (worst %.2e); lambda=0 vs Newton max |diff| %.2e; %.1f s",
                 converged, kkt_ok, worst_kkt, worst_coef, elapsed)};
}

// --- 2. Sparsity path and target-count bisection ---------------------------

struct TrainViews {
  std::vector<std::vector<std::int32_t>> text, audio;
  std::vector<int> labels;
};

TrainViews train_views(const corpus::Corpus& c, bool drop_semantic) {
  TrainViews v;
  for (const auto& r : c.records) {
    if (r.split != corpus::Split::kTrain) continue;
    v.text.push_back(r.text_tokens);
    v.audio.push_back(rvq::flatten_grid(drop_semantic ? rvq::drop_semantic_layer(*r.grid) : *r.grid));
    v.labels.push_back(r.label);
  }
  return v;
}

selection::BowMatrix views_bow(const corpus::Corpus& c, const TrainViews& v) {
  const std::size_t audio = c.metadata.at("audio").at("layers").get<std::size_t>() * c.metadata.at("audio").at("vocab").get<std::size_t>();
  return selection::build_bow(v.text, v.audio, selection::MultimodalVocab{c.text_vocab, audio});
}

Verdict sparsity_path_and_bisection() {
  const auto corpus = corpus::synth_generate(corpus::SyntheticSpec{});
  const auto views = train_views(corpus, true);
  const auto bow = views_bow(corpus, views);
  logreg::LassoProblem p{bow.counts, views.labels, 2, 0.0, {}};
  const double lmax = logreg::lambda_max(p);
  std::vector<double> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(lmax * std::pow(10.0, -2.5 * i / 19.0));
  const auto path = logreg::sparsity_path(p, grid, {.tol = 1e-8}, bow.audio_mask());
  std::size_t violations = 0;
  for (std::size_t i = 1; i < path.size(); ++i) violations += path[i].nnz < path[i - 1].nnz;

  bool counts_ok = true;
  std::string counts;
  for (std::size_t target : {10u, 73u, 80u}) {
    const auto s = selection::select_tokens_l1(bow, views.labels, 2, target);
    const bool ok = std::abs(static_cast<double>(s.size()) - static_cast<double>(target)) <= 0.1 * target;
    counts_ok &= ok;
    counts += format("%s%zu->%zu", counts.empty() ? "" : ", ", target, s.size());
  }
  return {violations == 0 && counts_ok,
          format("nnz path %zu..%zu over 20 lambdas, %zu violations; targets %s", path.front().nnz, path.back().nnz,
                 violations, counts.c_str())};
}

// --- 3. Planted-token recovery ----------------------------------------------

Verdict planted_recovery() {
  std::size_t good_seeds = 0;
  std::string hits_list;
  double random_hits = 0;
  std::size_t random_trials = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    corpus::SyntheticSpec spec;
    spec.layers = 5;
    spec.vocab = 100;
    spec.seed = seed;
    const auto corpus = corpus::synth_generate(spec);
    const auto views = train_views(corpus, true);
    const auto bow = views_bow(corpus, views);
    const auto planted = corpus.planted_ids();
    const auto s = selection::select_tokens_l1(bow, views.labels, 2, 10);
    std::size_t hits = 0;
    for (auto id : planted) hits += s.contains(id);
    good_seeds += hits >= 8;
    hits_list += format("%s%zu", hits_list.empty() ? "" : ",", hits);
    const auto observed = selection::observed_audio_ids(views.audio);
    for (std::uint64_t r = 0; r < 40; ++r) {
      const auto rs = selection::select_tokens_random(observed, 10, derive_seed(seed, "random-" + std::to_string(r)));
      for (auto id : planted) random_hits += rs.contains(id);
      ++random_trials;
    }
  }
  const double random_mean = random_hits / static_cast<double>(random_trials);
  return {good_seeds >= 4 && random_mean <= 3.0,
          format("lasso hits per seed [%s] (>=8 in %zu/5); random selection mean hits %.2f", hits_list.c_str(),
                 good_seeds, random_mean)};
}

// --- 4. RVQ residual monotonicity -------------------------------------------

rvq::FrameSeq random_frames(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  rvq::FrameSeq f;
  f.dim = dim;
  f.data.resize(n * dim);
  for (float& v : f.data) v = normal(rng);
  return f;
}

double decode_mse(const rvq::FrameSeq& frames, const rvq::CodebookSet& books) {
  const auto rec = rvq::decode(rvq::encode(frames, books), books);
  double total = 0;
  for (std::size_t i = 0; i < frames.data.size(); ++i) {
    const double d = frames.data[i] - rec.data[i];
    total += d * d;
  }
  return total / static_cast<double>(frames.data.size());
}

Verdict rvq_residuals() {
  const std::size_t dim = 16;
  rvq::CodebookOptions opt;
  opt.layers = 8;
  opt.vocab = 64;
  opt.epochs = 10;
  const auto books = rvq::train_codebooks(random_frames(8000, dim, 1), opt);
  const auto probe = random_frames(10000, dim, 2);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < probe.length(); ++t) {
    const auto f = probe.frame(t);
    double prev = 0;
    for (float v : f) prev += double(v) * v;
    for (const auto& r : rvq::residual_trace(f, books)) {
      double e = 0;
      for (float v : r) e += double(v) * v;
      violations += e > prev * (1 + 1e-6) + 1e-12;
      prev = e;
    }
  }

  rvq::Waveform one_second;
  one_second.samples.assign(16000, 0.0f);
  for (std::size_t i = 0; i < one_second.samples.size(); ++i) {
    one_second.samples[i] = 0.2f * static_cast<float>(std::sin(2.0 * M_PI * 440.0 * i / 16000.0));
  }
  const std::size_t frames = rvq::frame_features(one_second).length();

  rvq::CodebookOptions four = opt;
  four.layers = 4;
  const auto books4 = rvq::train_codebooks(random_frames(8000, dim, 3), four);
  rvq::CodebookSet books2 = books4;
  books2.layers = 2;
  books2.codewords.resize(2 * books4.vocab * dim);
  const auto held_out = random_frames(2000, dim, 4);
  const double mse2 = decode_mse(held_out, books2), mse4 = decode_mse(held_out, books4);
  return {violations == 0 && frames == 50 && mse4 <= mse2,
          format("%zu residual increases over 10000 frames x 8 layers; 1.0 s -> %zu frames; held-out MSE L=2 %.4f, "
                 "L=4 %.4f",
                 violations, frames, mse2, mse4)};
}

// --- 5-7. Model-level contracts ---------------------------------------------

lm::LmConfig small_lm(std::size_t text_vocab, std::size_t audio_vocab) {
  lm::LmConfig c;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 4;
  c.context = 64;
  c.mlp_ratio = 2;
  c.text_vocab = text_vocab;
  c.audio_vocab = audio_vocab;
  c.seed = 5;
  c.init_std = 0.3;
  return c;
}

std::vector<lm::FusedSequence> small_batch(const lm::LmConfig& c) {
  return {lm::build_fused_sequence(std::vector<std::int32_t>{1, 5, 9, 2}, std::vector<std::int32_t>{0, 3, 3, 7, 1}, c,
                                   1),
          lm::build_fused_sequence(std::vector<std::int32_t>{2}, std::vector<std::int32_t>{9, 4}, c, 0),
          lm::build_fused_sequence(std::vector<std::int32_t>{7, 7, 3}, std::vector<std::int32_t>{5, 6, 8, 0}, c, 1)};
}

Verdict gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = small_lm(20, 10);
  const auto batch = small_batch(c);

  auto stage2 = lm::init_params<double>(c);
  stage2.freeze_all();
  stage2.set_trainable("embed.audio", true);
  const auto r2 = grad_check(
      [&](const ParamStore64& p, GradMap<double>* g) { return lm::clm_loss<double>(batch, p, c, {}, g); }, stage2, 1e-5);

  auto stage3 = lm::init_params<double>(c);
  stage3.freeze_all();
  const auto adapters = lm::attach_lora(stage3, lm::default_lora_targets(c), 4, 8.0, 3);
  Rng rng(4);
  for (const auto& ad : adapters.adapters) fill_normal(stage3.mutable_value(ad.b_name()), rng, 0.3);
  lm::attach_head(stage3, c, 2, 6);
  const auto r3 = grad_check(
      [&](const ParamStore64& p, GradMap<double>* g) {
        return lm::classification_loss<double>(batch, p, c, adapters, g);
      },
      stage3, 1e-5);
  const double elapsed = seconds_since(t0);
  return {r2.max_rel_error <= 1e-4 && r3.max_rel_error <= 1e-4 && elapsed < 300.0,
          format("stage-2 audio embeddings max rel err %.2e over %zu entries; stage-3 LoRA+head %.2e over %zu; %.1f s",
                 r2.max_rel_error, r2.checked, r3.max_rel_error, r3.checked, elapsed)};
}

std::map<std::string, std::uint64_t> hashes_without(const ParamStore& p, const std::vector<std::string>& prefixes) {
  auto h = p.hashes();
  std::erase_if(h, [&](const auto& kv) {
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& pre) { return kv.first.rfind(pre, 0) == 0; });
  });
  return h;
}

Verdict freezing_contracts() {
  corpus::SyntheticSpec spec;
  spec.samples = 400;
  spec.positive_prior = 0.4;
  spec.seed = 8;
  const auto corpus = corpus::synth_generate(spec);
  std::vector<std::vector<std::int32_t>> audio;
  for (const auto& r : corpus.records) audio.push_back(rvq::flatten_grid(rvq::drop_semantic_layer(*r.grid)));
  const lm::AudioIndex index(selection::observed_audio_ids(audio));
  auto c = small_lm(corpus.text_vocab, index.size());
  c.init_std = 0.02;
  c.context = 128;
  std::vector<lm::FusedSequence> train, val;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    (r.split == corpus::Split::kTrain ? train : val)
        .push_back(lm::build_fused_sequence(r.text_tokens, index.map(audio[i]), c, r.label));
  }
  auto p = lm::init_params<float>(c);
  p.freeze_all();
  p.set_trainable("embed.audio", true);
  const auto before2 = hashes_without(p, {"embed.audio"});
  const auto audio_before = tensor_hash(p.get("embed.audio"));
  lm::AudioPretrainConfig a;
  a.max_steps = 60;
  a.eval_every = 20;
  lm::pretrain_audio_embeddings(p, c, train, val, a);
  const bool stage2_ok = hashes_without(p, {"embed.audio"}) == before2;
  const bool audio_moved = tensor_hash(p.get("embed.audio")) != audio_before;

  p.freeze_all();
  const auto adapters = lm::attach_lora(p, lm::default_lora_targets(c), 4, 8.0, 2);
  lm::attach_head(p, c, 2, 3);
  const auto before3 = hashes_without(p, {"lora.", "head."});
  const auto trainable_before = hashes_without(p, {"embed.", "block", "final.", "proj."});
  lm::FinetuneConfig f;
  f.epochs = 2;
  lm::finetune(p, c, adapters, train, val, f);
  const bool stage3_ok = hashes_without(p, {"lora.", "head."}) == before3;
  const bool adapters_moved = hashes_without(p, {"embed.", "block", "final.", "proj."}) != trainable_before;
  return {stage2_ok && stage3_ok && audio_moved && adapters_moved,
          format("stage 2: %zu frozen tensors %s, audio table %s; stage 3: %zu frozen tensors %s, adapters/head %s",
                 before2.size(), stage2_ok ? "bit-identical" : "CHANGED", audio_moved ? "updated" : "unchanged",
                 before3.size(), stage3_ok ? "bit-identical" : "CHANGED", adapters_moved ? "updated" : "unchanged")};
}

Verdict lora_identity() {
  auto c = small_lm(20, 10);
  c.init_std = 0.02;
  const auto batch = small_batch(c);
  const auto base = lm::init_params<float>(c);
  auto with = base;
  const auto adapters = lm::attach_lora(with, lm::default_lora_targets(c), 8, 16.0, 9);
  bool identical = true;
  for (const auto& s : batch) identical &= lm::forward(s, base, c).logits == lm::forward(s, with, c, adapters).logits;

  Rng rng(10);
  for (const auto& ad : adapters.adapters) fill_normal(with.mutable_value(ad.b_name()), rng, 0.05);
  const auto merged = lm::merge_lora(with, adapters);
  double worst = 0;
  for (const auto& s : batch) {
    const auto a = lm::forward(s, with, c, adapters).logits;
    const auto b = lm::forward(s, merged, c).logits;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  return {identical && worst <= 1e-5, format("B=0 logits %s base; merged vs adapter logits max |diff| %.2e",
                                             identical ? "bit-equal to" : "DIFFER from", worst)};
}

// --- 8, 9, 11. End-to-end ablation on the default planted corpus -----------

struct AblationRun {
  experiment::PipelineConfig config;
  fs::path root;
  experiment::AblationReport report;
  double seconds = 0;
};

struct Shared {
  fs::path config_path;
  fs::path work;
  std::optional<AblationRun> ablation;
};

const AblationRun& ablation(Shared& s) {
  if (!s.ablation) {
    AblationRun run;
    run.config = experiment::PipelineConfig::load(s.config_path);
    run.root = s.work / "ablation";
    fs::remove_all(run.root);
    const auto t0 = std::chrono::steady_clock::now();
    experiment::Pipeline pipeline(run.config, corpus::synth_generate(run.config.corpus.synthetic), run.root);
    run.report = experiment::run_ablation(pipeline, experiment::RunSpec::from_config(run.config));
    run.seconds = seconds_since(t0);
    std::cout << run.report.to_markdown() << std::flush;
    s.ablation = std::move(run);
  }
  return *s.ablation;
}

const experiment::RunSummary& best_row(const AblationRun& run) { return run.report.rows.back(); }

Verdict end_to_end_headroom(Shared& s) {
  const auto& run = ablation(s);
  const double text = run.report.rows.front().mean;
  const double best = best_row(run).mean;
  double worst_mm = 1.0;
  for (std::size_t i = 1; i < run.report.rows.size(); ++i) worst_mm = std::min(worst_mm, run.report.rows[i].mean);
  const bool pass = best - text >= 0.15 && worst_mm >= text - 0.02 && run.seconds < 1800.0;
  return {pass, format("text-only %.4f, best row %.4f (gap %+.4f, need >= 0.15); lowest multimodal row %.4f (need >= "
                       "%.4f); %zu seeds; %.0f s",
                       text, best, best - text, worst_mm, text - 0.02, best_row(run).values.size(), run.seconds)};
}

Verdict bagging(Shared& s) {
  const auto& run = ablation(s);
  const auto& best = best_row(run);
  const fs::path dir = run.root / best.hash / std::to_string(best.seeds.front());
  const auto predictions = nlohmann::json::parse(std::ifstream(dir / "predictions.json"));
  const auto single = predictions.at("probs").get<experiment::ProbMatrix>();
  const auto pred = predictions.at("pred").get<std::vector<int>>();
  const std::vector<experiment::ProbMatrix> copies(5, single);
  const auto bag = experiment::bag_predict(copies);
  const bool exact = bag.probs == single && bag.labels == pred;
  return {exact && best.bagged >= best.mean,
          format("5 identical members %s the single model; best row bagged %.4f vs mean %.4f", exact ? "reproduce" : "DIFFER from",
                 best.bagged, best.mean)};
}

std::map<std::string, std::uint64_t> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::file_hash(e.path());
  }
  return out;
}

Verdict determinism(Shared& s) {
  const auto& run = ablation(s);
  const auto& best = best_row(run);
  const std::uint64_t seed = best.seeds.front();
  const fs::path fresh = s.work / "rerun";
  fs::remove_all(fresh);
  experiment::Pipeline pipeline(run.config, corpus::synth_generate(run.config.corpus.synthetic), fresh);
  pipeline.run_seed(best.spec, seed);
  const auto a = tree_hashes(run.root / best.hash / std::to_string(seed));
  const auto b = tree_hashes(pipeline.run_dir(best.spec) / std::to_string(seed));
  std::size_t same = 0;
  for (const auto& [name, h] : a) same += b.contains(name) && b.at(name) == h;
  return {same == a.size() && a.size() == b.size() && !a.empty(),
          format("re-run of %s seed %llu: %zu/%zu artifacts hash-identical", best.spec.label().c_str(),
                 static_cast<unsigned long long>(seed), same, a.size())};
}

// --- 10. Metrics oracle -------------------------------------------------------

struct MetricCase {
  std::size_t classes;
  std::vector<std::uint64_t> counts;
  double macro;
  double positive;  // class 1
};

// Values computed offline with exact rational arithmetic via precision and
// recall.
const std::vector<MetricCase> kMetricCases = {
    {2, {50, 0, 12, 0}, 0.44642857142857145, 0},
    {2, {40, 5, 3, 12}, 0.82954545454545459, 0.75},
    {2, {0, 0, 0, 7}, 0.5, 1},
    {2, {10, 0, 0, 10}, 1, 1},
    {2, {1, 9, 9, 1}, 0.10000000000000001, 0.10000000000000001},
    {2, {2, 4, 1, 5}, 0.55555555555555558, 0.66666666666666663},
    {3, {9, 2, 0, 6, 6, 1, 1, 2, 5}, 0.63423050379572121, 0.52173913043478259},
    {6, {7, 9, 7, 6, 3, 3, 5, 5, 5, 6, 1, 8, 7, 6, 1, 3, 9, 3, 0, 3, 1, 1, 3, 4,
         4, 4, 4, 2, 9, 1, 0, 4, 3, 3, 9, 3},
     0.15877137685503995, 0.16393442622950818},
    {6, {0, 0, 9, 4, 4, 2, 5, 9, 7, 2, 4, 8, 6, 2, 2, 6, 1, 2, 9, 6, 5, 3, 1, 9,
         0, 8, 3, 6, 2, 2, 1, 1, 4, 0, 5, 6},
     0.14232640908292976, 0.29508196721311475},
    {6, {7, 8, 0, 2, 1, 7, 8, 5, 0, 1, 9, 1, 0, 0, 0, 0, 0, 0, 0, 3, 0, 8, 8, 0,
         2, 0, 0, 2, 4, 2, 6, 4, 0, 6, 1, 3},
     0.22737240829346092, 0.22727272727272727},
};

Verdict metrics_oracle() {
  double worst = 0;
  for (const auto& mc : kMetricCases) {
    metrics::ConfusionMatrix cm;
    cm.num_classes = mc.classes;
    cm.counts = mc.counts;
    worst = std::max(worst, std::abs(metrics::macro_f1(cm) - mc.macro));
    worst = std::max(worst, std::abs(metrics::positive_f1(cm, 1) - mc.positive));
  }
  const std::vector<int> gold{0, 1, 0, 0, 1, 0, 1, 0}, all_negative(8, 0);
  const double negative_only = metrics::positive_f1(metrics::confusion_matrix(gold, all_negative, 2), 1);
  return {worst <= 1e-12 && negative_only == 0.0,
          format("%zu matrices, max |diff| %.1e; all-negative predictor positive-F1 %.3f", kMetricCases.size(), worst,
                 negative_only)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  Shared shared;
  shared.config_path = fs::path(SPTOK_SOURCE_DIR) / "configs" / "synthetic.json";
  shared.work = fs::temp_directory_path() / ("sptok_acceptance_" + std::to_string(::getpid()));
  std::string report_path;
  bool lenient = false;
  bool keep = false;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--config", shared.config_path, "Pipeline config for the end-to-end criteria");
  app.add_option("--work", shared.work, "Scratch directory");
  app.add_option("--report", report_path, "Also write the verdict lines to this file");
  app.add_flag("--lenient", lenient, "Exit 0 even when criteria fail");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"lasso KKT oracle", lasso_kkt_oracle},
      {"sparsity path and target counts", sparsity_path_and_bisection},
      {"planted-token recovery", planted_recovery},
      {"RVQ residual monotonicity", rvq_residuals},
      {"gradient fidelity", gradient_fidelity},
      {"freezing contracts", freezing_contracts},
      {"LoRA identity", lora_identity},
      {"end-to-end headroom", [&] { return end_to_end_headroom(shared); }},
      {"bagging", [&] { return bagging(shared); }},
      {"metrics oracle", metrics_oracle},
      {"determinism", [&] { return determinism(shared); }},
  };

  std::vector<std::string> lines;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    lines.push_back(format("%s %2d %s: ", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str()) + v.detail);
    std::cout << lines.back() << std::endl;
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    for (const auto& l : lines) out << l << "\n";
  }
  if (!keep) fs::remove_all(shared.work);
  return failed == 0 || lenient ? 0 : 1;
}
