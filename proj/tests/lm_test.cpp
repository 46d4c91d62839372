#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sptok/error.hpp"
#include "sptok/lm/model.hpp"
#include "sptok/numerics/grad_check.hpp"
#include "sptok/numerics/rng.hpp"

namespace sptok::lm {
namespace {

LmConfig tiny_config(std::size_t d = 32, std::size_t layers = 2) {
  LmConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = 4;
  c.context = 24;
  c.mlp_ratio = 2;
  c.text_vocab = 20;
  c.audio_vocab = 10;
  c.seed = 7;
  c.init_std = 0.3;
  return c;
}

std::vector<FusedSequence> tiny_batch(const LmConfig& c) {
  return {
      build_fused_sequence(std::vector<std::int32_t>{1, 5, 9}, std::vector<std::int32_t>{0, 3, 3, 7}, c, 1),
      build_fused_sequence(std::vector<std::int32_t>{2}, std::vector<std::int32_t>{9}, c, 0),
      build_fused_sequence(std::vector<std::int32_t>{4, 4, 11, 19, 0}, std::vector<std::int32_t>{5, 1}, c, 1),
  };
}

// Puts a random non-zero B in every adapter so that dA is exercised.
template <typename T>
void randomize_lora_b(BasicParamStore<T>& p, const AdapterSet& set, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& ad : set.adapters) fill_normal(p.mutable_value(ad.b_name()), rng, 0.3);
}

TEST(FusedSequenceLayout, TextSepAudioCls) {
  LmConfig c = tiny_config();
  const auto seq = build_fused_sequence(std::vector<std::int32_t>{3, 4}, std::vector<std::int32_t>{7}, c);
  const std::vector<std::int32_t> want{3, 4, c.sep_id(), c.audio_base() + 7, c.cls_id()};
  EXPECT_EQ(seq.ids, want);
  EXPECT_EQ(seq.kinds, (std::vector<PositionKind>{PositionKind::kText, PositionKind::kText, PositionKind::kSep,
                                                  PositionKind::kAudio, PositionKind::kCls}));
  EXPECT_EQ(seq.text_length(), 2u);
  EXPECT_EQ(seq.audio_length(), 1u);
}

TEST(FusedSequenceLayout, EmptyAudio) {
  LmConfig c = tiny_config();
  const auto seq = build_fused_sequence(std::vector<std::int32_t>{3, 4}, {}, c);
  EXPECT_EQ(seq.ids, (std::vector<std::int32_t>{3, 4, c.sep_id(), c.cls_id()}));
}

TEST(FusedSequenceLayout, TruncatesAudioThenText) {
  LmConfig c = tiny_config();
  c.context = 8;
  std::vector<std::int32_t> text{1, 2, 3}, audio{0, 1, 2, 3, 4, 5};
  auto seq = build_fused_sequence(text, audio, c);
  EXPECT_EQ(seq.size(), 8u);
  EXPECT_EQ(seq.text_length(), 3u);
  EXPECT_EQ(seq.audio_length(), 3u);
  EXPECT_EQ(seq.ids[4], c.audio_base() + 0);
  EXPECT_EQ(seq.ids[6], c.audio_base() + 2);

  std::vector<std::int32_t> long_text(10, 1);
  seq = build_fused_sequence(long_text, audio, c);
  EXPECT_EQ(seq.size(), 8u);
  EXPECT_EQ(seq.text_length(), 6u);
  EXPECT_EQ(seq.audio_length(), 0u);
  EXPECT_EQ(seq.ids.back(), c.cls_id());
}

TEST(FusedSequenceLayout, Errors) {
  LmConfig c = tiny_config();
  EXPECT_THROW(build_fused_sequence({}, std::vector<std::int32_t>{1}, c), Error);
  try {
    build_fused_sequence({}, {}, c);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyText);
  }
  EXPECT_THROW(build_fused_sequence(std::vector<std::int32_t>{1}, std::vector<std::int32_t>{10}, c), Error);
}

TEST(AudioIndexMap, MapsAndDrops) {
  AudioIndex idx({5, 70, 300});
  EXPECT_EQ(idx.map(std::vector<std::int32_t>{300, 4, 5, 5, 71, 70}), (std::vector<std::int32_t>{2, 0, 0, 1}));
  EXPECT_FALSE(idx.index_of(6).has_value());
  EXPECT_THROW(AudioIndex({3, 1}), Error);
}

TEST(LmConfigJson, RoundTripAndUnknownKeys) {
  LmConfig c = tiny_config();
  const auto j = c.to_json();
  const LmConfig back = LmConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  auto bad = j;
  bad["dropout"] = 0.1;
  EXPECT_THROW(LmConfig::from_json(bad), Error);
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Forward, ShapesAndContextOverflow) {
  LmConfig c = tiny_config();
  const auto p = init_params<float>(c);
  const auto seq = tiny_batch(c)[0];
  const auto out = forward(seq, p, c);
  EXPECT_EQ(out.logits.shape(), (std::vector<std::size_t>{seq.size(), c.vocab_size()}));
  EXPECT_EQ(out.hidden.shape(), (std::vector<std::size_t>{seq.size(), c.d_model}));
  EXPECT_TRUE(out.logits.all_finite());

  FusedSequence longer = seq;
  longer.ids.assign(c.context + 1, 1);
  longer.kinds.assign(c.context + 1, PositionKind::kText);
  try {
    forward(longer, p, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContextOverflow);
  }
}

TEST(Forward, CausalMaskBitExact) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  AdapterSet none;
  auto with_lora = p;
  AdapterSet set = attach_lora(with_lora, default_lora_targets(c), 4, 8.0, 3);
  randomize_lora_b(with_lora, set, 11);

  const auto base = tiny_batch(c)[2];
  for (const auto& [params, adapters] : {std::pair{&p, &none}, std::pair{&with_lora, &set}}) {
    const auto ref = forward(base, *params, c, *adapters);
    for (std::size_t t = 0; t + 1 < base.size(); ++t) {
      FusedSequence changed = base;
      changed.ids[t + 1] = (changed.ids[t + 1] + 1) % static_cast<std::int32_t>(c.vocab_size());
      const auto out = forward(changed, *params, c, *adapters);
      for (std::size_t r = 0; r <= t; ++r) {
        for (std::size_t j = 0; j < c.vocab_size(); ++j) ASSERT_EQ(out.logits(r, j), ref.logits(r, j)) << t << " " << r;
      }
      bool later_changed = false;
      for (std::size_t j = 0; j < c.vocab_size(); ++j) later_changed |= out.logits(t + 1, j) != ref.logits(t + 1, j);
      EXPECT_TRUE(later_changed);
    }
  }
}

TEST(Forward, IdenticalSequencesGiveIdenticalRows) {
  LmConfig c = tiny_config();
  const auto p = init_params<float>(c);
  const auto seq = tiny_batch(c)[0];
  const auto a = forward(seq, p, c);
  const auto b = forward(seq, p, c);
  EXPECT_EQ(a.logits, b.logits);
  const std::vector<FusedSequence> twice{seq, seq};
  const std::vector<FusedSequence> once{seq};
  EXPECT_EQ(clm_loss<float>(twice, p, c), clm_loss<float>(once, p, c));
}

TEST(Forward, FloatTracksDouble) {
  LmConfig c = tiny_config();
  const auto p64 = init_params<double>(c);
  const auto p32 = p64.cast<float>();
  const auto seq = tiny_batch(c)[0];
  const auto a = forward(seq, p64, c);
  const auto b = forward(seq, p32, c);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-4);
}

TEST(ClmLoss, ZeroedOutputNormGivesLogVocab) {
  LmConfig c = tiny_config();
  auto p = init_params<double>(c);
  p.mutable_value("final.g").fill(0.0);
  p.mutable_value("final.b").fill(0.0);
  const auto batch = tiny_batch(c);
  EXPECT_NEAR(clm_loss<double>(batch, p, c), std::log(static_cast<double>(c.vocab_size())), 1e-12);
}

// Manual NLL over forward logits at the rows preceding audio tokens.
double manual_audio_nll(const std::vector<FusedSequence>& batch, const ParamStore64& p, const LmConfig& c) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& seq : batch) {
    const auto out = forward(seq, p, c);
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      if (seq.kinds[t + 1] != PositionKind::kAudio) continue;
      double mx = -1e300;
      for (std::size_t j = 0; j < c.vocab_size(); ++j) mx = std::max(mx, out.logits(t, j));
      double s = 0;
      for (std::size_t j = 0; j < c.vocab_size(); ++j) s += std::exp(out.logits(t, j) - mx);
      total += mx + std::log(s) - out.logits(t, static_cast<std::size_t>(seq.ids[t + 1]));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

TEST(ClmLoss, MatchesManualAudioOnlyNll) {
  LmConfig c = tiny_config();
  const auto p = init_params<double>(c);
  const auto batch = tiny_batch(c);
  EXPECT_NEAR(clm_loss<double>(batch, p, c), manual_audio_nll(batch, p, c), 1e-12);

  const std::vector<FusedSequence> single{
      build_fused_sequence(std::vector<std::int32_t>{3, 8}, std::vector<std::int32_t>{6}, c)};
  EXPECT_NEAR(clm_loss<double>(single, p, c), manual_audio_nll(single, p, c), 1e-12);
}

TEST(ClmLoss, IgnoresNonAudioTargets) {
  LmConfig c = tiny_config();
  const auto p = init_params<double>(c);
  const auto seq = tiny_batch(c)[0];
  const double audio = clm_loss<double>(std::vector<FusedSequence>{seq}, p, c);

  // CLS is a prediction target only for the last audio row, which the mask
  // drops; replacing it must leave the loss bit-identical.
  FusedSequence cls_changed = seq;
  cls_changed.ids.back() = c.pad_id();
  EXPECT_EQ(clm_loss<double>(std::vector<FusedSequence>{cls_changed}, p, c), audio);
  EXPECT_NE(next_token_loss<double>(std::vector<FusedSequence>{seq}, p, c, {}, LossTarget::kText), audio);
}

TEST(ClmLoss, NoAudioPositions) {
  LmConfig c = tiny_config();
  const auto p = init_params<float>(c);
  const std::vector<FusedSequence> batch{build_fused_sequence(std::vector<std::int32_t>{1, 2}, {}, c)};
  try {
    clm_loss<float>(batch, p, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoAudioPositions);
  }
}

TEST(GradCheck, AudioEmbeddingPretrainingLoss) {
  LmConfig c = tiny_config(32, 2);
  auto p = init_params<double>(c);
  p.freeze_all();
  p.set_trainable("embed.audio", true);
  const auto batch = tiny_batch(c);
  const auto r = grad_check(
      [&](const ParamStore64& params, GradMap<double>* g) { return clm_loss<double>(batch, params, c, {}, g); }, p,
      1e-5);
  EXPECT_EQ(r.checked, c.audio_vocab * c.d_model);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs "
                                   << r.worst_numeric;
}

TEST(GradCheck, LoraAndHeadClassificationLoss) {
  LmConfig c = tiny_config(32, 2);
  auto p = init_params<double>(c);
  p.freeze_all();
  AdapterSet set = attach_lora(p, default_lora_targets(c), 4, 8.0, 5);
  randomize_lora_b(p, set, 13);
  attach_head(p, c, 2, 9);
  const auto batch = tiny_batch(c);
  const auto r = grad_check(
      [&](const ParamStore64& params, GradMap<double>* g) { return classification_loss<double>(batch, params, c, set, g); },
      p, 1e-5);
  EXPECT_EQ(r.checked, 2 * 2 * 4 * (32 + 32) + 2 * 32 + 2);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs "
                                   << r.worst_numeric;
}

TEST(GradCheck, EveryParameterOfSmallModel) {
  LmConfig c = tiny_config(8, 1);
  c.n_heads = 2;
  c.text_vocab = 6;
  c.audio_vocab = 4;
  auto p = init_params<double>(c);
  AdapterSet set = attach_lora(p, {"block0.attn.wq", "block0.mlp.w2"}, 2, 4.0, 5);
  randomize_lora_b(p, set, 17);
  attach_head(p, c, 3, 9);
  attach_projection(p, c, 5, 4);
  std::vector<FusedSequence> batch{
      build_fused_sequence(std::vector<std::int32_t>{1, 5}, std::vector<std::int32_t>{0, 3, 2}, c, 2),
      build_soft_sequence(std::vector<std::int32_t>{2, 3}, std::vector<float>{0.5f, -1.0f, 0.25f, 2.0f, 0.0f}, c, 1),
  };
  batch[1].ids.insert(batch[1].ids.end() - 1, c.audio_base() + 1);
  batch[1].kinds.insert(batch[1].kinds.end() - 1, PositionKind::kAudio);
  const auto loss = [&](const ParamStore64& params, GradMap<double>* g) {
    return classification_loss<double>(batch, params, c, set, g) +
           next_token_loss<double>(batch, params, c, set, LossTarget::kText, g) +
           clm_loss<double>(batch, params, c, set, g);
  };
  const auto r = grad_check(loss, p, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs "
                                   << r.worst_numeric;
}

TEST(Lora, ZeroBReproducesBaseExactly) {
  LmConfig c = tiny_config();
  const auto base = init_params<float>(c);
  auto adapted = base;
  const AdapterSet set = attach_lora(adapted, default_lora_targets(c), 8, 16.0, 1);
  for (const auto& seq : tiny_batch(c)) EXPECT_EQ(forward(seq, adapted, c, set).logits, forward(seq, base, c).logits);
}

TEST(Lora, ParameterCountPerTarget) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  const std::size_t before = std::accumulate(p.entries().begin(), p.entries().end(), std::size_t{0},
                                             [](std::size_t s, const auto& e) { return s + e.second.value.size(); });
  const auto set = attach_lora(p, {"block1.mlp.w1"}, 3, 6.0, 1);
  const std::size_t after = std::accumulate(p.entries().begin(), p.entries().end(), std::size_t{0},
                                            [](std::size_t s, const auto& e) { return s + e.second.value.size(); });
  EXPECT_EQ(after - before, 3 * (c.d_model + c.mlp_dim()));
  EXPECT_EQ(set.adapters.at(0).scale(), 2.0);
  EXPECT_EQ(default_lora_targets(c).size(), 2 * c.n_layers);
}

TEST(Lora, MergeMatchesAdapterForward) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  const AdapterSet set = attach_lora(p, default_lora_targets(c), 4, 8.0, 2);
  randomize_lora_b(p, set, 21);
  const auto merged = merge_lora(p, set);
  EXPECT_FALSE(merged.contains(set.adapters[0].a_name()));
  for (const auto& seq : tiny_batch(c)) {
    const auto a = forward(seq, p, c, set);
    const auto b = forward(seq, merged, c);
    for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-5);
  }
}

TEST(Lora, UnknownTarget) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  try {
    attach_lora(p, {"block9.attn.wq"}, 4, 8.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownTarget);
  }
}

TEST(Classify, ValidDistributionForBothTasks) {
  LmConfig c = tiny_config();
  for (std::size_t classes : {2u, 6u}) {
    auto p = init_params<float>(c);
    attach_head(p, c, classes, 3);
    for (const auto& seq : tiny_batch(c)) {
      const auto probs = classify(seq, p, c);
      ASSERT_EQ(probs.size(), classes);
      double sum = 0;
      for (double q : probs) {
        EXPECT_GE(q, 0.0);
        sum += q;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Classify, ZeroHeadIsUniformAndMissingHeadThrows) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  const auto seq = tiny_batch(c)[1];
  try {
    classify(seq, p, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingHead);
  }
  attach_head(p, c, 6, 3);
  p.mutable_value("head.weight").fill(0.0f);
  for (double q : classify(seq, p, c)) EXPECT_NEAR(q, 1.0 / 6.0, 1e-7);
  EXPECT_THROW(attach_head(p, c, 1, 3), Error);
}

TEST(Classify, ReadsTheFinalPosition) {
  // Changing only the CLS-preceding context must move the probabilities;
  // with empty audio the CLS slot still exists.
  LmConfig c = tiny_config();
  auto p = init_params<double>(c);
  attach_head(p, c, 2, 3);
  const auto a = classify(build_fused_sequence(std::vector<std::int32_t>{1, 2}, {}, c), p, c);
  const auto b = classify(build_fused_sequence(std::vector<std::int32_t>{1, 3}, {}, c), p, c);
  EXPECT_NE(a[0], b[0]);
}

TEST(Projection, AffineMapProperties) {
  LmConfig c = tiny_config();
  auto p = init_params<double>(c);
  attach_projection(p, c, 12, 5);
  Rng rng(4);
  fill_normal(p.mutable_value("proj.bias"), rng, 1.0);
  const std::vector<double> zero(12, 0.0);
  const auto out = project_continuous_audio<double>(zero, p);
  ASSERT_EQ(out.size(), c.d_model);
  for (std::size_t i = 0; i < c.d_model; ++i) EXPECT_EQ(out[i], p.get("proj.bias")[i]);
  try {
    project_continuous_audio<double>(std::vector<double>(11, 1.0), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }

  attach_projection(p, c, c.d_model, 5, true);
  fill_normal(p.mutable_value("proj.bias"), rng, 1.0);
  std::vector<double> v(c.d_model);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) - 1.0;
  const auto id = project_continuous_audio<double>(v, p);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(id[i], v[i] + p.get("proj.bias")[i]);
}

TEST(Projection, SoftSequenceUsesTheProjectedVector) {
  LmConfig c = tiny_config();
  auto p = init_params<float>(c);
  attach_projection(p, c, 4, 5);
  attach_head(p, c, 2, 3);
  const std::vector<std::int32_t> text{1, 2, 3};
  const auto s1 = build_soft_sequence(text, std::vector<float>{1, 0, 0, 0}, c);
  const auto s2 = build_soft_sequence(text, std::vector<float>{0, 1, 0, 0}, c);
  EXPECT_EQ(s1.kinds[4], PositionKind::kSoft);
  EXPECT_EQ(s1.size(), text.size() + 3);
  EXPECT_NE(classify(s1, p, c)[0], classify(s2, p, c)[0]);
}

TEST(AudioEmbeddings, RowsStartNearTheTextMean) {
  LmConfig c = tiny_config();
  c.audio_vocab = 0;
  auto p = init_params<double>(c);
  EXPECT_FALSE(p.contains("embed.audio"));
  add_audio_embeddings(p, c, 40, 3, 0.02);
  EXPECT_EQ(c.audio_vocab, 40u);
  EXPECT_FALSE(p.is_trainable("embed.audio"));
  const auto& text = p.get("embed.text");
  const auto& audio = p.get("embed.audio");
  ASSERT_EQ(audio.shape(), (std::vector<std::size_t>{40, c.d_model}));
  for (std::size_t j = 0; j < c.d_model; ++j) {
    double mean = 0;
    for (std::size_t r = 0; r < text.rows(); ++r) mean += text(r, j);
    mean /= static_cast<double>(text.rows());
    for (std::size_t r = 0; r < audio.rows(); ++r) EXPECT_NEAR(audio(r, j), mean, 0.02 * 5);
  }
}

}  // namespace
}  // namespace sptok::lm
