#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sptok/lm/config.hpp"
#include "sptok/lm/sequence.hpp"
#include "sptok/numerics/param_store.hpp"

namespace sptok::lm {

// Low-rank delta (alpha / rank) * B * A on the weight named `target`,
// stored as lora.<target>.A (rank x d_in) and lora.<target>.B (d_out x rank).
struct LoraAdapter {
  std::string target;
  std::size_t rank = 8;
  double alpha = 16.0;

  double scale() const { return alpha / static_cast<double>(rank); }
  std::string a_name() const { return "lora." + target + ".A"; }
  std::string b_name() const { return "lora." + target + ".B"; }
};

struct AdapterSet {
  std::vector<LoraAdapter> adapters;

  const LoraAdapter* find(const std::string& target) const;
  bool empty() const { return adapters.empty(); }
};

// Pre-LN decoder with learned positions, GELU MLP and output logits tied
// to the token embeddings. Parameter names:
//   embed.text, embed.audio, embed.special, embed.pos,
//   block<i>.ln1.g/b, block<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo},
//   block<i>.ln2.g/b, block<i>.mlp.{w1,b1,w2,b2}, final.g/b,
//   head.weight/bias, proj.weight/bias.
// Dense weights are d_in x d_out (y = x W + b).
template <typename T>
BasicParamStore<T> init_params(const LmConfig& config);

// Sets config.audio_vocab and (re)creates embed.audio with rows at the mean
// text embedding plus N(0, noise_std) noise.
template <typename T>
void add_audio_embeddings(BasicParamStore<T>& params, LmConfig& config, std::size_t audio_vocab, std::uint64_t seed,
                          double noise_std = 0.02);

// Names of the query and value projections of every block.
std::vector<std::string> default_lora_targets(const LmConfig& config);

// A ~ N(0, 1/d_in), B = 0; both trainable.
template <typename T>
AdapterSet attach_lora(BasicParamStore<T>& params, const std::vector<std::string>& targets, std::size_t rank,
                       double alpha, std::uint64_t seed);

// Folds every adapter into its base weight and removes the adapter tensors.
template <typename T>
BasicParamStore<T> merge_lora(const BasicParamStore<T>& params, const AdapterSet& adapters);

template <typename T>
void attach_head(BasicParamStore<T>& params, const LmConfig& config, std::size_t num_classes, std::uint64_t seed);

// Affine map from a d_in continuous vector to one d_model soft token.
// identity_init requires d_in == d_model.
template <typename T>
void attach_projection(BasicParamStore<T>& params, const LmConfig& config, std::size_t d_in, std::uint64_t seed,
                       bool identity_init = false);

template <typename T>
std::vector<T> project_continuous_audio(std::span<const T> vector, const BasicParamStore<T>& params);

template <typename T>
struct ForwardResult {
  BasicTensor<T> hidden;  // n x d, after the final norm
  BasicTensor<T> logits;  // n x vocab
};

template <typename T>
ForwardResult<T> forward(const FusedSequence& seq, const BasicParamStore<T>& params, const LmConfig& config,
                         const AdapterSet& adapters = {});

enum class LossTarget { kAudio, kText };

// Mean next-token NLL over the batch's target positions: each audio (or
// text) token predicted from its prefix. With grads non-null, gradients
// for every trainable parameter are accumulated into it.
template <typename T>
double next_token_loss(std::span<const FusedSequence> batch, const BasicParamStore<T>& params, const LmConfig& config,
                       const AdapterSet& adapters, LossTarget target, GradMap<T>* grads = nullptr);

template <typename T>
double clm_loss(std::span<const FusedSequence> batch, const BasicParamStore<T>& params, const LmConfig& config,
                const AdapterSet& adapters = {}, GradMap<T>* grads = nullptr) {
  return next_token_loss(batch, params, config, adapters, LossTarget::kAudio, grads);
}

// Class probabilities from the head applied to the final-position hidden
// state (the CLS slot).
template <typename T>
std::vector<double> classify(const FusedSequence& seq, const BasicParamStore<T>& params, const LmConfig& config,
                             const AdapterSet& adapters = {});

// Mean classification cross-entropy; every sequence needs a label.
template <typename T>
double classification_loss(std::span<const FusedSequence> batch, const BasicParamStore<T>& params,
                           const LmConfig& config, const AdapterSet& adapters = {}, GradMap<T>* grads = nullptr);

}  // namespace sptok::lm
