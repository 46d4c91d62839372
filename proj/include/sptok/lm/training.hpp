#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "sptok/lm/model.hpp"
#include "sptok/metrics/metrics.hpp"
#include "sptok/numerics/adamw.hpp"

namespace sptok::lm {

// JSON forms of the stage configs cover hyperparameters only; seeds and
// the metric are set by the caller per run.

// Text-only next-token training of every non-audio parameter; produces the
// backbone that later stages freeze.
struct TextPretrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TextPretrainConfig from_json(const nlohmann::json& j);
};

struct AudioPretrainConfig {
  std::size_t max_steps = 200;
  std::size_t batch_size = 16;
  std::size_t eval_every = 20;
  std::size_t patience = 3;  // evaluations without improvement
  double lr = 1e-2;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static AudioPretrainConfig from_json(const nlohmann::json& j);
};

struct FinetuneConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t patience = 3;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;
  metrics::MetricKind metric = metrics::MetricKind::kMacroF1;
  std::size_t positive_class = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static FinetuneConfig from_json(const nlohmann::json& j);
};

struct LossPoint {
  std::size_t step = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
};

struct PretrainReport {
  std::vector<LossPoint> curve;
  double initial_val_loss = 0;
  double best_val_loss = 0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  bool stopped_early = false;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_metric = 0;
};

struct FinetuneReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_metric = 0;

  nlohmann::json to_json() const;
};

PretrainReport pretrain_text(ParamStore& params, const LmConfig& config, std::span<const FusedSequence> train,
                             const TextPretrainConfig& options);

// Trains embed.audio only. Requires it to be the sole trainable tensor.
// Sequences without audio are skipped; the audio table is restored to the
// evaluation with the lowest held-out loss.
PretrainReport pretrain_audio_embeddings(ParamStore& params, const LmConfig& config,
                                         std::span<const FusedSequence> train, std::span<const FusedSequence> val,
                                         const AudioPretrainConfig& options);

// Trains adapters, head and (when trainable) the soft-token projection. On return `params` holds the epoch with
// the best validation metric (earliest on ties).
FinetuneReport finetune(ParamStore& params, const LmConfig& config, const AdapterSet& adapters,
                        std::span<const FusedSequence> train, std::span<const FusedSequence> val,
                        const FinetuneConfig& options);

std::vector<std::vector<double>> predict_proba(std::span<const FusedSequence> seqs, const ParamStore& params,
                                               const LmConfig& config, const AdapterSet& adapters);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> probs);

double evaluate_metric(std::span<const FusedSequence> seqs, const ParamStore& params, const LmConfig& config,
                       const AdapterSet& adapters, metrics::MetricKind metric, std::size_t positive_class = 1);

struct Checkpoint {
  LmConfig config;
  ParamStore params;
  AdapterSet adapters;
  nlohmann::json meta = nlohmann::json::object();
};

// Values, trainable flags, config, adapters and meta round-trip exactly;
// optimizer state is not stored.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sptok::lm
