#include "sptok/lm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sptok/error.hpp"
#include "sptok/io/binary.hpp"
#include "sptok/log.hpp"
#include "sptok/numerics/rng.hpp"

namespace sptok::lm {

namespace {

// Copies known keys of `j` into `fields` (a json of defaults) and rejects the rest.
nlohmann::json merge_known(const nlohmann::json& defaults, const nlohmann::json& j, const char* section) {
  require(j.is_object(), ErrorCode::kInvalidConfig, std::string(section) + " must be an object");
  nlohmann::json out = defaults;
  for (const auto& [key, value] : j.items()) {
    require(defaults.contains(key), ErrorCode::kInvalidConfig,
            "unknown " + std::string(section) + " key '" + key + "'");
    require(value.type() == defaults[key].type() || (value.is_number() && defaults[key].is_number()),
            ErrorCode::kInvalidConfig, std::string(section) + "." + key + " has the wrong type");
    out[key] = value;
  }
  return out;
}

template <typename F>
auto config_guard(const char* section, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string(section) + ": " + e.what());
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<FusedSequence> gather(std::span<const FusedSequence> seqs, std::span<const std::size_t> idx) {
  std::vector<FusedSequence> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(seqs[i]);
  return out;
}

void require_finite(double loss, const char* stage) {
  require(std::isfinite(loss), ErrorCode::kNumericalFailure, std::string(stage) + ": non-finite loss");
}

std::vector<FusedSequence> with_audio(std::span<const FusedSequence> seqs) {
  std::vector<FusedSequence> out;
  for (const auto& s : seqs) {
    if (s.audio_length() > 0) out.push_back(s);
  }
  return out;
}

double mean_clm(std::span<const FusedSequence> seqs, const ParamStore& params, const LmConfig& config) {
  const double loss = clm_loss<float>(seqs, params, config);
  require_finite(loss, "audio pretraining");
  return loss;
}

}  // namespace

nlohmann::json TextPretrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr}, {"weight_decay", weight_decay}};
}

TextPretrainConfig TextPretrainConfig::from_json(const nlohmann::json& j) {
  return config_guard("stage0", [&] {
    const auto m = merge_known(TextPretrainConfig{}.to_json(), j, "stage0");
    TextPretrainConfig c;
    c.epochs = m["epochs"];
    c.batch_size = m["batch_size"];
    c.lr = m["lr"];
    c.weight_decay = m["weight_decay"];
    require(c.batch_size > 0, ErrorCode::kInvalidConfig, "stage0.batch_size must be positive");
    return c;
  });
}

nlohmann::json AudioPretrainConfig::to_json() const {
  return {{"max_steps", max_steps}, {"batch_size", batch_size},       {"eval_every", eval_every},
          {"patience", patience},   {"lr", lr},                       {"weight_decay", weight_decay}};
}

AudioPretrainConfig AudioPretrainConfig::from_json(const nlohmann::json& j) {
  return config_guard("stage2", [&] {
    const auto m = merge_known(AudioPretrainConfig{}.to_json(), j, "stage2");
    AudioPretrainConfig c;
    c.max_steps = m["max_steps"];
    c.batch_size = m["batch_size"];
    c.eval_every = m["eval_every"];
    c.patience = m["patience"];
    c.lr = m["lr"];
    c.weight_decay = m["weight_decay"];
    require(c.batch_size > 0 && c.eval_every > 0, ErrorCode::kInvalidConfig,
            "stage2.batch_size and stage2.eval_every must be positive");
    return c;
  });
}

nlohmann::json FinetuneConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"patience", patience},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"lora_rank", lora_rank},
          {"lora_alpha", lora_alpha}};
}

FinetuneConfig FinetuneConfig::from_json(const nlohmann::json& j) {
  return config_guard("stage3", [&] {
    const auto m = merge_known(FinetuneConfig{}.to_json(), j, "stage3");
    FinetuneConfig c;
    c.epochs = m["epochs"];
    c.batch_size = m["batch_size"];
    c.patience = m["patience"];
    c.lr = m["lr"];
    c.weight_decay = m["weight_decay"];
    c.lora_rank = m["lora_rank"];
    c.lora_alpha = m["lora_alpha"];
    require(c.batch_size > 0 && c.epochs > 0 && c.lora_rank > 0 && c.lora_alpha > 0, ErrorCode::kInvalidConfig,
            "stage3 epochs, batch_size, lora_rank and lora_alpha must be positive");
    return c;
  });
}

nlohmann::json PretrainReport::to_json() const {
  nlohmann::json curve_json = nlohmann::json::array();
  for (const auto& p : curve) {
    nlohmann::json point = {{"step", p.step}, {"train_loss", p.train_loss}};
    if (p.val_loss) point["val_loss"] = *p.val_loss;
    curve_json.push_back(point);
  }
  return {{"curve", curve_json},       {"initial_val_loss", initial_val_loss}, {"best_val_loss", best_val_loss},
          {"best_step", best_step},    {"steps", steps},                       {"stopped_early", stopped_early}};
}

nlohmann::json FinetuneReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_metric", e.val_metric}});
  }
  return {{"epochs", rows}, {"best_epoch", best_epoch}, {"best_val_metric", best_val_metric}};
}

PretrainReport pretrain_text(ParamStore& params, const LmConfig& config, std::span<const FusedSequence> train,
                             const TextPretrainConfig& options) {
  require(!train.empty(), ErrorCode::kEmptySplit, "text pretraining needs at least one sequence");
  for (const auto& name : params.names()) params.set_trainable(name, name != "embed.audio");
  Rng rng(derive_seed(options.seed, "stage0-order"));
  const AdamWConfig adam{options.lr, 0.9, 0.999, 1e-8, options.weight_decay};
  PretrainReport report;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = shuffled(train.size(), rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const auto batch = gather(train, std::span(order).subspan(start, end - start));
      GradMap<float> grads = zero_grads(params);
      const double loss = next_token_loss<float>(batch, params, config, {}, LossTarget::kText, &grads);
      require_finite(loss, "text pretraining");
      adamw_step(params, grads, adam);
      epoch_loss += loss;
      ++batches;
      ++step;
    }
    report.curve.push_back({step, epoch_loss / static_cast<double>(batches), std::nullopt});
    SPTOK_LOG_INFO("stage0 epoch %zu: text loss %.4f", epoch + 1, report.curve.back().train_loss);
  }
  report.steps = step;
  return report;
}

PretrainReport pretrain_audio_embeddings(ParamStore& params, const LmConfig& config,
                                         std::span<const FusedSequence> train, std::span<const FusedSequence> val,
                                         const AudioPretrainConfig& options) {
  const auto trainable = params.trainable_names();
  require(!trainable.empty() && params.contains("embed.audio") && params.is_trainable("embed.audio"),
          ErrorCode::kNoTrainableParams, "audio pretraining needs trainable audio embeddings");
  require(trainable.size() == 1, ErrorCode::kInvalidArgument,
          "audio pretraining requires every tensor other than embed.audio to be frozen");
  const auto train_audio = with_audio(train);
  const auto val_audio = with_audio(val);
  require(!train_audio.empty(), ErrorCode::kEmptySplit, "no training sequence carries audio tokens");
  if (train_audio.size() < train.size()) {
    SPTOK_LOG_INFO("stage2: %zu of %zu training sequences have no selected audio and are skipped",
                   train.size() - train_audio.size(), train.size());
  }
  const bool has_val = !val_audio.empty();
  if (!has_val) SPTOK_LOG_WARN("stage2: no held-out audio sequences; early stopping disabled");

  Rng rng(derive_seed(options.seed, "stage2-order"));
  const AdamWConfig adam{options.lr, 0.9, 0.999, 1e-8, options.weight_decay};
  PretrainReport report;
  report.initial_val_loss = has_val ? mean_clm(val_audio, params, config) : 0.0;
  report.best_val_loss = report.initial_val_loss;
  report.curve.push_back({0, mean_clm(train_audio, params, config), report.initial_val_loss});
  Tensor best = params.get("embed.audio");
  std::size_t since_best = 0;

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  double window_loss = 0;
  std::size_t window = 0;
  for (std::size_t step = 1; step <= options.max_steps; ++step) {
    std::vector<std::size_t> idx;
    while (idx.size() < std::min(options.batch_size, train_audio.size())) {
      if (cursor == order.size()) {
        order = shuffled(train_audio.size(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const auto batch = gather(train_audio, idx);
    GradMap<float> grads = zero_grads(params);
    const double loss = clm_loss<float>(batch, params, config, {}, &grads);
    require_finite(loss, "audio pretraining");
    adamw_step(params, grads, adam);
    window_loss += loss;
    ++window;
    report.steps = step;

    if (step % options.eval_every != 0 && step != options.max_steps) continue;
    LossPoint point{step, window_loss / static_cast<double>(window), std::nullopt};
    window_loss = 0;
    window = 0;
    if (has_val) {
      point.val_loss = mean_clm(val_audio, params, config);
      if (*point.val_loss < report.best_val_loss) {
        report.best_val_loss = *point.val_loss;
        report.best_step = step;
        best = params.get("embed.audio");
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    report.curve.push_back(point);
    SPTOK_LOG_INFO("stage2 step %zu: train %.4f val %.4f", step, point.train_loss, point.val_loss.value_or(NAN));
    if (has_val && options.patience > 0 && since_best >= options.patience) {
      report.stopped_early = true;
      break;
    }
  }
  if (has_val) {
    params.replace("embed.audio", best);
  } else {
    report.best_step = report.steps;
  }
  params.set_trainable("embed.audio", true);
  return report;
}

std::vector<std::vector<double>> predict_proba(std::span<const FusedSequence> seqs, const ParamStore& params,
                                               const LmConfig& config, const AdapterSet& adapters) {
  std::vector<std::vector<double>> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(classify(s, params, config, adapters));
  return out;
}

int argmax(std::span<const double> probs) {
  require(!probs.empty(), ErrorCode::kInvalidArgument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<int>(best);
}

double evaluate_metric(std::span<const FusedSequence> seqs, const ParamStore& params, const LmConfig& config,
                       const AdapterSet& adapters, metrics::MetricKind metric, std::size_t positive_class) {
  require(!seqs.empty(), ErrorCode::kEmptySplit, "evaluation set is empty");
  const std::size_t classes = params.get("head.bias").size();
  std::vector<int> gold, pred;
  for (const auto& s : seqs) {
    require(s.label.has_value(), ErrorCode::kInvalidArgument, "unlabelled evaluation sequence");
    gold.push_back(*s.label);
    pred.push_back(argmax(classify(s, params, config, adapters)));
  }
  return metrics::task_metric(metrics::confusion_matrix(gold, pred, classes), metric, positive_class);
}

FinetuneReport finetune(ParamStore& params, const LmConfig& config, const AdapterSet& adapters,
                        std::span<const FusedSequence> train, std::span<const FusedSequence> val,
                        const FinetuneConfig& options) {
  require(!train.empty(), ErrorCode::kEmptySplit, "fine-tuning train split is empty");
  require(!val.empty(), ErrorCode::kEmptySplit, "fine-tuning validation split is empty");
  require(params.contains("head.weight"), ErrorCode::kMissingHead, "no classification head attached");
  const auto trainable = params.trainable_names();
  require(!trainable.empty(), ErrorCode::kNoTrainableParams, "nothing to fine-tune");
  for (const auto& name : trainable) {
    require(name.rfind("lora.", 0) == 0 || name.rfind("head.", 0) == 0 || name.rfind("proj.", 0) == 0,
            ErrorCode::kInvalidArgument,
            "fine-tuning may only update adapters, the head and the projection, but " + name + " is trainable");
  }

  Rng rng(derive_seed(options.seed, "stage3-order"));
  const AdamWConfig adam{options.lr, 0.9, 0.999, 1e-8, options.weight_decay};
  FinetuneReport report;
  std::map<std::string, Tensor> best;
  bool have_best = false;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto order = shuffled(train.size(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const auto batch = gather(train, std::span(order).subspan(start, end - start));
      GradMap<float> grads = zero_grads(params);
      const double loss = classification_loss<float>(batch, params, config, adapters, &grads);
      require_finite(loss, "fine-tuning");
      adamw_step(params, grads, adam);
      loss_sum += loss;
      ++batches;
    }
    const double metric = evaluate_metric(val, params, config, adapters, options.metric, options.positive_class);
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), metric});
    SPTOK_LOG_INFO("stage3 epoch %zu: loss %.4f val %s %.4f", epoch, report.epochs.back().train_loss,
                   metrics::metric_name(options.metric).c_str(), metric);
    if (!have_best || metric > report.best_val_metric) {
      have_best = true;
      report.best_val_metric = metric;
      report.best_epoch = epoch;
      for (const auto& name : trainable) best[name] = params.get(name);
      since_best = 0;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }
  for (auto& [name, value] : best) params.replace(name, std::move(value));
  return report;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::BinaryWriter out(path);
  out.magic("SPTK");
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put_string(ckpt.config.to_json().dump());
  out.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.adapters.adapters.size()));
  for (const auto& ad : ckpt.adapters.adapters) {
    out.put_string(ad.target);
    out.put<std::uint64_t>(ad.rank);
    out.put<double>(ad.alpha);
  }
  out.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.entries().size()));
  for (const auto& [name, e] : ckpt.params.entries()) {
    out.put_string(name);
    out.put<std::uint8_t>(e.trainable ? 1 : 0);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t dim : e.value.shape()) out.put<std::uint64_t>(dim);
    out.put_array(std::vector<float>(e.value.data().begin(), e.value.data().end()));
  }
  out.put_string(ckpt.meta.dump());
  out.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic("SPTK");
  const auto version = in.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::kFormatError,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.config = LmConfig::from_json(nlohmann::json::parse(in.get_string()));
    const auto adapters = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < adapters; ++i) {
      LoraAdapter ad;
      ad.target = in.get_string();
      ad.rank = in.get<std::uint64_t>();
      ad.alpha = in.get<double>();
      ckpt.adapters.adapters.push_back(ad);
    }
    const auto tensors = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < tensors; ++i) {
      std::string name = in.get_string();
      const bool trainable = in.get<std::uint8_t>() != 0;
      const auto rank = in.get<std::uint32_t>();
      require(rank >= 1 && rank <= 4, ErrorCode::kFormatError, "bad tensor rank for " + name);
      std::vector<std::size_t> shape(rank);
      std::size_t count = 1;
      for (auto& dim : shape) {
        dim = in.get<std::uint64_t>();
        require(dim > 0 && count <= in.remaining() / dim, ErrorCode::kFormatError, "bad tensor shape for " + name);
        count *= dim;
      }
      ckpt.params.add(name, Tensor(std::move(shape), in.get_array<float>(count)), trainable);
    }
    ckpt.meta = nlohmann::json::parse(in.get_string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
  in.expect_end();
  return ckpt;
}

}  // namespace sptok::lm
