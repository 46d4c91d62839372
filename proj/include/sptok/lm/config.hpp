#pragma once

#include <cstddef>
#include <cstdint>

#include "json.hpp"

namespace sptok::lm {

// Token id layout: text [0, T), selected audio [T, T + A), then SEP, CLS,
// PAD.
struct LmConfig {
  std::size_t d_model = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t context = 512;
  std::size_t mlp_ratio = 4;
  std::size_t text_vocab = 0;
  std::size_t audio_vocab = 0;
  std::uint64_t seed = 0;
  double init_std = 0.02;
  double ln_eps = 1e-5;

  std::int32_t audio_base() const { return static_cast<std::int32_t>(text_vocab); }
  std::int32_t sep_id() const { return static_cast<std::int32_t>(text_vocab + audio_vocab); }
  std::int32_t cls_id() const { return sep_id() + 1; }
  std::int32_t pad_id() const { return sep_id() + 2; }
  std::size_t vocab_size() const { return text_vocab + audio_vocab + 3; }
  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t mlp_dim() const { return d_model * mlp_ratio; }

  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

}  // namespace sptok::lm
