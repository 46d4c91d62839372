#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sptok/lm/config.hpp"

namespace sptok::lm {

enum class PositionKind : std::uint8_t { kText, kSep, kAudio, kCls, kSoft };

// [w_1..w_n, SEP, a_1..a_m, CLS]. A kSoft slot carries a continuous vector
// in `soft` in place of a token embedding.
struct FusedSequence {
  std::vector<std::int32_t> ids;
  std::vector<PositionKind> kinds;
  std::vector<float> soft;
  std::optional<int> label;

  std::size_t size() const { return ids.size(); }
  std::size_t text_length() const;
  std::size_t audio_length() const;
};

// Audio ids are indices into the LM's audio vocabulary, [0, audio_vocab).
// Overlong inputs lose audio from the right first, then text.
FusedSequence build_fused_sequence(std::span<const std::int32_t> text, std::span<const std::int32_t> audio,
                                   const LmConfig& config, std::optional<int> label = std::nullopt);

// [w_1..w_n, SEP, soft, CLS] for the continuous-vector baseline.
FusedSequence build_soft_sequence(std::span<const std::int32_t> text, std::span<const float> soft,
                                  const LmConfig& config, std::optional<int> label = std::nullopt);

// Maps global audio ids of a selection onto LM audio indices.
class AudioIndex {
 public:
  AudioIndex() = default;
  explicit AudioIndex(std::vector<std::int32_t> sorted_ids);

  std::size_t size() const { return ids_.size(); }
  std::optional<std::int32_t> index_of(std::int32_t global_id) const;
  // Drops ids outside the index, keeping order.
  std::vector<std::int32_t> map(std::span<const std::int32_t> global_ids) const;
  const std::vector<std::int32_t>& ids() const { return ids_; }

 private:
  std::vector<std::int32_t> ids_;
};

}  // namespace sptok::lm
