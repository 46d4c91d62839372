#include "sptok/lm/sequence.hpp"

#include <algorithm>

#include "sptok/error.hpp"
#include "sptok/log.hpp"

namespace sptok::lm {

std::size_t FusedSequence::text_length() const {
  return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), PositionKind::kText));
}

std::size_t FusedSequence::audio_length() const {
  return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), PositionKind::kAudio));
}

FusedSequence build_fused_sequence(std::span<const std::int32_t> text, std::span<const std::int32_t> audio,
                                   const LmConfig& config, std::optional<int> label) {
  require(!text.empty(), ErrorCode::kEmptyText, "fused sequence needs at least one text token");
  require(config.context >= 3, ErrorCode::kInvalidConfig, "context too small");
  std::size_t n = text.size();
  std::size_t m = audio.size();
  if (n + m + 2 > config.context) {
    m = n + 2 >= config.context ? 0 : config.context - n - 2;
    if (n + 2 > config.context) n = config.context - 2;
    SPTOK_LOG_DEBUG("truncated fused sequence: text %zu->%zu, audio %zu->%zu", text.size(), n, audio.size(), m);
  }
  FusedSequence seq;
  seq.label = label;
  seq.ids.reserve(n + m + 2);
  for (std::size_t i = 0; i < n; ++i) {
    require(text[i] >= 0 && static_cast<std::size_t>(text[i]) < config.text_vocab, ErrorCode::kUnknownToken,
            "text id " + std::to_string(text[i]) + " outside the text vocabulary");
    seq.ids.push_back(text[i]);
    seq.kinds.push_back(PositionKind::kText);
  }
  seq.ids.push_back(config.sep_id());
  seq.kinds.push_back(PositionKind::kSep);
  for (std::size_t i = 0; i < m; ++i) {
    require(audio[i] >= 0 && static_cast<std::size_t>(audio[i]) < config.audio_vocab, ErrorCode::kUnknownToken,
            "audio index " + std::to_string(audio[i]) + " outside the audio vocabulary");
    seq.ids.push_back(config.audio_base() + audio[i]);
    seq.kinds.push_back(PositionKind::kAudio);
  }
  seq.ids.push_back(config.cls_id());
  seq.kinds.push_back(PositionKind::kCls);
  return seq;
}

FusedSequence build_soft_sequence(std::span<const std::int32_t> text, std::span<const float> soft,
                                  const LmConfig& config, std::optional<int> label) {
  require(!soft.empty(), ErrorCode::kInvalidArgument, "soft vector is empty");
  require(config.context >= 4, ErrorCode::kInvalidConfig, "context too small for a soft token");
  const auto keep = std::min(text.size(), config.context - 3);
  FusedSequence seq = build_fused_sequence(text.first(keep), {}, config, label);
  seq.ids.insert(seq.ids.end() - 1, config.pad_id());
  seq.kinds.insert(seq.kinds.end() - 1, PositionKind::kSoft);
  seq.soft.assign(soft.begin(), soft.end());
  return seq;
}

AudioIndex::AudioIndex(std::vector<std::int32_t> sorted_ids) : ids_(std::move(sorted_ids)) {
  require(std::is_sorted(ids_.begin(), ids_.end()) && std::adjacent_find(ids_.begin(), ids_.end()) == ids_.end(),
          ErrorCode::kInvalidArgument, "audio index ids must be sorted and distinct");
}

std::optional<std::int32_t> AudioIndex::index_of(std::int32_t global_id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), global_id);
  if (it == ids_.end() || *it != global_id) return std::nullopt;
  return static_cast<std::int32_t>(it - ids_.begin());
}

std::vector<std::int32_t> AudioIndex::map(std::span<const std::int32_t> global_ids) const {
  std::vector<std::int32_t> out;
  for (std::int32_t g : global_ids) {
    if (auto idx = index_of(g)) out.push_back(*idx);
  }
  return out;
}

}  // namespace sptok::lm
