#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sptok/rvq/audio.hpp"

namespace sptok::rvq {

// T x d frame features, row-major.
struct FrameSeq {
  std::size_t dim = 0;
  std::vector<float> data;
  double frame_period_ms = 20.0;

  std::size_t length() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> frame(std::size_t t) const { return {data.data() + t * dim, dim}; }
  std::span<float> frame(std::size_t t) { return {data.data() + t * dim, dim}; }
  void append(std::span<const float> f);
  void append(const FrameSeq& other);
};

struct FeatureOptions {
  std::size_t bands = 16;
  double frame_period_ms = 20.0;
  double energy_floor = 1e-10;
};

// Hann-windowed log band energies, one frame per hop. The analysis window
// spans two hops; bands are log-spaced over (0, Nyquist].
FrameSeq frame_features(std::span<const float> samples, int sample_rate, const FeatureOptions& options = {});
inline FrameSeq frame_features(const Waveform& wave, const FeatureOptions& options = {}) {
  return frame_features(wave.samples, wave.sample_rate, options);
}

// L layers of V codewords of dimension d. Layer 1 is semantic.
struct CodebookSet {
  std::size_t layers = 0;
  std::size_t vocab = 0;
  std::size_t dim = 0;
  std::vector<float> codewords;  // L x V x d
  bool trained = false;

  std::span<const float> codeword(std::size_t layer, std::size_t index) const {
    return {codewords.data() + (layer * vocab + index) * dim, dim};
  }
  std::span<float> codeword(std::size_t layer, std::size_t index) {
    return {codewords.data() + (layer * vocab + index) * dim, dim};
  }
  std::size_t global_vocab() const { return layers * vocab; }
};

struct CodebookOptions {
  std::size_t layers = 8;
  std::size_t vocab = 64;
  std::size_t epochs = 20;
  // Pins codeword 0 of every layer to the zero vector.
  bool reserve_zero = true;
  std::uint64_t seed = 0;
};

// Residual k-means, layer by layer, with k-means++ initialization and
// reseeding of empty clusters from the worst-quantized residuals.
CodebookSet train_codebooks(const FrameSeq& corpus, const CodebookOptions& options);

// Layer-local indices, L_kept x T row-major. layer_offset is the 1-based
// label of row 0.
struct TokenGrid {
  std::size_t layers = 0;
  std::size_t frames = 0;
  std::size_t vocab = 0;
  std::size_t layer_offset = 1;
  std::vector<std::uint32_t> indices;

  std::uint32_t at(std::size_t layer_row, std::size_t t) const { return indices[layer_row * frames + t]; }
  std::span<const std::uint32_t> layer(std::size_t layer_row) const {
    return {indices.data() + layer_row * frames, frames};
  }
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

// Per frame and layer, the nearest codeword to the running residual; ties
// go to the lowest index.
TokenGrid encode(const FrameSeq& frames, const CodebookSet& codebooks);
FrameSeq decode(const TokenGrid& grid, const CodebookSet& codebooks);

// Residual after each layer for one frame: residuals[l] is what remains
// after subtracting layers 1..l+1. Used for quantizer diagnostics.
std::vector<std::vector<float>> residual_trace(std::span<const float> frame, const CodebookSet& codebooks);

TokenGrid drop_semantic_layer(const TokenGrid& grid);

// Time-major: frame 0 layers ascending, then frame 1, ... Global id is
// (layer - 1) * V + local index with 1-based layer labels.
std::vector<std::int32_t> flatten_grid(const TokenGrid& grid);

void save_codebooks(const std::filesystem::path& path, const CodebookSet& codebooks);
CodebookSet load_codebooks(const std::filesystem::path& path);
void save_grid(const std::filesystem::path& path, const TokenGrid& grid);
TokenGrid load_grid(const std::filesystem::path& path);

}  // namespace sptok::rvq
