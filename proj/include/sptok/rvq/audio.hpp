#pragma once

#include <filesystem>
#include <vector>

namespace sptok::rvq {

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 16000;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// 16-bit PCM WAV. Multi-channel input is averaged down to mono.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

}  // namespace sptok::rvq
