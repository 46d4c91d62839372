#include "sptok/rvq/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "sptok/error.hpp"
#include "sptok/io/binary.hpp"

namespace sptok::rvq {

Waveform read_wav(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic("RIFF");
  in.get<std::uint32_t>();
  in.expect_magic("WAVE");
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (in.remaining() >= 8) {
    std::string id(4, '\0');
    for (char& c : id) c = in.get<char>();
    const auto size = in.get<std::uint32_t>();
    if (id == "fmt ") {
      require(size >= 16, ErrorCode::kFormatError, path.string() + ": short fmt chunk");
      format = in.get<std::uint16_t>();
      channels = in.get<std::uint16_t>();
      rate = in.get<std::uint32_t>();
      in.get<std::uint32_t>();
      in.get<std::uint16_t>();
      bits = in.get<std::uint16_t>();
      in.get_array<char>(size - 16 + (size & 1));
    } else if (id == "data") {
      require(format == 1 && bits == 16 && channels > 0, ErrorCode::kFormatError,
              path.string() + ": only 16-bit PCM WAV is supported");
      const auto pcm = in.get_array<std::int16_t>(size / 2);
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      wave.samples.resize(pcm.size() / channels);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) acc += static_cast<float>(pcm[i * channels + c]) / 32768.0f;
        wave.samples[i] = acc / static_cast<float>(channels);
      }
      return wave;
    } else {
      in.get_array<char>(size + (size & 1));
    }
  }
  fail(ErrorCode::kFormatError, path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  require(wave.sample_rate > 0, ErrorCode::kInvalidArgument, "sample rate must be positive");
  io::BinaryWriter out(path);
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  out.magic("RIFF");
  out.put<std::uint32_t>(36 + data_bytes);
  out.magic("WAVE");
  out.magic("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);
  out.put<std::uint16_t>(1);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(wave.sample_rate));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.magic("data");
  out.put<std::uint32_t>(data_bytes);
  std::vector<std::int16_t> pcm(wave.samples.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    const float v = std::clamp(wave.samples[i], -1.0f, 32767.0f / 32768.0f);
    pcm[i] = static_cast<std::int16_t>(std::lround(v * 32768.0f));
  }
  out.put_array(pcm);
  out.finish();
}

}  // namespace sptok::rvq
