#include <fftw3.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "sptok/error.hpp"
#include "sptok/rvq/rvq.hpp"

namespace sptok::rvq {
namespace {

struct FftwPlanDeleter {
  void operator()(fftwf_plan_s* p) const { fftwf_destroy_plan(p); }
};
struct FftwFree {
  void operator()(void* p) const { fftwf_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<float*>(fftwf_malloc(sizeof(float) * n))),
        out_(static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * (n / 2 + 1)))) {
    require(in_ && out_, ErrorCode::kNumericalFailure, "fftw allocation failed");
    plan_.reset(fftwf_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE));
    require(plan_ != nullptr, ErrorCode::kNumericalFailure, "fftw plan creation failed");
  }

  float* input() { return in_.get(); }
  // Power spectrum |X_k|^2 / n for k in [0, n/2].
  void power(std::vector<double>& out) {
    fftwf_execute(plan_.get());
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      const double re = out_.get()[k][0];
      const double im = out_.get()[k][1];
      out[k] = (re * re + im * im) / static_cast<double>(n_);
    }
  }

 private:
  std::size_t n_;
  std::unique_ptr<float, FftwFree> in_;
  std::unique_ptr<fftwf_complex, FftwFree> out_;
  std::unique_ptr<fftwf_plan_s, FftwPlanDeleter> plan_;
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void FrameSeq::append(std::span<const float> f) {
  if (dim == 0) dim = f.size();
  require(f.size() == dim, ErrorCode::kDimensionMismatch, "frame dimension mismatch");
  data.insert(data.end(), f.begin(), f.end());
}

void FrameSeq::append(const FrameSeq& other) {
  if (other.length() == 0) return;
  if (dim == 0) dim = other.dim;
  require(other.dim == dim, ErrorCode::kDimensionMismatch, "frame dimension mismatch");
  data.insert(data.end(), other.data.begin(), other.data.end());
}

FrameSeq frame_features(std::span<const float> samples, int sample_rate, const FeatureOptions& options) {
  require(sample_rate > 0, ErrorCode::kInvalidArgument, "sample rate must be positive");
  require(!samples.empty(), ErrorCode::kEmptyWaveform, "empty waveform");
  require(options.bands > 0 && options.frame_period_ms > 0, ErrorCode::kInvalidArgument, "bad feature options");

  const double hop = sample_rate * options.frame_period_ms / 1000.0;
  const auto frames = static_cast<std::size_t>(std::ceil(static_cast<double>(samples.size()) / hop - 1e-9));
  const auto window = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(2.0 * hop)));
  const std::size_t nfft = next_pow2(window);
  const std::size_t bins = nfft / 2;

  std::vector<float> hann(window);
  for (std::size_t i = 0; i < window; ++i) {
    hann[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                      static_cast<double>(window - 1)));
  }

  // Band b covers bins [edges[b], edges[b+1]), log-spaced from bin 1.
  std::vector<std::size_t> edges(options.bands + 1);
  for (std::size_t b = 0; b <= options.bands; ++b) {
    const double pos = std::exp(std::log(static_cast<double>(bins) + 1.0) * static_cast<double>(b) /
                                static_cast<double>(options.bands));
    edges[b] = std::min(bins + 1, static_cast<std::size_t>(std::floor(pos)));
  }
  edges[0] = 1;
  edges[options.bands] = bins + 1;

  RealFft fft(nfft);
  std::vector<double> power;
  FrameSeq out;
  out.dim = options.bands;
  out.frame_period_ms = options.frame_period_ms;
  out.data.reserve(frames * options.bands);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::size_t>(std::floor(static_cast<double>(t) * hop));
    float* in = fft.input();
    for (std::size_t i = 0; i < nfft; ++i) {
      const std::size_t s = start + i;
      in[i] = (i < window && s < samples.size()) ? samples[s] * hann[i] : 0.0f;
    }
    fft.power(power);
    for (std::size_t b = 0; b < options.bands; ++b) {
      const std::size_t lo = std::min(edges[b], bins);
      const std::size_t hi = std::max(lo + 1, edges[b + 1]);
      double energy = 0.0;
      for (std::size_t k = lo; k < hi && k <= bins; ++k) energy += power[k];
      out.data.push_back(static_cast<float>(std::log(std::max(energy, options.energy_floor))));
    }
  }
  return out;
}

}  // namespace sptok::rvq
