#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "sptok/error.hpp"
#include "sptok/io/binary.hpp"
#include "sptok/log.hpp"
#include "sptok/numerics/rng.hpp"
#include "sptok/rvq/rvq.hpp"
#include "sptok/simd/kernels.hpp"

namespace sptok::rvq {
namespace {

constexpr std::uint32_t kFormatVersion = 1;

struct Nearest {
  std::uint32_t index = 0;
  float dist = 0.0f;
};

Nearest nearest(const float* x, const float* centers, std::size_t k, std::size_t d) {
  Nearest best{0, std::numeric_limits<float>::infinity()};
  for (std::size_t c = 0; c < k; ++c) {
    const float dist = simd::sq_dist(x, centers + c * d, d);
    if (dist < best.dist) best = {static_cast<std::uint32_t>(c), dist};
  }
  return best;
}

double norm_sq(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return s;
}

bool is_zero(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

// Picks the remaining centers by k-means++ seeding; centers[0..first) are
// already fixed.
void kmeans_pp(const std::vector<float>& data, std::size_t n, std::size_t d, std::size_t first, std::size_t k,
               std::vector<float>& centers, Rng& rng) {
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  auto update = [&](std::size_t c) {
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], static_cast<double>(simd::sq_dist(&data[i * d], &centers[c * d], d)));
    }
  };
  std::size_t start = first;
  if (first == 0) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::copy_n(&data[pick(rng) * d], d, &centers[0]);
    start = 1;
    update(0);
  } else {
    for (std::size_t c = 0; c < first; ++c) update(c);
  }
  for (std::size_t c = start; c < k; ++c) {
    const double total = std::accumulate(best.begin(), best.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= best[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy_n(&data[chosen * d], d, &centers[c * d]);
    update(c);
  }
}

// Lloyd iterations over `data`; centers[0..fixed) never move.
void lloyd(const std::vector<float>& data, std::size_t n, std::size_t d, std::size_t fixed, std::size_t k,
           std::size_t epochs, std::vector<float>& centers) {
  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<float> dist(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest nn = nearest(&data[i * d], centers.data(), k, d);
      changed |= (assign[i] != nn.index);
      assign[i] = nn.index;
      dist[i] = nn.dist;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += data[i * d + j];
    }
    std::vector<std::size_t> dead;
    for (std::size_t c = fixed; c < k; ++c) {
      if (counts[c] == 0) {
        dead.push_back(c);
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) {
        centers[c * d + j] = static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
      }
    }
    if (!dead.empty()) {
      // Reseed from the residuals currently quantized worst.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
      for (std::size_t r = 0; r < dead.size(); ++r) {
        std::copy_n(&data[order[r % n] * d], d, &centers[dead[r] * d]);
      }
      SPTOK_LOG_DEBUG("k-means epoch %zu: reseeded %zu empty codewords", epoch, dead.size());
      continue;
    }
    if (!changed) break;
  }
}

}  // namespace

CodebookSet train_codebooks(const FrameSeq& corpus, const CodebookOptions& options) {
  require(options.layers > 0 && options.vocab > 0, ErrorCode::kInvalidArgument, "layers and vocab must be positive");
  const std::size_t n = corpus.length();
  const std::size_t d = corpus.dim;
  require(d > 0, ErrorCode::kInvalidArgument, "frame dimension must be positive");
  require(n >= options.vocab, ErrorCode::kInsufficientData,
          "corpus has " + std::to_string(n) + " frames, fewer than " + std::to_string(options.vocab) + " codewords");

  CodebookSet cb;
  cb.layers = options.layers;
  cb.vocab = options.vocab;
  cb.dim = d;
  cb.codewords.assign(cb.layers * cb.vocab * d, 0.0f);

  const std::size_t fixed = options.reserve_zero ? 1 : 0;
  std::vector<float> residual = corpus.data;
  for (std::size_t layer = 0; layer < cb.layers; ++layer) {
    Rng rng(derive_seed(options.seed, "rvq-layer-" + std::to_string(layer)));
    std::vector<float> centers(cb.vocab * d, 0.0f);
    if (cb.vocab > fixed) {
      kmeans_pp(residual, n, d, fixed, cb.vocab, centers, rng);
      lloyd(residual, n, d, fixed, cb.vocab, std::max<std::size_t>(options.epochs, 1), centers);
    }
    std::copy(centers.begin(), centers.end(), cb.codewords.begin() + static_cast<std::ptrdiff_t>(layer * cb.vocab * d));
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest nn = nearest(&residual[i * d], centers.data(), cb.vocab, d);
      for (std::size_t j = 0; j < d; ++j) residual[i * d + j] -= centers[nn.index * d + j];
    }
  }
  cb.trained = true;
  return cb;
}

std::vector<std::vector<float>> residual_trace(std::span<const float> frame, const CodebookSet& codebooks) {
  require(codebooks.trained, ErrorCode::kInvalidArgument, "codebooks are not trained");
  require(frame.size() == codebooks.dim, ErrorCode::kDimensionMismatch,
          "frame dimension " + std::to_string(frame.size()) + " != codebook dimension " + std::to_string(codebooks.dim));
  const std::size_t d = codebooks.dim;
  std::vector<float> residual(frame.begin(), frame.end());
  std::vector<std::vector<float>> out;
  out.reserve(codebooks.layers);
  std::vector<float> next(d);
  for (std::size_t layer = 0; layer < codebooks.layers; ++layer) {
    const float* centers = codebooks.codeword(layer, 0).data();
    const Nearest nn = nearest(residual.data(), centers, codebooks.vocab, d);
    for (std::size_t j = 0; j < d; ++j) next[j] = residual[j] - centers[nn.index * d + j];
    // Guard against rounding letting the residual grow when a zero
    // codeword is available as the no-op choice.
    if (nn.index != 0 && is_zero(codebooks.codeword(layer, 0)) && norm_sq(next) > norm_sq(residual)) {
      next = residual;
    }
    residual = next;
    out.push_back(residual);
  }
  return out;
}

TokenGrid encode(const FrameSeq& frames, const CodebookSet& codebooks) {
  require(codebooks.trained, ErrorCode::kInvalidArgument, "codebooks are not trained");
  const std::size_t t_count = frames.length();
  require(t_count == 0 || frames.dim == codebooks.dim, ErrorCode::kDimensionMismatch,
          "frame dimension " + std::to_string(frames.dim) + " != codebook dimension " + std::to_string(codebooks.dim));
  const std::size_t d = codebooks.dim;
  TokenGrid grid;
  grid.layers = codebooks.layers;
  grid.frames = t_count;
  grid.vocab = codebooks.vocab;
  grid.layer_offset = 1;
  grid.indices.assign(grid.layers * t_count, 0);
  std::vector<float> residual(d), next(d);
  for (std::size_t t = 0; t < t_count; ++t) {
    const auto f = frames.frame(t);
    std::copy(f.begin(), f.end(), residual.begin());
    for (std::size_t layer = 0; layer < codebooks.layers; ++layer) {
      const float* centers = codebooks.codeword(layer, 0).data();
      Nearest nn = nearest(residual.data(), centers, codebooks.vocab, d);
      for (std::size_t j = 0; j < d; ++j) next[j] = residual[j] - centers[nn.index * d + j];
      if (nn.index != 0 && is_zero(codebooks.codeword(layer, 0)) && norm_sq(next) > norm_sq(residual)) {
        nn.index = 0;
        next = residual;
      }
      std::swap(residual, next);
      grid.indices[layer * t_count + t] = nn.index;
    }
  }
  return grid;
}

FrameSeq decode(const TokenGrid& grid, const CodebookSet& codebooks) {
  require(grid.layer_offset >= 1 && grid.layer_offset - 1 + grid.layers <= codebooks.layers,
          ErrorCode::kDimensionMismatch, "grid layers exceed codebook layers");
  require(grid.vocab == codebooks.vocab, ErrorCode::kDimensionMismatch, "grid vocab differs from codebook vocab");
  FrameSeq out;
  out.dim = codebooks.dim;
  out.data.assign(grid.frames * codebooks.dim, 0.0f);
  for (std::size_t row = 0; row < grid.layers; ++row) {
    const std::size_t layer = grid.layer_offset - 1 + row;
    for (std::size_t t = 0; t < grid.frames; ++t) {
      const std::uint32_t idx = grid.at(row, t);
      require(idx < codebooks.vocab, ErrorCode::kIndexOutOfRange,
              "index " + std::to_string(idx) + " >= vocab " + std::to_string(codebooks.vocab));
      simd::axpy(1.0f, codebooks.codeword(layer, idx).data(), out.frame(t).data(), codebooks.dim);
    }
  }
  return out;
}

TokenGrid drop_semantic_layer(const TokenGrid& grid) {
  require(grid.layer_offset == 1, ErrorCode::kAlreadyFiltered, "semantic layer already removed");
  require(grid.layers >= 2, ErrorCode::kSingleLayerGrid, "grid has a single layer");
  TokenGrid out = grid;
  out.layers = grid.layers - 1;
  out.layer_offset = 2;
  out.indices.assign(grid.indices.begin() + static_cast<std::ptrdiff_t>(grid.frames), grid.indices.end());
  return out;
}

std::vector<std::int32_t> flatten_grid(const TokenGrid& grid) {
  std::vector<std::int32_t> out;
  out.reserve(grid.layers * grid.frames);
  for (std::size_t t = 0; t < grid.frames; ++t) {
    for (std::size_t row = 0; row < grid.layers; ++row) {
      const std::size_t layer = grid.layer_offset - 1 + row;
      out.push_back(static_cast<std::int32_t>(layer * grid.vocab + grid.at(row, t)));
    }
  }
  return out;
}

void save_codebooks(const std::filesystem::path& path, const CodebookSet& codebooks) {
  io::BinaryWriter out(path);
  out.magic("RVQC");
  out.put<std::uint32_t>(kFormatVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(codebooks.layers));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(codebooks.vocab));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(codebooks.dim));
  out.put_array(codebooks.codewords);
  out.finish();
}

CodebookSet load_codebooks(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic("RVQC");
  const auto version = in.get<std::uint32_t>();
  require(version == kFormatVersion, ErrorCode::kFormatError, "unsupported codebook version " + std::to_string(version));
  CodebookSet cb;
  cb.layers = in.get<std::uint32_t>();
  cb.vocab = in.get<std::uint32_t>();
  cb.dim = in.get<std::uint32_t>();
  cb.codewords = in.get_array<float>(cb.layers * cb.vocab * cb.dim);
  in.expect_end();
  cb.trained = true;
  return cb;
}

void save_grid(const std::filesystem::path& path, const TokenGrid& grid) {
  io::BinaryWriter out(path);
  out.magic("TGRD");
  out.put<std::uint32_t>(kFormatVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(grid.layers));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(grid.layer_offset));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(grid.vocab));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(grid.frames));
  out.put_array(grid.indices);
  out.finish();
}

TokenGrid load_grid(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  in.expect_magic("TGRD");
  const auto version = in.get<std::uint32_t>();
  require(version == kFormatVersion, ErrorCode::kFormatError, "unsupported grid version " + std::to_string(version));
  TokenGrid grid;
  grid.layers = in.get<std::uint32_t>();
  grid.layer_offset = in.get<std::uint32_t>();
  grid.vocab = in.get<std::uint32_t>();
  grid.frames = in.get<std::uint32_t>();
  grid.indices = in.get_array<std::uint32_t>(grid.layers * grid.frames);
  in.expect_end();
  for (std::uint32_t idx : grid.indices) {
    require(idx < grid.vocab, ErrorCode::kFormatError, path.string() + ": index out of range");
  }
  return grid;
}

}  // namespace sptok::rvq
