#include "sptok/numerics/loss.hpp"

#include <algorithm>
#include <cmath>

namespace sptok {

template <typename T>
void softmax_inplace(std::span<T> row) {
  T max_v = row[0];
  for (T v : row) max_v = std::max(max_v, v);
  T sum = 0;
  for (T& v : row) {
    v = std::exp(v - max_v);
    sum += v;
  }
  const T inv = T(1) / sum;
  for (T& v : row) v *= inv;
}

template <typename T>
MaskedLoss<T> cross_entropy_masked(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                                   std::span<const std::uint8_t> mask, bool want_grad) {
  require(logits.rank() == 2, ErrorCode::kShapeMismatch, "logits must be N x V");
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  require(targets.size() == n && mask.size() == n, ErrorCode::kShapeMismatch,
          "targets/mask length must equal the number of logit rows");

  MaskedLoss<T> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < v, ErrorCode::kIndexOutOfRange,
            "target " + std::to_string(targets[i]) + " at row " + std::to_string(i));
    ++out.count;
  }
  require(out.count > 0, ErrorCode::kEmptyMask, "no masked rows");
  if (want_grad) out.grad = BasicTensor<T>(logits.shape());

  const T inv_count = T(1) / static_cast<T>(out.count);
  std::vector<T> probs(v);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const auto row = logits.row(i);
    T max_v = row[0];
    for (T x : row) max_v = std::max(max_v, x);
    T sum = 0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[j] = std::exp(row[j] - max_v);
      sum += probs[j];
    }
    const auto target = static_cast<std::size_t>(targets[i]);
    // log-sum-exp form keeps the uniform case exact: log(V) - 0.
    total += std::log(sum) - (row[target] - max_v);
    if (want_grad) {
      auto g = out.grad.row(i);
      const T inv_sum = T(1) / sum;
      for (std::size_t j = 0; j < v; ++j) g[j] = probs[j] * inv_sum * inv_count;
      g[target] -= inv_count;
    }
  }
  out.loss = total * inv_count;
  return out;
}

template void softmax_inplace<float>(std::span<float>);
template void softmax_inplace<double>(std::span<double>);
template MaskedLoss<float> cross_entropy_masked<float>(const Tensor&, std::span<const std::int32_t>,
                                                       std::span<const std::uint8_t>, bool);
template MaskedLoss<double> cross_entropy_masked<double>(const Tensor64&, std::span<const std::int32_t>,
                                                         std::span<const std::uint8_t>, bool);

}  // namespace sptok
