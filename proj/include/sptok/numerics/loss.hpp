#pragma once

#include <cstdint>
#include <span>

#include "sptok/numerics/tensor.hpp"

namespace sptok {

template <typename T>
struct MaskedLoss {
  T loss = 0;
  std::size_t count = 0;  // masked rows
  BasicTensor<T> grad;    // d loss / d logits; zero on unmasked rows
};

// Mean over masked rows of -log softmax(logits[i])[targets[i]].
// Throws EmptyMask when no row is selected and IndexOutOfRange for a bad
// target on a masked row (unmasked targets are ignored).
template <typename T>
MaskedLoss<T> cross_entropy_masked(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                                   std::span<const std::uint8_t> mask, bool want_grad = true);

// Row softmax in place, max-subtracted.
template <typename T>
void softmax_inplace(std::span<T> row);

}  // namespace sptok
