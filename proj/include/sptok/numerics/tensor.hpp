#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sptok/error.hpp"

namespace sptok {

// Dense row-major tensor. Training runs in float; a double instantiation
// backs gradient checking.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<std::size_t> shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (std::size_t extent : shape_) {
      require(extent > 0, ErrorCode::kShapeMismatch, "tensor extents must be positive");
    }
    data_.assign(element_count(shape_), fill);
  }

  BasicTensor(std::vector<std::size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t extent : shape_) {
      require(extent > 0, ErrorCode::kShapeMismatch, "tensor extents must be positive");
    }
    require(data_.size() == element_count(shape_), ErrorCode::kShapeMismatch,
            "data length does not match shape " + shape_string());
  }

  static BasicTensor matrix(std::size_t rows, std::size_t cols, T fill = T(0)) {
    return BasicTensor({rows, cols}, fill);
  }
  static BasicTensor vector(std::size_t n, T fill = T(0)) { return BasicTensor({n}, fill); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_.front(); }
  // Product of all extents after the first; the row stride.
  std::size_t cols() const noexcept { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : data_.size() / shape_.front(); }

  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols(), cols()}; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const BasicTensor& other) const noexcept { return shape_ == other.shape_; }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Asserts the no-NaN/Inf invariant in debug builds.
template <typename T>
inline void debug_check_finite([[maybe_unused]] const BasicTensor<T>& t, [[maybe_unused]] const char* what) {
#ifndef NDEBUG
  require(t.all_finite(), ErrorCode::kNumericalFailure, std::string("non-finite values in ") + what);
#endif
}

// FNV-1a over the raw bytes of the shape and data; used for bit-exact
// freezing checks and artifact hashing.
template <typename T>
std::uint64_t tensor_hash(const BasicTensor<T>& t) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (std::size_t e : t.shape()) mix(&e, sizeof(e));
  mix(t.raw(), t.size() * sizeof(T));
  return h;
}

}  // namespace sptok
