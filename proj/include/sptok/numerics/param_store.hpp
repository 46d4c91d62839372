#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sptok/numerics/tensor.hpp"

namespace sptok {

template <typename T>
struct AdamState {
  BasicTensor<T> first_moment;
  BasicTensor<T> second_moment;
  std::int64_t step = 0;
};

template <typename T>
using GradMap = std::map<std::string, BasicTensor<T>>;

// Named parameters with a trainable flag and optimizer state. Iteration is
// in name order, which fixes reduction and update order.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    BasicTensor<T> value;
    bool trainable = false;
    std::optional<AdamState<T>> adam;
  };

  void add(const std::string& name, BasicTensor<T> value, bool trainable = false) {
    require(!entries_.contains(name), ErrorCode::kInvalidArgument, "duplicate parameter " + name);
    entries_.emplace(name, Entry{std::move(value), trainable, std::nullopt});
  }

  // Replaces the value (shape may change); optimizer state is dropped.
  void replace(const std::string& name, BasicTensor<T> value) {
    Entry& e = entry(name);
    e.value = std::move(value);
    e.adam.reset();
  }

  void erase(const std::string& name) {
    require(entries_.erase(name) == 1, ErrorCode::kUnknownParameter, name);
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  const BasicTensor<T>& get(const std::string& name) const { return entry(name).value; }
  BasicTensor<T>& mutable_value(const std::string& name) { return entry(name).value; }

  bool is_trainable(const std::string& name) const { return entry(name).trainable; }

  void set_trainable(const std::string& name, bool trainable) {
    Entry& e = entry(name);
    e.trainable = trainable;
    if (!trainable) e.adam.reset();
  }

  void freeze_all() {
    for (auto& [name, e] : entries_) {
      e.trainable = false;
      e.adam.reset();
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_) {
      if (e.trainable) out.push_back(name);
    }
    return out;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) {
      if (e.trainable) n += e.value.size();
    }
    return n;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& mutable_entries() { return entries_; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::kUnknownParameter, name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::kUnknownParameter, name);
    return it->second;
  }

  // Values and trainable flags; optimizer state is not carried over.
  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  std::map<std::string, std::uint64_t> hashes() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& [name, e] : entries_) out[name] = tensor_hash(e.value);
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

using ParamStore = BasicParamStore<float>;
using ParamStore64 = BasicParamStore<double>;

// Zero-filled gradient buffers for every trainable parameter.
template <typename T>
GradMap<T> zero_grads(const BasicParamStore<T>& params) {
  GradMap<T> grads;
  for (const auto& [name, e] : params.entries()) {
    if (e.trainable) grads.emplace(name, BasicTensor<T>(e.value.shape()));
  }
  return grads;
}

}  // namespace sptok
