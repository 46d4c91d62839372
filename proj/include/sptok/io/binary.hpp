#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "sptok/error.hpp"

namespace sptok::io {

// Little-endian host assumed (x86-64 / aarch64); values are written raw.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic(std::string_view tag);
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  template <typename T>
  void put_array(const std::vector<T>& values) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
  }
  void put_string(std::string_view s);
  // Flushes and raises IoError on a failed write.
  void finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    read_raw(&value, sizeof(T));
    return value;
  }
  template <typename T>
  std::vector<T> get_array(std::size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    require(count <= remaining() / sizeof(T), ErrorCode::kFormatError, "truncated array in " + path_.string());
    std::vector<T> values(count);
    read_raw(values.data(), count * sizeof(T));
    return values;
  }
  std::string get_string();
  std::size_t remaining();
  void expect_end();

 private:
  void read_raw(void* dst, std::size_t bytes);

  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t size_ = 0;
};

}  // namespace sptok::io
