#include "sptok/io/hash.hpp"

#include <fstream>
#include <iterator>

#include "sptok/error.hpp"

namespace sptok::io {

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

}  // namespace sptok::io
