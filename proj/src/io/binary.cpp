#include "sptok/io/binary.hpp"

namespace sptok::io {

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  require(out_.good(), ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
}

void BinaryWriter::magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

void BinaryWriter::put_string(std::string_view s) {
  put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::finish() {
  out_.flush();
  require(out_.good(), ErrorCode::kIoError, "write failed for " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  require(in_.good(), ErrorCode::kIoError, "cannot open " + path.string());
  in_.seekg(0, std::ios::end);
  size_ = static_cast<std::size_t>(in_.tellg());
  in_.seekg(0, std::ios::beg);
}

void BinaryReader::expect_magic(std::string_view tag) {
  std::string got(tag.size(), '\0');
  read_raw(got.data(), got.size());
  require(got == tag, ErrorCode::kFormatError,
          path_.string() + ": expected magic " + std::string(tag) + ", found " + got);
}

std::string BinaryReader::get_string() {
  const auto n = get<std::uint32_t>();
  require(n <= remaining(), ErrorCode::kFormatError, "truncated string in " + path_.string());
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

std::size_t BinaryReader::remaining() {
  const auto pos = static_cast<std::size_t>(in_.tellg());
  return size_ - pos;
}

void BinaryReader::expect_end() {
  require(remaining() == 0, ErrorCode::kFormatError, "trailing bytes in " + path_.string());
}

void BinaryReader::read_raw(void* dst, std::size_t bytes) {
  require(bytes <= remaining(), ErrorCode::kFormatError, "unexpected end of " + path_.string());
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  require(in_.good(), ErrorCode::kIoError, "read failed for " + path_.string());
}

}  // namespace sptok::io
