#pragma once

// Little-endian helpers shared by the binary file formats.

#include "splatgrasp/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace sg::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f32(double v) {
    const float f = static_cast<float>(v);
    raw(&f, sizeof f);
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void finish() {
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "write failed for '" + path_.string() + "'");
  }

 private:
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path) {
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
    }
    in_.open(path, std::ios::binary);
    if (!in_) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != m) {
      throw Error(ErrorCode::ParseError, "'" + path_.string() + "': bad magic, expected " + std::string(m));
    }
  }
  std::uint16_t u16() { return read<std::uint16_t>("u16"); }
  std::uint32_t u32() { return read<std::uint32_t>("u32"); }
  double f32() { return static_cast<double>(read<float>("f32")); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw Error(ErrorCode::ParseError, "'" + path_.string() + "': truncated string");
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  template <typename T>
  T read(const char* what) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw Error(ErrorCode::ParseError, "'" + path_.string() + "': truncated while reading " + what);
    return v;
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace sg::detail
