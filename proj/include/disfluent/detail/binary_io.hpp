#pragma once

#include "disfluent/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace disfluent::detail {

// Little-endian encoders shared by the feature cache and checkpoint formats.

class ByteWriter {
 public:
  void bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }

  template <typename UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

  const std::vector<char>& buffer() const { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(Errc::Io, "write failed for " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + name_);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out(buf_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename UInt>
  UInt uint() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      v |= static_cast<UInt>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(UInt);
    return v;
  }

  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& name() const { return name_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw Error(Errc::MalformedHeader, "truncated file " + name_);
  }

  std::string name_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace disfluent::detail
