#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdcr {

/// Malformed or truncated binary file. offset() is the byte position at which
/// decoding failed.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

std::vector<char> read_file_bytes(const std::string& path);

/// Little-endian byte sink.
class ByteWriter {
public:
  void bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }
  void u8(std::uint8_t v) { put(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }

  const std::vector<char>& buffer() const { return buf_; }
  void save(const std::string& path) const;

private:
  template <class T> void put(T v) {
    static_assert(std::endian::native == std::endian::little,
                  "big-endian hosts need byte swapping");
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.insert(buf_.end(), raw, raw + sizeof(T));
  }
  std::vector<char> buf_;
};

/// Little-endian byte source with bounds checks.
class ByteReader {
public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}
  static ByteReader from_file(const std::string& path) { return ByteReader(read_file_bytes(path)); }

  void expect_magic(std::string_view magic);
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return buf_.size() - pos_; }
  bool at_end() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, pos_); }

private:
  template <class T> T get() {
    if (remaining() < sizeof(T)) fail("unexpected end of file");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<char> buf_;
  std::uint64_t pos_ = 0;
};

} // namespace tdcr
