#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dusc {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_view(const Bytes& b) { return ByteView(b.data(), b.size()); }
Bytes to_bytes(std::string_view s);
std::string to_string(ByteView b);

std::string to_hex(ByteView b);
std::optional<Bytes> from_hex(std::string_view hex);
// 8-hex-digit short form used in logs and traces.
std::string short_hex(ByteView b);

// Canonical encoding: fields are concatenated in declared order, each
// prefixed by a 4-byte big-endian length. Integers are 8-byte big-endian
// fields; maps are sorted by key. See docs/wire-format.md.
class Encoder {
 public:
  Encoder& put_bytes(ByteView b);
  Encoder& put_str(std::string_view s);
  Encoder& put_u64(std::uint64_t v);
  Encoder& put_map(const std::map<std::string, std::string>& m);

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  void put_len(std::uint32_t len);
  Bytes out_;
};

// Bounds-checked reader for canonical encodings. Never throws: any
// malformed input flips the decoder into a failed state and all
// subsequent reads return false.
class Decoder {
 public:
  explicit Decoder(ByteView data) : data_(data) {}

  bool get_bytes(Bytes& out);
  bool get_str(std::string& out);
  bool get_u64(std::uint64_t& out);
  bool get_map(std::map<std::string, std::string>& out);

  // True when every byte has been consumed and no read failed.
  bool done() const { return !failed_ && pos_ == data_.size(); }
  bool failed() const { return failed_; }

 private:
  bool get_field(ByteView& out);
  ByteView data_;
  std::size_t pos_ = 0;
  bool failed_ = false;
};

}  // namespace dusc
