#include "dusc/bytes.hpp"

#include <cstring>

namespace dusc {

Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

std::string to_string(ByteView b) {
  return std::string(b.begin(), b.end());
}

std::string to_hex(ByteView b) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (std::uint8_t byte : b) {
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0x0f]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

std::string short_hex(ByteView b) {
  std::string full = to_hex(b);
  return full.size() > 8 ? full.substr(0, 8) : full;
}

void Encoder::put_len(std::uint32_t len) {
  out_.push_back(static_cast<std::uint8_t>(len >> 24));
  out_.push_back(static_cast<std::uint8_t>(len >> 16));
  out_.push_back(static_cast<std::uint8_t>(len >> 8));
  out_.push_back(static_cast<std::uint8_t>(len));
}

Encoder& Encoder::put_bytes(ByteView b) {
  put_len(static_cast<std::uint32_t>(b.size()));
  out_.insert(out_.end(), b.begin(), b.end());
  return *this;
}

Encoder& Encoder::put_str(std::string_view s) {
  put_len(static_cast<std::uint32_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
  return *this;
}

Encoder& Encoder::put_u64(std::uint64_t v) {
  put_len(8);
  for (int shift = 56; shift >= 0; shift -= 8) {
    out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  return *this;
}

Encoder& Encoder::put_map(const std::map<std::string, std::string>& m) {
  put_u64(m.size());
  for (const auto& [k, v] : m) {
    put_str(k);
    put_str(v);
  }
  return *this;
}

bool Decoder::get_field(ByteView& out) {
  if (failed_) return false;
  if (data_.size() - pos_ < 4) {
    failed_ = true;
    return false;
  }
  std::uint32_t len = (static_cast<std::uint32_t>(data_[pos_]) << 24) |
                      (static_cast<std::uint32_t>(data_[pos_ + 1]) << 16) |
                      (static_cast<std::uint32_t>(data_[pos_ + 2]) << 8) |
                      static_cast<std::uint32_t>(data_[pos_ + 3]);
  pos_ += 4;
  if (data_.size() - pos_ < len) {
    failed_ = true;
    return false;
  }
  out = data_.subspan(pos_, len);
  pos_ += len;
  return true;
}

bool Decoder::get_bytes(Bytes& out) {
  ByteView v;
  if (!get_field(v)) return false;
  out.assign(v.begin(), v.end());
  return true;
}

bool Decoder::get_str(std::string& out) {
  ByteView v;
  if (!get_field(v)) return false;
  out.assign(v.begin(), v.end());
  return true;
}

bool Decoder::get_u64(std::uint64_t& out) {
  ByteView v;
  if (!get_field(v)) return false;
  if (v.size() != 8) {
    failed_ = true;
    return false;
  }
  out = 0;
  for (std::uint8_t byte : v) out = (out << 8) | byte;
  return true;
}

bool Decoder::get_map(std::map<std::string, std::string>& out) {
  std::uint64_t count = 0;
  if (!get_u64(count)) return false;
  if (count > data_.size()) {  // cheap sanity bound, entries are >= 8 bytes
    failed_ = true;
    return false;
  }
  out.clear();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string k, v;
    if (!get_str(k) || !get_str(v)) return false;
    out.emplace(std::move(k), std::move(v));
  }
  return true;
}

}  // namespace dusc
