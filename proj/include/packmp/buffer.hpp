#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "packmp/error.hpp"

namespace packmp {

using Bytes = std::vector<std::uint8_t>;

/// Native: host byte order, natural widths, no padding.
/// Portable: XDR (big-endian, every item a multiple of 4 bytes).
enum class Encoding : std::uint8_t { native = 0, portable = 1 };

inline constexpr std::uint32_t kMaxLength = 0x7FFFFFFFu;

template <class T>
concept WireScalar =
    std::is_same_v<T, std::int32_t> || std::is_same_v<T, std::uint32_t> ||
    std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint64_t> ||
    std::is_same_v<T, float> || std::is_same_v<T, double> ||
    std::is_same_v<T, bool> || std::is_same_v<T, std::uint8_t>;

namespace detail {

inline void store_be32(std::uint8_t* p, std::uint32_t v) noexcept {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

inline std::uint32_t load_be32(const std::uint8_t* p) noexcept {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

inline void store_be64(std::uint8_t* p, std::uint64_t v) noexcept {
  store_be32(p, static_cast<std::uint32_t>(v >> 32));
  store_be32(p + 4, static_cast<std::uint32_t>(v));
}

inline std::uint64_t load_be64(const std::uint8_t* p) noexcept {
  return (std::uint64_t{load_be32(p)} << 32) | load_be32(p + 4);
}

}  // namespace detail

/// Growable byte sequence with a read cursor. Appends never move the
/// cursor; extraction never shrinks the bytes.
class Buffer {
 public:
  explicit Buffer(Encoding encoding = Encoding::native) : encoding_(encoding) {}
  Buffer(Encoding encoding, Bytes bytes) : bytes_(std::move(bytes)), encoding_(encoding) {}

  std::span<const std::uint8_t> data() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return bytes_.size(); }
  bool empty() const noexcept { return bytes_.empty(); }
  Encoding encoding() const noexcept { return encoding_; }
  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t remaining() const noexcept { return bytes_.size() - cursor_; }

  /// Drops all bytes and rewinds; keeps encoding and capacity.
  Buffer& reset() noexcept {
    bytes_.clear();
    cursor_ = 0;
    return *this;
  }

  void rewind() noexcept { cursor_ = 0; }

  /// Replaces the contents; cursor back to 0.
  void assign(Bytes bytes) noexcept {
    bytes_ = std::move(bytes);
    cursor_ = 0;
  }

  /// Moves the contents out, leaving the buffer reset.
  Bytes release() noexcept {
    Bytes out = std::move(bytes_);
    reset();
    return out;
  }

  void reserve(std::size_t n) { bytes_.reserve(n); }

  /// Drops bytes past `n`.
  void truncate(std::size_t n) noexcept {
    if (n < bytes_.size()) bytes_.resize(n);
    if (cursor_ > bytes_.size()) cursor_ = bytes_.size();
  }

  // Encoding-independent raw access.

  void append_raw(std::span<const std::uint8_t> raw) {
    bytes_.insert(bytes_.end(), raw.begin(), raw.end());
  }

  std::span<const std::uint8_t> take_raw(std::size_t n) {
    require(n);
    std::span<const std::uint8_t> s(bytes_.data() + cursor_, n);
    cursor_ += n;
    return s;
  }

  void put_be32(std::uint32_t v) {
    std::uint8_t* p = grow(4);
    detail::store_be32(p, v);
  }

  std::uint32_t take_be32() { return detail::load_be32(take_raw(4).data()); }

  // Encoding-aware scalars.

  template <WireScalar T>
  void put(T v) {
    if (encoding_ == Encoding::native) {
      if constexpr (std::is_same_v<T, bool>) {
        *grow(1) = v ? 1 : 0;
      } else {
        std::memcpy(grow(sizeof(T)), &v, sizeof(T));
      }
      return;
    }
    if constexpr (std::is_same_v<T, bool> || std::is_same_v<T, std::uint8_t>) {
      detail::store_be32(grow(4), static_cast<std::uint32_t>(v));
    } else if constexpr (sizeof(T) == 4) {
      detail::store_be32(grow(4), std::bit_cast<std::uint32_t>(v));
    } else {
      detail::store_be64(grow(8), std::bit_cast<std::uint64_t>(v));
    }
  }

  template <WireScalar T>
  T take() {
    if (encoding_ == Encoding::native) {
      if constexpr (std::is_same_v<T, bool>) {
        std::uint8_t b = take_raw(1)[0];
        if (b > 1) malformed_bool(b);
        return b == 1;
      } else {
        T v;
        std::memcpy(&v, take_raw(sizeof(T)).data(), sizeof(T));
        return v;
      }
    }
    if constexpr (std::is_same_v<T, bool>) {
      std::uint32_t w = take_be32();
      if (w > 1) malformed_bool(w);
      return w == 1;
    } else if constexpr (std::is_same_v<T, std::uint8_t>) {
      std::uint32_t w = take_be32();
      if (w > 0xFF) throw Error(ErrorCode::schema_mismatch, "u8 out of range: " + std::to_string(w));
      return static_cast<std::uint8_t>(w);
    } else if constexpr (sizeof(T) == 4) {
      return std::bit_cast<T>(take_be32());
    } else {
      return std::bit_cast<T>(detail::load_be64(take_raw(8).data()));
    }
  }

  /// u32 count prefix for strings and sequences.
  void put_length(std::size_t n) {
    if (n > kMaxLength)
      throw Error(ErrorCode::length_overflow, "length " + std::to_string(n) + " exceeds 2^31-1");
    put<std::uint32_t>(static_cast<std::uint32_t>(n));
  }

  std::uint32_t take_length() {
    std::uint32_t n = take<std::uint32_t>();
    if (n > kMaxLength)
      throw Error(ErrorCode::length_overflow, "length " + std::to_string(n) + " exceeds 2^31-1");
    return n;
  }

  /// Length-prefixed opaque bytes; zero-padded to 4 in portable mode.
  void put_string(std::string_view s) {
    put_length(s.size());
    auto raw = reinterpret_cast<const std::uint8_t*>(s.data());
    bytes_.insert(bytes_.end(), raw, raw + s.size());
    bytes_.resize(bytes_.size() + pad_of(s.size()), 0);
  }

  std::string take_string() {
    std::uint32_t n = take_length();
    std::size_t pad = pad_of(n);
    require(std::size_t{n} + pad);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + cursor_), n);
    cursor_ += n;
    for (std::size_t i = 0; i < pad; ++i)
      if (bytes_[cursor_ + i] != 0)
        throw Error(ErrorCode::malformed_padding, "non-zero XDR padding byte");
    cursor_ += pad;
    return s;
  }

  /// Bulk append of a scalar array, no length prefix.
  template <WireScalar T>
  void put_array(std::span<const T> items) {
    if constexpr (!std::is_same_v<T, bool>) {
      if (encoding_ == Encoding::native) {
        auto raw = reinterpret_cast<const std::uint8_t*>(items.data());
        bytes_.insert(bytes_.end(), raw, raw + items.size_bytes());
        return;
      }
    }
    for (T v : items) put(v);
  }

 private:
  std::size_t pad_of(std::size_t n) const noexcept {
    return encoding_ == Encoding::portable ? (4 - n % 4) % 4 : 0;
  }

  std::uint8_t* grow(std::size_t n) {
    std::size_t old = bytes_.size();
    bytes_.resize(old + n);
    return bytes_.data() + old;
  }

  void require(std::size_t n) const {
    if (remaining() < n) throw Truncated(n, remaining());
  }

  [[noreturn]] static void malformed_bool(std::uint32_t v) {
    throw Error(ErrorCode::malformed_bool, "malformed bool: " + std::to_string(v));
  }

  Bytes bytes_;
  std::size_t cursor_ = 0;
  Encoding encoding_;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

}  // namespace packmp
