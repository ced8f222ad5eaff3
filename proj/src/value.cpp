#include "packmp/value.hpp"

#include <bit>
#include <sstream>

#include "packmp/buffer.hpp"

namespace packmp {

Prim prim_of(const Scalar& s) noexcept { return static_cast<Prim>(s.index()); }

namespace {

bool scalar_equal(const Scalar& a, const Scalar& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](auto x) {
        using T = decltype(x);
        T y = std::get<T>(b);
        if constexpr (std::is_same_v<T, float>) {
          return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
        } else if constexpr (std::is_same_v<T, double>) {
          return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
        } else {
          return x == y;
        }
      },
      a);
}

void write(std::ostream& os, const DynValue& v) {
  switch (v.node().index()) {
    case 0:
      std::visit(
          [&](auto x) {
            os << to_string(prim_of(v.scalar())) << ':';
            if constexpr (std::is_same_v<decltype(x), std::uint8_t>)
              os << static_cast<unsigned>(x);
            else if constexpr (std::is_same_v<decltype(x), bool>)
              os << (x ? "true" : "false");
            else
              os << x;
          },
          v.scalar());
      break;
    case 1: os << '"' << v.string() << '"'; break;
    case 2: {
      os << '[';
      const auto& items = v.seq().items;
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) os << ", ";
        write(os, items[i]);
      }
      os << ']';
      break;
    }
    case 3: {
      os << v.rec().type_name << '{';
      const auto& fields = v.rec().fields;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ", ";
        write(os, fields[i]);
      }
      os << '}';
      break;
    }
    default:
      os << v.var().type_name << "::" << v.var().arm;
      if (v.var().payload) {
        os << '(';
        write(os, *v.var().payload);
        os << ')';
      }
  }
}

}  // namespace

bool operator==(const DynValue& a, const DynValue& b) {
  if (a.node_.index() != b.node_.index()) return false;
  switch (a.node_.index()) {
    case 0: return scalar_equal(a.scalar(), b.scalar());
    case 1: return a.string() == b.string();
    case 2: return a.seq().items == b.seq().items;
    case 3: return a.rec().type_name == b.rec().type_name && a.rec().fields == b.rec().fields;
    default: {
      const auto& x = a.var();
      const auto& y = b.var();
      if (x.type_name != y.type_name || x.arm != y.arm) return false;
      if (!x.payload || !y.payload) return !x.payload && !y.payload;
      return *x.payload == *y.payload;
    }
  }
}

std::string to_string(const DynValue& v) {
  std::ostringstream os;
  write(os, v);
  return os.str();
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s += kDigits[b >> 4];
    s += kDigits[b & 0xF];
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  int hi = -1;
  for (char c : hex) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    int n = nibble(c);
    if (n < 0) throw Error(ErrorCode::invalid_argument, std::string("bad hex digit '") + c + "'");
    if (hi < 0) {
      hi = n;
    } else {
      out.push_back(static_cast<std::uint8_t>(hi << 4 | n));
      hi = -1;
    }
  }
  if (hi >= 0) throw Error(ErrorCode::invalid_argument, "odd number of hex digits");
  return out;
}

}  // namespace packmp
