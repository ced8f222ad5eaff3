#pragma once

// Descriptor-driven serialization of DynValues, plus `<<` / `>>` for
// plain C++ values whose layout is known statically:
//
//   Buffer buf(Encoding::portable);
//   buf << std::int32_t{1} << 2.0 << std::string("ab");
//   buf >> i >> d >> s;
//
// Both paths produce identical bytes for the same kind.

#include <array>
#include <concepts>
#include <string>
#include <string_view>
#include <vector>

#include "packmp/buffer.hpp"
#include "packmp/typedesc.hpp"
#include "packmp/value.hpp"

namespace packmp {

/// Appends `value` encoded as `kind`. Throws Error{schema_mismatch |
/// unknown_type} when the value does not conform; the buffer is left as
/// it was on failure.
void pack(Buffer& buf, const TypeRegistry& registry, const FieldKind& kind,
          const DynValue& value);

/// Kind inferred from the value: scalars and strings map to their
/// primitive, records and variants to their named type. A bare sequence
/// is ambiguous and needs the explicit-kind overload.
void pack(Buffer& buf, const TypeRegistry& registry, const DynValue& value);

DynValue unpack(Buffer& buf, const TypeRegistry& registry, const FieldKind& kind);

/// `type_name` is a registered type or a primitive name.
DynValue unpack(Buffer& buf, const TypeRegistry& registry, std::string_view type_name);

/// Checks conformance without encoding.
void check_conforms(const TypeRegistry& registry, const FieldKind& kind, const DynValue& value);

// Statically typed packing.

template <class T>
struct is_std_vector : std::false_type {};
template <class T, class A>
struct is_std_vector<std::vector<T, A>> : std::true_type {};

template <class T>
struct is_std_array : std::false_type {};
template <class T, std::size_t N>
struct is_std_array<std::array<T, N>> : std::true_type {};

template <class T>
concept Packable =
    WireScalar<T> || std::same_as<T, std::string> ||
    (is_std_vector<T>::value && !std::same_as<typename T::value_type, bool>) ||
    (is_std_array<T>::value && std::tuple_size_v<T> >= 1);

template <class B>
concept BufferLike = std::derived_from<B, Buffer>;

template <Packable T>
void pack_value(Buffer& buf, const T& v) {
  if constexpr (WireScalar<T>) {
    buf.put(v);
  } else if constexpr (std::same_as<T, std::string>) {
    buf.put_string(v);
  } else if constexpr (is_std_vector<T>::value) {
    buf.put_length(v.size());
    if constexpr (WireScalar<typename T::value_type>) {
      buf.put_array(std::span<const typename T::value_type>(v));
    } else {
      for (const auto& item : v) pack_value(buf, item);
    }
  } else {
    for (const auto& item : v) pack_value(buf, item);
  }
}

template <Packable T>
void unpack_value(Buffer& buf, T& v) {
  if constexpr (WireScalar<T>) {
    v = buf.take<T>();
  } else if constexpr (std::same_as<T, std::string>) {
    v = buf.take_string();
  } else if constexpr (is_std_vector<T>::value) {
    std::uint32_t n = buf.take_length();
    v.clear();
    // Each element takes at least one byte; bounds hostile lengths.
    if (n > buf.remaining()) throw Truncated(n, buf.remaining());
    v.resize(n);
    for (auto& item : v) unpack_value(buf, item);
  } else {
    for (auto& item : v) unpack_value(buf, item);
  }
}

template <BufferLike B, Packable T>
B& operator<<(B& buf, const T& v) {
  pack_value(buf, v);
  return buf;
}

template <BufferLike B, Packable T>
B& operator>>(B& buf, T& v) {
  unpack_value(buf, v);
  return buf;
}

template <BufferLike B>
B& operator<<(B& buf, const char* s) {
  buf.put_string(s);
  return buf;
}

/// A DynValue paired with the registry that describes it, for use in
/// `<<` chains: `buf << described(reg, v)`.
struct Described {
  const TypeRegistry& registry;
  const DynValue& value;
};

inline Described described(const TypeRegistry& registry, const DynValue& value) {
  return {registry, value};
}

template <BufferLike B>
B& operator<<(B& buf, const Described& d) {
  pack(buf, d.registry, d.value);
  return buf;
}

}  // namespace packmp
