#pragma once

// Type descriptors: the structural metadata that drives generic
// serialization. Descriptors come from a small IDL:
//
//   record point { x: f64; y: f64; }
//   variant shape { empty; circle(f64); poly(seq<point>); }
//
// Field order is declaration order and is the wire order.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace packmp {

enum class Prim : std::uint8_t { i32, u32, i64, u64, f32, f64, boolean, u8, string };

std::string_view to_string(Prim p) noexcept;
std::optional<Prim> prim_from_name(std::string_view name) noexcept;

/// Kind of a field or variant payload. Immutable; copies share structure.
class FieldKind {
 public:
  enum class Form : std::uint8_t { primitive, sequence, fixed_array, named };

  static FieldKind primitive(Prim p);
  static FieldKind sequence(FieldKind element);
  static FieldKind fixed_array(FieldKind element, std::uint32_t length);
  static FieldKind named(std::string type_name);

  Form form() const noexcept { return form_; }
  Prim prim() const noexcept { return prim_; }
  const FieldKind& element() const noexcept { return *element_; }
  std::uint32_t length() const noexcept { return length_; }
  const std::string& type_name() const noexcept { return name_; }

  friend bool operator==(const FieldKind& a, const FieldKind& b);

 private:
  FieldKind() = default;

  Form form_ = Form::primitive;
  Prim prim_ = Prim::i32;
  std::uint32_t length_ = 0;
  std::string name_;
  std::shared_ptr<const FieldKind> element_;
};

/// IDL spelling of a kind, e.g. `seq<[i32; 3]>`.
std::string to_string(const FieldKind& kind);

struct FieldDescriptor {
  std::string name;
  FieldKind kind;

  friend bool operator==(const FieldDescriptor&, const FieldDescriptor&) = default;
};

struct VariantArm {
  std::string name;
  std::optional<FieldKind> payload;

  friend bool operator==(const VariantArm&, const VariantArm&) = default;
};

struct RecordShape {
  std::vector<FieldDescriptor> fields;

  friend bool operator==(const RecordShape&, const RecordShape&) = default;
};

struct VariantShape {
  std::vector<VariantArm> arms;

  friend bool operator==(const VariantShape&, const VariantShape&) = default;
};

struct TypeDescriptor {
  std::string name;
  std::variant<RecordShape, VariantShape> shape;

  bool is_record() const noexcept { return shape.index() == 0; }
  const RecordShape& record() const { return std::get<RecordShape>(shape); }
  const VariantShape& variant() const { return std::get<VariantShape>(shape); }
  /// Position of an arm in declaration order; nullopt if absent.
  std::optional<std::uint32_t> arm_index(std::string_view arm) const;

  friend bool operator==(const TypeDescriptor&, const TypeDescriptor&) = default;
};

/// Parses IDL source into descriptors in declaration order. Pure; throws
/// SyntaxError, or Error{duplicate_field | duplicate_type}.
std::vector<TypeDescriptor> parse_idl(std::string_view source);

/// Parses a single kind expression such as `i32`, `seq<point>`, `[u8; 4]`.
FieldKind parse_kind(std::string_view text);

/// Canonical IDL text; `parse_idl(to_idl(ds)) == ds`.
std::string to_idl(std::span<const TypeDescriptor> descriptors);

/// Stable listing used by `packrun idlc`.
std::string describe(std::span<const TypeDescriptor> descriptors);

struct ValidationIssue {
  enum class Kind : std::uint8_t { unresolved_type, illegal_recursion };

  Kind kind;
  /// Missing type name (unresolved) or the cycle's first type (recursion).
  std::string name;
  /// Referencing type (unresolved) or the cycle path `a -> b -> a`.
  std::string detail;

  std::string message() const;
};

class TypeRegistry {
 public:
  TypeRegistry() = default;

  /// Throws Error{duplicate_type} when the name is already present.
  TypeRegistry& add(TypeDescriptor descriptor);

  const TypeDescriptor* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, TypeDescriptor, std::less<>>& entries() const noexcept {
    return entries_;
  }

  /// Empty result means every Named reference resolves and every
  /// recursive reference passes through a sequence.
  std::vector<ValidationIssue> validate() const;

  /// Parses, registers and validates; throws the first issue found.
  static TypeRegistry from_idl(std::string_view source);

 private:
  std::map<std::string, TypeDescriptor, std::less<>> entries_;
};

}  // namespace packmp
