#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "packmp/typedesc.hpp"

namespace packmp {

/// Scalar payload; the alternative index matches Prim (minus string).
using Scalar = std::variant<std::int32_t, std::uint32_t, std::int64_t, std::uint64_t,
                            float, double, bool, std::uint8_t>;

Prim prim_of(const Scalar& s) noexcept;

class DynValue;

struct SeqValue {
  std::vector<DynValue> items;
};

struct RecValue {
  std::string type_name;
  std::vector<DynValue> fields;
};

struct VarValue {
  std::string type_name;
  std::string arm;
  std::shared_ptr<const DynValue> payload;  // null for an empty arm
};

/// Dynamically typed value tree serialized under a TypeDescriptor.
/// Equality is structural; floating point compares bit patterns.
class DynValue {
 public:
  using Node = std::variant<Scalar, std::string, SeqValue, RecValue, VarValue>;

  DynValue() : node_(Scalar{std::int32_t{0}}) {}
  DynValue(Node node) : node_(std::move(node)) {}

  static DynValue prim(Scalar s) { return DynValue(Node{s}); }
  static DynValue str(std::string s) { return DynValue(Node{std::move(s)}); }
  static DynValue seq(std::vector<DynValue> items) { return DynValue(Node{SeqValue{std::move(items)}}); }
  static DynValue rec(std::string type_name, std::vector<DynValue> fields) {
    return DynValue(Node{RecValue{std::move(type_name), std::move(fields)}});
  }
  static DynValue var(std::string type_name, std::string arm) {
    return DynValue(Node{VarValue{std::move(type_name), std::move(arm), nullptr}});
  }
  static DynValue var(std::string type_name, std::string arm, DynValue payload) {
    return DynValue(Node{VarValue{std::move(type_name), std::move(arm),
                                  std::make_shared<const DynValue>(std::move(payload))}});
  }

  const Node& node() const noexcept { return node_; }

  bool is_scalar() const noexcept { return node_.index() == 0; }
  bool is_string() const noexcept { return node_.index() == 1; }
  bool is_seq() const noexcept { return node_.index() == 2; }
  bool is_rec() const noexcept { return node_.index() == 3; }
  bool is_var() const noexcept { return node_.index() == 4; }

  const Scalar& scalar() const { return std::get<Scalar>(node_); }
  const std::string& string() const { return std::get<std::string>(node_); }
  const SeqValue& seq() const { return std::get<SeqValue>(node_); }
  const RecValue& rec() const { return std::get<RecValue>(node_); }
  const VarValue& var() const { return std::get<VarValue>(node_); }

  friend bool operator==(const DynValue& a, const DynValue& b);

 private:
  Node node_;
};

/// Debug rendering, e.g. `foo{i32:1, f64:2}`.
std::string to_string(const DynValue& v);

}  // namespace packmp
