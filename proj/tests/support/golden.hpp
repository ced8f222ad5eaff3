#pragma once

// Values behind tests/fixtures/portable_vectors.txt. The fixture holds
// the expected bytes; this file holds what was encoded.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "packmp/pack.hpp"

namespace packmp::testing {

struct GoldenCase {
  std::string name;
  TypeRegistry registry;
  FieldKind kind;
  DynValue value;
};

inline std::map<std::string, std::string> load_golden(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, hex;
    ls >> name >> hex;
    out[name] = hex;
  }
  return out;
}

inline std::vector<GoldenCase> golden_cases() {
  TypeRegistry none;
  TypeRegistry reg = TypeRegistry::from_idl(R"(
    record point { x: i32; y: f64; }
    variant shape { empty; circle(f64); name(string); }
    record tri { name: string; pts: seq<point>; closed: bool; }
  )");
  auto prim = [](Prim p) { return FieldKind::primitive(p); };
  auto u8 = [](int v) { return DynValue::prim(static_cast<std::uint8_t>(v)); };
  auto i32 = [](int v) { return DynValue::prim(static_cast<std::int32_t>(v)); };
  auto point = [&](int x, double y) { return DynValue::rec("point", {i32(x), DynValue::prim(y)}); };

  return {
      {"i32_one", none, prim(Prim::i32), i32(1)},
      {"i32_minus_two", none, prim(Prim::i32), i32(-2)},
      {"u32_deadbeef", none, prim(Prim::u32), DynValue::prim(std::uint32_t{0xDEADBEEF})},
      {"i64_minus_one", none, prim(Prim::i64), DynValue::prim(std::int64_t{-1})},
      {"u64_counting", none, prim(Prim::u64), DynValue::prim(std::uint64_t{0x0102030405060708})},
      {"f32_one_and_half", none, prim(Prim::f32), DynValue::prim(1.5f)},
      {"f64_two", none, prim(Prim::f64), DynValue::prim(2.0)},
      {"f64_minus_tenth", none, prim(Prim::f64), DynValue::prim(-0.1)},
      {"bool_true", none, prim(Prim::boolean), DynValue::prim(true)},
      {"bool_false", none, prim(Prim::boolean), DynValue::prim(false)},
      {"u8_200", none, prim(Prim::u8), u8(200)},
      {"string_ab", none, prim(Prim::string), DynValue::str("ab")},
      {"string_empty", none, prim(Prim::string), DynValue::str("")},
      {"string_abcd", none, prim(Prim::string), DynValue::str("abcd")},
      {"string_hello", none, prim(Prim::string), DynValue::str("hello")},
      {"seq_i32_1_2", none, FieldKind::sequence(prim(Prim::i32)), DynValue::seq({i32(1), i32(2)})},
      {"seq_u8_1_2_3", none, FieldKind::sequence(prim(Prim::u8)), DynValue::seq({u8(1), u8(2), u8(3)})},
      {"seq_empty", none, FieldKind::sequence(prim(Prim::f64)), DynValue::seq({})},
      {"fixed_i32x3", none, FieldKind::fixed_array(prim(Prim::i32), 3), DynValue::seq({i32(7), i32(8), i32(9)})},
      {"record_point", reg, FieldKind::named("point"), point(1, 2.0)},
      {"variant_empty", reg, FieldKind::named("shape"), DynValue::var("shape", "empty")},
      {"variant_circle", reg, FieldKind::named("shape"), DynValue::var("shape", "circle", DynValue::prim(1.0))},
      {"variant_name", reg, FieldKind::named("shape"), DynValue::var("shape", "name", DynValue::str("xyz"))},
      {"record_nested", reg, FieldKind::named("tri"),
       DynValue::rec("tri", {DynValue::str("tri"), DynValue::seq({point(1, 2.0), point(-3, 0.5)}), DynValue::prim(true)})},
  };
}

}  // namespace packmp::testing
