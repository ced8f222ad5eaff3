#include "packmp/pack.hpp"

#include <sstream>

namespace packmp {

namespace {

constexpr int kMaxDepth = 256;

struct PathSeg {
  const std::string* field;  // null for an index
  std::size_t index;
};

class Path {
 public:
  explicit Path(std::string root) : root_(std::move(root)) {}

  void push_field(const std::string& name) { segs_.push_back({&name, 0}); }
  void push_index(std::size_t i) { segs_.push_back({nullptr, i}); }
  void pop() { segs_.pop_back(); }
  int depth() const { return static_cast<int>(segs_.size()); }

  std::string str() const {
    std::string s = root_;
    for (const auto& seg : segs_) {
      if (seg.field)
        s += "." + *seg.field;
      else
        s += "[" + std::to_string(seg.index) + "]";
    }
    return s;
  }

 private:
  std::string root_;
  std::vector<PathSeg> segs_;
};

std::string found_of(const DynValue& v) {
  switch (v.node().index()) {
    case 0: return std::string(to_string(prim_of(v.scalar())));
    case 1: return "string";
    case 2: return "sequence of " + std::to_string(v.seq().items.size());
    case 3: return "record " + v.rec().type_name;
    default: return "variant " + v.var().type_name;
  }
}

[[noreturn]] void mismatch(const Path& path, const std::string& expected, const std::string& found) {
  throw Error(ErrorCode::schema_mismatch,
              "schema mismatch at " + path.str() + ": expected " + expected + ", found " + found);
}

const TypeDescriptor& lookup(const TypeRegistry& reg, const std::string& name) {
  const TypeDescriptor* d = reg.find(name);
  if (!d) throw Error(ErrorCode::unknown_type, "unknown type '" + name + "'");
  return *d;
}

// Encodes when `out` is non-null, otherwise only checks.
class Writer {
 public:
  Writer(const TypeRegistry& reg, Buffer* out, Path& path) : reg_(reg), out_(out), path_(path) {}

  void kind(const FieldKind& k, const DynValue& v) {
    if (path_.depth() > kMaxDepth)
      throw Error(ErrorCode::nesting_too_deep, "value nested deeper than " + std::to_string(kMaxDepth));
    switch (k.form()) {
      case FieldKind::Form::primitive: primitive(k.prim(), v); break;
      case FieldKind::Form::sequence: {
        if (!v.is_seq()) mismatch(path_, to_string(k), found_of(v));
        const auto& items = v.seq().items;
        if (out_) out_->put_length(items.size());
        elements(k.element(), items);
        break;
      }
      case FieldKind::Form::fixed_array: {
        if (!v.is_seq() || v.seq().items.size() != k.length()) mismatch(path_, to_string(k), found_of(v));
        elements(k.element(), v.seq().items);
        break;
      }
      case FieldKind::Form::named: named(lookup(reg_, k.type_name()), v); break;
    }
  }

 private:
  void elements(const FieldKind& element, const std::vector<DynValue>& items) {
    if (element.form() == FieldKind::Form::primitive && element.prim() == Prim::u8 && out_ &&
        out_->encoding() == Encoding::native) {
      // Byte sequences go straight through.
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto* s = items[i].is_scalar() ? std::get_if<std::uint8_t>(&items[i].scalar()) : nullptr;
        if (!s) {
          path_.push_index(i);
          mismatch(path_, "u8", found_of(items[i]));
        }
        out_->put(*s);
      }
      return;
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      path_.push_index(i);
      kind(element, items[i]);
      path_.pop();
    }
  }

  void primitive(Prim p, const DynValue& v) {
    if (p == Prim::string) {
      if (!v.is_string()) mismatch(path_, "string", found_of(v));
      if (v.string().size() > kMaxLength)
        throw Error(ErrorCode::length_overflow, "string at " + path_.str() + " exceeds 2^31-1 bytes");
      if (out_) out_->put_string(v.string());
      return;
    }
    if (!v.is_scalar() || prim_of(v.scalar()) != p)
      mismatch(path_, std::string(to_string(p)), found_of(v));
    if (out_) std::visit([&](auto x) { out_->put(x); }, v.scalar());
  }

  void named(const TypeDescriptor& d, const DynValue& v) {
    if (d.is_record()) {
      const auto& fields = d.record().fields;
      if (!v.is_rec() || v.rec().type_name != d.name || v.rec().fields.size() != fields.size())
        mismatch(path_, "record " + d.name + " with " + std::to_string(fields.size()) + " fields",
                 v.is_rec() ? "record " + v.rec().type_name + " with " +
                                  std::to_string(v.rec().fields.size()) + " fields"
                            : found_of(v));
      for (std::size_t i = 0; i < fields.size(); ++i) {
        path_.push_field(fields[i].name);
        kind(fields[i].kind, v.rec().fields[i]);
        path_.pop();
      }
      return;
    }
    if (!v.is_var() || v.var().type_name != d.name) mismatch(path_, "variant " + d.name, found_of(v));
    const auto& var = v.var();
    auto index = d.arm_index(var.arm);
    if (!index) mismatch(path_, "an arm of " + d.name, "arm '" + var.arm + "'");
    const auto& arm = d.variant().arms[*index];
    if (arm.payload.has_value() != (var.payload != nullptr))
      mismatch(path_, arm.payload ? "payload for arm '" + arm.name + "'" : "no payload for arm '" + arm.name + "'",
               var.payload ? "a payload" : "none");
    if (out_) out_->put<std::uint32_t>(*index);
    if (arm.payload) {
      path_.push_field(arm.name);
      kind(*arm.payload, *var.payload);
      path_.pop();
    }
  }

  const TypeRegistry& reg_;
  Buffer* out_;
  Path& path_;
};

// Smallest possible encoding of a kind; bounds hostile sequence lengths.
std::size_t min_size(const TypeRegistry& reg, const FieldKind& k, Encoding enc, int depth) {
  if (depth > kMaxDepth) return 0;
  switch (k.form()) {
    case FieldKind::Form::primitive:
      if (enc == Encoding::portable)
        return k.prim() == Prim::i64 || k.prim() == Prim::u64 || k.prim() == Prim::f64 ? 8 : 4;
      switch (k.prim()) {
        case Prim::boolean:
        case Prim::u8: return 1;
        case Prim::i64:
        case Prim::u64:
        case Prim::f64: return 8;
        default: return 4;
      }
    case FieldKind::Form::sequence: return 4;
    case FieldKind::Form::fixed_array: return k.length() * min_size(reg, k.element(), enc, depth + 1);
    case FieldKind::Form::named: {
      const TypeDescriptor* d = reg.find(k.type_name());
      if (!d) return 0;
      if (!d->is_record()) return 4;
      std::size_t total = 0;
      for (const auto& f : d->record().fields) total += min_size(reg, f.kind, enc, depth + 1);
      return total;
    }
  }
  return 0;
}

class Reader {
 public:
  Reader(const TypeRegistry& reg, Buffer& in) : reg_(reg), in_(in) {}

  DynValue kind(const FieldKind& k, int depth) {
    if (depth > kMaxDepth)
      throw Error(ErrorCode::nesting_too_deep, "encoding nested deeper than " + std::to_string(kMaxDepth));
    switch (k.form()) {
      case FieldKind::Form::primitive: return primitive(k.prim());
      case FieldKind::Form::sequence: {
        std::uint32_t n = in_.take_length();
        std::size_t each = min_size(reg_, k.element(), in_.encoding(), 0);
        if (each > 0 && std::size_t{n} * each > in_.remaining())
          throw Truncated(std::size_t{n} * each, in_.remaining());
        return elements(k.element(), n, depth);
      }
      case FieldKind::Form::fixed_array: return elements(k.element(), k.length(), depth);
      case FieldKind::Form::named: return named(lookup(reg_, k.type_name()), depth);
    }
    return {};
  }

 private:
  DynValue elements(const FieldKind& element, std::uint32_t n, int depth) {
    std::vector<DynValue> items;
    items.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) items.push_back(kind(element, depth + 1));
    return DynValue::seq(std::move(items));
  }

  DynValue primitive(Prim p) {
    switch (p) {
      case Prim::i32: return DynValue::prim(in_.take<std::int32_t>());
      case Prim::u32: return DynValue::prim(in_.take<std::uint32_t>());
      case Prim::i64: return DynValue::prim(in_.take<std::int64_t>());
      case Prim::u64: return DynValue::prim(in_.take<std::uint64_t>());
      case Prim::f32: return DynValue::prim(in_.take<float>());
      case Prim::f64: return DynValue::prim(in_.take<double>());
      case Prim::boolean: return DynValue::prim(in_.take<bool>());
      case Prim::u8: return DynValue::prim(in_.take<std::uint8_t>());
      case Prim::string: return DynValue::str(in_.take_string());
    }
    return {};
  }

  DynValue named(const TypeDescriptor& d, int depth) {
    if (d.is_record()) {
      std::vector<DynValue> fields;
      fields.reserve(d.record().fields.size());
      for (const auto& f : d.record().fields) fields.push_back(kind(f.kind, depth + 1));
      return DynValue::rec(d.name, std::move(fields));
    }
    std::uint32_t tag = in_.take<std::uint32_t>();
    const auto& arms = d.variant().arms;
    if (tag >= arms.size())
      throw Error(ErrorCode::malformed_variant_tag,
                  "malformed variant tag " + std::to_string(tag) + " for '" + d.name + "'");
    const auto& arm = arms[tag];
    if (!arm.payload) return DynValue::var(d.name, arm.name);
    return DynValue::var(d.name, arm.name, kind(*arm.payload, depth + 1));
  }

  const TypeRegistry& reg_;
  Buffer& in_;
};

FieldKind inferred_kind(const DynValue& v) {
  switch (v.node().index()) {
    case 0: return FieldKind::primitive(prim_of(v.scalar()));
    case 1: return FieldKind::primitive(Prim::string);
    case 3: return FieldKind::named(v.rec().type_name);
    case 4: return FieldKind::named(v.var().type_name);
    default:
      throw Error(ErrorCode::schema_mismatch,
                  "a bare sequence needs an explicit kind (seq<T> or [T; n])");
  }
}

}  // namespace

void pack(Buffer& buf, const TypeRegistry& registry, const FieldKind& kind, const DynValue& value) {
  std::size_t mark = buf.size();
  Path path("value");
  try {
    Writer(registry, &buf, path).kind(kind, value);
  } catch (...) {
    buf.truncate(mark);
    throw;
  }
}

void pack(Buffer& buf, const TypeRegistry& registry, const DynValue& value) {
  pack(buf, registry, inferred_kind(value), value);
}

void check_conforms(const TypeRegistry& registry, const FieldKind& kind, const DynValue& value) {
  Path path("value");
  Writer(registry, nullptr, path).kind(kind, value);
}

DynValue unpack(Buffer& buf, const TypeRegistry& registry, const FieldKind& kind) {
  return Reader(registry, buf).kind(kind, 0);
}

DynValue unpack(Buffer& buf, const TypeRegistry& registry, std::string_view type_name) {
  if (auto p = prim_from_name(type_name)) return unpack(buf, registry, FieldKind::primitive(*p));
  if (!registry.contains(type_name))
    throw Error(ErrorCode::unknown_type, "unknown type '" + std::string(type_name) + "'");
  return unpack(buf, registry, FieldKind::named(std::string(type_name)));
}

}  // namespace packmp
