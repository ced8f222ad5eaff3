#include "packmp/typedesc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "packmp/error.hpp"

namespace packmp {

namespace {

constexpr int kMaxNesting = 64;

constexpr std::string_view kPrimNames[] = {"i32", "u32", "i64", "u64", "f32",
                                           "f64", "bool", "u8", "string"};

bool reserved(std::string_view word) {
  return word == "record" || word == "variant" || word == "seq" ||
         prim_from_name(word).has_value();
}

struct Token {
  enum class Type { ident, integer, punct, end };
  Type type;
  std::string text;
  int line;
  int column;
};

std::string describe_token(const Token& t) {
  switch (t.type) {
    case Token::Type::end: return "end of input";
    case Token::Type::integer: return "integer " + t.text;
    default: return "'" + t.text + "'";
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space();
    Token t{Token::Type::end, "", line_, column_};
    if (pos_ >= src_.size()) return t;
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        advance();
      t.type = Token::Type::ident;
      t.text = std::string(src_.substr(start, pos_ - start));
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
        advance();
      t.type = Token::Type::integer;
      t.text = std::string(src_.substr(start, pos_ - start));
      return t;
    }
    if (std::string_view("{}:;<>[]()").find(c) != std::string_view::npos) {
      advance();
      t.type = Token::Type::punct;
      t.text = std::string(1, c);
      return t;
    }
    throw SyntaxError(line_, column_, "a token, found character '" + std::string(1, c) + "'");
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lexer_(src) { tok_ = lexer_.next(); }

  std::vector<TypeDescriptor> file() {
    std::vector<TypeDescriptor> out;
    std::set<std::string, std::less<>> names;
    while (tok_.type != Token::Type::end) {
      TypeDescriptor d;
      if (is_ident("record")) {
        d = record();
      } else if (is_ident("variant")) {
        d = variant();
      } else {
        fail("'record' or 'variant'");
      }
      if (!names.insert(d.name).second)
        throw Error(ErrorCode::duplicate_type, "duplicate type '" + d.name + "'");
      out.push_back(std::move(d));
    }
    return out;
  }

  FieldKind lone_kind() {
    FieldKind k = kind(0);
    if (tok_.type != Token::Type::end) fail("end of input");
    return k;
  }

 private:
  [[noreturn]] void fail(const std::string& expected) const {
    throw SyntaxError(tok_.line, tok_.column, expected + ", found " + describe_token(tok_));
  }

  bool is_ident(std::string_view word) const {
    return tok_.type == Token::Type::ident && tok_.text == word;
  }

  bool is_punct(char c) const {
    return tok_.type == Token::Type::punct && tok_.text[0] == c;
  }

  void expect(char c) {
    if (!is_punct(c)) fail(std::string("'") + c + "'");
    tok_ = lexer_.next();
  }

  std::string identifier(const char* what) {
    if (tok_.type != Token::Type::ident) fail(what);
    std::string s = tok_.text;
    tok_ = lexer_.next();
    return s;
  }

  std::string type_name() {
    if (tok_.type == Token::Type::ident && reserved(tok_.text)) fail("type name (not a reserved word)");
    return identifier("type name");
  }

  TypeDescriptor record() {
    tok_ = lexer_.next();
    TypeDescriptor d{type_name(), RecordShape{}};
    expect('{');
    auto& fields = std::get<RecordShape>(d.shape).fields;
    while (!is_punct('}')) {
      std::string name = identifier("field name or '}'");
      expect(':');
      FieldKind k = kind(0);
      expect(';');
      if (std::any_of(fields.begin(), fields.end(), [&](auto& f) { return f.name == name; }))
        throw Error(ErrorCode::duplicate_field,
                    "duplicate field '" + name + "' in type '" + d.name + "'");
      fields.push_back({std::move(name), std::move(k)});
    }
    expect('}');
    return d;
  }

  TypeDescriptor variant() {
    tok_ = lexer_.next();
    TypeDescriptor d{type_name(), VariantShape{}};
    expect('{');
    auto& arms = std::get<VariantShape>(d.shape).arms;
    do {
      std::string name = identifier(arms.empty() ? "arm name" : "arm name or '}'");
      std::optional<FieldKind> payload;
      if (is_punct('(')) {
        tok_ = lexer_.next();
        payload = kind(0);
        expect(')');
      }
      expect(';');
      if (std::any_of(arms.begin(), arms.end(), [&](auto& a) { return a.name == name; }))
        throw Error(ErrorCode::duplicate_field,
                    "duplicate arm '" + name + "' in type '" + d.name + "'");
      arms.push_back({std::move(name), std::move(payload)});
    } while (!is_punct('}'));
    expect('}');
    return d;
  }

  FieldKind kind(int depth) {
    if (depth >= kMaxNesting) fail("kind nested at most " + std::to_string(kMaxNesting) + " deep");
    if (is_punct('[')) {
      tok_ = lexer_.next();
      FieldKind element = kind(depth + 1);
      expect(';');
      if (tok_.type != Token::Type::integer) fail("array length");
      std::uint64_t n = 0;
      auto [p, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), n);
      if (ec != std::errc() || n < 1 || n > 0xFFFFFFFFu) fail("array length in [1, 4294967295]");
      tok_ = lexer_.next();
      expect(']');
      return FieldKind::fixed_array(std::move(element), static_cast<std::uint32_t>(n));
    }
    if (tok_.type != Token::Type::ident) fail("kind");
    if (auto p = prim_from_name(tok_.text)) {
      tok_ = lexer_.next();
      return FieldKind::primitive(*p);
    }
    if (tok_.text == "seq") {
      tok_ = lexer_.next();
      expect('<');
      FieldKind element = kind(depth + 1);
      expect('>');
      return FieldKind::sequence(std::move(element));
    }
    return FieldKind::named(type_name());
  }

  Lexer lexer_;
  Token tok_;
};

void write_kind(std::ostream& os, const FieldKind& k) {
  switch (k.form()) {
    case FieldKind::Form::primitive: os << to_string(k.prim()); break;
    case FieldKind::Form::sequence:
      os << "seq<";
      write_kind(os, k.element());
      os << '>';
      break;
    case FieldKind::Form::fixed_array:
      os << '[';
      write_kind(os, k.element());
      os << "; " << k.length() << ']';
      break;
    case FieldKind::Form::named: os << k.type_name(); break;
  }
}

// Calls fn(name, through_sequence) for every Named reference inside k.
template <class Fn>
void each_reference(const FieldKind& k, bool via_seq, Fn&& fn) {
  switch (k.form()) {
    case FieldKind::Form::primitive: break;
    case FieldKind::Form::sequence: each_reference(k.element(), true, fn); break;
    case FieldKind::Form::fixed_array: each_reference(k.element(), via_seq, fn); break;
    case FieldKind::Form::named: fn(k.type_name(), via_seq); break;
  }
}

template <class Fn>
void each_reference(const TypeDescriptor& d, Fn&& fn) {
  if (d.is_record()) {
    for (const auto& f : d.record().fields) each_reference(f.kind, false, fn);
  } else {
    for (const auto& a : d.variant().arms)
      if (a.payload) each_reference(*a.payload, false, fn);
  }
}

}  // namespace

std::string_view to_string(Prim p) noexcept {
  return kPrimNames[static_cast<std::size_t>(p)];
}

std::optional<Prim> prim_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < std::size(kPrimNames); ++i)
    if (kPrimNames[i] == name) return static_cast<Prim>(i);
  return std::nullopt;
}

FieldKind FieldKind::primitive(Prim p) {
  FieldKind k;
  k.form_ = Form::primitive;
  k.prim_ = p;
  return k;
}

FieldKind FieldKind::sequence(FieldKind element) {
  FieldKind k;
  k.form_ = Form::sequence;
  k.element_ = std::make_shared<const FieldKind>(std::move(element));
  return k;
}

FieldKind FieldKind::fixed_array(FieldKind element, std::uint32_t length) {
  if (length < 1) throw Error(ErrorCode::invalid_argument, "fixed array length must be >= 1");
  FieldKind k;
  k.form_ = Form::fixed_array;
  k.length_ = length;
  k.element_ = std::make_shared<const FieldKind>(std::move(element));
  return k;
}

FieldKind FieldKind::named(std::string type_name) {
  FieldKind k;
  k.form_ = Form::named;
  k.name_ = std::move(type_name);
  return k;
}

bool operator==(const FieldKind& a, const FieldKind& b) {
  if (a.form_ != b.form_) return false;
  switch (a.form_) {
    case FieldKind::Form::primitive: return a.prim_ == b.prim_;
    case FieldKind::Form::sequence: return a.element() == b.element();
    case FieldKind::Form::fixed_array:
      return a.length_ == b.length_ && a.element() == b.element();
    case FieldKind::Form::named: return a.name_ == b.name_;
  }
  return false;
}

std::string to_string(const FieldKind& kind) {
  std::ostringstream os;
  write_kind(os, kind);
  return os.str();
}

std::optional<std::uint32_t> TypeDescriptor::arm_index(std::string_view arm) const {
  if (is_record()) return std::nullopt;
  const auto& arms = variant().arms;
  for (std::size_t i = 0; i < arms.size(); ++i)
    if (arms[i].name == arm) return static_cast<std::uint32_t>(i);
  return std::nullopt;
}

std::vector<TypeDescriptor> parse_idl(std::string_view source) {
  return Parser(source).file();
}

FieldKind parse_kind(std::string_view text) { return Parser(text).lone_kind(); }

std::string to_idl(std::span<const TypeDescriptor> descriptors) {
  std::ostringstream os;
  for (const auto& d : descriptors) {
    if (d.is_record()) {
      os << "record " << d.name << " {\n";
      for (const auto& f : d.record().fields) {
        os << "  " << f.name << ": ";
        write_kind(os, f.kind);
        os << ";\n";
      }
    } else {
      os << "variant " << d.name << " {\n";
      for (const auto& a : d.variant().arms) {
        os << "  " << a.name;
        if (a.payload) {
          os << '(';
          write_kind(os, *a.payload);
          os << ')';
        }
        os << ";\n";
      }
    }
    os << "}\n";
  }
  return os.str();
}

std::string describe(std::span<const TypeDescriptor> descriptors) {
  std::ostringstream os;
  for (const auto& d : descriptors) {
    if (d.is_record()) {
      const auto& fields = d.record().fields;
      os << "record " << d.name << " (" << fields.size() << " fields)\n";
      for (std::size_t i = 0; i < fields.size(); ++i) {
        os << "  " << i << ' ' << fields[i].name << ": ";
        write_kind(os, fields[i].kind);
        os << '\n';
      }
    } else {
      const auto& arms = d.variant().arms;
      os << "variant " << d.name << " (" << arms.size() << " arms)\n";
      for (std::size_t i = 0; i < arms.size(); ++i) {
        os << "  " << i << ' ' << arms[i].name;
        if (arms[i].payload) {
          os << '(';
          write_kind(os, *arms[i].payload);
          os << ')';
        }
        os << '\n';
      }
    }
  }
  return os.str();
}

std::string ValidationIssue::message() const {
  if (kind == Kind::unresolved_type)
    return "unresolved type '" + name + "' referenced from '" + detail + "'";
  return "illegal recursion (not through seq): " + detail;
}

TypeRegistry& TypeRegistry::add(TypeDescriptor descriptor) {
  std::string name = descriptor.name;
  if (!entries_.emplace(name, std::move(descriptor)).second)
    throw Error(ErrorCode::duplicate_type, "duplicate type '" + name + "'");
  return *this;
}

const TypeDescriptor* TypeRegistry::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<ValidationIssue> TypeRegistry::validate() const {
  std::vector<ValidationIssue> issues;
  std::map<std::string, std::vector<std::string>, std::less<>> direct;

  for (const auto& [name, d] : entries_) {
    auto& edges = direct[name];
    each_reference(d, [&](const std::string& ref, bool via_seq) {
      if (!contains(ref)) {
        issues.push_back({ValidationIssue::Kind::unresolved_type, ref, name});
      } else if (!via_seq && std::find(edges.begin(), edges.end(), ref) == edges.end()) {
        edges.push_back(ref);
      }
    });
  }

  // DFS over non-sequence edges; each back edge closes one reported cycle.
  enum class Mark { white, grey, black };
  std::map<std::string, Mark, std::less<>> mark;
  for (const auto& [name, _] : entries_) mark[name] = Mark::white;
  std::vector<std::string> stack;

  auto visit = [&](auto& self, const std::string& node) -> void {
    mark[node] = Mark::grey;
    stack.push_back(node);
    for (const auto& next : direct[node]) {
      if (mark[next] == Mark::grey) {
        auto from = std::find(stack.begin(), stack.end(), next);
        std::string path;
        for (auto it = from; it != stack.end(); ++it) path += *it + " -> ";
        path += next;
        issues.push_back({ValidationIssue::Kind::illegal_recursion, next, path});
      } else if (mark[next] == Mark::white) {
        self(self, next);
      }
    }
    stack.pop_back();
    mark[node] = Mark::black;
  };
  for (const auto& [name, _] : entries_)
    if (mark[name] == Mark::white) visit(visit, name);

  return issues;
}

TypeRegistry TypeRegistry::from_idl(std::string_view source) {
  TypeRegistry reg;
  for (auto& d : parse_idl(source)) reg.add(std::move(d));
  auto issues = reg.validate();
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw Error(first.kind == ValidationIssue::Kind::unresolved_type
                    ? ErrorCode::unresolved_type
                    : ErrorCode::illegal_recursion,
                first.message());
  }
  return reg;
}

}  // namespace packmp
