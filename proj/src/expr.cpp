#include "cfident/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>

namespace cfident {

// ---------------------------------------------------------------------------
// SymbolTable

const Symbol* SymbolTable::add(std::string name, SymbolKind kind, int order) {
  if (name.empty()) throw Error("symbol name must not be empty");
  if (by_name_.count(name))
    throw Error("duplicate symbol name '" + name + "' in symbol table");
  Symbol& s = storage_.emplace_back();
  s.name = std::move(name);
  s.kind = kind;
  s.order = order;
  s.index = static_cast<int>(ordered_.size());
  ordered_.push_back(&s);
  by_name_.emplace(s.name, &s);
  return &s;
}

const Symbol* SymbolTable::add_input_family(const std::string& base, int max_order) {
  if (max_input_order_ >= 0) throw Error("input family already created");
  if (max_order < 0) throw Error("input family order must be >= 0");
  const Symbol* u0 = add(base, SymbolKind::Input, 0);
  inputs_.push_back(u0);
  for (int j = 1; j <= max_order; ++j)
    inputs_.push_back(add(base + std::to_string(j), SymbolKind::Input, j));
  max_input_order_ = max_order;
  return u0;
}

const Symbol* SymbolTable::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : it->second;
}

const Symbol* SymbolTable::input(int order) const {
  if (order < 0 || order > max_input_order_) return nullptr;
  return inputs_[static_cast<std::size_t>(order)];
}

std::vector<const Symbol*> SymbolTable::of_kind(SymbolKind k) const {
  std::vector<const Symbol*> out;
  for (const Symbol* s : ordered_)
    if (s->kind == k) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// Node pool (hash-consing)

namespace {

struct NodeKey {
  ExprOp op;
  std::uint64_t value_bits;
  const Symbol* sym;
  const ExprNode* a;
  const ExprNode* b;
  bool operator==(const NodeKey&) const = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(k.op));
    h = mix64(h ^ k.value_bits);
    h = mix64(h ^ reinterpret_cast<std::uintptr_t>(k.sym));
    h = mix64(h ^ reinterpret_cast<std::uintptr_t>(k.a));
    h = mix64(h ^ reinterpret_cast<std::uintptr_t>(k.b));
    return static_cast<std::size_t>(h);
  }
};

struct NodePool {
  std::mutex mutex;
  std::deque<ExprNode> nodes;
  std::unordered_map<NodeKey, const ExprNode*, NodeKeyHash> intern;
  std::size_t limit = 1'000'000;

  const ExprNode* get(ExprOp op, double value, const Symbol* sym, const ExprNode* a,
                      const ExprNode* b) {
    std::uint64_t bits;
    std::memcpy(&bits, &value, sizeof bits);
    NodeKey key{op, bits, sym, a, b};
    std::lock_guard lock(mutex);
    auto it = intern.find(key);
    if (it != intern.end()) return it->second;
    if (nodes.size() >= limit)
      throw LimitError("expression node limit (" + std::to_string(limit) +
                       ") exceeded; raise it with set_expr_node_limit() or simplify the model");
    ExprNode& n = nodes.emplace_back();
    n.op = op;
    n.value = value;
    n.sym = sym;
    n.a = a;
    n.b = b;
    intern.emplace(key, &n);
    return &n;
  }
};

NodePool& pool() {
  static NodePool p;
  return p;
}

bool is_unary(ExprOp op) {
  switch (op) {
    case ExprOp::Tanh:
    case ExprOp::Atanh:
    case ExprOp::Ln:
    case ExprOp::Exp:
    case ExprOp::Sqrt:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::size_t expr_node_count() {
  std::lock_guard lock(pool().mutex);
  return pool().nodes.size();
}

std::size_t expr_node_limit() { return pool().limit; }

void set_expr_node_limit(std::size_t limit) {
  std::lock_guard lock(pool().mutex);
  pool().limit = limit;
}

Expr make_constant(double v) { return Expr(pool().get(ExprOp::Constant, v, nullptr, nullptr, nullptr)); }

Expr make_symbol(const Symbol* s) {
  if (!s) throw Error("null symbol");
  return Expr(pool().get(ExprOp::Symbol, 0.0, s, nullptr, nullptr));
}

Expr make_unary(ExprOp op, Expr a) {
  if (!is_unary(op)) throw Error("make_unary: not a unary op");
  return Expr(pool().get(op, 0.0, nullptr, a.node(), nullptr));
}

Expr make_binary(ExprOp op, Expr a, Expr b) {
  switch (op) {
    case ExprOp::Add:
    case ExprOp::Sub:
    case ExprOp::Mul:
    case ExprOp::Div:
    case ExprOp::Pow:
      break;
    default:
      throw Error("make_binary: not a binary op");
  }
  return Expr(pool().get(op, 0.0, nullptr, a.node(), b.node()));
}

// ---------------------------------------------------------------------------
// Simplifying constructors

Expr operator+(Expr a, Expr b) {
  if (a.is_constant() && b.is_constant()) return make_constant(a.constant_value() + b.constant_value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return make_binary(ExprOp::Add, a, b);
}

Expr operator-(Expr a, Expr b) {
  if (a.is_constant() && b.is_constant()) return make_constant(a.constant_value() - b.constant_value());
  if (b.is_constant(0.0)) return a;
  if (a.same(b)) return make_constant(0.0);
  if (a.is_constant(0.0)) return -b;
  return make_binary(ExprOp::Sub, a, b);
}

Expr operator*(Expr a, Expr b) {
  if (a.is_constant() && b.is_constant()) return make_constant(a.constant_value() * b.constant_value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return make_constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  // fold constants across one nested product: c1 * (c2 * x) -> (c1*c2) * x
  if (a.is_constant() && b.valid() && b.op() == ExprOp::Mul && b.left().is_constant())
    return make_constant(a.constant_value() * b.left().constant_value()) * b.right();
  if (b.is_constant() && a.valid() && a.op() == ExprOp::Mul && a.left().is_constant())
    return make_constant(b.constant_value() * a.left().constant_value()) * a.right();
  return make_binary(ExprOp::Mul, a, b);
}

Expr operator/(Expr a, Expr b) {
  if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
    return make_constant(a.constant_value() / b.constant_value());
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(0.0)) return make_constant(0.0);
  if (a.same(b)) return make_constant(1.0);
  return make_binary(ExprOp::Div, a, b);
}

Expr operator-(Expr a) {
  if (a.is_constant()) return make_constant(-a.constant_value());
  return make_constant(-1.0) * a;
}

Expr pow(Expr base, Expr exponent) {
  if (exponent.is_constant(1.0)) return base;
  if (exponent.is_constant(0.0)) return make_constant(1.0);
  if (base.is_constant(1.0)) return make_constant(1.0);
  if (base.is_constant() && exponent.is_constant()) {
    double v = std::pow(base.constant_value(), exponent.constant_value());
    if (std::isfinite(v)) return make_constant(v);
  }
  return make_binary(ExprOp::Pow, base, exponent);
}

Expr pow(Expr base, double exponent) { return pow(base, make_constant(exponent)); }

namespace {

Expr fold_unary(ExprOp op, Expr a) {
  if (a.is_constant()) {
    double x = a.constant_value(), v = 0.0;
    bool ok = true;
    switch (op) {
      case ExprOp::Tanh: v = std::tanh(x); break;
      case ExprOp::Atanh: ok = x > -1.0 && x < 1.0; v = ok ? std::atanh(x) : 0.0; break;
      case ExprOp::Ln: ok = x > 0.0; v = ok ? std::log(x) : 0.0; break;
      case ExprOp::Exp: v = std::exp(x); ok = std::isfinite(v); break;
      case ExprOp::Sqrt: ok = x >= 0.0; v = ok ? std::sqrt(x) : 0.0; break;
      default: ok = false; break;
    }
    if (ok) return make_constant(v);
  }
  return make_unary(op, a);
}

}  // namespace

Expr tanh(Expr a) { return fold_unary(ExprOp::Tanh, a); }
Expr atanh(Expr a) { return fold_unary(ExprOp::Atanh, a); }
Expr ln(Expr a) { return fold_unary(ExprOp::Ln, a); }
Expr exp(Expr a) { return fold_unary(ExprOp::Exp, a); }
Expr sqrt(Expr a) { return fold_unary(ExprOp::Sqrt, a); }

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Parser {
  std::string_view text;
  std::size_t pos = 0;
  const SymbolTable* table;

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw ParseError(what + " at position " + std::to_string(at), at);
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+') {
        ++pos;
        e = make_binary(ExprOp::Add, e, parse_term());
      } else if (c == '-') {
        ++pos;
        e = make_binary(ExprOp::Sub, e, parse_term());
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      char c = peek();
      if (c == '*') {
        ++pos;
        e = make_binary(ExprOp::Mul, e, parse_factor());
      } else if (c == '/') {
        ++pos;
        e = make_binary(ExprOp::Div, e, parse_factor());
      } else {
        return e;
      }
    }
  }

  Expr parse_factor() {
    if (peek() == '-') {
      ++pos;
      Expr operand = parse_factor();
      if (operand.is_constant()) return make_constant(-operand.constant_value());
      return make_binary(ExprOp::Mul, make_constant(-1.0), operand);
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (peek() == '^') {
      ++pos;
      // right-associative; the exponent may itself carry a unary minus
      return make_binary(ExprOp::Pow, base, parse_factor());
    }
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression", pos);
    char c = text[pos];
    if (c == '(') {
      std::size_t open = pos++;
      Expr e = parse_expr();
      if (!eat(')')) fail("missing ')' for '(' ", open);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail(std::string("unexpected character '") + c + "'", pos);
  }

  Expr parse_number() {
    const char* begin = text.data() + pos;
    const char* end = text.data() + text.size();
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc()) fail("malformed number", pos);
    pos += static_cast<std::size_t>(res.ptr - begin);
    return make_constant(value);
  }

  Expr parse_identifier() {
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    std::string_view name = text.substr(start, pos - start);
    static const std::pair<std::string_view, ExprOp> kFunctions[] = {
        {"tanh", ExprOp::Tanh}, {"atanh", ExprOp::Atanh}, {"ln", ExprOp::Ln},
        {"exp", ExprOp::Exp},   {"sqrt", ExprOp::Sqrt},
    };
    for (auto [fname, op] : kFunctions) {
      if (name == fname) {
        if (!eat('(')) fail("function '" + std::string(name) + "' needs '('", pos);
        Expr arg = parse_expr();
        if (!eat(')')) fail("missing ')' in call to '" + std::string(name) + "'", pos);
        return make_unary(op, arg);
      }
    }
    const Symbol* sym = table->find(name);
    if (!sym)
      throw ParseError("unknown identifier '" + std::string(name) + "' at position " +
                           std::to_string(start),
                       start);
    return make_symbol(sym);
  }
};

}  // namespace

Expr parse(std::string_view text, const SymbolTable& table) {
  Parser p{text, 0, &table};
  Expr e = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input", p.pos);
  return e;
}

// ---------------------------------------------------------------------------
// Printer

namespace {

void print_rec(const ExprNode* n, std::string& out) {
  switch (n->op) {
    case ExprOp::Constant:
      out += format_double(n->value);
      return;
    case ExprOp::Symbol:
      out += n->sym->name;
      return;
    case ExprOp::Add:
    case ExprOp::Sub:
    case ExprOp::Mul:
    case ExprOp::Div:
    case ExprOp::Pow: {
      const char* sep = n->op == ExprOp::Add   ? " + "
                        : n->op == ExprOp::Sub ? " - "
                        : n->op == ExprOp::Mul ? " * "
                        : n->op == ExprOp::Div ? " / "
                                               : " ^ ";
      out += '(';
      print_rec(n->a, out);
      out += sep;
      print_rec(n->b, out);
      out += ')';
      return;
    }
    case ExprOp::Tanh: out += "tanh("; break;
    case ExprOp::Atanh: out += "atanh("; break;
    case ExprOp::Ln: out += "ln("; break;
    case ExprOp::Exp: out += "exp("; break;
    case ExprOp::Sqrt: out += "sqrt("; break;
  }
  print_rec(n->a, out);
  out += ')';
}

}  // namespace

std::string to_string(Expr e) {
  if (!e.valid()) return "<null>";
  std::string out;
  print_rec(e.node(), out);
  return out;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr diff_rec(const ExprNode* n, const Symbol* wrt,
              std::unordered_map<const ExprNode*, Expr>& memo) {
  auto it = memo.find(n);
  if (it != memo.end()) return it->second;
  Expr a(n->a), b(n->b);
  Expr result;
  switch (n->op) {
    case ExprOp::Constant:
      result = make_constant(0.0);
      break;
    case ExprOp::Symbol:
      result = make_constant(n->sym == wrt ? 1.0 : 0.0);
      break;
    case ExprOp::Add:
      result = diff_rec(n->a, wrt, memo) + diff_rec(n->b, wrt, memo);
      break;
    case ExprOp::Sub:
      result = diff_rec(n->a, wrt, memo) - diff_rec(n->b, wrt, memo);
      break;
    case ExprOp::Mul:
      result = diff_rec(n->a, wrt, memo) * b + a * diff_rec(n->b, wrt, memo);
      break;
    case ExprOp::Div: {
      Expr da = diff_rec(n->a, wrt, memo), db = diff_rec(n->b, wrt, memo);
      result = (da * b - a * db) / (b * b);
      break;
    }
    case ExprOp::Pow: {
      Expr da = diff_rec(n->a, wrt, memo), db = diff_rec(n->b, wrt, memo);
      if (b.is_constant()) {
        // d a^c = c * a^(c-1) * a'; avoids ln(a) so even-power chains stay
        // defined for negative bases
        result = b * pow(a, b.constant_value() - 1.0) * da;
      } else {
        Expr self(n);
        result = self * (db * ln(a) + b * da / a);
      }
      break;
    }
    case ExprOp::Tanh: {
      Expr t(n);
      result = (make_constant(1.0) - t * t) * diff_rec(n->a, wrt, memo);
      break;
    }
    case ExprOp::Atanh:
      result = diff_rec(n->a, wrt, memo) / (make_constant(1.0) - a * a);
      break;
    case ExprOp::Ln:
      result = diff_rec(n->a, wrt, memo) / a;
      break;
    case ExprOp::Exp:
      result = Expr(n) * diff_rec(n->a, wrt, memo);
      break;
    case ExprOp::Sqrt:
      result = diff_rec(n->a, wrt, memo) / (make_constant(2.0) * Expr(n));
      break;
  }
  memo.emplace(n, result);
  return result;
}

}  // namespace

Expr differentiate(Expr e, const Symbol* wrt) {
  if (!e.valid()) throw Error("differentiate: null expression");
  std::unordered_map<const ExprNode*, Expr> memo;
  return diff_rec(e.node(), wrt, memo);
}

// ---------------------------------------------------------------------------
// Substitution

namespace {

Expr subst_rec(const ExprNode* n, const ExprBindings& map,
               std::unordered_map<const ExprNode*, Expr>& memo) {
  auto it = memo.find(n);
  if (it != memo.end()) return it->second;
  Expr result;
  switch (n->op) {
    case ExprOp::Constant:
      result = Expr(n);
      break;
    case ExprOp::Symbol: {
      auto hit = map.find(n->sym);
      result = hit == map.end() ? Expr(n) : hit->second;
      break;
    }
    default: {
      Expr a = subst_rec(n->a, map, memo);
      if (n->b) {
        Expr b = subst_rec(n->b, map, memo);
        result = (a.node() == n->a && b.node() == n->b) ? Expr(n) : make_binary(n->op, a, b);
      } else {
        result = a.node() == n->a ? Expr(n) : make_unary(n->op, a);
      }
      break;
    }
  }
  memo.emplace(n, result);
  return result;
}

}  // namespace

Expr substitute(Expr e, const ExprBindings& map) {
  if (!e.valid()) throw Error("substitute: null expression");
  std::unordered_map<const ExprNode*, Expr> memo;
  return subst_rec(e.node(), map, memo);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

[[noreturn]] void domain_fail(const ExprNode* n, const std::string& what) {
  std::string repr = to_string(Expr(n));
  if (repr.size() > 160) repr = repr.substr(0, 157) + "...";
  throw DomainError(what + " in '" + repr + "'");
}

double eval_rec(const ExprNode* n, const Bindings& point,
                std::unordered_map<const ExprNode*, double>& memo) {
  auto it = memo.find(n);
  if (it != memo.end()) return it->second;
  double result = 0.0;
  switch (n->op) {
    case ExprOp::Constant:
      result = n->value;
      break;
    case ExprOp::Symbol: {
      auto hit = point.find(n->sym);
      if (hit == point.end())
        throw Error("evaluate: symbol '" + n->sym->name + "' is unbound");
      result = hit->second;
      break;
    }
    case ExprOp::Add:
      result = eval_rec(n->a, point, memo) + eval_rec(n->b, point, memo);
      break;
    case ExprOp::Sub:
      result = eval_rec(n->a, point, memo) - eval_rec(n->b, point, memo);
      break;
    case ExprOp::Mul:
      result = eval_rec(n->a, point, memo) * eval_rec(n->b, point, memo);
      break;
    case ExprOp::Div: {
      double num = eval_rec(n->a, point, memo), den = eval_rec(n->b, point, memo);
      if (den == 0.0) domain_fail(n, "division by zero (denominator = 0)");
      result = num / den;
      break;
    }
    case ExprOp::Pow: {
      double base = eval_rec(n->a, point, memo), ex = eval_rec(n->b, point, memo);
      if (base == 0.0 && ex <= 0.0)
        domain_fail(n, "0 raised to non-positive power " + format_double(ex));
      if (base < 0.0 && std::nearbyint(ex) != ex)
        domain_fail(n, "negative base " + format_double(base) + " raised to non-integer power " +
                           format_double(ex));
      // keep bit-identical with Tape::eval's fast paths
      if (ex == 2.0) {
        result = base * base;
      } else if (ex == 4.0) {
        double b2 = base * base;
        result = b2 * b2;
      } else if (ex == 0.5) {
        result = std::sqrt(base);
      } else if (ex == -1.0) {
        result = 1.0 / base;
      } else {
        result = std::pow(base, ex);
      }
      break;
    }
    case ExprOp::Tanh:
      result = std::tanh(eval_rec(n->a, point, memo));
      break;
    case ExprOp::Atanh: {
      double x = eval_rec(n->a, point, memo);
      if (!(x > -1.0 && x < 1.0))
        domain_fail(n, "atanh argument " + format_double(x) + " outside (-1,1)");
      result = std::atanh(x);
      break;
    }
    case ExprOp::Ln: {
      double x = eval_rec(n->a, point, memo);
      if (!(x > 0.0)) domain_fail(n, "ln of non-positive value " + format_double(x));
      result = std::log(x);
      break;
    }
    case ExprOp::Exp:
      result = std::exp(eval_rec(n->a, point, memo));
      break;
    case ExprOp::Sqrt: {
      double x = eval_rec(n->a, point, memo);
      if (x < 0.0) domain_fail(n, "sqrt of negative value " + format_double(x));
      result = std::sqrt(x);
      break;
    }
  }
  memo.emplace(n, result);
  return result;
}

}  // namespace

double evaluate(Expr e, const Bindings& point) {
  if (!e.valid()) throw Error("evaluate: null expression");
  std::unordered_map<const ExprNode*, double> memo;
  return eval_rec(e.node(), point, memo);
}

// ---------------------------------------------------------------------------
// Simplification

namespace {

Expr simplify_rec(const ExprNode* n, std::unordered_map<const ExprNode*, Expr>& memo) {
  auto it = memo.find(n);
  if (it != memo.end()) return it->second;
  Expr result;
  switch (n->op) {
    case ExprOp::Constant:
    case ExprOp::Symbol:
      result = Expr(n);
      break;
    case ExprOp::Add:
      result = simplify_rec(n->a, memo) + simplify_rec(n->b, memo);
      break;
    case ExprOp::Sub:
      result = simplify_rec(n->a, memo) - simplify_rec(n->b, memo);
      break;
    case ExprOp::Mul:
      result = simplify_rec(n->a, memo) * simplify_rec(n->b, memo);
      break;
    case ExprOp::Div:
      result = simplify_rec(n->a, memo) / simplify_rec(n->b, memo);
      break;
    case ExprOp::Pow:
      result = pow(simplify_rec(n->a, memo), simplify_rec(n->b, memo));
      break;
    case ExprOp::Tanh:
      result = tanh(simplify_rec(n->a, memo));
      break;
    case ExprOp::Atanh:
      result = atanh(simplify_rec(n->a, memo));
      break;
    case ExprOp::Ln:
      result = ln(simplify_rec(n->a, memo));
      break;
    case ExprOp::Exp:
      result = exp(simplify_rec(n->a, memo));
      break;
    case ExprOp::Sqrt:
      result = sqrt(simplify_rec(n->a, memo));
      break;
  }
  memo.emplace(n, result);
  return result;
}

}  // namespace

Expr simplify(Expr e) {
  if (!e.valid()) throw Error("simplify: null expression");
  std::unordered_map<const ExprNode*, Expr> memo;
  return simplify_rec(e.node(), memo);
}

// ---------------------------------------------------------------------------
// Tape

Tape Tape::compile(std::span<const Expr> outputs, std::span<const Symbol* const> inputs) {
  Tape tape;
  tape.n_inputs_ = inputs.size();
  std::unordered_map<const Symbol*, std::int32_t> input_slot;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    input_slot.emplace(inputs[i], static_cast<std::int32_t>(i));

  std::unordered_map<const ExprNode*, std::int32_t> slot_of;
  // iterative post-order over the DAG
  std::vector<std::pair<const ExprNode*, bool>> stack;
  auto emit = [&](const ExprNode* n) -> std::int32_t {
    Instr instr;
    instr.op = n->op;
    switch (n->op) {
      case ExprOp::Constant:
        instr.value = n->value;
        break;
      case ExprOp::Symbol: {
        auto it = input_slot.find(n->sym);
        if (it == input_slot.end())
          throw Error("Tape::compile: symbol '" + n->sym->name + "' is not a tape input");
        instr.a = it->second;
        break;
      }
      case ExprOp::Pow:
        instr.a = slot_of.at(n->a);
        if (n->b->op == ExprOp::Constant) {
          instr.b = -1;  // constant exponent fast path
          instr.value = n->b->value;
        } else {
          instr.b = slot_of.at(n->b);
        }
        break;
      case ExprOp::Add:
      case ExprOp::Sub:
      case ExprOp::Mul:
      case ExprOp::Div:
        instr.a = slot_of.at(n->a);
        instr.b = slot_of.at(n->b);
        break;
      default:  // unary functions
        instr.a = slot_of.at(n->a);
        break;
    }
    tape.code_.push_back(instr);
    return static_cast<std::int32_t>(tape.code_.size() - 1);
  };

  for (const Expr& out : outputs) {
    if (!out.valid()) throw Error("Tape::compile: null expression");
    stack.emplace_back(out.node(), false);
    while (!stack.empty()) {
      auto [n, ready] = stack.back();
      stack.pop_back();
      if (slot_of.count(n)) continue;
      if (ready) {
        slot_of.emplace(n, emit(n));
        continue;
      }
      stack.emplace_back(n, true);
      if (n->op == ExprOp::Pow && n->b->op == ExprOp::Constant) {
        stack.emplace_back(n->a, false);
      } else {
        if (n->b) stack.emplace_back(n->b, false);
        if (n->a) stack.emplace_back(n->a, false);
      }
    }
    tape.outputs_.push_back(slot_of.at(out.node()));
  }
  return tape;
}

bool Tape::eval(std::span<const double> inputs, std::span<double> scratch,
                std::span<double> out) const noexcept {
  bool ok = true;
  const Instr* code = code_.data();
  const std::size_t n = code_.size();
  double* s = scratch.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Instr& in = code[i];
    double v;
    switch (in.op) {
      case ExprOp::Constant: v = in.value; break;
      case ExprOp::Symbol: v = inputs[static_cast<std::size_t>(in.a)]; break;
      case ExprOp::Add: v = s[in.a] + s[in.b]; break;
      case ExprOp::Sub: v = s[in.a] - s[in.b]; break;
      case ExprOp::Mul: v = s[in.a] * s[in.b]; break;
      case ExprOp::Div: v = s[in.a] / s[in.b]; break;
      case ExprOp::Pow: {
        double base = s[in.a];
        double ex = in.b < 0 ? in.value : s[in.b];
        if (ex == 2.0) v = base * base;
        else if (ex == 4.0) { double b2 = base * base; v = b2 * b2; }
        else if (ex == 0.5) v = std::sqrt(base);
        else if (ex == -1.0) v = 1.0 / base;
        else v = std::pow(base, ex);
        break;
      }
      case ExprOp::Tanh: v = std::tanh(s[in.a]); break;
      case ExprOp::Atanh: v = std::atanh(s[in.a]); break;
      case ExprOp::Ln: v = std::log(s[in.a]); break;
      case ExprOp::Exp: v = std::exp(s[in.a]); break;
      case ExprOp::Sqrt: v = std::sqrt(s[in.a]); break;
      default: v = std::numeric_limits<double>::quiet_NaN(); break;
    }
    ok &= std::isfinite(v);
    s[i] = v;
  }
  for (std::size_t i = 0; i < outputs_.size(); ++i) out[i] = s[outputs_[i]];
  return ok;
}

}  // namespace cfident
