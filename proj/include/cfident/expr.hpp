#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfident/util.hpp"

namespace cfident {

enum class SymbolKind : std::uint8_t { State, Parameter, Input, Auxiliary };

// Input symbols carry the time-derivative order of the exogenous input:
// order 0 is the input itself, order j its j-th derivative.
struct Symbol {
  std::string name;
  SymbolKind kind = SymbolKind::Auxiliary;
  int order = 0;
  int index = -1;  // position within the owning table
};

// Ordered, write-once symbol namespace. Symbol addresses are stable for the
// lifetime of the table; expressions refer to symbols by pointer.
class SymbolTable {
 public:
  const Symbol* add_state(std::string name) { return add(std::move(name), SymbolKind::State, 0); }
  const Symbol* add_parameter(std::string name) {
    return add(std::move(name), SymbolKind::Parameter, 0);
  }
  const Symbol* add_auxiliary(std::string name) {
    return add(std::move(name), SymbolKind::Auxiliary, 0);
  }
  // Creates the contiguous input family u, u1, ..., u<max_order>, where the
  // base name is used for order 0 and "<base><j>" for order j.
  const Symbol* add_input_family(const std::string& base, int max_order);

  const Symbol* find(std::string_view name) const;
  // u^(order), or nullptr when outside the created family.
  const Symbol* input(int order) const;
  int max_input_order() const { return max_input_order_; }

  std::span<const Symbol* const> all() const { return ordered_; }
  std::vector<const Symbol*> of_kind(SymbolKind k) const;
  std::size_t size() const { return ordered_.size(); }

 private:
  const Symbol* add(std::string name, SymbolKind kind, int order);

  std::deque<Symbol> storage_;
  std::vector<const Symbol*> ordered_;
  std::unordered_map<std::string, const Symbol*, std::hash<std::string>, std::equal_to<>> by_name_;
  std::vector<const Symbol*> inputs_;
  int max_input_order_ = -1;
};

enum class ExprOp : std::uint8_t {
  Constant,
  Symbol,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Tanh,
  Atanh,
  Ln,
  Exp,
  Sqrt
};

struct ExprNode {
  ExprOp op;
  double value = 0.0;            // Constant
  const Symbol* sym = nullptr;   // Symbol
  const ExprNode* a = nullptr;   // first child
  const ExprNode* b = nullptr;   // second child (binary ops)
};

// Immutable handle to a hash-consed expression DAG. Structurally identical
// expressions share nodes, so `same()` is pointer equality. Nodes live in a
// process-wide pool and are never freed; the pool aborts with LimitError once
// it grows past the configured node limit.
class Expr {
 public:
  Expr() = default;

  bool valid() const { return node_ != nullptr; }
  const ExprNode* node() const { return node_; }
  ExprOp op() const { return node_->op; }
  double constant_value() const { return node_->value; }
  const Symbol* symbol() const { return node_->sym; }
  Expr left() const { return Expr(node_->a); }
  Expr right() const { return Expr(node_->b); }

  bool same(Expr other) const { return node_ == other.node_; }
  bool is_constant() const { return valid() && node_->op == ExprOp::Constant; }
  bool is_constant(double v) const { return is_constant() && node_->value == v; }

  explicit Expr(const ExprNode* n) : node_(n) {}

 private:
  const ExprNode* node_ = nullptr;
};

std::size_t expr_node_count();
std::size_t expr_node_limit();
void set_expr_node_limit(std::size_t limit);

// Structure-preserving constructors (no rewriting); used by the parser.
Expr make_constant(double v);
Expr make_symbol(const Symbol* s);
Expr make_unary(ExprOp op, Expr a);
Expr make_binary(ExprOp op, Expr a, Expr b);

// Simplifying constructors: constant folding plus 0/1 identities and x-x -> 0.
// These apply local rewrites only; they never reassociate or expand.
Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
Expr pow(Expr base, Expr exponent);
Expr pow(Expr base, double exponent);
Expr tanh(Expr a);
Expr atanh(Expr a);
Expr ln(Expr a);
Expr exp(Expr a);
Expr sqrt(Expr a);

using Bindings = std::unordered_map<const Symbol*, double>;
using ExprBindings = std::unordered_map<const Symbol*, Expr>;

// Infix grammar with conventional precedence, `^` right-associative and
// binding tighter than unary minus, function-call syntax for the five unary
// functions. Throws ParseError with the offending position / identifier.
Expr parse(std::string_view text, const SymbolTable& table);

// Fully parenthesized form; parse(to_string(e)) evaluates identically to e.
std::string to_string(Expr e);

// d e / d wrt. Total over the node set; symbols absent from e give 0.
Expr differentiate(Expr e, const Symbol* wrt);

// Simultaneous substitution; unbound symbols are left untouched.
Expr substitute(Expr e, const ExprBindings& map);

// IEEE double evaluation at a full binding. Domain violations raise
// DomainError naming the offending subexpression and operand value.
double evaluate(Expr e, const Bindings& point);

// Bottom-up local rewrites (the simplifying constructors applied everywhere).
// Never changes the value at any point where the input is defined.
Expr simplify(Expr e);

// Flattened evaluation program for repeated numeric evaluation of a fixed
// set of expressions over a fixed input layout. eval() is allocation-free
// and thread-safe; it returns false when any intermediate or output is
// non-finite (domain violation or numerical blow-up).
class Tape {
 public:
  static Tape compile(std::span<const Expr> outputs, std::span<const Symbol* const> inputs);

  int input_count() const { return static_cast<int>(n_inputs_); }
  int output_count() const { return static_cast<int>(outputs_.size()); }
  int slot_count() const { return static_cast<int>(code_.size()); }

  bool eval(std::span<const double> inputs, std::span<double> scratch,
            std::span<double> out) const noexcept;

 private:
  struct Instr {
    ExprOp op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    double value = 0.0;  // Constant payload or constant exponent for Pow
  };
  std::vector<Instr> code_;
  std::vector<std::int32_t> outputs_;
  std::size_t n_inputs_ = 0;
};

}  // namespace cfident
