#pragma once

// ============================================================================
// Scalar and vector expressions over named, fixed-dimension variables.
//
// Grammar (whitespace-insensitive):
//   expr   := term (("+" | "-") term)*
//   term   := factor (("*" | "/") factor)*
//   factor := ("-")? atom ("^" factor)?
//   atom   := number | name "[" integer "]" | name
//           | func "(" expr ("," expr)* ")" | "(" expr ")"
//
// A leading minus applies to the whole power: "-x^2" is -(x^2). Exponents
// must reduce to a rational constant (integer literals combined with unary
// minus and "/"), so "x^3", "x^(-2)" and "x^(3/2)" are valid while "x^y" is
// not. A bare name refers to component 0 and requires the variable to be
// declared one-dimensional.
//
// Expressions are immutable after construction and evaluation is reentrant;
// the same object may be evaluated from many threads at once. No algebraic
// simplification is ever performed: the evaluated operation sequence is
// exactly the parsed (or programmatically built) tree, which keeps results
// bit-for-bit reproducible.
// ============================================================================

#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "sdstab/errors.hpp"

namespace sdstab {

/// Ordered set of free variables with their dimensions, e.g. {x:3, u:1}.
class VariableLayout {
 public:
  VariableLayout() = default;
  VariableLayout(
      std::initializer_list<std::pair<std::string, std::size_t>> vars) {
    for (const auto& v : vars) declare(v.first, v.second);
  }

  void declare(const std::string& name, std::size_t dim);

  /// Slot of `name`, or -1 when absent.
  [[nodiscard]] int slot_of(const std::string& name) const;

  [[nodiscard]] std::size_t count() const { return vars_.size(); }
  [[nodiscard]] const std::string& name(std::size_t slot) const {
    return vars_[slot].first;
  }
  [[nodiscard]] std::size_t dim(std::size_t slot) const {
    return vars_[slot].second;
  }

  bool operator==(const VariableLayout& o) const { return vars_ == o.vars_; }
  bool operator!=(const VariableLayout& o) const { return !(*this == o); }

 private:
  std::vector<std::pair<std::string, std::size_t>> vars_;
};

enum class ExprOp : std::uint8_t {
  Constant,
  Variable,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Abs,
  Exp,
  Ln,
  Min,
  Max,
};

/// Flat arena node. Constants are always nonnegative; signs live in Neg
/// nodes so that printing and reparsing round-trips structurally.
struct ExprNode {
  ExprOp op = ExprOp::Constant;
  double value = 0.0;                      // Constant
  std::uint32_t slot = 0, index = 0;       // Variable
  std::int64_t exp_num = 0, exp_den = 1;   // Pow exponent (den > 0, reduced)
  std::uint32_t a = 0, b = 0;              // children
};

/// One variable binding for evaluation: pointer to `size` components.
struct EvalView {
  const double* data;
  std::size_t size;
};

/// x^(num/den) with recorded domain guards: negative base requires an
/// integer exponent, zero base a nonnegative one. Integer powers use binary
/// exponentiation; the zero exponent yields 1 by convention.
double pow_rational(double base, std::int64_t num, std::int64_t den);

class Expression {
 public:
  Expression() = default;

  /// Parses `text` against the declared variables. Throws SyntaxError (with
  /// byte offset), UnknownVariable, or ArityMismatch.
  static Expression parse(const std::string& text, const VariableLayout& vars);

  // ---- programmatic construction ------------------------------------------
  static Expression constant(const VariableLayout& vars, double v);
  static Expression variable(const VariableLayout& vars,
                             const std::string& name, std::size_t index = 0);
  static Expression binary(ExprOp op, const Expression& a, const Expression& b);
  static Expression unary(ExprOp op, const Expression& a);
  static Expression power(const Expression& base, std::int64_t num,
                          std::int64_t den = 1);

  /// f with every variable reference replaced by the given expressions over
  /// `target`: bindings[slot][component] substitutes name[component]. All
  /// binding expressions must share the layout `target`.
  static Expression compose(const Expression& f, const VariableLayout& target,
                            const std::vector<std::vector<Expression>>& bindings);

  // ---- use ------------------------------------------------------------------
  /// Evaluates with one EvalView per declared variable, in slot order.
  double evaluate(const EvalView* bindings, std::size_t n_bindings) const;
  double evaluate(std::initializer_list<EvalView> bindings) const {
    return evaluate(bindings.begin(), bindings.size());
  }

  /// Minimal-parenthesis text that reparses to the same tree.
  [[nodiscard]] std::string print() const;

  [[nodiscard]] bool same_structure(const Expression& o) const;

  [[nodiscard]] const VariableLayout& variables() const { return vars_; }
  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }
  [[nodiscard]] bool empty() const { return nodes_.empty(); }

  /// Read-only tree access (tooling, independent re-evaluation in tests).
  [[nodiscard]] const ExprNode& node(std::size_t id) const { return nodes_[id]; }
  [[nodiscard]] std::uint32_t root() const { return root_; }

 private:
  friend class ExprParser;

  VariableLayout vars_;
  std::vector<ExprNode> nodes_;
  std::uint32_t root_ = 0;
  std::vector<std::uint32_t> program_;  // postorder schedule of node ids
  std::uint32_t stack_need_ = 0;

  void finalize();
  std::uint32_t clone_into(std::vector<ExprNode>& out, std::uint32_t id) const;
  std::string print_node(std::uint32_t id, int parent_prec,
                         bool right_side) const;
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);

/// Fixed-size tuple of scalar expressions over one shared layout.
class VectorExpression {
 public:
  VectorExpression() = default;
  VectorExpression(VariableLayout vars, std::vector<Expression> components);

  static VectorExpression parse(const std::vector<std::string>& texts,
                                const VariableLayout& vars);

  [[nodiscard]] std::size_t size() const { return components_.size(); }
  const Expression& operator[](std::size_t i) const { return components_[i]; }

  void evaluate(const EvalView* bindings, std::size_t n_bindings,
                double* out) const;

  [[nodiscard]] const VariableLayout& variables() const { return vars_; }
  [[nodiscard]] std::vector<std::string> print() const;

 private:
  VariableLayout vars_;
  std::vector<Expression> components_;
};

}  // namespace sdstab
