#include "sdstab/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "sdstab/format.hpp"

namespace sdstab {

// ---------------------------------------------------------------------------
// VariableLayout
// ---------------------------------------------------------------------------

void VariableLayout::declare(const std::string& name, std::size_t dim) {
  if (name.empty() || dim == 0)
    throw std::invalid_argument("variable needs a name and dimension >= 1");
  if (slot_of(name) >= 0)
    throw std::invalid_argument("variable '" + name + "' declared twice");
  vars_.emplace_back(name, dim);
}

int VariableLayout::slot_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i].first == name) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// pow_rational
// ---------------------------------------------------------------------------

namespace {

double pow_integer(double x, std::uint64_t k) {
  double r = 1.0, p = x;
  while (k != 0) {
    if (k & 1u) r *= p;
    p *= p;
    k >>= 1;
  }
  return r;
}

}  // namespace

double pow_rational(double base, std::int64_t num, std::int64_t den) {
  if (num == 0) return 1.0;
  if (den == 1) {
    if (num > 0) return pow_integer(base, static_cast<std::uint64_t>(num));
    if (base == 0.0) throw DomainError("negative power of zero");
    return 1.0 / pow_integer(base, static_cast<std::uint64_t>(-num));
  }
  if (base < 0.0)
    throw DomainError("fractional power of a negative base");
  if (base == 0.0) {
    if (num < 0) throw DomainError("negative power of zero");
    return 0.0;
  }
  return std::pow(base,
                  static_cast<double>(num) / static_cast<double>(den));
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

namespace {

enum class Tok {
  Number,
  Name,
  Plus,
  Minus,
  Star,
  Slash,
  Caret,
  LParen,
  RParen,
  LBracket,
  RBracket,
  Comma,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  std::size_t offset = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size() &&
           std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
    tok_ = Token{};
    tok_.offset = pos_;
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::End;
      return;
    }
    const char c = src_[pos_];
    const auto single = [&](Tok k) {
      tok_.kind = k;
      tok_.text = std::string(1, c);
      ++pos_;
    };
    switch (c) {
      case '+': single(Tok::Plus); return;
      case '-': single(Tok::Minus); return;
      case '*': single(Tok::Star); return;
      case '/': single(Tok::Slash); return;
      case '^': single(Tok::Caret); return;
      case '(': single(Tok::LParen); return;
      case ')': single(Tok::RParen); return;
      case '[': single(Tok::LBracket); return;
      case ']': single(Tok::RBracket); return;
      case ',': single(Tok::Comma); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      tok_.number = std::strtod(begin, &end);
      tok_.kind = Tok::Number;
      tok_.text = std::string(begin, static_cast<const char*>(end));
      pos_ += static_cast<std::size_t>(end - begin);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end])) ||
              src_[end] == '_'))
        ++end;
      tok_.kind = Tok::Name;
      tok_.text = src_.substr(pos_, end - pos_);
      pos_ = end;
      return;
    }
    throw SyntaxError("unexpected character '" + std::string(1, c) + "'",
                      pos_);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  Token tok_;
};

}  // namespace

class ExprParser {
 public:
  ExprParser(const std::string& text, const VariableLayout& vars)
      : lex_(text), vars_(vars) {
    out_.vars_ = vars;
  }

  Expression run() {
    out_.root_ = parse_expr();
    if (lex_.peek().kind != Tok::End)
      throw SyntaxError("unexpected trailing input", lex_.peek().offset);
    out_.finalize();
    return std::move(out_);
  }

 private:
  std::uint32_t add(ExprNode n) {
    out_.nodes_.push_back(n);
    return static_cast<std::uint32_t>(out_.nodes_.size() - 1);
  }

  std::uint32_t make_binary(ExprOp op, std::uint32_t a, std::uint32_t b) {
    ExprNode n;
    n.op = op;
    n.a = a;
    n.b = b;
    return add(n);
  }

  std::uint32_t parse_expr() {
    std::uint32_t lhs = parse_term();
    for (;;) {
      const Tok k = lex_.peek().kind;
      if (k != Tok::Plus && k != Tok::Minus) return lhs;
      lex_.take();
      const std::uint32_t rhs = parse_term();
      lhs = make_binary(k == Tok::Plus ? ExprOp::Add : ExprOp::Sub, lhs, rhs);
    }
  }

  std::uint32_t parse_term() {
    std::uint32_t lhs = parse_factor();
    for (;;) {
      const Tok k = lex_.peek().kind;
      if (k != Tok::Star && k != Tok::Slash) return lhs;
      lex_.take();
      const std::uint32_t rhs = parse_factor();
      lhs = make_binary(k == Tok::Star ? ExprOp::Mul : ExprOp::Div, lhs, rhs);
    }
  }

  std::uint32_t parse_factor() {
    bool negate = false;
    if (lex_.peek().kind == Tok::Minus) {
      lex_.take();
      negate = true;
    }
    std::uint32_t node = parse_atom();
    if (lex_.peek().kind == Tok::Caret) {
      const Token caret = lex_.take();
      const std::uint32_t mark = static_cast<std::uint32_t>(out_.nodes_.size());
      const std::uint32_t exp_root = parse_factor();
      std::int64_t num = 0, den = 1;
      if (!to_rational(exp_root, num, den))
        throw SyntaxError("exponent must be a rational constant",
                          caret.offset);
      // Discard the exponent subtree; only the reduced rational is kept.
      out_.nodes_.resize(mark);
      ExprNode p;
      p.op = ExprOp::Pow;
      p.a = node;
      p.exp_num = num;
      p.exp_den = den;
      node = add(p);
    }
    if (negate) {
      ExprNode n;
      n.op = ExprOp::Neg;
      n.a = node;
      node = add(n);
    }
    return node;
  }

  std::uint32_t parse_atom() {
    const Token t = lex_.peek();
    switch (t.kind) {
      case Tok::Number: {
        lex_.take();
        ExprNode n;
        n.op = ExprOp::Constant;
        n.value = t.number;
        return add(n);
      }
      case Tok::LParen: {
        lex_.take();
        const std::uint32_t inner = parse_expr();
        expect(Tok::RParen, "expected ')'");
        return inner;
      }
      case Tok::Name: {
        lex_.take();
        if (lex_.peek().kind == Tok::LParen) return parse_call(t);
        return parse_variable(t);
      }
      default:
        throw SyntaxError("expected a number, a name, or '('", t.offset);
    }
  }

  std::uint32_t parse_call(const Token& name) {
    lex_.take();  // '('
    std::vector<std::uint32_t> args;
    args.push_back(parse_expr());
    while (lex_.peek().kind == Tok::Comma) {
      lex_.take();
      args.push_back(parse_expr());
    }
    expect(Tok::RParen, "expected ')' after function arguments");

    ExprOp op;
    std::size_t arity;
    if (name.text == "abs") { op = ExprOp::Abs; arity = 1; }
    else if (name.text == "exp") { op = ExprOp::Exp; arity = 1; }
    else if (name.text == "ln") { op = ExprOp::Ln; arity = 1; }
    else if (name.text == "min") { op = ExprOp::Min; arity = 2; }
    else if (name.text == "max") { op = ExprOp::Max; arity = 2; }
    else
      throw SyntaxError("unknown function '" + name.text + "'", name.offset);

    if (args.size() != arity)
      throw ArityMismatch("function '" + name.text + "' takes " +
                          std::to_string(arity) + " argument(s), got " +
                          std::to_string(args.size()));
    ExprNode n;
    n.op = op;
    n.a = args[0];
    if (arity == 2) n.b = args[1];
    return add(n);
  }

  std::uint32_t parse_variable(const Token& name) {
    const int slot = vars_.slot_of(name.text);
    if (slot < 0)
      throw UnknownVariable("undeclared variable '" + name.text +
                            "' at offset " + std::to_string(name.offset));
    std::size_t index = 0;
    if (lex_.peek().kind == Tok::LBracket) {
      lex_.take();
      const Token idx = lex_.peek();
      if (idx.kind != Tok::Number || idx.number < 0 ||
          idx.number != std::floor(idx.number))
        throw SyntaxError("expected a nonnegative integer component index",
                          idx.offset);
      lex_.take();
      expect(Tok::RBracket, "expected ']'");
      index = static_cast<std::size_t>(idx.number);
      if (index >= vars_.dim(static_cast<std::size_t>(slot)))
        throw UnknownVariable(
            "component " + std::to_string(index) + " out of range for '" +
            name.text + "' of dimension " +
            std::to_string(vars_.dim(static_cast<std::size_t>(slot))));
    } else if (vars_.dim(static_cast<std::size_t>(slot)) != 1) {
      throw UnknownVariable("variable '" + name.text +
                            "' has dimension > 1; use '" + name.text +
                            "[i]'");
    }
    ExprNode n;
    n.op = ExprOp::Variable;
    n.slot = static_cast<std::uint32_t>(slot);
    n.index = static_cast<std::uint32_t>(index);
    return add(n);
  }

  void expect(Tok kind, const char* message) {
    if (lex_.peek().kind != kind)
      throw SyntaxError(message, lex_.peek().offset);
    lex_.take();
  }

  /// Folds a constant subtree built from numbers, unary minus, and division
  /// into a reduced rational; anything else is rejected.
  bool to_rational(std::uint32_t id, std::int64_t& num, std::int64_t& den) {
    const ExprNode& n = out_.nodes_[id];
    switch (n.op) {
      case ExprOp::Constant: {
        if (n.value != std::floor(n.value) || std::fabs(n.value) > 1e15)
          return false;
        num = static_cast<std::int64_t>(n.value);
        den = 1;
        return true;
      }
      case ExprOp::Neg: {
        if (!to_rational(n.a, num, den)) return false;
        num = -num;
        return true;
      }
      case ExprOp::Div: {
        std::int64_t an, ad, bn, bd;
        if (!to_rational(n.a, an, ad) || !to_rational(n.b, bn, bd))
          return false;
        if (bn == 0) return false;
        num = an * bd;
        den = ad * bn;
        if (den < 0) { den = -den; num = -num; }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        return true;
      }
      default:
        return false;
    }
  }

  Lexer lex_;
  const VariableLayout& vars_;
  Expression out_;
};

Expression Expression::parse(const std::string& text,
                             const VariableLayout& vars) {
  return ExprParser(text, vars).run();
}

// ---------------------------------------------------------------------------
// Programmatic construction
// ---------------------------------------------------------------------------

Expression Expression::constant(const VariableLayout& vars, double v) {
  Expression e;
  e.vars_ = vars;
  ExprNode n;
  n.op = ExprOp::Constant;
  n.value = std::fabs(v);
  e.nodes_.push_back(n);
  e.root_ = 0;
  if (std::signbit(v) && v != 0.0) {
    ExprNode m;
    m.op = ExprOp::Neg;
    m.a = 0;
    e.nodes_.push_back(m);
    e.root_ = 1;
  }
  e.finalize();
  return e;
}

Expression Expression::variable(const VariableLayout& vars,
                                const std::string& name, std::size_t index) {
  const int slot = vars.slot_of(name);
  if (slot < 0) throw UnknownVariable("undeclared variable '" + name + "'");
  if (index >= vars.dim(static_cast<std::size_t>(slot)))
    throw UnknownVariable("component out of range for '" + name + "'");
  Expression e;
  e.vars_ = vars;
  ExprNode n;
  n.op = ExprOp::Variable;
  n.slot = static_cast<std::uint32_t>(slot);
  n.index = static_cast<std::uint32_t>(index);
  e.nodes_.push_back(n);
  e.root_ = 0;
  e.finalize();
  return e;
}

std::uint32_t Expression::clone_into(std::vector<ExprNode>& out,
                                     std::uint32_t id) const {
  const ExprNode& n = nodes_[id];
  ExprNode m = n;
  switch (n.op) {
    case ExprOp::Constant:
    case ExprOp::Variable:
      break;
    case ExprOp::Neg:
    case ExprOp::Abs:
    case ExprOp::Exp:
    case ExprOp::Ln:
    case ExprOp::Pow:
      m.a = clone_into(out, n.a);
      break;
    default:
      m.a = clone_into(out, n.a);
      m.b = clone_into(out, n.b);
      break;
  }
  out.push_back(m);
  return static_cast<std::uint32_t>(out.size() - 1);
}

Expression Expression::binary(ExprOp op, const Expression& a,
                              const Expression& b) {
  if (a.vars_ != b.vars_)
    throw std::invalid_argument(
        "cannot combine expressions over different variable layouts");
  Expression e;
  e.vars_ = a.vars_;
  const std::uint32_t ra = a.clone_into(e.nodes_, a.root_);
  const std::uint32_t rb = b.clone_into(e.nodes_, b.root_);
  ExprNode n;
  n.op = op;
  n.a = ra;
  n.b = rb;
  e.nodes_.push_back(n);
  e.root_ = static_cast<std::uint32_t>(e.nodes_.size() - 1);
  e.finalize();
  return e;
}

Expression Expression::unary(ExprOp op, const Expression& a) {
  Expression e;
  e.vars_ = a.vars_;
  const std::uint32_t ra = a.clone_into(e.nodes_, a.root_);
  ExprNode n;
  n.op = op;
  n.a = ra;
  e.nodes_.push_back(n);
  e.root_ = static_cast<std::uint32_t>(e.nodes_.size() - 1);
  e.finalize();
  return e;
}

Expression Expression::power(const Expression& base, std::int64_t num,
                             std::int64_t den) {
  if (den <= 0) throw std::invalid_argument("exponent denominator must be > 0");
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  Expression e;
  e.vars_ = base.vars_;
  const std::uint32_t rb = base.clone_into(e.nodes_, base.root_);
  ExprNode n;
  n.op = ExprOp::Pow;
  n.a = rb;
  n.exp_num = g > 1 ? num / g : num;
  n.exp_den = g > 1 ? den / g : den;
  e.nodes_.push_back(n);
  e.root_ = static_cast<std::uint32_t>(e.nodes_.size() - 1);
  e.finalize();
  return e;
}

Expression operator+(const Expression& a, const Expression& b) {
  return Expression::binary(ExprOp::Add, a, b);
}
Expression operator-(const Expression& a, const Expression& b) {
  return Expression::binary(ExprOp::Sub, a, b);
}
Expression operator*(const Expression& a, const Expression& b) {
  return Expression::binary(ExprOp::Mul, a, b);
}
Expression operator/(const Expression& a, const Expression& b) {
  return Expression::binary(ExprOp::Div, a, b);
}
Expression operator-(const Expression& a) {
  return Expression::unary(ExprOp::Neg, a);
}

Expression Expression::compose(
    const Expression& f, const VariableLayout& target,
    const std::vector<std::vector<Expression>>& bindings) {
  if (bindings.size() != f.vars_.count())
    throw std::invalid_argument("compose: one binding list per variable");
  for (std::size_t s = 0; s < bindings.size(); ++s) {
    if (bindings[s].size() != f.vars_.dim(s))
      throw std::invalid_argument("compose: binding arity mismatch for '" +
                                  f.vars_.name(s) + "'");
    for (const Expression& e : bindings[s])
      if (e.vars_ != target)
        throw std::invalid_argument(
            "compose: binding not over the target layout");
  }

  Expression out;
  out.vars_ = target;
  const auto clone = [&](auto&& self, std::uint32_t id) -> std::uint32_t {
    const ExprNode& n = f.nodes_[id];
    if (n.op == ExprOp::Variable) {
      const Expression& repl = bindings[n.slot][n.index];
      return repl.clone_into(out.nodes_, repl.root_);
    }
    ExprNode m = n;
    switch (n.op) {
      case ExprOp::Constant:
        break;
      case ExprOp::Neg:
      case ExprOp::Abs:
      case ExprOp::Exp:
      case ExprOp::Ln:
      case ExprOp::Pow:
        m.a = self(self, n.a);
        break;
      default:
        m.a = self(self, n.a);
        m.b = self(self, n.b);
        break;
    }
    out.nodes_.push_back(m);
    return static_cast<std::uint32_t>(out.nodes_.size() - 1);
  };
  out.root_ = clone(clone, f.root_);
  out.finalize();
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

void Expression::finalize() {
  program_.clear();
  program_.reserve(nodes_.size());
  // Iterative postorder; children are scheduled left before right so the
  // evaluation stack sees them in operand order.
  std::vector<std::pair<std::uint32_t, bool>> stack;
  stack.emplace_back(root_, false);
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      program_.push_back(id);
      continue;
    }
    stack.emplace_back(id, true);
    const ExprNode& n = nodes_[id];
    switch (n.op) {
      case ExprOp::Constant:
      case ExprOp::Variable:
        break;
      case ExprOp::Neg:
      case ExprOp::Abs:
      case ExprOp::Exp:
      case ExprOp::Ln:
      case ExprOp::Pow:
        stack.emplace_back(n.a, false);
        break;
      default:
        stack.emplace_back(n.b, false);
        stack.emplace_back(n.a, false);
        break;
    }
  }
  std::uint32_t depth = 0;
  stack_need_ = 0;
  for (const std::uint32_t id : program_) {
    const ExprOp op = nodes_[id].op;
    if (op == ExprOp::Constant || op == ExprOp::Variable)
      ++depth;
    else if (op != ExprOp::Neg && op != ExprOp::Abs && op != ExprOp::Exp &&
             op != ExprOp::Ln && op != ExprOp::Pow)
      --depth;
    if (depth > stack_need_) stack_need_ = depth;
  }
}

double Expression::evaluate(const EvalView* bindings,
                            std::size_t n_bindings) const {
  if (nodes_.empty()) throw std::logic_error("evaluating empty expression");
  if (n_bindings != vars_.count())
    throw std::invalid_argument("expected " + std::to_string(vars_.count()) +
                                " variable bindings, got " +
                                std::to_string(n_bindings));
  for (std::size_t s = 0; s < n_bindings; ++s)
    if (bindings[s].size != vars_.dim(s))
      throw std::invalid_argument("binding for '" + vars_.name(s) +
                                  "' has wrong dimension");

  double inline_stack[64] = {};
  std::vector<double> heap;
  double* st = inline_stack;
  if (stack_need_ > 64) {
    heap.resize(stack_need_);
    st = heap.data();
  }

  std::size_t top = 0;
  for (const std::uint32_t id : program_) {
    const ExprNode& n = nodes_[id];
    switch (n.op) {
      case ExprOp::Constant:
        st[top++] = n.value;
        break;
      case ExprOp::Variable:
        st[top++] = bindings[n.slot].data[n.index];
        break;
      case ExprOp::Add:
        --top;
        st[top - 1] += st[top];
        break;
      case ExprOp::Sub:
        --top;
        st[top - 1] -= st[top];
        break;
      case ExprOp::Mul:
        --top;
        st[top - 1] *= st[top];
        break;
      case ExprOp::Div:
        --top;
        if (st[top] == 0.0)
          throw DomainError("division by zero in '" +
                            print_node(id, 0, false) + "'");
        st[top - 1] /= st[top];
        break;
      case ExprOp::Pow:
        try {
          st[top - 1] = pow_rational(st[top - 1], n.exp_num, n.exp_den);
        } catch (const DomainError& d) {
          throw DomainError(std::string(d.what()) + " in '" +
                            print_node(id, 0, false) + "'");
        }
        break;
      case ExprOp::Neg:
        st[top - 1] = -st[top - 1];
        break;
      case ExprOp::Abs:
        st[top - 1] = std::fabs(st[top - 1]);
        break;
      case ExprOp::Exp:
        st[top - 1] = std::exp(st[top - 1]);
        break;
      case ExprOp::Ln:
        if (st[top - 1] <= 0.0)
          throw DomainError("ln of a non-positive value in '" +
                            print_node(id, 0, false) + "'");
        st[top - 1] = std::log(st[top - 1]);
        break;
      case ExprOp::Min:
        --top;
        st[top - 1] = std::fmin(st[top - 1], st[top]);
        break;
      case ExprOp::Max:
        --top;
        st[top - 1] = std::fmax(st[top - 1], st[top]);
        break;
    }
  }
  return st[0];
}

// ---------------------------------------------------------------------------
// Printing and structural comparison
// ---------------------------------------------------------------------------

namespace {

int precedence(ExprOp op) {
  switch (op) {
    case ExprOp::Add:
    case ExprOp::Sub:
      return 1;
    case ExprOp::Mul:
    case ExprOp::Div:
      return 2;
    case ExprOp::Neg:
      return 3;
    case ExprOp::Pow:
      return 4;
    default:
      return 5;
  }
}

}  // namespace

std::string Expression::print_node(std::uint32_t id, int parent_prec,
                                   bool right_side) const {
  const ExprNode& n = nodes_[id];
  const int prec = precedence(n.op);
  std::string s;
  switch (n.op) {
    case ExprOp::Constant:
      s = format_double(n.value);
      break;
    case ExprOp::Variable:
      s = vars_.name(n.slot);
      if (vars_.dim(n.slot) != 1) s += "[" + std::to_string(n.index) + "]";
      break;
    case ExprOp::Add:
      s = print_node(n.a, 1, false) + " + " + print_node(n.b, 1, true);
      break;
    case ExprOp::Sub:
      s = print_node(n.a, 1, false) + " - " + print_node(n.b, 1, true);
      break;
    case ExprOp::Mul:
      s = print_node(n.a, 2, false) + "*" + print_node(n.b, 2, true);
      break;
    case ExprOp::Div:
      s = print_node(n.a, 2, false) + "/" + print_node(n.b, 2, true);
      break;
    case ExprOp::Neg:
      // A negated negation needs parentheses: "--x" does not lex.
      if (nodes_[n.a].op == ExprOp::Neg)
        s = "-(" + print_node(n.a, 0, false) + ")";
      else
        s = "-" + print_node(n.a, 3, false);
      break;
    case ExprOp::Pow: {
      const bool atom_base = precedence(nodes_[n.a].op) == 5;
      s = atom_base ? print_node(n.a, 4, false)
                    : "(" + print_node(n.a, 0, false) + ")";
      s += "^";
      if (n.exp_den == 1 && n.exp_num >= 0)
        s += std::to_string(n.exp_num);
      else if (n.exp_den == 1)
        s += "(" + std::to_string(n.exp_num) + ")";
      else
        s += "(" + std::to_string(n.exp_num) + "/" +
             std::to_string(n.exp_den) + ")";
      return s;  // already fully parenthesized as needed
    }
    case ExprOp::Abs:
      return "abs(" + print_node(n.a, 0, false) + ")";
    case ExprOp::Exp:
      return "exp(" + print_node(n.a, 0, false) + ")";
    case ExprOp::Ln:
      return "ln(" + print_node(n.a, 0, false) + ")";
    case ExprOp::Min:
      return "min(" + print_node(n.a, 0, false) + ", " +
             print_node(n.b, 0, false) + ")";
    case ExprOp::Max:
      return "max(" + print_node(n.a, 0, false) + ", " +
             print_node(n.b, 0, false) + ")";
  }
  if (prec < parent_prec || (prec == parent_prec && right_side))
    return "(" + s + ")";
  return s;
}

std::string Expression::print() const {
  if (nodes_.empty()) return "";
  return print_node(root_, 0, false);
}

bool Expression::same_structure(const Expression& o) const {
  if (vars_ != o.vars_) return false;
  if (nodes_.empty() || o.nodes_.empty()) return nodes_.empty() == o.nodes_.empty();
  const auto eq = [&](auto&& self, std::uint32_t x, std::uint32_t y) -> bool {
    const ExprNode& a = nodes_[x];
    const ExprNode& b = o.nodes_[y];
    if (a.op != b.op) return false;
    switch (a.op) {
      case ExprOp::Constant:
        return a.value == b.value;
      case ExprOp::Variable:
        return a.slot == b.slot && a.index == b.index;
      case ExprOp::Pow:
        return a.exp_num == b.exp_num && a.exp_den == b.exp_den &&
               self(self, a.a, b.a);
      case ExprOp::Neg:
      case ExprOp::Abs:
      case ExprOp::Exp:
      case ExprOp::Ln:
        return self(self, a.a, b.a);
      default:
        return self(self, a.a, b.a) && self(self, a.b, b.b);
    }
  };
  return eq(eq, root_, o.root_);
}

// ---------------------------------------------------------------------------
// VectorExpression
// ---------------------------------------------------------------------------

VectorExpression::VectorExpression(VariableLayout vars,
                                   std::vector<Expression> components)
    : vars_(std::move(vars)), components_(std::move(components)) {
  for (const Expression& c : components_)
    if (c.variables() != vars_)
      throw std::invalid_argument(
          "vector expression components must share the layout");
}

VectorExpression VectorExpression::parse(const std::vector<std::string>& texts,
                                         const VariableLayout& vars) {
  std::vector<Expression> comps;
  comps.reserve(texts.size());
  for (const std::string& t : texts) comps.push_back(Expression::parse(t, vars));
  return VectorExpression(vars, std::move(comps));
}

void VectorExpression::evaluate(const EvalView* bindings,
                                std::size_t n_bindings, double* out) const {
  for (std::size_t i = 0; i < components_.size(); ++i)
    out[i] = components_[i].evaluate(bindings, n_bindings);
}

std::vector<std::string> VectorExpression::print() const {
  std::vector<std::string> out;
  out.reserve(components_.size());
  for (const Expression& c : components_) out.push_back(c.print());
  return out;
}

}  // namespace sdstab
