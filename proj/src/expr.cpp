#include "eqdisc/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

namespace eqdisc {

namespace {

constexpr int kPrecSum = 1;
constexpr int kPrecProduct = 2;
constexpr int kPrecNeg = 3;
constexpr int kPrecPow = 4;
constexpr int kPrecAtom = 5;

std::optional<Op> function_from_name(std::string_view name) {
  if (name == "sin") return Op::Sin;
  if (name == "cos") return Op::Cos;
  if (name == "log" || name == "ln") return Op::Log;
  if (name == "exp") return Op::Exp;
  return std::nullopt;
}

bool is_placeholder_name(std::string_view name) {
  if (name == "const") return true;
  if (name.size() < 2 || name[0] != 'c') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_integer_literal(const Node& n) {
  return n.kind == Node::Kind::Literal && std::isfinite(n.value) && n.value == std::floor(n.value);
}

// ---------------------------------------------------------------- lexer

struct Token {
  enum class Type { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Type type;
  std::string text;
  double number = 0.0;
  std::size_t pos = 0;
};

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      while (i < src.size() && (std::isdigit(static_cast<unsigned char>(src[i])) || src[i] == '.')) ++i;
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
          i = j;
          while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
        }
      }
      Token t{Token::Type::Number, std::string(src.substr(start, i - start)), 0.0, start};
      const auto* first = t.text.data();
      const auto* last = first + t.text.size();
      auto [ptr, ec] = std::from_chars(first, last, t.number);
      if (ec != std::errc() || ptr != last) {
        throw SyntaxError("malformed number '" + t.text + "' at offset " + std::to_string(start));
      }
      out.push_back(std::move(t));
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
      out.push_back({Token::Type::Ident, std::string(src.substr(start, i - start)), 0.0, start});
      continue;
    }
    Token::Type type;
    switch (c) {
      case '+': type = Token::Type::Plus; break;
      case '-': type = Token::Type::Minus; break;
      case '*':
        if (i + 1 < src.size() && src[i + 1] == '*') {
          out.push_back({Token::Type::Caret, "**", 0.0, start});
          i += 2;
          continue;
        }
        type = Token::Type::Star;
        break;
      case '/': type = Token::Type::Slash; break;
      case '^': type = Token::Type::Caret; break;
      case '(': type = Token::Type::LParen; break;
      case ')': type = Token::Type::RParen; break;
      default:
        throw SyntaxError(std::string("unexpected character '") + c + "' at offset " + std::to_string(i));
    }
    out.push_back({type, std::string(1, c), 0.0, start});
    ++i;
  }
  out.push_back({Token::Type::End, "", 0.0, src.size()});
  return out;
}

// ---------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  Expression parse_all() {
    Expression e = parse_sum();
    if (peek().type != Token::Type::End) {
      throw SyntaxError("unexpected token '" + peek().text + "' at offset " + std::to_string(peek().pos));
    }
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }
  bool accept(Token::Type t) {
    if (peek().type != t) return false;
    ++pos_;
    return true;
  }
  void expect(Token::Type t, const char* what) {
    if (!accept(t)) {
      const auto& tok = peek();
      throw SyntaxError(std::string("expected ") + what + " at offset " + std::to_string(tok.pos) +
                        (tok.type == Token::Type::End ? " (end of input)" : ", found '" + tok.text + "'"));
    }
  }

  Expression parse_sum() {
    Expression lhs = parse_product();
    for (;;) {
      if (accept(Token::Type::Plus)) {
        lhs = Expression::binary(Op::Add, lhs, parse_product());
      } else if (accept(Token::Type::Minus)) {
        lhs = Expression::binary(Op::Sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_product() {
    Expression lhs = parse_unary();
    for (;;) {
      if (accept(Token::Type::Star)) {
        lhs = Expression::binary(Op::Mul, lhs, parse_unary());
      } else if (accept(Token::Type::Slash)) {
        lhs = Expression::binary(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expression parse_unary() {
    if (accept(Token::Type::Minus)) return Expression::unary(Op::Neg, parse_unary());
    if (accept(Token::Type::Plus)) return parse_unary();
    return parse_power();
  }

  Expression parse_power() {
    Expression base = parse_primary();
    if (accept(Token::Type::Caret)) {
      return Expression::binary(Op::Pow, base, parse_unary());
    }
    return base;
  }

  Expression parse_primary() {
    const Token& tok = next();
    switch (tok.type) {
      case Token::Type::Number:
        return Expression::literal(tok.number);
      case Token::Type::LParen: {
        Expression inner = parse_sum();
        expect(Token::Type::RParen, "')'");
        return inner;
      }
      case Token::Type::Ident: {
        if (auto fn = function_from_name(tok.text); fn && peek().type == Token::Type::LParen) {
          next();
          Expression arg = parse_sum();
          expect(Token::Type::RParen, "')'");
          return Expression::unary(*fn, arg);
        }
        if (is_placeholder_name(tok.text)) return Expression::constant(next_const_++);
        return Expression::variable(tok.text);
      }
      case Token::Type::End:
        throw SyntaxError("unexpected end of input");
      default:
        throw SyntaxError("unexpected token '" + tok.text + "' at offset " + std::to_string(tok.pos));
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int next_const_ = 0;
};

// ---------------------------------------------------------------- printing

int precedence(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Binary:
      switch (n.op) {
        case Op::Add:
        case Op::Sub: return kPrecSum;
        case Op::Mul:
        case Op::Div: return kPrecProduct;
        default: return kPrecPow;
      }
    case Node::Kind::Unary:
      return n.op == Op::Neg ? kPrecNeg : kPrecAtom;
    default:
      return kPrecAtom;
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (v < 0) return "(" + s + ")";
  return s;
}

void print_node(const Node& n, std::string& out, bool anonymous_consts) {
  auto child = [&](const Node& c, bool parens) {
    if (parens) out += '(';
    print_node(c, out, anonymous_consts);
    if (parens) out += ')';
  };
  switch (n.kind) {
    case Node::Kind::Variable:
      out += n.name;
      return;
    case Node::Kind::Const:
      out += 'c';
      if (!anonymous_consts) out += std::to_string(n.index);
      return;
    case Node::Kind::Literal:
      out += format_number(n.value);
      return;
    case Node::Kind::Unary:
      if (n.op == Op::Neg) {
        out += '-';
        child(*n.lhs, precedence(*n.lhs) < kPrecNeg);
      } else {
        out += op_name(n.op);
        out += '(';
        print_node(*n.lhs, out, anonymous_consts);
        out += ')';
      }
      return;
    case Node::Kind::Binary: {
      const int p = precedence(n);
      const int lp = precedence(*n.lhs);
      const int rp = precedence(*n.rhs);
      const bool pow = n.op == Op::Pow;
      child(*n.lhs, pow ? lp <= p : lp < p);
      switch (n.op) {
        case Op::Add: out += " + "; break;
        case Op::Sub: out += " - "; break;
        case Op::Mul: out += '*'; break;
        case Op::Div: out += '/'; break;
        default: out += '^'; break;
      }
      child(*n.rhs, pow ? rp < p : rp <= p);
      return;
    }
  }
}

std::string print_key(const Expression& e) {
  std::string out;
  print_node(e.node(), out, true);
  return out;
}

// ---------------------------------------------------------------- canonical form

Expression negate(const Expression& e) {
  if (e.node().kind == Node::Kind::Literal) return Expression::literal(-e.node().value);
  return Expression::unary(Op::Neg, e);
}

void flatten_sum(const NodePtr& n, int sign, std::vector<std::pair<int, NodePtr>>& out) {
  if (n->kind == Node::Kind::Binary && (n->op == Op::Add || n->op == Op::Sub)) {
    flatten_sum(n->lhs, sign, out);
    flatten_sum(n->rhs, n->op == Op::Add ? sign : -sign, out);
  } else if (n->kind == Node::Kind::Unary && n->op == Op::Neg) {
    flatten_sum(n->lhs, -sign, out);
  } else {
    out.emplace_back(sign, n);
  }
}

void flatten_product(const NodePtr& n, bool inverted, std::vector<NodePtr>& num, std::vector<NodePtr>& den) {
  if (n->kind == Node::Kind::Binary && (n->op == Op::Mul || n->op == Op::Div)) {
    flatten_product(n->lhs, inverted, num, den);
    flatten_product(n->rhs, n->op == Op::Mul ? inverted : !inverted, num, den);
  } else {
    (inverted ? den : num).push_back(n);
  }
}

std::vector<Expression> sorted_canonical(const std::vector<NodePtr>& nodes, Expression (*canon)(const NodePtr&)) {
  std::vector<std::pair<std::string, Expression>> keyed;
  keyed.reserve(nodes.size());
  for (const auto& n : nodes) {
    Expression c = canon(n);
    keyed.emplace_back(print_key(c), c);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Expression> out;
  out.reserve(keyed.size());
  for (auto& [k, e] : keyed) out.push_back(std::move(e));
  return out;
}

Expression canon_node(const NodePtr& n) {
  switch (n->kind) {
    case Node::Kind::Variable:
    case Node::Kind::Const:
    case Node::Kind::Literal:
      return Expression(n);
    case Node::Kind::Unary: {
      Expression c = canon_node(n->lhs);
      if (n->op == Op::Neg) {
        if (c.node().kind == Node::Kind::Literal) return negate(c);
        return Expression::unary(Op::Neg, c);
      }
      return Expression::unary(n->op, c);
    }
    case Node::Kind::Binary:
      break;
  }
  if (n->op == Op::Pow) return Expression::binary(Op::Pow, canon_node(n->lhs), canon_node(n->rhs));
  if (n->op == Op::Add || n->op == Op::Sub) {
    std::vector<std::pair<int, NodePtr>> terms;
    flatten_sum(n, 1, terms);
    std::vector<NodePtr> pos, neg;
    for (auto& [s, t] : terms) (s > 0 ? pos : neg).push_back(t);
    auto p = sorted_canonical(pos, canon_node);
    auto q = sorted_canonical(neg, canon_node);
    Expression acc;
    std::size_t qi = 0;
    if (!p.empty()) {
      acc = p.front();
      for (std::size_t i = 1; i < p.size(); ++i) acc = Expression::binary(Op::Add, acc, p[i]);
    } else {
      acc = negate(q.front());
      qi = 1;
    }
    for (; qi < q.size(); ++qi) acc = Expression::binary(Op::Sub, acc, q[qi]);
    return acc;
  }
  std::vector<NodePtr> num, den;
  flatten_product(n, false, num, den);
  auto p = sorted_canonical(num, canon_node);
  auto q = sorted_canonical(den, canon_node);
  Expression acc = p.empty() ? Expression::literal(1.0) : p.front();
  for (std::size_t i = 1; i < p.size(); ++i) acc = Expression::binary(Op::Mul, acc, p[i]);
  for (const auto& d : q) acc = Expression::binary(Op::Div, acc, d);
  return acc;
}

// ---------------------------------------------------------------- traversal helpers

template <class F>
void visit(const Node& n, F&& f) {
  f(n);
  if (n.lhs) visit(*n.lhs, f);
  if (n.rhs) visit(*n.rhs, f);
}

int depth_of(const Node& n) {
  int d = 0;
  if (n.lhs) d = std::max(d, depth_of(*n.lhs));
  if (n.rhs) d = std::max(d, depth_of(*n.rhs));
  if (n.kind == Node::Kind::Unary && is_function(n.op)) ++d;
  return d;
}

NodePtr renumber(const NodePtr& n, int& next) {
  switch (n->kind) {
    case Node::Kind::Const: {
      auto c = std::make_shared<Node>(*n);
      c->index = next++;
      return c;
    }
    case Node::Kind::Unary: {
      auto c = std::make_shared<Node>(*n);
      c->lhs = renumber(n->lhs, next);
      return c;
    }
    case Node::Kind::Binary: {
      auto c = std::make_shared<Node>(*n);
      c->lhs = renumber(n->lhs, next);
      c->rhs = renumber(n->rhs, next);
      return c;
    }
    default:
      return n;
  }
}

bool is_literal_one(const Expression& e) {
  return e.node().kind == Node::Kind::Literal && e.node().value == 1.0;
}

Expression strip_literals(const Expression& e) {
  const Node& n = e.node();
  switch (n.kind) {
    case Node::Kind::Literal:
      return Expression::literal(1.0);
    case Node::Kind::Variable:
    case Node::Kind::Const:
      return e;
    case Node::Kind::Unary: {
      Expression c = strip_literals(e.lhs());
      if (n.op == Op::Neg && c.node().kind == Node::Kind::Literal) return c;
      return Expression::unary(n.op, c);
    }
    case Node::Kind::Binary:
      break;
  }
  if (n.op == Op::Pow) return Expression::binary(Op::Pow, strip_literals(e.lhs()), e.rhs());
  Expression a = strip_literals(e.lhs());
  Expression b = strip_literals(e.rhs());
  if (n.op == Op::Mul) {
    if (is_literal_one(a)) return b;
    if (is_literal_one(b)) return a;
  }
  if (n.op == Op::Div && is_literal_one(b)) return a;
  return Expression::binary(n.op, a, b);
}

Expression lift_literals(const Expression& e) {
  const Node& n = e.node();
  switch (n.kind) {
    case Node::Kind::Literal:
      return Expression::constant(0, n.value);
    case Node::Kind::Variable:
    case Node::Kind::Const:
      return e;
    case Node::Kind::Unary:
      if (n.op == Op::Neg && n.lhs->kind == Node::Kind::Literal) return Expression::constant(0, -n.lhs->value);
      return Expression::unary(n.op, lift_literals(e.lhs()));
    case Node::Kind::Binary:
      break;
  }
  if (n.op == Op::Pow && is_integer_literal(*n.rhs)) {
    return Expression::binary(Op::Pow, lift_literals(e.lhs()), e.rhs());
  }
  return Expression::binary(n.op, lift_literals(e.lhs()), lift_literals(e.rhs()));
}

std::vector<double> eval_node(const Node& n, const Bindings& data, std::span<const double> constants) {
  const std::size_t size = data.size();
  switch (n.kind) {
    case Node::Kind::Variable: {
      auto col = data.get(n.name);
      return {col.begin(), col.end()};
    }
    case Node::Kind::Const: {
      double v;
      if (static_cast<std::size_t>(n.index) < constants.size()) {
        v = constants[n.index];
      } else if (n.has_init) {
        v = n.value;
      } else {
        throw std::invalid_argument("no value for constant c" + std::to_string(n.index));
      }
      return std::vector<double>(size, v);
    }
    case Node::Kind::Literal:
      return std::vector<double>(size, n.value);
    case Node::Kind::Unary: {
      auto v = eval_node(*n.lhs, data, constants);
      double (*f)(double) = nullptr;
      switch (n.op) {
        case Op::Neg:
          for (auto& x : v) x = -x;
          return v;
        case Op::Sin: f = [](double x) { return std::sin(x); }; break;
        case Op::Cos: f = [](double x) { return std::cos(x); }; break;
        case Op::Log: f = [](double x) { return std::log(x); }; break;
        case Op::Exp: f = [](double x) { return std::exp(x); }; break;
        default: throw std::logic_error("bad unary op");
      }
      for (auto& x : v) x = f(x);
      return v;
    }
    case Node::Kind::Binary:
      break;
  }
  auto a = eval_node(*n.lhs, data, constants);
  if (n.op == Op::Pow && is_integer_literal(*n.rhs)) {
    const double p = n.rhs->value;
    if (p == 2.0) {
      for (auto& x : a) x = x * x;
    } else if (p == 3.0) {
      for (auto& x : a) x = x * x * x;
    } else {
      for (auto& x : a) x = std::pow(x, p);
    }
    return a;
  }
  auto b = eval_node(*n.rhs, data, constants);
  switch (n.op) {
    case Op::Add: for (std::size_t i = 0; i < size; ++i) a[i] += b[i]; break;
    case Op::Sub: for (std::size_t i = 0; i < size; ++i) a[i] -= b[i]; break;
    case Op::Mul: for (std::size_t i = 0; i < size; ++i) a[i] *= b[i]; break;
    case Op::Div: for (std::size_t i = 0; i < size; ++i) a[i] /= b[i]; break;
    case Op::Pow: for (std::size_t i = 0; i < size; ++i) a[i] = std::pow(a[i], b[i]); break;
    default: throw std::logic_error("bad binary op");
  }
  return a;
}

double eval_point(const Node& n, std::string_view var, double value, std::span<const double> constants) {
  switch (n.kind) {
    case Node::Kind::Variable:
      if (n.name != var) throw std::invalid_argument("unbound variable '" + n.name + "'");
      return value;
    case Node::Kind::Const:
      if (static_cast<std::size_t>(n.index) < constants.size()) return constants[n.index];
      if (n.has_init) return n.value;
      throw std::invalid_argument("no value for constant c" + std::to_string(n.index));
    case Node::Kind::Literal:
      return n.value;
    case Node::Kind::Unary: {
      const double x = eval_point(*n.lhs, var, value, constants);
      switch (n.op) {
        case Op::Neg: return -x;
        case Op::Sin: return std::sin(x);
        case Op::Cos: return std::cos(x);
        case Op::Log: return std::log(x);
        case Op::Exp: return std::exp(x);
        default: throw std::logic_error("bad unary op");
      }
    }
    case Node::Kind::Binary:
      break;
  }
  const double a = eval_point(*n.lhs, var, value, constants);
  const double b = eval_point(*n.rhs, var, value, constants);
  switch (n.op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Pow:
      if (b == 2.0) return a * a;
      return std::pow(a, b);
    default: throw std::logic_error("bad binary op");
  }
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
    case Op::Neg: return "neg";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
  }
  return "?";
}

bool is_unary(Op op) {
  return op == Op::Neg || is_function(op);
}

bool is_function(Op op) {
  return op == Op::Sin || op == Op::Cos || op == Op::Log || op == Op::Exp;
}

std::string_view violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::UnknownSymbol: return "UnknownSymbol";
    case ViolationKind::PowViolation: return "PowViolation";
    case ViolationKind::NestingViolation: return "NestingViolation";
    case ViolationKind::ConstNotAllowed: return "ConstNotAllowed";
  }
  return "?";
}

// ---------------------------------------------------------------- SymbolLibrary

bool SymbolLibrary::has_operand(std::string_view name) const {
  return std::find(operands.begin(), operands.end(), name) != operands.end();
}

void SymbolLibrary::check() const {
  std::set<std::string> seen;
  for (const auto& o : operands) {
    if (o.empty()) throw std::invalid_argument("empty operand name");
    if (!seen.insert(o).second) throw std::invalid_argument("duplicate operand '" + o + "'");
  }
  if (max_pow < 1) throw std::invalid_argument("max_pow must be >= 1");
  if (max_nesting_depth < 1) throw std::invalid_argument("max_nesting_depth must be >= 1");
}

SymbolLibrary SymbolLibrary::pde_default() {
  return pde_with_operands({"u", "x", "u_x", "u_xx", "u_xxx", "u_xxxx"});
}

SymbolLibrary SymbolLibrary::pde_with_operands(std::vector<std::string> operands) {
  SymbolLibrary lib;
  lib.operators = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};
  lib.operands = std::move(operands);
  lib.allows_const = false;
  lib.max_pow = 3;
  lib.pow_literal_only = true;
  lib.max_nesting_depth = 2;
  lib.mode = Mode::Pde;
  return lib;
}

SymbolLibrary SymbolLibrary::ode_default() {
  SymbolLibrary lib;
  lib.operators = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow, Op::Sin, Op::Cos, Op::Log, Op::Exp};
  lib.operands = {"x"};
  lib.allows_const = true;
  lib.max_pow = 6;
  lib.pow_literal_only = false;
  lib.max_nesting_depth = 2;
  lib.mode = Mode::Ode;
  return lib;
}

// ---------------------------------------------------------------- Expression

Expression Expression::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Variable;
  n->name = std::move(name);
  return Expression(n);
}

Expression Expression::constant(int index) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Const;
  n->index = index;
  return Expression(n);
}

Expression Expression::constant(int index, double init) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Const;
  n->index = index;
  n->value = init;
  n->has_init = true;
  return Expression(n);
}

Expression Expression::literal(double value) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Literal;
  n->value = value;
  return Expression(n);
}

Expression Expression::unary(Op op, const Expression& child) {
  if (!is_unary(op)) throw std::invalid_argument("not a unary operator");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Unary;
  n->op = op;
  n->lhs = child.root();
  return Expression(n);
}

Expression Expression::binary(Op op, const Expression& lhs, const Expression& rhs) {
  if (is_unary(op)) throw std::invalid_argument("not a binary operator");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->op = op;
  n->lhs = lhs.root();
  n->rhs = rhs.root();
  return Expression(n);
}

namespace {
bool nodes_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::Variable: return a.name == b.name;
    case Node::Kind::Const: return a.index == b.index;
    case Node::Kind::Literal: return a.value == b.value;
    case Node::Kind::Unary: return a.op == b.op && nodes_equal(*a.lhs, *b.lhs);
    case Node::Kind::Binary:
      return a.op == b.op && nodes_equal(*a.lhs, *b.lhs) && nodes_equal(*a.rhs, *b.rhs);
  }
  return false;
}
}  // namespace

bool operator==(const Expression& a, const Expression& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return nodes_equal(a.node(), b.node());
}

Expression operator+(const Expression& a, const Expression& b) { return Expression::binary(Op::Add, a, b); }
Expression operator-(const Expression& a, const Expression& b) { return Expression::binary(Op::Sub, a, b); }
Expression operator*(const Expression& a, const Expression& b) { return Expression::binary(Op::Mul, a, b); }
Expression operator/(const Expression& a, const Expression& b) { return Expression::binary(Op::Div, a, b); }

// ---------------------------------------------------------------- public operations

Expression parse_unchecked(std::string_view source) {
  const auto first = source.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw SyntaxError("empty expression");
  Parser p(tokenize(source));
  return p.parse_all();
}

Expression parse(std::string_view source, const SymbolLibrary& lib) {
  Expression e = parse_unchecked(source);
  auto violations = validate(e, lib);
  if (!violations.empty()) {
    const auto& v = violations.front();
    const std::string msg = std::string(violation_name(v.kind)) + ": " + v.detail;
    if (v.kind == ViolationKind::NestingViolation) throw NestingViolation(msg);
    throw LibraryViolation(msg);
  }
  return e;
}

Expression canonicalize(const Expression& e) {
  return renumber_constants(canon_node(e.root()));
}

std::string print(const Expression& e) {
  std::string out;
  print_node(e.node(), out, false);
  return out;
}

std::string print_canonical(const Expression& e) {
  return print(canonicalize(e));
}

TermList split_terms(const Expression& e) {
  std::vector<std::pair<int, NodePtr>> flat;
  flatten_sum(e.root(), 1, flat);
  TermList out;
  out.reserve(flat.size());
  for (auto& [s, n] : flat) out.push_back({s, Expression(n)});
  return out;
}

Expression join_terms(const TermList& terms) {
  if (terms.empty()) throw std::invalid_argument("join_terms: no terms");
  Expression acc = terms.front().sign > 0 ? terms.front().term : Expression::unary(Op::Neg, terms.front().term);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    acc = Expression::binary(terms[i].sign > 0 ? Op::Add : Op::Sub, acc, terms[i].term);
  }
  return acc;
}

int count_constants(const Expression& e) {
  int n = 0;
  visit(e.node(), [&](const Node& x) { n += x.kind == Node::Kind::Const; });
  return n;
}

int nesting_depth(const Expression& e) { return depth_of(e.node()); }

std::size_t node_count(const Expression& e) {
  std::size_t n = 0;
  visit(e.node(), [&](const Node&) { ++n; });
  return n;
}

std::set<std::string> variables(const Expression& e) {
  std::set<std::string> out;
  visit(e.node(), [&](const Node& x) {
    if (x.kind == Node::Kind::Variable) out.insert(x.name);
  });
  return out;
}

std::vector<double> constant_inits(const Expression& e) {
  std::vector<double> out(count_constants(e), std::nan(""));
  visit(e.node(), [&](const Node& x) {
    if (x.kind == Node::Kind::Const && x.has_init && static_cast<std::size_t>(x.index) < out.size()) {
      out[x.index] = x.value;
    }
  });
  return out;
}

std::vector<Violation> validate(const Expression& e, const SymbolLibrary& lib) {
  std::vector<Violation> out;
  visit(e.node(), [&](const Node& n) {
    switch (n.kind) {
      case Node::Kind::Variable:
        if (!lib.has_operand(n.name)) {
          out.push_back({ViolationKind::UnknownSymbol, "operand '" + n.name + "' is not in the library"});
        }
        break;
      case Node::Kind::Const:
        if (!lib.allows_const) out.push_back({ViolationKind::ConstNotAllowed, "constants are not allowed"});
        break;
      case Node::Kind::Unary:
        if (n.op != Op::Neg && !lib.has_operator(n.op)) {
          out.push_back({ViolationKind::UnknownSymbol, "operator '" + std::string(op_name(n.op)) + "' is not in the library"});
        }
        break;
      case Node::Kind::Binary:
        if (!lib.has_operator(n.op)) {
          out.push_back({ViolationKind::UnknownSymbol, "operator '" + std::string(op_name(n.op)) + "' is not in the library"});
        }
        if (n.op == Op::Pow) {
          const Node& ex = *n.rhs;
          if (lib.pow_literal_only) {
            if (!is_integer_literal(ex) || ex.value < 1 || ex.value > lib.max_pow) {
              std::string text;
              print_node(ex, text, false);
              out.push_back({ViolationKind::PowViolation,
                             "exponent '" + text + "' outside 1.." + std::to_string(lib.max_pow)});
            }
          } else if (is_integer_literal(ex) && std::abs(ex.value) > lib.max_pow) {
            out.push_back({ViolationKind::PowViolation, "exponent magnitude exceeds " + std::to_string(lib.max_pow)});
          }
        }
        break;
      case Node::Kind::Literal:
        break;
    }
  });
  if (const int d = nesting_depth(e); d > lib.max_nesting_depth) {
    out.push_back({ViolationKind::NestingViolation,
                   "function nesting depth " + std::to_string(d) + " exceeds " + std::to_string(lib.max_nesting_depth)});
  }
  return out;
}

Expression renumber_constants(const Expression& e) {
  int next = 0;
  return Expression(renumber(e.root(), next));
}

namespace {

NodePtr bind(const NodePtr& n, std::span<const double> values) {
  if (n->kind == Node::Kind::Const) {
    if (n->index < 0 || static_cast<std::size_t>(n->index) >= values.size()) {
      throw std::invalid_argument("bind_constants: no value for c" + std::to_string(n->index));
    }
    return Expression::literal(values[static_cast<std::size_t>(n->index)]).root();
  }
  if (!n->lhs) return n;
  auto copy = std::make_shared<Node>(*n);
  copy->lhs = bind(n->lhs, values);
  if (n->rhs) copy->rhs = bind(n->rhs, values);
  return copy;
}

}  // namespace

Expression bind_constants(const Expression& e, std::span<const double> values) {
  return Expression(bind(e.root(), values));
}

Expression normalize_for_mode(const Expression& e, Mode mode) {
  if (mode == Mode::Pde) return strip_literals(e);
  return renumber_constants(lift_literals(e));
}

// ---------------------------------------------------------------- evaluation

void Bindings::set(std::string name, std::span<const double> values) {
  if (values.size() != size_) throw std::invalid_argument("binding '" + name + "' has wrong length");
  columns_[std::move(name)] = values;
}

std::span<const double> Bindings::get(std::string_view name) const {
  auto it = columns_.find(name);
  if (it == columns_.end()) throw std::invalid_argument("unbound variable '" + std::string(name) + "'");
  return it->second;
}

bool Bindings::has(std::string_view name) const { return columns_.find(name) != columns_.end(); }

std::vector<double> evaluate(const Expression& e, const Bindings& data, std::span<const double> constants) {
  return eval_node(e.node(), data, constants);
}

double evaluate_scalar(const Expression& e, std::string_view var, double value, std::span<const double> constants) {
  return eval_point(e.node(), var, value, constants);
}

}  // namespace eqdisc
