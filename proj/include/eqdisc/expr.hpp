#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eqdisc {

enum class Op { Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Log, Exp };

std::string_view op_name(Op op);
bool is_unary(Op op);
/// Unary functions that count toward the nesting limit (neg does not).
bool is_function(Op op);

enum class Mode { Pde, Ode };

struct SymbolLibrary {
  std::set<Op> operators;
  std::vector<std::string> operands;
  bool allows_const = false;
  int max_pow = 3;
  /// Exponents must be integer literals in [1, max_pow] (PDE style).
  bool pow_literal_only = true;
  int max_nesting_depth = 2;
  Mode mode = Mode::Pde;

  bool has_operand(std::string_view name) const;
  bool has_operator(Op op) const { return operators.count(op) != 0; }
  /// Throws std::invalid_argument when the library invariants do not hold.
  void check() const;

  /// {+,-,*,/,^2,^3} over {u, x, u_x, u_xx, u_xxx, u_xxxx}, no constants.
  static SymbolLibrary pde_default();
  /// Default PDE operators over a custom operand set (multi-field grids).
  static SymbolLibrary pde_with_operands(std::vector<std::string> operands);
  /// {+,-,*,/,^,sin,cos,log,exp} over {x, const}.
  static SymbolLibrary ode_default();
};

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SyntaxError : public ExprError {
 public:
  using ExprError::ExprError;
};
class LibraryViolation : public ExprError {
 public:
  using ExprError::ExprError;
};
class NestingViolation : public ExprError {
 public:
  using ExprError::ExprError;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind { Binary, Unary, Variable, Const, Literal };
  Kind kind;
  Op op = Op::Add;
  std::string name;   // Variable
  int index = 0;      // Const placeholder index
  double value = 0.0; // Literal value, or initial guess of a Const
  bool has_init = false;
  NodePtr lhs;        // Binary left, Unary child
  NodePtr rhs;        // Binary right
};

/// Immutable expression tree. Copies share structure.
class Expression {
 public:
  Expression() = default;
  explicit Expression(NodePtr root) : root_(std::move(root)) {}

  static Expression variable(std::string name);
  static Expression constant(int index);
  static Expression constant(int index, double init);
  static Expression literal(double value);
  static Expression unary(Op op, const Expression& child);
  static Expression binary(Op op, const Expression& lhs, const Expression& rhs);

  const Node& node() const { return *root_; }
  const NodePtr& root() const { return root_; }
  bool empty() const { return !root_; }

  Expression lhs() const { return Expression(root_->lhs); }
  Expression rhs() const { return Expression(root_->rhs); }

  /// Structural equality (literal values compared exactly).
  friend bool operator==(const Expression& a, const Expression& b);

 private:
  NodePtr root_;
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);

struct SignedTerm {
  int sign = 1;
  Expression term;
};
using TermList = std::vector<SignedTerm>;

enum class ViolationKind { UnknownSymbol, PowViolation, NestingViolation, ConstNotAllowed };

struct Violation {
  ViolationKind kind;
  std::string detail;
};
std::string_view violation_name(ViolationKind kind);

/// Parses without any library checks. `const` and `c<k>` become placeholders
/// renumbered in reading order.
Expression parse_unchecked(std::string_view source);

/// Parses and validates against `lib`, throwing the first violation.
Expression parse(std::string_view source, const SymbolLibrary& lib);

/// Rebuilds add/sub and mul/div chains with sorted operands. No algebra.
Expression canonicalize(const Expression& e);
std::string print(const Expression& e);
std::string print_canonical(const Expression& e);

TermList split_terms(const Expression& e);
/// Folds signed terms back into a left-associated chain.
Expression join_terms(const TermList& terms);

int count_constants(const Expression& e);
int nesting_depth(const Expression& e);
std::size_t node_count(const Expression& e);
std::set<std::string> variables(const Expression& e);
/// Initial values carried by placeholders (NaN where none).
std::vector<double> constant_inits(const Expression& e);
std::vector<Violation> validate(const Expression& e, const SymbolLibrary& lib);

/// Renumbers placeholders 0..n-1 in left-to-right order.
Expression renumber_constants(const Expression& e);

/// Replaces placeholder c_i with the literal values[i].
Expression bind_constants(const Expression& e, std::span<const double> values);

/// Applies the per-mode literal policy for model-proposed skeletons:
/// PDE drops coefficient literals, ODE lifts them into placeholders.
/// Integer pow exponents are kept as literals in both modes.
Expression normalize_for_mode(const Expression& e, Mode mode);

/// Column-wise bindings for vectorised evaluation.
class Bindings {
 public:
  explicit Bindings(std::size_t size) : size_(size) {}
  void set(std::string name, std::span<const double> values);
  std::span<const double> get(std::string_view name) const;
  bool has(std::string_view name) const;
  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  std::map<std::string, std::span<const double>, std::less<>> columns_;
};

std::vector<double> evaluate(const Expression& e, const Bindings& data,
                             std::span<const double> constants = {});

/// Point evaluation for a single-variable expression; `var` names the state.
double evaluate_scalar(const Expression& e, std::string_view var, double value,
                       std::span<const double> constants = {});

}  // namespace eqdisc
