#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "eqdisc/expr.hpp"

using namespace eqdisc;

namespace {

const SymbolLibrary& pde() {
  static const auto lib = SymbolLibrary::pde_default();
  return lib;
}
const SymbolLibrary& ode() {
  static const auto lib = SymbolLibrary::ode_default();
  return lib;
}

double eval1(std::string_view src, double x) { return evaluate_scalar(parse_unchecked(src), "x", x); }

}  // namespace

TEST(Parse, BuildsExpectedTree) {
  const auto e = parse("u*u_x + u_xx", pde());
  ASSERT_EQ(e.node().kind, Node::Kind::Binary);
  EXPECT_EQ(e.node().op, Op::Add);
  EXPECT_EQ(e.lhs().node().op, Op::Mul);
  EXPECT_EQ(e.lhs().lhs().node().name, "u");
  EXPECT_EQ(e.lhs().rhs().node().name, "u_x");
  EXPECT_EQ(e.rhs().node().name, "u_xx");
  const auto expected = Expression::variable("u") * Expression::variable("u_x") + Expression::variable("u_xx");
  EXPECT_TRUE(e == expected);
}

TEST(Parse, PlaceholdersIndexedInReadingOrder) {
  const auto e = parse("c0 + c1*x", ode());
  EXPECT_EQ(e.lhs().node().kind, Node::Kind::Const);
  EXPECT_EQ(e.lhs().node().index, 0);
  EXPECT_EQ(e.rhs().lhs().node().index, 1);
  EXPECT_EQ(count_constants(e), 2);
}

TEST(Parse, ConstTokensAreDistinct) {
  const auto e = parse("const*x + const", ode());
  EXPECT_EQ(count_constants(e), 2);
  EXPECT_EQ(print(e), "c0*x + c1");
}

TEST(Parse, Precedence) {
  EXPECT_DOUBLE_EQ(eval1("2^3^2", 0), 512.0);  // right-associative
  EXPECT_DOUBLE_EQ(eval1("-2^2", 0), -4.0);    // ^ binds tighter than unary minus
  EXPECT_DOUBLE_EQ(eval1("8 - 3 - 2", 0), 3.0);
  EXPECT_DOUBLE_EQ(eval1("8/4/2", 0), 1.0);
  EXPECT_DOUBLE_EQ(eval1("2 + 3*4", 0), 14.0);
  EXPECT_DOUBLE_EQ(eval1("2**3", 0), 8.0);
  EXPECT_DOUBLE_EQ(eval1("  x *  x ", 3), 9.0);
  EXPECT_DOUBLE_EQ(eval1("-x*2", 3), -6.0);
}

TEST(Parse, SyntaxErrors) {
  EXPECT_THROW(parse("sin(", ode()), SyntaxError);
  EXPECT_THROW(parse("u*(", pde()), SyntaxError);
  EXPECT_THROW(parse("u + ", pde()), SyntaxError);
  EXPECT_THROW(parse("", pde()), SyntaxError);
  EXPECT_THROW(parse("u $ u_x", pde()), SyntaxError);
  EXPECT_THROW(parse("(u))", pde()), SyntaxError);
}

TEST(Parse, LibraryViolations) {
  EXPECT_THROW(parse("v + u", pde()), LibraryViolation);
  EXPECT_THROW(parse("u^5", pde()), LibraryViolation);
  EXPECT_THROW(parse("c0*u", pde()), LibraryViolation);
  EXPECT_THROW(parse("sin(u)", pde()), LibraryViolation);
  EXPECT_THROW(parse("sin(sin(sin(x)))", ode()), NestingViolation);
  EXPECT_NO_THROW(parse("sin(cos(x))", ode()));
}

TEST(Canonical, CommutativeOrdering) {
  const auto a = Expression::variable("u_xx") + Expression::variable("u") * Expression::variable("u_x");
  const auto b = Expression::variable("u") * Expression::variable("u_x") + Expression::variable("u_xx");
  EXPECT_EQ(print_canonical(a), "u*u_x + u_xx");
  EXPECT_EQ(print_canonical(b), "u*u_x + u_xx");
  EXPECT_EQ(print_canonical(parse("u^3", pde())), "u^3");
  EXPECT_EQ(print_canonical(parse("u_x*u", pde())), "u*u_x");
}

TEST(Canonical, ConstantsRenumberedAfterSorting) {
  EXPECT_EQ(print_canonical(parse("x*c1 + c0", ode())), "c0 + c1*x");
  EXPECT_EQ(print_canonical(parse("c0*x + c1", ode())), "c0 + c1*x");
}

TEST(Canonical, NoAlgebra) {
  EXPECT_EQ(print_canonical(parse("u - u_x + u", pde())), "u + u - u_x");
  EXPECT_NE(print_canonical(parse("u*(u_x + u_xx)", pde())), print_canonical(parse("u*u_x + u*u_xx", pde())));
}

TEST(SplitTerms, Examples) {
  const auto terms = split_terms(parse("u*u_x + u_xx - u^3", pde()));
  ASSERT_EQ(terms.size(), 3u);
  EXPECT_EQ(terms[0].sign, 1);
  EXPECT_EQ(print(terms[0].term), "u*u_x");
  EXPECT_EQ(terms[1].sign, 1);
  EXPECT_EQ(print(terms[1].term), "u_xx");
  EXPECT_EQ(terms[2].sign, -1);
  EXPECT_EQ(print(terms[2].term), "u^3");

  const auto single = split_terms(parse("u_xx", pde()));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].sign, 1);

  const auto repeated = split_terms(parse("u + u - u", pde()));
  ASSERT_EQ(repeated.size(), 3u);
  EXPECT_EQ(repeated[2].sign, -1);
}

TEST(SplitTerms, SignsThroughNestedSubtraction) {
  const auto terms = split_terms(parse("u - (u_x - u_xx)", pde()));
  ASSERT_EQ(terms.size(), 3u);
  EXPECT_EQ(terms[1].sign, -1);
  EXPECT_EQ(terms[2].sign, 1);
  EXPECT_EQ(print(terms[2].term), "u_xx");
}

TEST(CountConstants, Examples) {
  EXPECT_EQ(count_constants(parse("c0 + c1*x", ode())), 2);
  EXPECT_EQ(count_constants(parse("u*u_x + u_xx", pde())), 0);
  EXPECT_EQ(count_constants(parse("c0*exp(c1*x) - c2*sin(x)/x + c3", ode())), 4);
}

TEST(Validate, Examples) {
  const auto nested = validate(parse_unchecked("sin(sin(sin(x)))"), ode());
  ASSERT_EQ(nested.size(), 1u);
  EXPECT_EQ(nested[0].kind, ViolationKind::NestingViolation);

  const auto pow = validate(parse_unchecked("u^5"), pde());
  ASSERT_FALSE(pow.empty());
  EXPECT_EQ(pow[0].kind, ViolationKind::PowViolation);

  EXPECT_TRUE(validate(parse_unchecked("c0 + c1*x"), ode()).empty());

  const auto consts = validate(parse_unchecked("c0*u"), pde());
  ASSERT_FALSE(consts.empty());
  EXPECT_EQ(consts[0].kind, ViolationKind::ConstNotAllowed);
}

TEST(Validate, NegationDoesNotCountAsNesting) {
  EXPECT_EQ(nesting_depth(parse_unchecked("-sin(-cos(x))")), 2);
  EXPECT_TRUE(validate(parse_unchecked("-sin(-cos(x))"), ode()).empty());
}

TEST(NormalizeForMode, PdeDropsLiteralCoefficients) {
  const auto e = normalize_for_mode(parse_unchecked("0.5*u*u_x - 3*u_xx + 2"), Mode::Pde);
  EXPECT_EQ(print(e), "u*u_x - u_xx + 1");
  EXPECT_EQ(print(normalize_for_mode(parse_unchecked("u^2"), Mode::Pde)), "u^2");
}

TEST(NormalizeForMode, OdeLiftsLiteralsToPlaceholders) {
  const auto e = normalize_for_mode(parse_unchecked("0.5*x + x^2 - 3"), Mode::Ode);
  EXPECT_EQ(print(e), "c0*x + x^2 - c1");
  const auto inits = constant_inits(e);
  ASSERT_EQ(inits.size(), 2u);
  EXPECT_DOUBLE_EQ(inits[0], 0.5);
  EXPECT_DOUBLE_EQ(inits[1], 3.0);
}

TEST(BindConstants, SubstitutesValues) {
  const auto e = parse("c0 + c1*x", ode());
  const std::vector<double> v{2.0, -3.0};
  EXPECT_DOUBLE_EQ(evaluate_scalar(bind_constants(e, v), "x", 2.0), -4.0);
  EXPECT_DOUBLE_EQ(evaluate_scalar(e, "x", 2.0, v), -4.0);
}

// ---------------------------------------------------------------- properties

namespace {

class TreeGen {
 public:
  explicit TreeGen(std::uint64_t seed) : rng_(seed) {}

  Expression any(int depth) {
    const int pick = depth <= 0 ? roll(0, 2) : roll(0, 9);
    switch (pick) {
      case 0:
      case 1: return Expression::variable(roll(0, 1) ? "x" : "y");
      case 2: return Expression::literal(roll(1, 5));
      case 3: return any(depth - 1) + any(depth - 1);
      case 4: return any(depth - 1) - any(depth - 1);
      case 5: return any(depth - 1) * any(depth - 1);
      case 6: return any(depth - 1) / (Expression::literal(2) + Expression::variable("y") * Expression::variable("y"));
      case 7: return Expression::binary(Op::Pow, any(depth - 1), Expression::literal(roll(2, 3)));
      case 8: return Expression::unary(roll(0, 1) ? Op::Sin : Op::Cos, leaf());
      default: return Expression::unary(Op::Neg, any(depth - 1));
    }
  }

 private:
  Expression leaf() { return Expression::variable(roll(0, 1) ? "x" : "y"); }
  int roll(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::mt19937_64 rng_;
};

struct Sample {
  std::vector<double> x, y;
  Bindings bindings() const {
    Bindings b(x.size());
    b.set("x", x);
    b.set("y", y);
    return b;
  }
};

Sample random_sample(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  Sample s;
  for (int i = 0; i < 32; ++i) {
    s.x.push_back(d(rng));
    s.y.push_back(d(rng));
  }
  return s;
}

}  // namespace

TEST(ExprProperties, CanonicalRoundTripAndIdempotence) {
  TreeGen gen(11);
  for (int i = 0; i < 300; ++i) {
    const auto e = gen.any(4);
    const std::string canon = print_canonical(e);
    const auto reparsed = parse_unchecked(canon);
    EXPECT_TRUE(canonicalize(reparsed) == canonicalize(e)) << canon;
    EXPECT_EQ(print_canonical(reparsed), canon);
  }
}

TEST(ExprProperties, PrintParseRoundTrip) {
  TreeGen gen(12);
  for (int i = 0; i < 300; ++i) {
    const auto e = gen.any(4);
    EXPECT_TRUE(parse_unchecked(print(e)) == e) << print(e);
  }
}

TEST(ExprProperties, SplitRecomposeIsPointwiseExact) {
  TreeGen gen(13);
  const Sample s = random_sample(99);
  const Bindings b = s.bindings();
  for (int i = 0; i < 300; ++i) {
    const auto e = gen.any(4);
    const auto whole = evaluate(e, b);
    std::vector<double> sum(whole.size(), 0.0), mag(whole.size(), 0.0);
    for (const auto& t : split_terms(e)) {
      const auto v = evaluate(t.term, b);
      for (std::size_t k = 0; k < v.size(); ++k) {
        sum[k] += t.sign * v[k];
        mag[k] += std::abs(v[k]);
      }
    }
    for (std::size_t k = 0; k < whole.size(); ++k) {
      EXPECT_NEAR(whole[k], sum[k], 1e-12 * std::max(1.0, mag[k])) << print(e);
    }
    const auto rejoined = evaluate(join_terms(split_terms(e)), b);
    for (std::size_t k = 0; k < whole.size(); ++k) {
      EXPECT_NEAR(whole[k], rejoined[k], 1e-12 * std::max(1.0, mag[k]));
    }
  }
}

TEST(ExprProperties, OperandOrderDoesNotChangeCanonicalForm) {
  TreeGen gen(14);
  for (int i = 0; i < 200; ++i) {
    const auto a = gen.any(3);
    const auto b = gen.any(3);
    const auto c = gen.any(2);
    EXPECT_EQ(print_canonical(a + b), print_canonical(b + a));
    EXPECT_EQ(print_canonical(a * b), print_canonical(b * a));
    EXPECT_EQ(print_canonical((a + b) * c), print_canonical(c * (b + a)));
    EXPECT_EQ(print_canonical(a - b + c), print_canonical(c + a - b));
  }
}

TEST(ExprProperties, CanonicalizationPreservesValues) {
  TreeGen gen(15);
  const Sample s = random_sample(7);
  const Bindings b = s.bindings();
  for (int i = 0; i < 200; ++i) {
    const auto e = gen.any(4);
    const auto v1 = evaluate(e, b);
    const auto v2 = evaluate(canonicalize(e), b);
    for (std::size_t k = 0; k < v1.size(); ++k) EXPECT_NEAR(v1[k], v2[k], 1e-9 * std::max(1.0, std::abs(v1[k])));
  }
}
