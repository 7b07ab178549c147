#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "eqdisc/evaluation.hpp"

using namespace eqdisc;

namespace {

const PdeGrid& burgers() {
  static const PdeGrid g = generate_pde(PdeSystem::Burgers);
  return g;
}

EvalConfig ode_cfg() {
  EvalConfig c;
  c.mode = Mode::Ode;
  return c;
}

const SymbolLibrary& pde() {
  static const auto lib = SymbolLibrary::pde_default();
  return lib;
}
const SymbolLibrary& ode() {
  static const auto lib = SymbolLibrary::ode_default();
  return lib;
}

}  // namespace

TEST(Score, SubstitutionCases) {
  EXPECT_NEAR(score(0, 2, 0.01), 0.98, 1e-12);
  EXPECT_NEAR(score(1, 1, 0.01), 0.495, 1e-12);
  EXPECT_NEAR(score(0, 6, 0.01), 0.94, 1e-12);
}

TEST(Score, MonotoneInErrorAndTermCount) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0, 5);
  for (int i = 0; i < 200; ++i) {
    const double a = d(rng), b = a + 1e-3 + d(rng);
    const int m = 1 + i % 5;
    EXPECT_GT(score(a, m, 0.01), score(b, m, 0.01));
    EXPECT_GT(score(a, m, 0.01), score(a, m + 1, 0.01));
  }
}

TEST(Nrmse, PopulationStd) {
  const std::vector<double> y{1, 2, 3, 4};
  const std::vector<double> p{1, 2, 3, 5};
  // RMSE = 0.5, population std = sqrt(1.25).
  EXPECT_NEAR(nrmse(y, p), 0.5 / std::sqrt(1.25), 1e-15);
  EXPECT_EQ(nrmse(y, y), 0.0);
}

TEST(CoefficientError, Examples) {
  const std::vector<double> t{-1, 0.1}, f{-1.01, 0.101};
  EXPECT_NEAR(coefficient_error(t, f), 1.0, 1e-12);
  EXPECT_EQ(coefficient_error(t, t), 0.0);
  const std::vector<double> shorter{-1};
  EXPECT_THROW(coefficient_error(t, shorter), LengthMismatch);
}

TEST(RSquared, Examples) {
  const std::vector<double> y{1, 3, 2, 5};
  EXPECT_DOUBLE_EQ(r_squared(y, y), 1.0);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 4;
  EXPECT_NEAR(r_squared(y, std::vector<double>(4, mean)), 0.0, 1e-15);
  EXPECT_THROW(r_squared(std::vector<double>(3, 2.0), y), std::invalid_argument);
  EXPECT_THROW(r_squared(std::vector<double>(4, 2.0), y), ConstantTruth);
}

TEST(EvaluatePde, BurgersTruthSkeleton) {
  const auto c = evaluate_pde(parse("u*u_x + u_xx", pde()), burgers(), EvalConfig{});
  ASSERT_TRUE(c.scored()) << c.invalid_reason;
  EXPECT_EQ(c.key(), "u*u_x + u_xx");
  ASSERT_EQ(c.constants.size(), 2u);
  EXPECT_NEAR(c.constants[0], -1.0, 0.03);
  EXPECT_NEAR(c.constants[1], 0.1, 0.003);
  EXPECT_EQ(c.term_count, 2);
  EXPECT_DOUBLE_EQ(c.score, score(c.nrmse, 2, 0.01));
  EXPECT_LT(c.nrmse, 0.05);
  const auto e = recovery_error(burgers().truth, c);
  ASSERT_TRUE(e);
  EXPECT_LE(*e, 2.88);
  EXPECT_TRUE(symbolically_correct(burgers().truth, c));
}

TEST(EvaluatePde, SpuriousCubicIsThresholded) {
  const auto c = evaluate_pde(parse("u*u_x + u_xx + u^3", pde()), burgers(), EvalConfig{});
  ASSERT_TRUE(c.scored());
  EXPECT_EQ(c.key(), "u*u_x + u_xx");
  EXPECT_EQ(c.term_count, 2);
  EXPECT_EQ(c.proposed_key(), "u*u_x + u^3 + u_xx");
}

TEST(EvaluatePde, ConstantTermActsAsIntercept) {
  const auto c = evaluate_pde(parse("u*u_x + u_xx + u_x/u_x", pde()), burgers(), EvalConfig{});
  EXPECT_TRUE(c.scored()) << c.invalid_reason;
}

TEST(EvaluatePde, ExtraNoiseTermNeverBeatsTruthScore) {
  const auto truth = evaluate_pde(parse("u*u_x + u_xx", pde()), burgers(), EvalConfig{});
  for (const char* extra : {"u*u_x + u_xx + u", "u*u_x + u_xx + u^2", "u*u_x + u_xx + u_x", "u*u_x + u_xx + x"}) {
    const auto c = evaluate_pde(parse(extra, pde()), burgers(), EvalConfig{});
    ASSERT_TRUE(c.scored()) << extra;
    EXPECT_LE(c.score, truth.score) << extra;
  }
}

TEST(EvaluatePde, InvalidCases) {
  EvalConfig cfg;
  const auto too_many = evaluate_pde(parse("u + u_x + u_xx + u_xxx + u_xxxx + x + u^2", pde()), burgers(), cfg);
  EXPECT_FALSE(too_many.scored());
  // Division by an identically zero field is non-finite on every row.
  const auto divide = evaluate_pde(parse("u_x/(u - u)", pde()), burgers(), cfg);
  EXPECT_FALSE(divide.scored());
}

TEST(EvaluatePde, PdeDivideTruth) {
  const auto g = generate_pde(PdeSystem::PdeDivide);
  const auto c = evaluate_pde(parse("u_x/x + u_xx", pde()), g, EvalConfig{});
  ASSERT_TRUE(c.scored());
  EXPECT_NEAR(c.constants[0], -1.0, 0.01);
  EXPECT_NEAR(c.constants[1], 0.25, 0.0025);
}

TEST(EvaluatePde, DeterministicAndKeyStable) {
  const auto a = evaluate_pde(parse("u_xx + u*u_x", pde()), burgers(), EvalConfig{});
  const auto b = evaluate_pde(parse("u*u_x + u_xx", pde()), burgers(), EvalConfig{});
  EXPECT_EQ(a.key(), b.key());
  EXPECT_EQ(a.score, b.score);
}

TEST(EvaluateOde, OdeOneLinear) {
  const auto tr = generate_odebench(1, WhichIc::Train);
  const auto c = evaluate_ode(parse("c0 + c1*x", ode()), tr, ode_cfg());
  ASSERT_TRUE(c.scored());
  EXPECT_LT(c.nrmse, 1e-6);
  EXPECT_NEAR(c.score, 0.98, 1e-6);
  const auto te = generate_odebench(1, WhichIc::Test);
  const auto r2 = trajectory_r2(c, te);
  ASSERT_TRUE(r2);
  EXPECT_GE(*r2, 0.999);
}

TEST(EvaluateOde, ExactSkeletonScoresMaximum) {
  const auto tr = generate_odebench(16, WhichIc::Train);
  const auto c = evaluate_ode(parse("c0 - c1*sin(x)", ode()), tr, ode_cfg());
  ASSERT_TRUE(c.scored());
  EXPECT_NEAR(c.score, 1 - 0.01 * c.term_count, 1e-6);
}

TEST(EvaluateOde, OverflowIsInvalid) {
  const auto tr = generate_odebench(4, WhichIc::Train);
  const auto c = evaluate_ode(parse("exp(exp(x))", ode()), tr, ode_cfg());
  EXPECT_FALSE(c.scored());
}

TEST(EvaluateOde, ConstantFreeSkeletonGetsLinearCoefficient) {
  const auto tr = generate_odebench(1, WhichIc::Train);
  const auto c = evaluate_ode(parse("x", ode()), tr, ode_cfg());
  ASSERT_TRUE(c.scored());
  EXPECT_LT(c.nrmse, 1.0);
}

TEST(EvaluateOde, DeterministicGivenSeed) {
  const auto tr = generate_odebench(5, WhichIc::Train);
  const auto sk = parse("c0*log(c1*x)*x", ode());
  const auto a = evaluate_ode(sk, tr, ode_cfg(), 9);
  const auto b = evaluate_ode(sk, tr, ode_cfg(), 9);
  EXPECT_EQ(a.constants, b.constants);
  EXPECT_EQ(a.score, b.score);
}

TEST(EvaluateBatch, MatchesSerialEvaluation) {
  const std::vector<Expression> sks{parse("u*u_x + u_xx", pde()), parse("u_xx", pde()), parse("u + u_x", pde()),
                                    parse("u^2 + u_xxx", pde())};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const Dataset data = burgers();
  const auto batch = evaluate_batch(sks, data, EvalConfig{}, seeds);
  ASSERT_EQ(batch.size(), sks.size());
  for (std::size_t i = 0; i < sks.size(); ++i) {
    const auto one = evaluate(sks[i], data, EvalConfig{}, seeds[i]);
    EXPECT_EQ(batch[i].key(), one.key());
    EXPECT_EQ(batch[i].score, one.score);
  }
}

TEST(EvalConfig, Check) {
  EvalConfig c;
  EXPECT_NO_THROW(c.check());
  c.zeta1 = 0.2;
  EXPECT_THROW(c.check(), std::invalid_argument);
}
