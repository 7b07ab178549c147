#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <limits>
#include <random>

#include "eqdisc/datasets.hpp"
#include "eqdisc/evaluation.hpp"
#include "eqdisc/numerics.hpp"

using namespace eqdisc;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

// Least squares on the augmented system [theta; sqrt(lambda) I] via SVD.
Vector pinv_ridge(const Matrix& theta, const Vector& y, double lambda) {
  const auto p = theta.cols();
  Matrix a(theta.rows() + p, p);
  a << theta, std::sqrt(lambda) * Matrix::Identity(p, p);
  Vector b = Vector::Zero(theta.rows() + p);
  b.head(theta.rows()) = y;
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector inv = svd.singularValues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] > 1e-14 * inv[0] ? 1.0 / inv[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * b;
}

double max_interior_error(std::size_t n) {
  const double h = 2 * std::numbers::pi / static_cast<double>(n - 1);
  const auto x = linspace(0, 2 * std::numbers::pi, n);
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = std::sin(x[i]);
  const auto d = fd_derivative(u, 1, h);
  double err = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) err = std::max(err, std::abs(d[i] - std::cos(x[i])));
  return err;
}

}  // namespace

TEST(FiniteDifference, QuadraticSecondDerivativeExact) {
  const auto x = linspace(-3, 5, 41);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] * x[i];
  const auto d = fd_derivative(u, 2, x[1] - x[0]);
  for (std::size_t i = 1; i + 1 < d.size(); ++i) EXPECT_NEAR(d[i], 2.0, 1e-9);
}

TEST(FiniteDifference, SecondOrderConvergenceOnSine) {
  const double ratio = max_interior_error(101) / max_interior_error(201);
  EXPECT_NEAR(ratio, 4.0, 0.5);
}

TEST(FiniteDifference, BoundariesAreSecondOrderToo) {
  auto end_error = [](std::size_t n) {
    const double h = 1.0 / static_cast<double>(n - 1);
    const auto x = linspace(0, 1, n);
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = std::exp(x[i]);
    const auto d = fd_derivative(u, 1, h);
    return std::max(std::abs(d.front() - 1.0), std::abs(d.back() - std::exp(1.0)));
  };
  EXPECT_NEAR(end_error(51) / end_error(101), 4.0, 0.6);
}

TEST(FiniteDifference, HigherOrdersOnPolynomials) {
  const auto x = linspace(-1, 1, 31);
  const double h = x[1] - x[0];
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = std::pow(x[i], 4);
  const auto d3 = fd_derivative(u, 3, h);
  const auto d4 = fd_derivative(u, 4, h);
  for (std::size_t i = 3; i + 3 < x.size(); ++i) {
    EXPECT_NEAR(d4[i], 24.0, 1e-6);
    EXPECT_NEAR(d3[i], 24.0 * x[i], 0.05);
  }
}

TEST(FiniteDifference, WeightsMatchClassicStencils) {
  const std::vector<double> pts{-1, 0, 1};
  const auto w1 = fd_weights(pts, 0, 1);
  EXPECT_NEAR(w1[0], -0.5, 1e-14);
  EXPECT_NEAR(w1[1], 0.0, 1e-14);
  EXPECT_NEAR(w1[2], 0.5, 1e-14);
  const auto w2 = fd_weights(pts, 0, 2);
  EXPECT_NEAR(w2[0], 1.0, 1e-14);
  EXPECT_NEAR(w2[1], -2.0, 1e-14);
  EXPECT_NEAR(w2[2], 1.0, 1e-14);
}

TEST(FiniteDifference, Errors) {
  const std::vector<double> u(20, 1.0);
  EXPECT_THROW(fd_derivative(u, 5, 0.1), GridTooSmall);
  EXPECT_THROW(fd_derivative(std::vector<double>(4, 1.0), 2, 0.1), GridTooSmall);
}

TEST(FiniteDifference, TimeAxisOnGrid) {
  const std::size_t nt = 21, nx = 5;
  std::vector<double> g(nt * nx);
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < nx; ++j) g[i * nx + j] = 3.0 * static_cast<double>(i) * 0.1 + static_cast<double>(j);
  const auto d = fd_derivative(g, nt, nx, Axis::Time, 1, 0.1);
  for (double v : d) EXPECT_NEAR(v, 3.0, 1e-10);
}

TEST(Ridge, Examples) {
  Matrix theta(2, 1);
  theta << 1, 2;
  Vector y(2);
  y << 1, 2;
  EXPECT_NEAR(ridge(theta, y, 0.0)[0], 1.0, 1e-14);
  EXPECT_NEAR(ridge(theta, y, 0.001)[0], 5.0 / 5.001, 1e-14);
}

TEST(Ridge, MatchesPseudoInverseOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix theta(20, 3);
    Vector y(20);
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 3; ++j) theta(i, j) = n(rng);
      y[i] = n(rng);
    }
    for (double lambda : {0.0, 0.001}) {
      const Vector got = ridge(theta, y, lambda);
      const Vector want = pinv_ridge(theta, y, lambda);
      EXPECT_LE((got - want).norm(), 1e-8 * want.norm());
    }
  }
}

TEST(Ridge, SingularWithoutRegularisation) {
  Matrix theta(3, 2);
  theta << 1, 2, 2, 4, 3, 6;
  Vector y(3);
  y << 1, 2, 3;
  EXPECT_THROW(ridge(theta, y, 0.0), SingularSystem);
  EXPECT_NO_THROW(ridge(theta, y, 0.1));
}

TEST(Stridge, ZeroColumnGetsZeroCoefficient) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Matrix theta(50, 3);
  Vector y(50);
  for (int i = 0; i < 50; ++i) {
    theta(i, 0) = n(rng);
    theta(i, 1) = n(rng);
    theta(i, 2) = 0.0;
    y[i] = 2 * theta(i, 0) - theta(i, 1);
  }
  const Vector xi = stridge(theta, y, 1e-3, 0.05, 10);
  ASSERT_EQ(xi.size(), 3);
  EXPECT_EQ(xi[2], 0.0);
  EXPECT_NEAR(xi[0], 2.0, 1e-3);
  EXPECT_NEAR(xi[1], -1.0, 1e-3);
}

TEST(Stridge, ThresholdAboveEverythingEliminatesAll) {
  Matrix theta(3, 1);
  theta << 1, 2, 3;
  Vector y(3);
  y << 0.1, 0.2, 0.3;
  EXPECT_THROW(stridge(theta, y, 1e-3, 10.0, 10), AllCoefficientsEliminated);
}

TEST(Stridge, SupportIsSubsetOfRidgeSupport) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix theta(40, 5);
    Vector y(40);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 5; ++j) theta(i, j) = n(rng);
      theta(i, 4) = 0.0;
      y[i] = theta(i, 0) + 0.01 * theta(i, 1) + 0.3 * n(rng);
    }
    const Vector r = ridge(theta, y, 1e-3);
    Vector s;
    try {
      s = stridge(theta, y, 1e-3, 0.05, 10);
    } catch (const AllCoefficientsEliminated&) {
      continue;
    }
    for (int j = 0; j < 5; ++j)
      if (s[j] != 0.0) EXPECT_NE(r[j], 0.0);
    EXPECT_EQ(s[4], 0.0);
  }
}

TEST(Stridge, RecoversBurgersTermsFromGeneratedData) {
  const PdeGrid g = generate_pde(PdeSystem::Burgers);
  const auto u = g.column("u"), ux = g.column("u_x"), uxx = g.column("u_xx"), ut = g.column("u_t");
  std::vector<std::size_t> rows;
  for (std::size_t i = kTimeMargin; i + kTimeMargin < g.n_t(); ++i)
    for (std::size_t j = kSpaceMargin; j + kSpaceMargin < g.n_x(); ++j) rows.push_back(i * g.n_x() + j);
  Matrix theta(static_cast<Eigen::Index>(rows.size()), 5);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto k = rows[r];
    const auto ri = static_cast<Eigen::Index>(r);
    theta(ri, 0) = u[k] * ux[k];
    theta(ri, 1) = uxx[k];
    theta(ri, 2) = u[k];
    theta(ri, 3) = ux[k];
    theta(ri, 4) = u[k] * u[k];
    y[ri] = ut[k];
  }
  StridgeOptions opts;
  opts.relative = true;
  opts.normalize = true;
  const Vector xi = stridge(theta, y, opts);
  EXPECT_NEAR(xi[0], -1.0, 0.03);
  EXPECT_NEAR(xi[1], 0.1, 0.003);
  EXPECT_EQ(xi[2], 0.0);
  EXPECT_EQ(xi[3], 0.0);
  EXPECT_EQ(xi[4], 0.0);
}

TEST(Gradient, MatchesFivePointOracle) {
  const Objective f = [](std::span<const double> p) { return std::sin(p[0]) * std::exp(p[1]) + p[0] * p[0] * p[1]; };
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> p{d(rng), d(rng)};
    const auto g = numeric_gradient(f, p);
    for (std::size_t i = 0; i < 2; ++i) {
      const double h = 1e-3;
      auto at = [&](double s) {
        auto q = p;
        q[i] += s;
        return f(q);
      };
      const double oracle = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      EXPECT_LE(std::abs(g[i] - oracle), 1e-4 * std::max(1.0, std::abs(oracle)));
    }
  }
}

TEST(Gradient, FitObjectiveMatchesAnalyticGradient) {
  // MSE of xdot against c0*x + c1*sin(c2*x); the analytic gradient is the oracle.
  const auto xs = linspace(-2, 2, 64);
  std::vector<double> xdot(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xdot[i] = 0.7 * xs[i] - 1.3 * std::sin(0.9 * xs[i]);
  const auto skeleton = parse("c0*x + c1*sin(c2*x)", SymbolLibrary::ode_default());
  Bindings b(xs.size());
  b.set("x", xs);
  const Objective mse = [&](std::span<const double> c) {
    const auto pred = evaluate(skeleton, b, c);
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (xdot[i] - pred[i]) * (xdot[i] - pred[i]);
    return s / static_cast<double>(xs.size());
  };
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> c{n(rng), n(rng), n(rng)};
    std::vector<double> exact(3, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = xs[i];
      const double r = xdot[i] - (c[0] * x + c[1] * std::sin(c[2] * x));
      exact[0] += -2 * r * x;
      exact[1] += -2 * r * std::sin(c[2] * x);
      exact[2] += -2 * r * c[1] * x * std::cos(c[2] * x);
    }
    const auto g = numeric_gradient(mse, c);
    for (std::size_t k = 0; k < 3; ++k) {
      exact[k] /= static_cast<double>(xs.size());
      EXPECT_LE(std::abs(g[k] - exact[k]), 1e-4 * std::max(1.0, std::abs(exact[k])));
    }
  }
}

TEST(Bfgs, Rosenbrock) {
  const Objective f = [](std::span<const double> p) {
    return 100 * std::pow(p[1] - p[0] * p[0], 2) + std::pow(1 - p[0], 2);
  };
  MinimizeOptions o;
  o.max_iter = 2000;
  const auto r = bfgs_minimize(f, {-1.2, 1.0}, o);
  EXPECT_NEAR(r.constants[0], 1.0, 1e-4);
  EXPECT_NEAR(r.constants[1], 1.0, 1e-4);
  EXPECT_GE(r.objective, 0.0);
}

TEST(FitConstants, ExactLinearModel) {
  const auto xs = linspace(-1, 3, 50);
  std::vector<double> xdot(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xdot[i] = 2 * xs[i] + 1;
  const auto r = fit_constants(parse("c0*x + c1", SymbolLibrary::ode_default()), xs, xdot);
  ASSERT_EQ(r.constants.size(), 2u);
  EXPECT_NEAR(r.constants[0], 2.0, 1e-6);
  EXPECT_NEAR(r.constants[1], 1.0, 1e-6);
  EXPECT_LT(r.objective, 1e-12);
}

TEST(FitConstants, OdeOneReportedCoefficients) {
  const auto traj = generate_odebench(1, WhichIc::Train);
  const auto r = fit_constants(parse("c0 + c1*x", SymbolLibrary::ode_default()), traj.x, traj.xdot);
  EXPECT_NEAR(r.constants[0], 0.3031, 5e-4);
  EXPECT_NEAR(r.constants[1], -0.3608, 5e-4);
}

TEST(FitConstants, OdeFiveReportedCoefficients) {
  const auto traj = generate_odebench(5, WhichIc::Train);
  const auto r = fit_constants(parse("c0*log(c1*x)*x", SymbolLibrary::ode_default()), traj.x, traj.xdot);
  EXPECT_NEAR(r.constants[0], 0.032, 5e-4);
  EXPECT_NEAR(r.constants[1], 2.2901, 5e-3);
}

TEST(FitConstants, NoFiniteStart) {
  const std::vector<double> xs{-1, -2, -3}, xdot{1, 1, 1};
  FitOptions o;
  o.restarts = 3;
  EXPECT_THROW(fit_constants(parse("c0*log(x)", SymbolLibrary::ode_default()), xs, xdot, o), NoFiniteStart);
}

TEST(FitConstants, DeterministicGivenSeed) {
  const auto traj = generate_odebench(16, WhichIc::Train);
  const auto sk = parse("c0 - c1*sin(x)", SymbolLibrary::ode_default());
  FitOptions o;
  o.seed = 77;
  const auto a = fit_constants(sk, traj.x, traj.xdot, o);
  const auto b = fit_constants(sk, traj.x, traj.xdot, o);
  EXPECT_EQ(a.constants, b.constants);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Integrate, ExponentialDecay) {
  const std::vector<double> t{0.0, 1.0};
  const auto sol = integrate_ode(parse("-x", SymbolLibrary::ode_default()), {}, 1.0, t);
  ASSERT_TRUE(sol);
  EXPECT_NEAR(sol->back(), std::exp(-1.0), 1e-5);
}

TEST(Integrate, FiniteTimeBlowUpIsInvalid) {
  const auto t = linspace(0, 1.5, 16);
  EXPECT_FALSE(integrate_ode(parse("x^2", SymbolLibrary::ode_default()), {}, 1.0, t));
}

TEST(Integrate, TighterToleranceReducesEndpointError) {
  const std::vector<double> t{0.0, 5.0};
  const ScalarRhs rhs = [](double, double x) { return -x; };
  double prev = std::numeric_limits<double>::infinity();
  for (double rtol : {1e-3, 1e-5, 1e-7, 1e-9}) {
    OdeOptions o;
    o.rtol = rtol;
    o.atol = rtol * 1e-2;
    const auto sol = integrate(rhs, 1.0, t, o);
    ASSERT_TRUE(sol);
    const double err = std::abs(sol->back() - std::exp(-5.0));
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(Integrate, HalvingToleranceDoesNotIncreaseError) {
  const std::vector<double> t{0.0, 5.0};
  const ScalarRhs rhs = [](double, double x) { return -x; };
  auto err_at = [&](double rtol) {
    OdeOptions o;
    o.rtol = rtol;
    o.atol = rtol * 1e-2;
    return std::abs(integrate(rhs, 1.0, t, o)->back() - std::exp(-5.0));
  };
  EXPECT_LT(err_at(0.5e-6), err_at(1e-6));
}

TEST(Integrate, OdeSixteenFittedConstants) {
  const auto traj = generate_odebench(16, WhichIc::Train);
  const std::vector<double> c{0.21, 1.0};
  const auto sol = integrate_ode(parse("c0 - c1*sin(x)", SymbolLibrary::ode_default()), c, traj.x[0], traj.t);
  ASSERT_TRUE(sol);
  double ss = 0, st = 0, mean = 0;
  for (double v : traj.x) mean += v;
  mean /= static_cast<double>(traj.x.size());
  for (std::size_t i = 0; i < traj.x.size(); ++i) {
    ss += std::pow(traj.x[i] - (*sol)[i], 2);
    st += std::pow(traj.x[i] - mean, 2);
  }
  EXPECT_GT(1 - ss / st, 0.99);
}
