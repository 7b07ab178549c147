#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "eqdisc/expr.hpp"

namespace eqdisc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class GridTooSmall : public NumericsError {
 public:
  using NumericsError::NumericsError;
};
class SingularSystem : public NumericsError {
 public:
  using NumericsError::NumericsError;
};
class AllCoefficientsEliminated : public NumericsError {
 public:
  using NumericsError::NumericsError;
};
class NoFiniteStart : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

// ---------------------------------------------------------------- finite differences

/// Finite-difference weights for the `order`-th derivative at `at`, using
/// sample positions `points` (Fornberg's recursion).
std::vector<double> fd_weights(std::span<const double> points, double at, int order);

/// Derivative of a uniformly sampled 1-D signal. Second-order central
/// stencils in the interior, second-order one-sided stencils at the ends.
/// Requires order in 1..4 and at least order+3 samples.
std::vector<double> fd_derivative(std::span<const double> values, int order, double spacing);

enum class Axis { Time, Space };

/// Same as above along one axis of a t-major (rows = time) 2-D grid.
std::vector<double> fd_derivative(std::span<const double> grid, std::size_t n_t, std::size_t n_x, Axis axis,
                                  int order, double spacing);

/// Half-width of the central stencil used for `order`.
int fd_half_width(int order);

// ---------------------------------------------------------------- regression

/// argmin |theta*xi - y|^2 + lambda*|xi|^2 via the normal equations.
Vector ridge(const Matrix& theta, const Vector& y, double lambda);

struct StridgeOptions {
  double lambda = 1e-3;
  /// Absolute threshold on the (possibly normalised) coefficients.
  double threshold = 0.05;
  /// When set, the effective threshold is `threshold * max|xi|` of the
  /// initial ridge fit.
  bool relative = false;
  /// Scale columns to unit RMS before fitting; coefficients are returned
  /// in the original units.
  bool normalize = false;
  int max_iter = 10;
};

/// Sequentially thresholded ridge regression. Eliminated coefficients are
/// exactly zero in the full-length output.
Vector stridge(const Matrix& theta, const Vector& y, const StridgeOptions& opts);
Vector stridge(const Matrix& theta, const Vector& y, double lambda, double threshold, int max_iter);

// ---------------------------------------------------------------- quasi-Newton

using Objective = std::function<double(std::span<const double>)>;

/// Central-difference gradient.
std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x);

struct MinimizeOptions {
  int max_iter = 200;
  double gtol = 1e-10;
  double ftol = 1e-15;
};

struct FitResult {
  std::vector<double> constants;
  double objective = 0.0;
  bool converged = false;
  int n_evals = 0;
};

/// BFGS with finite-difference gradients and a backtracking line search.
/// Non-finite objective values are treated as +inf.
FitResult bfgs_minimize(const Objective& f, std::vector<double> x0, const MinimizeOptions& opts = {});

struct FitOptions {
  int restarts = 10;
  std::uint64_t seed = 0;
  MinimizeOptions minimize;
};

/// Fits the placeholders of `skeleton` by minimising the mean squared
/// residual between `xdot` and skeleton(x). Restart 0 uses the literal
/// initial values carried by the skeleton when present; other restarts draw
/// from a standard normal.
FitResult fit_constants(const Expression& skeleton, std::span<const double> x, std::span<const double> xdot,
                        const FitOptions& opts = {}, std::string_view var = "x");

// ---------------------------------------------------------------- ODE integration

struct OdeOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  double max_abs_state = 1e12;
  std::size_t max_steps = 200000;
};

using ScalarRhs = std::function<double(double t, double x)>;

/// Dormand-Prince 5(4) solution sampled on `t_grid` (t_grid[0] is the
/// initial time). Returns nullopt on step-size underflow, a non-finite
/// state, |x| above `max_abs_state`, or step budget exhaustion.
std::optional<std::vector<double>> integrate(const ScalarRhs& rhs, double x0, std::span<const double> t_grid,
                                             const OdeOptions& opts = {});

/// Autonomous scalar ODE dx/dt = f(x; constants).
std::optional<std::vector<double>> integrate_ode(const Expression& f, std::span<const double> constants, double x0,
                                                 std::span<const double> t_grid, const OdeOptions& opts = {},
                                                 std::string_view var = "x");

}  // namespace eqdisc
