#include "eqdisc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace eqdisc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_order(int order) {
  if (order < 1 || order > 4) {
    throw GridTooSmall("derivative order " + std::to_string(order) + " is not supported (1..4)");
  }
}

struct Stencils {
  int half_width;
  std::vector<double> central;                // offsets -hw..hw
  std::vector<std::vector<double>> left;      // row i: weights over points 0..order+1 at position i
  std::vector<std::vector<double>> right;     // row i: weights over points n-order-2..n-1 at position n-1-i
};

Stencils make_stencils(int order) {
  Stencils s;
  s.half_width = fd_half_width(order);
  std::vector<double> offsets;
  for (int k = -s.half_width; k <= s.half_width; ++k) offsets.push_back(k);
  s.central = fd_weights(offsets, 0.0, order);
  const int np = order + 2;
  std::vector<double> pts(np);
  for (int k = 0; k < np; ++k) pts[k] = k;
  for (int i = 0; i < s.half_width; ++i) {
    s.left.push_back(fd_weights(pts, static_cast<double>(i), order));
    s.right.push_back(fd_weights(pts, static_cast<double>(np - 1 - i), order));
  }
  return s;
}

// Applies the derivative along a strided line of length n.
void apply_line(const double* in, double* out, std::size_t n, std::ptrdiff_t stride, const Stencils& s, double scale) {
  const int hw = s.half_width;
  const std::size_t np = s.left.empty() ? 0 : s.left.front().size();
  for (std::size_t i = hw; i + hw < n; ++i) {
    double acc = 0.0;
    for (int k = -hw; k <= hw; ++k) acc += s.central[k + hw] * in[(static_cast<std::ptrdiff_t>(i) + k) * stride];
    out[i * stride] = acc * scale;
  }
  for (int i = 0; i < hw; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < np; ++k) acc += s.left[i][k] * in[k * stride];
    out[i * stride] = acc * scale;
    acc = 0.0;
    const std::size_t base = n - np;
    for (std::size_t k = 0; k < np; ++k) acc += s.right[i][k] * in[(base + k) * stride];
    out[(n - 1 - i) * stride] = acc * scale;
  }
}

Matrix select_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

double safe_eval(const Objective& f, std::span<const double> x, int& n_evals) {
  ++n_evals;
  const double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

}  // namespace

// ---------------------------------------------------------------- finite differences

std::vector<double> fd_weights(std::span<const double> points, double at, int order) {
  const std::size_t n = points.size();
  if (n == 0 || order < 0 || static_cast<std::size_t>(order) >= n) {
    throw std::invalid_argument("fd_weights: need more points than the derivative order");
  }
  const int m = order;
  // c[j][k]: weight of point j for the k-th derivative.
  std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = points[0] - at;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const int mn = std::min<int>(static_cast<int>(i), m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = points[i] - at;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = points[i] - points[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = c[j][m];
  return w;
}

int fd_half_width(int order) {
  check_order(order);
  return order <= 2 ? 1 : 2;
}

std::vector<double> fd_derivative(std::span<const double> values, int order, double spacing) {
  check_order(order);
  if (values.size() < static_cast<std::size_t>(order + 3)) {
    throw GridTooSmall("need at least " + std::to_string(order + 3) + " samples for order " + std::to_string(order));
  }
  if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
  const auto s = make_stencils(order);
  std::vector<double> out(values.size());
  apply_line(values.data(), out.data(), values.size(), 1, s, 1.0 / std::pow(spacing, order));
  return out;
}

std::vector<double> fd_derivative(std::span<const double> grid, std::size_t n_t, std::size_t n_x, Axis axis, int order,
                                  double spacing) {
  check_order(order);
  if (grid.size() != n_t * n_x) throw std::invalid_argument("grid size does not match its shape");
  const std::size_t n = axis == Axis::Time ? n_t : n_x;
  if (n < static_cast<std::size_t>(order + 3)) {
    throw GridTooSmall("need at least " + std::to_string(order + 3) + " samples along the axis for order " +
                       std::to_string(order));
  }
  if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
  const auto s = make_stencils(order);
  const double scale = 1.0 / std::pow(spacing, order);
  std::vector<double> out(grid.size());
  if (axis == Axis::Space) {
    for (std::size_t r = 0; r < n_t; ++r) apply_line(grid.data() + r * n_x, out.data() + r * n_x, n_x, 1, s, scale);
  } else {
    for (std::size_t c = 0; c < n_x; ++c) {
      apply_line(grid.data() + c, out.data() + c, n_t, static_cast<std::ptrdiff_t>(n_x), s, scale);
    }
  }
  return out;
}

// ---------------------------------------------------------------- regression

Vector ridge(const Matrix& theta, const Vector& y, double lambda) {
  if (theta.rows() != y.size()) throw std::invalid_argument("ridge: row count mismatch");
  if (lambda < 0) throw std::invalid_argument("ridge: lambda must be non-negative");
  if (theta.cols() == 0) return Vector();
  Matrix a = theta.transpose() * theta;
  a.diagonal().array() += lambda;
  const Vector b = theta.transpose() * y;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-15) {
    throw SingularSystem("normal equations are numerically singular");
  }
  return llt.solve(b);
}

Vector stridge(const Matrix& theta, const Vector& y, const StridgeOptions& opts) {
  if (!(opts.threshold > 0)) throw std::invalid_argument("stridge: threshold must be positive");
  const Eigen::Index p = theta.cols();
  Vector scale = Vector::Ones(p);
  std::vector<int> active;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = theta.col(j).norm();
    if (norm == 0.0) continue;
    if (opts.normalize) scale[j] = norm / std::sqrt(static_cast<double>(theta.rows()));
    active.push_back(static_cast<int>(j));
  }
  if (active.empty()) throw AllCoefficientsEliminated("every column is identically zero");
  Matrix x = theta;
  for (Eigen::Index j = 0; j < p; ++j) x.col(j) /= scale[j];

  Vector w = ridge(select_columns(x, active), y, opts.lambda);
  double thr = opts.threshold;
  if (opts.relative) thr *= w.cwiseAbs().maxCoeff();

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    std::vector<int> keep;
    std::vector<int> keep_pos;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (std::abs(w[static_cast<Eigen::Index>(k)]) >= thr) keep.push_back(active[k]);
    }
    if (keep.size() == active.size()) break;
    if (keep.empty()) throw AllCoefficientsEliminated("threshold removed every coefficient");
    active = std::move(keep);
    w = ridge(select_columns(x, active), y, opts.lambda);
  }
  bool any = false;
  for (Eigen::Index k = 0; k < w.size(); ++k) any = any || std::abs(w[k]) >= thr;
  if (!any) throw AllCoefficientsEliminated("threshold removed every coefficient");

  Vector out = Vector::Zero(p);
  for (std::size_t k = 0; k < active.size(); ++k) {
    out[active[k]] = w[static_cast<Eigen::Index>(k)] / scale[active[k]];
  }
  return out;
}

Vector stridge(const Matrix& theta, const Vector& y, double lambda, double threshold, int max_iter) {
  StridgeOptions opts;
  opts.lambda = lambda;
  opts.threshold = threshold;
  opts.max_iter = max_iter;
  return stridge(theta, y, opts);
}

// ---------------------------------------------------------------- quasi-Newton

std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x) {
  int evals = 0;
  std::vector<double> g(x.size());
  std::vector<double> probe(x.begin(), x.end());
  const double f0 = safe_eval(f, x, evals);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 6e-6 * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = safe_eval(f, probe, evals);
    probe[i] = x[i] - h;
    const double fm = safe_eval(f, probe, evals);
    probe[i] = x[i];
    // Fall back to one-sided differences next to a non-finite region.
    if (std::isfinite(fp) && std::isfinite(fm)) {
      g[i] = (fp - fm) / (2 * h);
    } else if (std::isfinite(fp) && std::isfinite(f0)) {
      g[i] = (fp - f0) / h;
    } else if (std::isfinite(fm) && std::isfinite(f0)) {
      g[i] = (f0 - fm) / h;
    }
  }
  return g;
}

FitResult bfgs_minimize(const Objective& f, std::vector<double> x0, const MinimizeOptions& opts) {
  const std::size_t n = x0.size();
  FitResult res;
  res.constants = x0;
  double fx = safe_eval(f, x0, res.n_evals);
  res.objective = fx;
  if (!std::isfinite(fx)) return res;

  auto grad = [&](const std::vector<double>& x) {
    auto g = numeric_gradient(f, x);
    res.n_evals += static_cast<int>(2 * n + 1);
    return Eigen::Map<Vector>(g.data(), static_cast<Eigen::Index>(n)).eval();
  };

  Eigen::Map<Vector> xmap(x0.data(), static_cast<Eigen::Index>(n));
  Vector x = xmap;
  Vector g = grad(x0);
  Matrix h = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  bool first = true;
  std::vector<double> trial(n);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.gtol) {
      res.converged = true;
      break;
    }
    Vector p = -h * g;
    if (g.dot(p) >= 0) {
      h.setIdentity();
      p = -g;
    }
    double alpha = 1.0;
    double f_new = kInf;
    const double slope = g.dot(p);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[static_cast<Eigen::Index>(i)] + alpha * p[static_cast<Eigen::Index>(i)];
      f_new = safe_eval(f, trial, res.n_evals);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Line search stalled: the model is flat to working precision.
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, std::abs(fx));
      break;
    }
    const Vector x_new = Eigen::Map<Vector>(trial.data(), static_cast<Eigen::Index>(n));
    const Vector g_new = grad(trial);
    const Vector s = x_new - x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (first) {
        h *= sy / yv.squaredNorm();
        first = false;
      }
      const double rho = 1.0 / sy;
      const Matrix i_n = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      h = (i_n - rho * s * yv.transpose()) * h * (i_n - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    const double change = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (change <= opts.ftol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.constants.assign(x.data(), x.data() + n);
  res.objective = fx;
  return res;
}

FitResult fit_constants(const Expression& skeleton, std::span<const double> x, std::span<const double> xdot,
                        const FitOptions& opts, std::string_view var) {
  const int k = count_constants(skeleton);
  if (k < 1) throw std::invalid_argument("fit_constants: skeleton has no constants");
  if (x.size() != xdot.size() || x.empty()) throw std::invalid_argument("fit_constants: data length mismatch");

  Bindings data(x.size());
  data.set(std::string(var), x);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  Objective objective = [&](std::span<const double> c) {
    const auto pred = evaluate(skeleton, data, c);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = xdot[i] - pred[i];
      acc += r * r;
    }
    return acc * inv_n;
  };

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto inits = constant_inits(skeleton);
  const bool has_inits = std::any_of(inits.begin(), inits.end(), [](double v) { return !std::isnan(v); });

  std::optional<FitResult> best;
  int total_evals = 0;
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    std::vector<double> start(k);
    for (int i = 0; i < k; ++i) {
      const double draw = normal(rng);
      start[i] = (r == 0 && has_inits && !std::isnan(inits[i])) ? inits[i] : draw;
    }
    auto fit = bfgs_minimize(objective, start, opts.minimize);
    total_evals += fit.n_evals;
    if (!std::isfinite(fit.objective)) continue;
    if (!best || fit.objective < best->objective) best = std::move(fit);
  }
  if (!best) throw NoFiniteStart("no restart produced a finite loss");
  best->n_evals = total_evals;
  return *best;
}

// ---------------------------------------------------------------- ODE integration

std::optional<std::vector<double>> integrate(const ScalarRhs& rhs, double x0, std::span<const double> t_grid,
                                             const OdeOptions& opts) {
  // Dormand-Prince 5(4) tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                   e7 = -1.0 / 40;

  std::vector<double> out;
  if (t_grid.empty()) return out;
  out.reserve(t_grid.size());
  if (!std::isfinite(x0) || std::abs(x0) > opts.max_abs_state) return std::nullopt;
  out.push_back(x0);

  double t = t_grid[0];
  double x = x0;
  double k1 = rhs(t, x);
  if (!std::isfinite(k1)) return std::nullopt;
  const double span = t_grid.back() - t_grid.front();
  double h = span > 0 ? std::min(span, 1e-2 * (std::abs(x) + opts.atol) / std::max(std::abs(k1), 1e-10)) : 0.0;
  h = std::max(h, span * 1e-6);
  std::size_t steps = 0;

  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    const double target = t_grid[k];
    if (!(target > t)) {
      if (target == t) {
        out.push_back(x);
        continue;
      }
      throw std::invalid_argument("integrate: time grid must be increasing");
    }
    while (t < target) {
      if (++steps > opts.max_steps) return std::nullopt;
      const bool last = t + h >= target;
      const double step = last ? target - t : h;
      if (step < 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) return std::nullopt;

      const double k2 = rhs(t + c2 * step, x + step * a21 * k1);
      const double k3 = rhs(t + c3 * step, x + step * (a31 * k1 + a32 * k2));
      const double k4 = rhs(t + c4 * step, x + step * (a41 * k1 + a42 * k2 + a43 * k3));
      const double k5 = rhs(t + c5 * step, x + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const double k6 = rhs(t + step, x + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const double x_new = x + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const double k7 = rhs(t + step, x_new);
      const double err_abs = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      const double sc = opts.atol + opts.rtol * std::max(std::abs(x), std::abs(x_new));
      const double err = std::abs(err_abs) / sc;

      if (!std::isfinite(err) || !std::isfinite(x_new)) {
        h = step * 0.25;
        continue;
      }
      if (err <= 1.0) {
        t = last ? target : t + step;
        x = x_new;
        k1 = k7;
        if (std::abs(x) > opts.max_abs_state) return std::nullopt;
        const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        if (!last || factor < 1.0) h = step * factor;
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
    out.push_back(x);
  }
  return out;
}

std::optional<std::vector<double>> integrate_ode(const Expression& f, std::span<const double> constants, double x0,
                                                 std::span<const double> t_grid, const OdeOptions& opts,
                                                 std::string_view var) {
  if (static_cast<std::size_t>(count_constants(f)) != constants.size()) {
    throw std::invalid_argument("integrate_ode: constant count does not match the skeleton");
  }
  const std::string name(var);
  ScalarRhs rhs = [&](double, double x) { return evaluate_scalar(f, name, x, constants); };
  return integrate(rhs, x0, t_grid, opts);
}

}  // namespace eqdisc
