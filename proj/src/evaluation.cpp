#include "eqdisc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <future>
#include <map>
#include <numeric>
#include <thread>

#include "eqdisc/numerics.hpp"

namespace eqdisc {

namespace {

Candidate invalid(Candidate c, std::string reason) {
  c.status = Status::Invalid;
  c.invalid_reason = std::move(reason);
  c.score = 0.0;
  return c;
}

/// Pulls unary minus out of product factors so "-u*u_x" and "u*u_x" share a
/// column.
std::pair<int, Expression> strip_sign(const Expression& e) {
  const Node& n = e.node();
  if (n.kind == Node::Kind::Unary && n.op == Op::Neg) {
    auto [s, inner] = strip_sign(e.lhs());
    return {-s, inner};
  }
  if (n.kind == Node::Kind::Binary && (n.op == Op::Mul || n.op == Op::Div)) {
    auto [sl, l] = strip_sign(e.lhs());
    auto [sr, r] = strip_sign(e.rhs());
    if (sl * sr == 1 && l.root() == e.lhs().root() && r.root() == e.rhs().root()) return {1, e};
    return {sl * sr, Expression::binary(n.op, l, r)};
  }
  return {1, e};
}

double population_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

std::string_view status_name(Status s) { return s == Status::Scored ? "Scored" : "Invalid"; }

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Init: return "init";
    case Provenance::SelfImprove: return "self_improve";
    case Provenance::Evolution: return "evolution";
    case Provenance::NativeGa: return "native_ga";
    case Provenance::User: return "user";
  }
  return "?";
}

std::optional<Provenance> provenance_from_name(std::string_view name) {
  for (auto p : {Provenance::Init, Provenance::SelfImprove, Provenance::Evolution, Provenance::NativeGa,
                 Provenance::User}) {
    if (provenance_name(p) == name) return p;
  }
  return std::nullopt;
}

std::string Candidate::key() const { return skeleton.empty() ? std::string() : print_canonical(skeleton); }
std::string Candidate::proposed_key() const { return proposed.empty() ? std::string() : print_canonical(proposed); }

void EvalConfig::check() const {
  if (zeta1 < 0 || n_term_max < 1) throw std::invalid_argument("EvalConfig: zeta1 >= 0 and n_term_max >= 1 required");
  if (zeta1 * n_term_max >= 1.0) throw std::invalid_argument("EvalConfig: zeta1 * n_term_max must be < 1");
  if (lambda < 0) throw std::invalid_argument("EvalConfig: lambda must be >= 0");
}

double score(double nrmse_value, int m, double zeta1) {
  return (1.0 - zeta1 * static_cast<double>(m)) / (1.0 + nrmse_value);
}

double nrmse(std::span<const double> target, std::span<const double> prediction) {
  if (target.size() != prediction.size() || target.empty()) throw LengthMismatch("nrmse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = target[i] - prediction[i];
    acc += r * r;
  }
  const double rmse = std::sqrt(acc / static_cast<double>(target.size()));
  return rmse / population_std(target);
}

// ---------------------------------------------------------------- PDE path

Candidate evaluate_pde(const Expression& skeleton, const PdeGrid& data, const EvalConfig& cfg) {
  Candidate c;
  c.proposed = skeleton;
  c.skeleton = skeleton;

  // Unique unsigned terms in order of first appearance.
  std::vector<Expression> terms;
  std::vector<std::string> keys;
  for (const auto& st : split_terms(skeleton)) {
    Expression term = canonicalize(strip_sign(st.term).second);
    std::string key = print(term);
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
    keys.push_back(std::move(key));
    terms.push_back(std::move(term));
  }
  if (static_cast<int>(terms.size()) > cfg.n_term_max) {
    return invalid(std::move(c), "term count " + std::to_string(terms.size()) + " exceeds N_term");
  }
  if (count_constants(skeleton) > 0) return invalid(std::move(c), "constants are not allowed in PDE skeletons");

  const std::size_t nt = data.n_t(), nx = data.n_x();
  if (nt <= 2 * kTimeMargin || nx <= 2 * kSpaceMargin) return invalid(std::move(c), "grid too small");
  const std::size_t rows_t = nt - 2 * kTimeMargin, rows_x = nx - 2 * kSpaceMargin;
  const std::size_t n = rows_t * rows_x;

  std::map<std::string, std::vector<double>> interior;
  auto gather = [&](const std::string& name) -> std::span<const double> {
    auto it = interior.find(name);
    if (it == interior.end()) {
      const auto full = data.column(name);
      std::vector<double> v;
      v.reserve(n);
      for (std::size_t r = kTimeMargin; r < nt - kTimeMargin; ++r) {
        for (std::size_t col = kSpaceMargin; col < nx - kSpaceMargin; ++col) v.push_back(full[r * nx + col]);
      }
      it = interior.emplace(name, std::move(v)).first;
    }
    return it->second;
  };

  Bindings bindings(n);
  for (const auto& t : terms) {
    for (const auto& v : variables(t)) {
      if (!data.has_column(v)) return invalid(std::move(c), "operand '" + v + "' is not available in the data");
      bindings.set(v, gather(v));
    }
  }
  const auto target = gather(data.target);

  std::vector<std::vector<double>> columns;
  columns.reserve(terms.size());
  std::vector<char> keep(n, 1);
  for (std::size_t j = 0; j < terms.size(); ++j) {
    auto col = evaluate(terms[j], bindings);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(col[i])) {
        ++bad;
        keep[i] = 0;
      }
    }
    if (static_cast<double>(bad) > cfg.max_nonfinite_fraction * static_cast<double>(n)) {
      return invalid(std::move(c), "term '" + keys[j] + "' is non-finite on too many points");
    }
    columns.push_back(std::move(col));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(target[i])) keep[i] = 0;
  }
  const auto rows = static_cast<Eigen::Index>(std::count(keep.begin(), keep.end(), 1));
  if (rows < static_cast<Eigen::Index>(terms.size()) + 1) return invalid(std::move(c), "too few finite rows");

  Matrix theta(rows, static_cast<Eigen::Index>(terms.size()));
  Vector y(rows);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    for (std::size_t j = 0; j < terms.size(); ++j) theta(r, static_cast<Eigen::Index>(j)) = columns[j][i];
    y[r] = target[i];
    ++r;
  }

  StridgeOptions opts;
  opts.lambda = cfg.lambda;
  opts.threshold = cfg.stridge_threshold;
  opts.relative = true;
  opts.normalize = true;
  opts.max_iter = cfg.stridge_max_iter;
  Vector xi;
  try {
    xi = stridge(theta, y, opts);
  } catch (const NumericsError& e) {
    return invalid(std::move(c), e.what());
  }

  TermList surviving;
  std::vector<std::pair<std::string, double>> coef_by_key;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (xi[static_cast<Eigen::Index>(j)] == 0.0) continue;
    surviving.push_back({1, terms[j]});
    coef_by_key.emplace_back(keys[j], xi[static_cast<Eigen::Index>(j)]);
  }
  c.skeleton = canonicalize(join_terms(surviving));
  for (const auto& st : split_terms(c.skeleton)) {
    const std::string k = print(st.term);
    auto it = std::find_if(coef_by_key.begin(), coef_by_key.end(), [&](const auto& p) { return p.first == k; });
    c.terms.push_back(k);
    c.constants.push_back(it->second);
  }
  c.term_count = static_cast<int>(c.terms.size());

  const Vector pred = theta * xi;
  const double err = nrmse(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                           std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())));
  if (!std::isfinite(err)) return invalid(std::move(c), "non-finite NRMSE");
  c.nrmse = err;
  c.score = score(err, c.term_count, cfg.zeta1);
  c.status = Status::Scored;
  return c;
}

// ---------------------------------------------------------------- ODE path

Candidate evaluate_ode(const Expression& skeleton, const OdeTrajectory& data, const EvalConfig& cfg,
                       std::uint64_t seed) {
  Candidate c;
  c.proposed = skeleton;
  Expression form = canonicalize(skeleton);
  c.skeleton = form;

  Bindings bindings(data.x.size());
  bindings.set("x", data.x);
  for (const auto& v : variables(form)) {
    if (v != "x") return invalid(std::move(c), "operand '" + v + "' is not available in the data");
  }

  std::vector<double> pred;
  if (count_constants(form) == 0) {
    // Linear coefficient per term.
    const auto split = split_terms(form);
    if (static_cast<int>(split.size()) > cfg.n_term_max) return invalid(std::move(c), "term count exceeds N_term");
    Matrix theta(static_cast<Eigen::Index>(data.x.size()), static_cast<Eigen::Index>(split.size()));
    TermList weighted;
    for (std::size_t j = 0; j < split.size(); ++j) {
      auto col = evaluate(split[j].term, bindings);
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (!std::isfinite(col[i])) return invalid(std::move(c), "term '" + print(split[j].term) + "' is non-finite");
        theta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
      }
      weighted.push_back({1, Expression::binary(Op::Mul, Expression::constant(0), split[j].term)});
    }
    const Vector y = Eigen::Map<const Vector>(data.xdot.data(), static_cast<Eigen::Index>(data.xdot.size()));
    Vector xi;
    try {
      xi = ridge(theta, y, cfg.lambda);
    } catch (const NumericsError& e) {
      return invalid(std::move(c), e.what());
    }
    form = renumber_constants(join_terms(weighted));
    c.constants.assign(xi.data(), xi.data() + xi.size());
    c.skeleton = form;
    const Vector p = theta * xi;
    pred.assign(p.data(), p.data() + p.size());
  } else {
    if (static_cast<int>(split_terms(form).size()) > cfg.n_term_max) {
      return invalid(std::move(c), "term count exceeds N_term");
    }
    FitOptions fo;
    fo.restarts = cfg.fit_restarts;
    fo.seed = seed;
    try {
      auto fit = fit_constants(form, data.x, data.xdot, fo);
      c.constants = std::move(fit.constants);
    } catch (const NoFiniteStart& e) {
      return invalid(std::move(c), e.what());
    }
    pred = evaluate(form, bindings, c.constants);
  }

  c.term_count = static_cast<int>(split_terms(c.skeleton).size());
  for (const auto& st : split_terms(c.skeleton)) c.terms.push_back(print(st.term));
  const double err = nrmse(data.xdot, pred);
  if (!std::isfinite(err)) return invalid(std::move(c), "non-finite NRMSE");
  c.nrmse = err;
  c.score = score(err, c.term_count, cfg.zeta1);
  c.status = Status::Scored;
  return c;
}

Candidate evaluate(const Expression& skeleton, const Dataset& data, const EvalConfig& cfg, std::uint64_t seed) {
  if (const auto* grid = std::get_if<PdeGrid>(&data)) return evaluate_pde(skeleton, *grid, cfg);
  return evaluate_ode(skeleton, std::get<OdeTrajectory>(data), cfg, seed);
}

std::vector<Candidate> evaluate_batch(const std::vector<Expression>& skeletons, const Dataset& data,
                                      const EvalConfig& cfg, std::span<const std::uint64_t> seeds) {
  if (seeds.size() != skeletons.size()) throw LengthMismatch("evaluate_batch: one seed per skeleton required");
  std::vector<Candidate> out(skeletons.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), skeletons.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < skeletons.size(); i = next++) {
      try {
        out[i] = evaluate(skeletons[i], data, cfg, seeds[i]);
      } catch (const std::exception& e) {
        Candidate c;
        c.proposed = skeletons[i];
        c.skeleton = skeletons[i];
        out[i] = invalid(std::move(c), e.what());
      }
    }
  };
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 1; w < workers; ++w) jobs.push_back(std::async(std::launch::async, work));
  work();
  for (auto& j : jobs) j.get();
  return out;
}

// ---------------------------------------------------------------- metrics

double coefficient_error(std::span<const double> truth, std::span<const double> found) {
  if (truth.size() != found.size()) throw LengthMismatch("coefficient_error: length mismatch");
  if (truth.empty()) throw LengthMismatch("coefficient_error: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) throw std::invalid_argument("coefficient_error: true coefficient is zero");
    acc += std::abs(found[i] - truth[i]) / std::abs(truth[i]);
  }
  return acc / static_cast<double>(truth.size()) * 100.0;
}

std::optional<double> recovery_error(const std::vector<TruthTerm>& truth, const Candidate& c) {
  if (!c.scored() || truth.size() != c.terms.size()) return std::nullopt;
  std::vector<double> t, f;
  for (const auto& tt : truth) {
    const std::string key = print_canonical(parse_unchecked(tt.term));
    auto it = std::find(c.terms.begin(), c.terms.end(), key);
    if (it == c.terms.end()) return std::nullopt;
    t.push_back(tt.coefficient);
    f.push_back(c.constants[static_cast<std::size_t>(it - c.terms.begin())]);
  }
  return coefficient_error(t, f);
}

bool symbolically_correct(const std::vector<TruthTerm>& truth, const Candidate& c) {
  return recovery_error(truth, c).has_value();
}

double r_squared(std::span<const double> truth, std::span<const double> prediction) {
  if (truth.size() != prediction.size() || truth.empty()) throw LengthMismatch("r_squared: length mismatch");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - prediction[i]) * (truth[i] - prediction[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw ConstantTruth("r_squared: truth is constant");
  return 1.0 - ss_res / ss_tot;
}

std::optional<double> trajectory_r2(const Candidate& c, const OdeTrajectory& observed) {
  if (!c.scored()) return std::nullopt;
  auto sol = integrate_ode(c.skeleton, c.constants, observed.initial_condition, observed.t);
  if (!sol) return std::nullopt;
  return r_squared(observed.x, *sol);
}

}  // namespace eqdisc
