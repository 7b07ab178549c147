#include "eqdisc/datasets.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "eqdisc/numerics.hpp"

namespace eqdisc {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError("line " + std::to_string(line) + ": malformed number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  auto lines = split(text, '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DatasetError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------- FFT

void fft(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2 * kPi / static_cast<double>(len) * (inverse ? 1 : -1);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// ---------------------------------------------------------------- integration drivers

struct SystemSpec {
  PdeSystem id;
  UniformAxis x;
  double t_first;
  double t_last;
  std::size_t n_t;
  std::vector<TruthTerm> truth;
};

SystemSpec spec_for(PdeSystem s) {
  switch (s) {
    case PdeSystem::Burgers:
      return {s, {-8.0, 16.0 / 256, 256}, 0.0, 10.0, 201, {{"u*u_x", -1.0}, {"u_xx", 0.1}}};
    case PdeSystem::ChafeeInfante:
      return {s, {0.0, 0.01, 301}, 0.0, 0.5, 200, {{"u_xx", 1.0}, {"u", 1.0}, {"u^3", -1.0}}};
    case PdeSystem::PdeDivide:
      return {s, {1.0, 0.01, 100}, 0.0, 1.0, 251, {{"u_x/x", -1.0}, {"u_xx", 0.25}}};
    case PdeSystem::FisherKpp:
      return {s,
              {-0.99, 0.01, 199},
              0.01,
              0.99,
              99,
              {{"u*u_xx", 0.02}, {"u_x^2", 0.02}, {"u", 10.0}, {"u^2", -10.0}}};
    case PdeSystem::KuramotoSivashinsky:
      return {s, {-10.0, 20.0 / 512, 512}, 0.0, 20.0, 256, {{"u*u_x", -1.0}, {"u_xx", -1.0}, {"u_xxxx", -1.0}}};
  }
  throw std::invalid_argument("unknown PDE system");
}

using Rhs = std::function<void(const std::vector<double>&, std::vector<double>&)>;

/// Classical RK4 with fixed substeps between consecutive output times.
/// Returns the snapshots at `times` (t-major). `t0` is the initial time.
std::vector<double> rk4_snapshots(std::vector<double> u, double t0, const std::vector<double>& times, double dt_max,
                                  const Rhs& rhs, const std::function<void(std::vector<double>&)>& enforce,
                                  const std::function<void(const std::vector<double>&, std::vector<double>&)>& sample) {
  const std::size_t n = u.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), out;
  double t = t0;
  for (double target : times) {
    const double span = target - t;
    if (span > 0) {
      const auto steps = static_cast<std::size_t>(std::ceil(span / dt_max - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (std::size_t s = 0; s < steps; ++s) {
        rhs(u, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
        enforce(tmp);
        rhs(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
        enforce(tmp);
        rhs(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + h * k3[i];
        enforce(tmp);
        rhs(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) u[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        enforce(u);
      }
      double norm = 0.0;
      for (double v : u) norm = std::max(norm, std::abs(v));
      if (!std::isfinite(norm) || norm > 1e8) throw UnstableIntegration("solution blew up at t=" + format_double(target));
    }
    t = target;
    sample(u, out);
  }
  return out;
}

std::vector<double> output_times(const SystemSpec& spec) {
  std::vector<double> times(spec.n_t);
  const double step = spec.n_t > 1 ? (spec.t_last - spec.t_first) / static_cast<double>(spec.n_t - 1) : 0.0;
  for (std::size_t j = 0; j < spec.n_t; ++j) times[j] = spec.t_first + step * static_cast<double>(j);
  return times;
}

std::vector<double> integrate_burgers(const SystemSpec& spec, int refine, const std::vector<double>& times) {
  const std::size_t n = spec.x.count * refine;
  const double dx = spec.x.step / refine;
  const double nu = 0.1;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = spec.x.start + dx * static_cast<double>(i);
    u[i] = std::exp(-(x + 2.0) * (x + 2.0));
  }
  Rhs rhs = [&](const std::vector<double>& v, std::vector<double>& du) {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = v[(i + n - 1) % n];
      const double r = v[(i + 1) % n];
      du[i] = -v[i] * (r - l) / (2 * dx) + nu * (r - 2 * v[i] + l) / (dx * dx);
    }
  };
  const double rho = 4 * nu / (dx * dx) + 2.0 / dx;
  return rk4_snapshots(
      u, 0.0, times, 2.0 / rho, rhs, [](std::vector<double>&) {},
      [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < spec.x.count; ++i) out.push_back(v[i * refine]);
      });
}

std::vector<double> integrate_chafee(const SystemSpec& spec, int refine, const std::vector<double>& times) {
  const std::size_t n = (spec.x.count - 1) * refine + 1;
  const double dx = spec.x.step / refine;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = kPi * (dx * static_cast<double>(i)) / 3.0;
    u[i] = std::sin(a) * (1.0 + std::cos(a));
  }
  u.front() = u.back() = 0.0;
  Rhs rhs = [&](const std::vector<double>& v, std::vector<double>& du) {
    du.front() = du.back() = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      du[i] = (v[i + 1] - 2 * v[i] + v[i - 1]) / (dx * dx) + v[i] - v[i] * v[i] * v[i];
    }
  };
  const double rho = 4.0 / (dx * dx) + 3.0;
  return rk4_snapshots(
      u, 0.0, times, 2.0 / rho, rhs, [](std::vector<double>& v) { v.front() = v.back() = 0.0; },
      [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < spec.x.count; ++i) out.push_back(v[i * refine]);
      });
}

std::vector<double> integrate_divide(const SystemSpec& spec, int refine, const std::vector<double>& times) {
  // Fine nodes cover [1, 2]; x = 2 is a Dirichlet node outside the sampled set.
  const std::size_t n = spec.x.count * refine + 1;
  const double dx = spec.x.step / refine;
  std::vector<double> u(n), xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = spec.x.start + dx * static_cast<double>(i);
    u[i] = -std::sin(kPi * xs[i]);
  }
  u.front() = u.back() = 0.0;
  Rhs rhs = [&](const std::vector<double>& v, std::vector<double>& du) {
    du.front() = du.back() = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double ux = (v[i + 1] - v[i - 1]) / (2 * dx);
      const double uxx = (v[i + 1] - 2 * v[i] + v[i - 1]) / (dx * dx);
      du[i] = -ux / xs[i] + 0.25 * uxx;
    }
  };
  const double rho = 4 * 0.25 / (dx * dx) + 1.0 / dx;
  return rk4_snapshots(
      u, 0.0, times, 2.0 / rho, rhs, [](std::vector<double>& v) { v.front() = v.back() = 0.0; },
      [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < spec.x.count; ++i) out.push_back(v[i * refine]);
      });
}

std::vector<double> integrate_fisher(const SystemSpec& spec, int refine, const std::vector<double>& times) {
  // Fine nodes cover [-1, 1] with zero-flux ends; samples are interior.
  const double dx = spec.x.step / refine;
  const std::size_t n = static_cast<std::size_t>(std::llround(2.0 / dx)) + 1;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 + dx * static_cast<double>(i);
    // Two steep bumps over a tiny background: the spreading fronts keep the
    // diffusion terms visible next to the much larger reaction terms.
    u[i] = 3e-4 + std::exp(-(x + 0.5) * (x + 0.5) / 0.01) + std::exp(-(x - 0.5) * (x - 0.5) / 0.01);
  }
  Rhs rhs = [&](const std::vector<double>& v, std::vector<double>& du) {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = i == 0 ? v[1] : v[i - 1];
      const double r = i + 1 == n ? v[n - 2] : v[i + 1];
      const double ux = (r - l) / (2 * dx);
      const double uxx = (r - 2 * v[i] + l) / (dx * dx);
      du[i] = 0.02 * v[i] * uxx + 0.02 * ux * ux + 10 * v[i] - 10 * v[i] * v[i];
    }
  };
  const double rho = 4 * 0.02 * 1.5 / (dx * dx) + 30.0;
  const auto offset = static_cast<std::size_t>(std::llround((spec.x.start + 1.0) / dx));
  return rk4_snapshots(
      u, 0.0, times, 2.0 / rho, rhs, [](std::vector<double>&) {},
      [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < spec.x.count; ++i) out.push_back(v[offset + i * refine]);
      });
}

/// Pseudo-spectral ETDRK4 on the periodic domain.
std::vector<double> integrate_ks(const SystemSpec& spec, const std::vector<double>& times) {
  const std::size_t n = spec.x.count;
  const double length = spec.x.step * static_cast<double>(n);
  std::vector<double> k(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<double>(j < n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n));
    k[j] = j == n / 2 ? 0.0 : 2 * kPi / length * jj;
  }
  std::vector<cplx> v(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double theta = 2 * kPi * (spec.x.at(j) - spec.x.start) / length;
    v[j] = std::cos(theta) * (1.0 + std::sin(theta));
  }
  fft(v, false);

  const double out_step = times.size() > 1 ? times[1] - times[0] : 1.0;
  const int sub = std::max(1, static_cast<int>(std::ceil(out_step / 0.01)));
  const double h = out_step / sub;
  std::vector<double> e(n), e2(n), q(n), f1(n), f2(n), f3(n);
  std::vector<cplx> g(n);
  constexpr int kRoots = 64;
  for (std::size_t j = 0; j < n; ++j) {
    const double l = k[j] * k[j] - k[j] * k[j] * k[j] * k[j];
    e[j] = std::exp(h * l);
    e2[j] = std::exp(h * l / 2);
    cplx sq = 0, s1 = 0, s2 = 0, s3 = 0;
    for (int r = 0; r < kRoots; ++r) {
      const cplx root = std::exp(cplx(0, kPi * (r + 0.5) / kRoots));
      const cplx lr = h * l + root;
      sq += (std::exp(lr / 2.0) - 1.0) / lr;
      s1 += (-4.0 - lr + std::exp(lr) * (4.0 - 3.0 * lr + lr * lr)) / (lr * lr * lr);
      s2 += (2.0 + lr + std::exp(lr) * (-2.0 + lr)) / (lr * lr * lr);
      s3 += (-4.0 - 3.0 * lr - lr * lr + std::exp(lr) * (4.0 - lr)) / (lr * lr * lr);
    }
    q[j] = h * (sq / static_cast<double>(kRoots)).real();
    f1[j] = h * (s1 / static_cast<double>(kRoots)).real();
    f2[j] = h * (s2 / static_cast<double>(kRoots)).real();
    f3[j] = h * (s3 / static_cast<double>(kRoots)).real();
    g[j] = cplx(0, -0.5 * k[j]);
  }
  auto nonlinear = [&](const std::vector<cplx>& in) {
    std::vector<cplx> phys = in;
    fft(phys, true);
    for (auto& p : phys) p = cplx(p.real() * p.real(), 0.0);
    fft(phys, false);
    for (std::size_t j = 0; j < n; ++j) phys[j] *= g[j];
    return phys;
  };

  std::vector<double> out;
  out.reserve(n * times.size());
  double t = 0.0;
  std::vector<cplx> a(n), b(n), c(n);
  for (double target : times) {
    while (t < target - 1e-12) {
      const auto nv = nonlinear(v);
      for (std::size_t j = 0; j < n; ++j) a[j] = e2[j] * v[j] + q[j] * nv[j];
      const auto na = nonlinear(a);
      for (std::size_t j = 0; j < n; ++j) b[j] = e2[j] * v[j] + q[j] * na[j];
      const auto nb = nonlinear(b);
      for (std::size_t j = 0; j < n; ++j) c[j] = e2[j] * a[j] + q[j] * (2.0 * nb[j] - nv[j]);
      const auto nc = nonlinear(c);
      for (std::size_t j = 0; j < n; ++j) {
        v[j] = e[j] * v[j] + nv[j] * f1[j] + 2.0 * (na[j] + nb[j]) * f2[j] + nc[j] * f3[j];
      }
      t += h;
    }
    std::vector<cplx> phys = v;
    fft(phys, true);
    for (const auto& p : phys) {
      if (!std::isfinite(p.real()) || std::abs(p.real()) > 1e8) throw UnstableIntegration("KS solution blew up");
      out.push_back(p.real());
    }
  }
  return out;
}

void parse_truth_line(std::string_view rest, std::vector<TruthTerm>& truth, std::size_t line) {
  const auto pos = rest.rfind(' ');
  if (pos == std::string_view::npos) throw FormatError("line " + std::to_string(line) + ": malformed truth entry");
  truth.push_back({std::string(rest.substr(0, pos)), parse_double(rest.substr(pos + 1), line)});
}

}  // namespace

// ---------------------------------------------------------------- UniformAxis / PdeGrid

std::vector<double> UniformAxis::values() const {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = at(i);
  return out;
}

std::span<const double> PdeGrid::column(std::string_view name) const {
  if (auto it = fields.find(std::string(name)); it != fields.end()) return it->second;
  if (auto it = features.find(std::string(name)); it != features.end()) return it->second;
  throw DatasetError("grid has no column '" + std::string(name) + "'");
}

bool PdeGrid::has_column(std::string_view name) const {
  return fields.count(std::string(name)) != 0 || features.count(std::string(name)) != 0;
}

std::vector<std::string> PdeGrid::operand_names() const {
  std::vector<std::string> out;
  for (const auto& f : field_names) out.push_back(f);
  out.push_back("x");
  for (const auto& f : field_names) {
    for (const char* suffix : {"_x", "_xx", "_xxx", "_xxxx"}) out.push_back(f + suffix);
  }
  return out;
}

void PdeGrid::compute_features() {
  check();
  std::map<std::string, std::vector<double>> feats;
  std::vector<double> xs(size()), ts(size());
  for (std::size_t r = 0; r < n_t(); ++r) {
    for (std::size_t c = 0; c < n_x(); ++c) {
      xs[r * n_x() + c] = x.at(c);
      ts[r * n_x() + c] = t.at(r);
    }
  }
  feats["x"] = std::move(xs);
  feats["t"] = std::move(ts);
  static constexpr const char* suffix[] = {"", "_x", "_xx", "_xxx", "_xxxx"};
  for (const auto& name : field_names) {
    const auto& f = fields.at(name);
    for (int order = 1; order <= 4; ++order) {
      feats[name + suffix[order]] = fd_derivative(f, n_t(), n_x(), Axis::Space, order, x.step);
    }
    feats[name + "_t"] = fd_derivative(f, n_t(), n_x(), Axis::Time, 1, t.step);
  }
  features = std::move(feats);
}

void PdeGrid::check() const {
  if (field_names.empty()) throw DatasetError("grid has no fields");
  if (!(x.step > 0) || !(t.step > 0)) throw DatasetError("grid spacings must be positive");
  for (const auto& name : field_names) {
    auto it = fields.find(name);
    if (it == fields.end()) throw DatasetError("missing field '" + name + "'");
    if (it->second.size() != size()) throw DatasetError("field '" + name + "' does not match the grid shape");
  }
}

std::optional<Expression> PdeGrid::truth_skeleton() const {
  if (truth.empty()) return std::nullopt;
  TermList terms;
  for (const auto& t : truth) terms.push_back({1, parse_unchecked(t.term)});
  return join_terms(terms);
}

void OdeTrajectory::check() const {
  if (t.size() != x.size() || t.size() != xdot.size()) throw DatasetError("trajectory columns differ in length");
  if (t.size() < 2) throw DatasetError("trajectory needs at least two samples");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) throw DatasetError("trajectory times must be strictly increasing");
  }
}

// ---------------------------------------------------------------- PDE generation

std::string_view pde_system_name(PdeSystem s) {
  switch (s) {
    case PdeSystem::Burgers: return "burgers";
    case PdeSystem::ChafeeInfante: return "chafee-infante";
    case PdeSystem::PdeDivide: return "pde-divide";
    case PdeSystem::FisherKpp: return "fisher-kpp";
    case PdeSystem::KuramotoSivashinsky: return "ks";
  }
  return "?";
}

std::optional<PdeSystem> pde_system_from_name(std::string_view name) {
  for (auto s : all_pde_systems()) {
    if (pde_system_name(s) == name) return s;
  }
  if (name == "chafee" || name == "chafee_infante") return PdeSystem::ChafeeInfante;
  if (name == "pde_divide" || name == "divide") return PdeSystem::PdeDivide;
  if (name == "fisher" || name == "fisher_kpp") return PdeSystem::FisherKpp;
  if (name == "kuramoto-sivashinsky") return PdeSystem::KuramotoSivashinsky;
  return std::nullopt;
}

std::vector<PdeSystem> all_pde_systems() {
  return {PdeSystem::Burgers, PdeSystem::ChafeeInfante, PdeSystem::KuramotoSivashinsky, PdeSystem::PdeDivide,
          PdeSystem::FisherKpp};
}

PdeGrid generate_pde(PdeSystem system, const PdeOverrides& overrides) {
  SystemSpec spec = spec_for(system);
  if (overrides.refine < 1) throw std::invalid_argument("refine must be >= 1");
  if (overrides.n_t) {
    if (*overrides.n_t < 7) throw std::invalid_argument("n_t override too small");
    spec.n_t = *overrides.n_t;
  }
  const auto times = output_times(spec);
  std::vector<double> u;
  switch (system) {
    case PdeSystem::Burgers: u = integrate_burgers(spec, overrides.refine, times); break;
    case PdeSystem::ChafeeInfante: u = integrate_chafee(spec, overrides.refine, times); break;
    case PdeSystem::PdeDivide: u = integrate_divide(spec, overrides.refine, times); break;
    case PdeSystem::FisherKpp: u = integrate_fisher(spec, overrides.refine, times); break;
    case PdeSystem::KuramotoSivashinsky: u = integrate_ks(spec, times); break;
  }
  PdeGrid grid;
  grid.system = std::string(pde_system_name(system));
  grid.field_names = {"u"};
  grid.fields["u"] = std::move(u);
  grid.x = spec.x;
  grid.t = {spec.t_first, spec.n_t > 1 ? (spec.t_last - spec.t_first) / static_cast<double>(spec.n_t - 1) : 1.0,
            spec.n_t};
  grid.truth = spec.truth;
  grid.compute_features();
  return grid;
}

// ---------------------------------------------------------------- ODEBench

const std::vector<OdeBenchSystem>& odebench() {
  static const std::vector<OdeBenchSystem> table = {
      {1, "RC-circuit (charging capacitor)", "(0.7 - x/1.2)/2.31", {0.7, 1.2, 2.31}, 10.0, 3.54, "c0 + c1*x"},
      {2, "Population growth with carrying capacity", "0.79*x*(1 - x/74.3)", {0.79, 74.3}, 7.3, 21.0,
       "c0*x^2 + c1*x"},
      {3, "RC-circuit with non-linear resistor (charging capacitor)", "-0.5 + 1/(exp(0.5 - x/0.96) + 1)",
       {0.5, 0.96}, 0.8, 0.02, "c0*sin(x) + c1*x^2 + c2*exp(c3*x)*sin(x) + c4"},
      {4, "Velocity of a falling object with air resistance", "9.81 - 0.0021175*x^2", {9.81, 0.0021175}, 0.5, 73.0,
       "c0*x^2 + c1"},
      {5, "Gompertz law for tumor growth", "0.032*x*log(2.29*x)", {0.032, 2.29}, 1.73, 9.5, "c0*x*log(c1*x)"},
      {6, "Logistic equation with Allee effect", "0.14*x*(-1 + x/4.4)*(1 - x/130)", {0.14, 130.0, 4.4}, 6.123, 2.1,
       "c0*x^3 + c1*x^2 + c2*x"},
      {7, "Refined language death model for two languages", "0.2*x^1.2*(1 - x) - x*(1 - 0.2)*(1 - x)^1.2",
       {0.2, 1.2}, 0.83, 0.34, "c0*x^2 - c1*x*sin(x)^2 - c2*sin(x)*cos(x)"},
      {8, "Overdamped bead on a rotating hoop", "0.0981*(9.7*cos(x) - 1)*sin(x)", {0.0981, 9.7}, 3.1, 2.4,
       "c0*sin(x) + c1*sin(x)*cos(x)"},
      {9, "Budworm outbreak with predation (dimensionless)", "0.4*x*(1 - x/95) - x^2/(x^2 + 1)", {0.4, 95.0}, 44.3,
       4.5, "c0*x^3 + c1"},
      {10, "Landau equation (typical time scale tau = 1)", "0.1*x + 0.04*x^3 - 0.001*x^5", {0.1, -0.04, 0.001},
       0.94, 1.65, "c0*x^5 + c1*x^3 + c2*x"},
      {11, "Improved logistic equation with harvesting/fishing", "0.4*x*(1 - x/100) - 0.24*x/(50 + x)",
       {0.4, 100.0, 0.24, 50.0}, 21.1, 44.1, "c0*x^2 + c1*x + c2"},
      {12, "Improved logistic equation with harvesting/fishing (dimensionless)", "-0.08*x/(0.8 + x) + x*(1 - x)",
       {0.08, 0.8}, 0.13, 0.03, "c0*sin(x)^2 + c1*x + c2*cos(x) + c3"},
      {13, "Autocatalytic gene switching (dimensionless)", "0.1 - 0.55*x + x^2/(x^2 + 1)", {0.1, 0.55}, 0.002, 0.25,
       "c0*exp(c1*x) - c2*sin(x)/x + c3"},
      {14, "Dimensionally reduced SIR infection model for dead people (dimensionless)", "1.2 - 0.2*x - exp(-x)",
       {1.2, 0.2}, 0.0, 0.8, "c0 - c1*x - c2*exp(-x)"},
      {15, "Hysteretic activation of a protein expression", "1.4 + 0.4*x^5/(123 + x^5) - 0.89*x",
       {1.4, 0.4, 123.0, 0.89}, 3.1, 6.3, "c0*x^2 + c1*x + c2*sin(x) + c3"},
      {16, "Overdamped pendulum with constant driving torque", "0.21 - sin(x)", {0.21}, -2.74, 1.65,
       "c0 - c1*sin(x)"},
  };
  return table;
}

const OdeBenchSystem& odebench_system(int id) {
  const auto& table = odebench();
  if (id < 1 || id > static_cast<int>(table.size())) {
    throw std::out_of_range("ODEBench id must be in 1.." + std::to_string(table.size()));
  }
  return table[static_cast<std::size_t>(id - 1)];
}

Expression odebench_rhs(int id) { return parse_unchecked(odebench_system(id).equation); }

OdeTrajectory generate_odebench(int id, WhichIc which, double t_end, std::size_t n_points) {
  const auto& sys = odebench_system(id);
  if (n_points < 2 || !(t_end > 0)) throw std::invalid_argument("need t_end > 0 and at least two points");
  const Expression rhs = odebench_rhs(id);
  OdeTrajectory traj;
  traj.system_id = id;
  traj.which_ic = which == WhichIc::Train ? "train" : "test";
  traj.initial_condition = which == WhichIc::Train ? sys.ic_train : sys.ic_test;
  traj.t.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    traj.t[i] = t_end * static_cast<double>(i) / static_cast<double>(n_points - 1);
  }
  OdeOptions opts;
  opts.rtol = 1e-11;
  opts.atol = 1e-12;
  opts.max_steps = 2000000;
  auto xs = integrate_ode(rhs, {}, traj.initial_condition, traj.t, opts);
  if (!xs) throw DatasetError("ODEBench system " + std::to_string(id) + " failed to integrate");
  traj.x = std::move(*xs);
  traj.xdot.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) traj.xdot[i] = evaluate_scalar(rhs, "x", traj.x[i]);
  return traj;
}

// ---------------------------------------------------------------- files

std::string serialize_grid(const PdeGrid& grid, bool include_features) {
  grid.check();
  std::string out = "# eqdisc grid v1\n";
  if (!grid.system.empty()) out += "system " + grid.system + "\n";
  out += "fields";
  for (const auto& f : grid.field_names) out += " " + f;
  out += "\n";
  out += "x " + format_double(grid.x.start) + " " + format_double(grid.x.step) + " " + std::to_string(grid.x.count) + "\n";
  out += "t " + format_double(grid.t.start) + " " + format_double(grid.t.step) + " " + std::to_string(grid.t.count) + "\n";
  out += "target " + grid.target + "\n";
  for (const auto& tt : grid.truth) out += "truth " + tt.term + " " + format_double(tt.coefficient) + "\n";
  auto block = [&](const std::string& name, const std::vector<double>& values) {
    out += "data " + name + "\n";
    for (std::size_t r = 0; r < grid.n_t(); ++r) {
      for (std::size_t c = 0; c < grid.n_x(); ++c) {
        if (c) out += ',';
        out += format_double(values[r * grid.n_x() + c]);
      }
      out += '\n';
    }
  };
  for (const auto& f : grid.field_names) block(f, grid.fields.at(f));
  if (include_features) {
    for (const auto& [name, values] : grid.features) {
      if (name != "x" && name != "t") block(name, values);
    }
  }
  return out;
}

PdeGrid parse_grid(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "# eqdisc grid v1") throw FormatError("line 1: missing grid header");
  PdeGrid grid;
  grid.fields.clear();
  bool have_x = false, have_t = false;
  std::map<std::string, std::vector<double>> stored;
  std::size_t i = 1;
  auto parse_axis = [&](std::string_view rest, std::size_t line) {
    const auto parts = split(rest, ' ');
    if (parts.size() != 3) throw FormatError("line " + std::to_string(line) + ": axis needs start, step, count");
    UniformAxis a;
    a.start = parse_double(parts[0], line);
    a.step = parse_double(parts[1], line);
    const auto count = parse_double(parts[2], line);
    if (count < 1 || count != std::floor(count)) throw FormatError("line " + std::to_string(line) + ": bad count");
    a.count = static_cast<std::size_t>(count);
    return a;
  };
  while (i < lines.size()) {
    const std::size_t line_no = i + 1;
    const std::string_view line = lines[i];
    const auto sp = line.find(' ');
    const std::string_view key = line.substr(0, sp);
    const std::string_view rest = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
    if (line.empty() || line.front() == '#') {
      ++i;
    } else if (key == "system") {
      grid.system = std::string(rest);
      ++i;
    } else if (key == "fields") {
      for (auto f : split(rest, ' ')) {
        if (!f.empty()) grid.field_names.emplace_back(f);
      }
      ++i;
    } else if (key == "x") {
      grid.x = parse_axis(rest, line_no);
      have_x = true;
      ++i;
    } else if (key == "t") {
      grid.t = parse_axis(rest, line_no);
      have_t = true;
      ++i;
    } else if (key == "target") {
      grid.target = std::string(rest);
      ++i;
    } else if (key == "truth") {
      parse_truth_line(rest, grid.truth, line_no);
      ++i;
    } else if (key == "data") {
      if (!have_x || !have_t) throw FormatError("line " + std::to_string(line_no) + ": data before axis metadata");
      const std::string name(rest);
      std::vector<double> values;
      values.reserve(grid.x.count * grid.t.count);
      ++i;
      for (std::size_t r = 0; r < grid.t.count; ++r, ++i) {
        if (i >= lines.size()) {
          throw FormatError("line " + std::to_string(i + 1) + ": block '" + name + "' has " + std::to_string(r) +
                            " rows, expected " + std::to_string(grid.t.count));
        }
        const auto cells = split(lines[i], ',');
        if (cells.size() != grid.x.count) {
          throw FormatError("line " + std::to_string(i + 1) + ": expected " + std::to_string(grid.x.count) +
                            " values, found " + std::to_string(cells.size()));
        }
        for (auto c : cells) values.push_back(parse_double(c, i + 1));
      }
      stored[name] = std::move(values);
    } else {
      throw FormatError("line " + std::to_string(line_no) + ": unknown record '" + std::string(key) + "'");
    }
  }
  if (!have_x || !have_t) throw FormatError("grid is missing axis metadata");
  for (const auto& f : grid.field_names) {
    auto it = stored.find(f);
    if (it == stored.end()) throw FormatError("field '" + f + "' has no data block");
    grid.fields[f] = std::move(it->second);
    stored.erase(it);
  }
  grid.compute_features();
  for (auto& [name, values] : stored) grid.features[name] = std::move(values);
  return grid;
}

void save_grid(const PdeGrid& grid, const std::string& path) { write_file(path, serialize_grid(grid)); }

PdeGrid load_grid(const std::string& path) { return parse_grid(read_file(path)); }

std::string serialize_trajectory(const OdeTrajectory& traj) {
  traj.check();
  std::string out = "# eqdisc trajectory v1\n";
  if (traj.system_id) out += "# system " + std::to_string(*traj.system_id) + "\n";
  if (!traj.which_ic.empty()) out += "# ic " + traj.which_ic + "\n";
  out += "# x0 " + format_double(traj.initial_condition) + "\n";
  out += "t,x,xdot\n";
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    out += format_double(traj.t[i]) + "," + format_double(traj.x[i]) + "," + format_double(traj.xdot[i]) + "\n";
  }
  return out;
}

OdeTrajectory parse_trajectory(std::string_view text) {
  const auto lines = split_lines(text);
  OdeTrajectory traj;
  bool header = false;
  bool have_x0 = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto line = lines[i];
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto parts = split(line.substr(1), ' ');
      std::vector<std::string_view> words;
      for (auto p : parts) {
        if (!p.empty()) words.push_back(p);
      }
      if (words.size() == 2 && words[0] == "system") traj.system_id = static_cast<int>(parse_double(words[1], line_no));
      if (words.size() == 2 && words[0] == "ic") traj.which_ic = std::string(words[1]);
      if (words.size() == 2 && words[0] == "x0") {
        traj.initial_condition = parse_double(words[1], line_no);
        have_x0 = true;
      }
      continue;
    }
    if (!header) {
      if (line != "t,x,xdot") throw FormatError("line " + std::to_string(line_no) + ": expected header 't,x,xdot'");
      header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 3) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 3 columns, found " + std::to_string(cells.size()));
    }
    traj.t.push_back(parse_double(cells[0], line_no));
    traj.x.push_back(parse_double(cells[1], line_no));
    traj.xdot.push_back(parse_double(cells[2], line_no));
  }
  if (!header) throw FormatError("trajectory has no header");
  if (!have_x0 && !traj.x.empty()) traj.initial_condition = traj.x.front();
  try {
    traj.check();
  } catch (const DatasetError& e) {
    throw FormatError(e.what());
  }
  return traj;
}

void save_trajectory(const OdeTrajectory& traj, const std::string& path) {
  write_file(path, serialize_trajectory(traj));
}

OdeTrajectory load_trajectory(const std::string& path) { return parse_trajectory(read_file(path)); }

Dataset load_dataset(const std::string& path) {
  const std::string text = read_file(path);
  if (text.rfind("# eqdisc grid", 0) == 0) return parse_grid(text);
  return parse_trajectory(text);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string fingerprint(const PdeGrid& grid) { return sha256_hex(serialize_grid(grid)); }
std::string fingerprint(const OdeTrajectory& traj) { return sha256_hex(serialize_trajectory(traj)); }
std::string fingerprint(const Dataset& data) {
  return std::visit([](const auto& d) { return fingerprint(d); }, data);
}

}  // namespace eqdisc
