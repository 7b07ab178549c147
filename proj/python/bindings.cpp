#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "eqdisc/cli.hpp"
#include "eqdisc/evaluation.hpp"
#include "eqdisc/numerics.hpp"
#include "eqdisc/search.hpp"

namespace py = pybind11;
using namespace eqdisc;

namespace {

Mode mode_from(const std::string& s) {
  if (s == "pde") return Mode::Pde;
  if (s == "ode") return Mode::Ode;
  throw py::value_error("mode must be 'pde' or 'ode'");
}

SymbolLibrary library_for(const Dataset& data) {
  if (const auto* g = std::get_if<PdeGrid>(&data)) return SymbolLibrary::pde_with_operands(g->operand_names());
  return SymbolLibrary::ode_default();
}

Mode mode_of(const Dataset& data) { return std::holds_alternative<PdeGrid>(data) ? Mode::Pde : Mode::Ode; }

WhichIc ic_from(const std::string& s) {
  if (s == "train") return WhichIc::Train;
  if (s == "test") return WhichIc::Test;
  throw py::value_error("ic must be 'train' or 'test'");
}

py::array_t<double> as_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

}  // namespace

PYBIND11_MODULE(_eqdisc, m) {
  m.doc() = "Equation discovery core";

  py::register_exception<ExprError>(m, "ExprError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_RuntimeError);
  py::register_exception<NumericsError>(m, "NumericsError", PyExc_ArithmeticError);
  py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

  // ------------------------------------------------------------ expressions

  m.def(
      "canonical",
      [](const std::string& src, const std::string& mode) {
        const auto lib = mode_from(mode) == Mode::Pde ? SymbolLibrary::pde_default() : SymbolLibrary::ode_default();
        return print_canonical(parse(src, lib));
      },
      py::arg("expression"), py::arg("mode") = "pde");
  m.def(
      "split_terms",
      [](const std::string& src) {
        std::vector<std::pair<int, std::string>> out;
        for (const auto& t : split_terms(parse_unchecked(src))) out.emplace_back(t.sign, print(t.term));
        return out;
      },
      py::arg("expression"));
  m.def(
      "violations",
      [](const std::string& src, const std::string& mode) {
        const auto lib = mode_from(mode) == Mode::Pde ? SymbolLibrary::pde_default() : SymbolLibrary::ode_default();
        std::vector<std::string> out;
        for (const auto& v : validate(parse_unchecked(src), lib)) out.emplace_back(violation_name(v.kind));
        return out;
      },
      py::arg("expression"), py::arg("mode") = "pde");

  // ------------------------------------------------------------ numerics

  m.def("ridge", &ridge, py::arg("theta"), py::arg("y"), py::arg("lam") = 1e-3);
  m.def(
      "stridge",
      [](const Matrix& theta, const Vector& y, double lam, double threshold, int max_iter) {
        return stridge(theta, y, lam, threshold, max_iter);
      },
      py::arg("theta"), py::arg("y"), py::arg("lam") = 1e-3, py::arg("threshold") = 0.05, py::arg("max_iter") = 10);
  m.def(
      "fd_derivative",
      [](const std::vector<double>& values, int order, double spacing) {
        return as_array(fd_derivative(values, order, spacing));
      },
      py::arg("values"), py::arg("order"), py::arg("spacing"));
  m.def("score", &score, py::arg("nrmse"), py::arg("m"), py::arg("zeta1") = 0.01);
  m.def(
      "integrate_ode",
      [](const std::string& rhs, const std::vector<double>& constants, double x0,
         const std::vector<double>& t) -> std::optional<py::array_t<double>> {
        const auto sol = integrate_ode(parse_unchecked(rhs), constants, x0, t);
        if (!sol) return std::nullopt;
        return as_array(*sol);
      },
      py::arg("rhs"), py::arg("constants"), py::arg("x0"), py::arg("t"));

  // ------------------------------------------------------------ datasets

  py::class_<PdeGrid>(m, "PdeGrid")
      .def_readonly("system", &PdeGrid::system)
      .def_readonly("field_names", &PdeGrid::field_names)
      .def_property_readonly("shape", [](const PdeGrid& g) { return py::make_tuple(g.n_t(), g.n_x()); })
      .def_property_readonly("x", [](const PdeGrid& g) { return as_array(g.x.values()); })
      .def_property_readonly("t", [](const PdeGrid& g) { return as_array(g.t.values()); })
      .def_property_readonly("truth",
                             [](const PdeGrid& g) {
                               std::vector<std::pair<std::string, double>> out;
                               for (const auto& t : g.truth) out.emplace_back(t.term, t.coefficient);
                               return out;
                             })
      .def("operands", &PdeGrid::operand_names)
      .def("column",
           [](const PdeGrid& g, const std::string& name) {
             const auto c = g.column(name);
             py::array_t<double> a({g.n_t(), g.n_x()});
             std::copy(c.begin(), c.end(), a.mutable_data());
             return a;
           })
      .def("fingerprint", [](const PdeGrid& g) { return fingerprint(g); })
      .def("save", [](const PdeGrid& g, const std::string& path) { save_grid(g, path); });

  py::class_<OdeTrajectory>(m, "OdeTrajectory")
      .def_property_readonly("t", [](const OdeTrajectory& o) { return as_array(o.t); })
      .def_property_readonly("x", [](const OdeTrajectory& o) { return as_array(o.x); })
      .def_property_readonly("xdot", [](const OdeTrajectory& o) { return as_array(o.xdot); })
      .def_readonly("initial_condition", &OdeTrajectory::initial_condition)
      .def_readonly("system_id", &OdeTrajectory::system_id)
      .def("fingerprint", [](const OdeTrajectory& o) { return fingerprint(o); })
      .def("save", [](const OdeTrajectory& o, const std::string& path) { save_trajectory(o, path); });

  m.def(
      "generate_pde",
      [](const std::string& system, int refine) {
        const auto s = pde_system_from_name(system);
        if (!s) throw py::value_error("unknown PDE system '" + system + "'");
        PdeOverrides ov;
        ov.refine = refine;
        py::gil_scoped_release nogil;
        return generate_pde(*s, ov);
      },
      py::arg("system"), py::arg("refine") = 4);
  m.def(
      "generate_odebench",
      [](int id, const std::string& ic, double t_end, std::size_t n_points) {
        return generate_odebench(id, ic_from(ic), t_end, n_points);
      },
      py::arg("id"), py::arg("ic") = "train", py::arg("t_end") = 10.0, py::arg("n_points") = 512);
  m.def("load_dataset", [](const std::string& path) {
    const Dataset d = load_dataset(path);
    if (const auto* g = std::get_if<PdeGrid>(&d)) return py::cast(*g);
    return py::cast(std::get<OdeTrajectory>(d));
  });
  m.def("pde_systems", [] {
    std::vector<std::string> out;
    for (auto s : all_pde_systems()) out.emplace_back(pde_system_name(s));
    return out;
  });

  // ------------------------------------------------------------ evaluation

  py::class_<Candidate>(m, "Candidate")
      .def_property_readonly("key", &Candidate::key)
      .def_property_readonly("proposed", &Candidate::proposed_key)
      .def_readonly("constants", &Candidate::constants)
      .def_readonly("terms", &Candidate::terms)
      .def_readonly("term_count", &Candidate::term_count)
      .def_readonly("nrmse", &Candidate::nrmse)
      .def_readonly("score", &Candidate::score)
      .def_readonly("invalid_reason", &Candidate::invalid_reason)
      .def_property_readonly("scored", &Candidate::scored)
      .def_property_readonly("status", [](const Candidate& c) { return std::string(status_name(c.status)); })
      .def("__repr__", [](const Candidate& c) {
        std::ostringstream os;
        os << "<Candidate '" << c.key() << "' " << status_name(c.status) << " score=" << c.score << ">";
        return os.str();
      });

  auto evaluate_any = [](const std::string& src, const Dataset& data, std::uint64_t seed) {
    EvalConfig cfg;
    cfg.mode = mode_of(data);
    const auto e = normalize_for_mode(parse(src, library_for(data)), cfg.mode);
    py::gil_scoped_release nogil;
    return evaluate(renumber_constants(e), data, cfg, seed);
  };
  m.def(
      "evaluate",
      [evaluate_any](const std::string& src, const PdeGrid& g, std::uint64_t seed) {
        return evaluate_any(src, g, seed);
      },
      py::arg("expression"), py::arg("data"), py::arg("seed") = 0);
  m.def(
      "evaluate",
      [evaluate_any](const std::string& src, const OdeTrajectory& t, std::uint64_t seed) {
        return evaluate_any(src, t, seed);
      },
      py::arg("expression"), py::arg("data"), py::arg("seed") = 0);
  m.def("recovery_error", [](const Candidate& c, const PdeGrid& g) { return recovery_error(g.truth, c); });
  m.def("trajectory_r2", &trajectory_r2, py::arg("candidate"), py::arg("observed"));
  m.def("r_squared", [](const std::vector<double>& a, const std::vector<double>& b) { return r_squared(a, b); });

  // ------------------------------------------------------------ search

  m.def(
      "discover",
      [](py::object data, const std::string& backend, const std::vector<std::string>& responses, int max_iters,
         std::uint64_t seed, bool fallback, std::optional<double> target_score, const std::string& schedule) {
        Dataset d;
        if (py::isinstance<PdeGrid>(data)) d = data.cast<PdeGrid>();
        else d = data.cast<OdeTrajectory>();
        SearchConfig cfg;
        cfg.P = max_iters;
        cfg.seed = seed;
        cfg.fallback_enabled = fallback;
        cfg.target_score = target_score;
        const auto sch = schedule_from_name(schedule);
        if (!sch) throw py::value_error("unknown schedule '" + schedule + "'");
        cfg.schedule = *sch;
        EvalConfig ev;
        ev.mode = mode_of(d);
        std::shared_ptr<Backend> b;
        if (backend == "mock") b = std::make_shared<MockBackend>(responses);
        else b = cli::make_backend(backend, BackendConfig{});
        py::gil_scoped_release nogil;
        const RunRecord run = run_search(d, library_for(d), cfg, *b, ev);
        return serialize_run(run);
      },
      py::arg("data"), py::arg("backend") = "native-only", py::arg("responses") = std::vector<std::string>{},
      py::arg("max_iters") = 100, py::arg("seed") = 0, py::arg("fallback") = true,
      py::arg("target_score") = std::nullopt, py::arg("schedule") = "alternate",
      "Runs the search and returns the line-delimited run log.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"eqdisc"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release nogil;
          code = cli::run(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command; returns (exit_code, stdout, stderr).");
}
