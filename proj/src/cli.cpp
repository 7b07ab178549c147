#include "eqdisc/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

namespace eqdisc::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write '" + path.string() + "'");
  out << text;
}

SymbolLibrary library_for(const Dataset& data) {
  if (const auto* g = std::get_if<PdeGrid>(&data)) return SymbolLibrary::pde_with_operands(g->operand_names());
  return SymbolLibrary::ode_default();
}

Mode mode_of(const Dataset& data) { return std::holds_alternative<PdeGrid>(data) ? Mode::Pde : Mode::Ode; }

std::string equation_text(Mode mode, const std::vector<std::string>& terms, const std::vector<double>& constants,
                          const std::string& key) {
  if (mode == Mode::Pde) {
    std::string out = "u_t =";
    for (std::size_t i = 0; i < terms.size() && i < constants.size(); ++i) {
      const double c = constants[i];
      if (i == 0) {
        out += c < 0 ? " -" : " ";
      } else {
        out += c < 0 ? " - " : " + ";
      }
      out += fmt(std::abs(c)) + "*" + terms[i];
    }
    return out;
  }
  std::vector<double> shown;
  for (double c : constants) shown.push_back(std::strtod(fmt(c).c_str(), nullptr));
  return "dx/dt = " + print(bind_constants(parse_unchecked(key), shown));
}

// ---------------------------------------------------------------- subcommands

int cmd_gen_pde(const std::string& system, const std::string& out_dir, int refine, std::size_t n_t,
                std::ostream& out) {
  const auto id = pde_system_from_name(system);
  if (!id) throw UsageError("unknown PDE system '" + system + "'");
  PdeOverrides ov;
  ov.refine = refine;
  if (n_t > 0) ov.n_t = n_t;
  const PdeGrid grid = generate_pde(*id, ov);
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / (std::string(pde_system_name(*id)) + ".grid");
  save_grid(grid, path.string());
  const std::string fp = fingerprint(grid);
  write_file(path.string() + ".sha256", fp + "\n");
  out << "wrote " << path.string() << " (" << grid.n_t() << " x " << grid.n_x() << ")\n";
  out << "sha256 " << fp << "\n";
  return kOk;
}

int cmd_gen_ode(int id, const std::string& ic, const std::string& out_dir, double t_end, std::size_t points,
                std::ostream& out) {
  if (id < 1 || id > static_cast<int>(odebench().size())) throw UsageError("ODE id must be 1..16");
  std::vector<WhichIc> which;
  if (ic == "train" || ic == "both") which.push_back(WhichIc::Train);
  if (ic == "test" || ic == "both") which.push_back(WhichIc::Test);
  if (which.empty()) throw UsageError("--ic must be train, test or both");
  fs::create_directories(out_dir);
  for (WhichIc w : which) {
    const OdeTrajectory traj = generate_odebench(id, w, t_end, points);
    const fs::path path =
        fs::path(out_dir) / ("ode" + std::to_string(id) + "_" + (w == WhichIc::Train ? "train" : "test") + ".csv");
    save_trajectory(traj, path.string());
    const std::string fp = fingerprint(traj);
    write_file(path.string() + ".sha256", fp + "\n");
    out << "wrote " << path.string() << " (" << traj.t.size() << " points, x0 = " << fmt(traj.initial_condition)
        << ")\n";
    out << "sha256 " << fp << "\n";
  }
  return kOk;
}

int cmd_eval(const std::string& source, const std::string& data_spec, const std::string& mode_flag,
             std::uint64_t seed, std::ostream& out) {
  const Dataset data = resolve_dataset(data_spec);
  const Mode mode = mode_of(data);
  if (!mode_flag.empty() && mode_flag != (mode == Mode::Pde ? "pde" : "ode")) {
    throw UsageError("--mode " + mode_flag + " does not match the dataset");
  }
  const SymbolLibrary lib = library_for(data);
  const Expression skeleton = normalize_for_mode(parse(source, lib), mode);
  EvalConfig cfg;
  cfg.mode = mode;
  const Candidate c = evaluate(skeleton, data, cfg, seed);

  out << "expression  " << print(skeleton) << "\n";
  if (!c.scored()) {
    out << "status      invalid (" << c.invalid_reason << ")\n";
    return kOk;
  }
  out << "equation    " << equation_text(mode, c.terms, c.constants, c.key()) << "\n";
  std::string xi;
  for (std::size_t i = 0; i < c.constants.size(); ++i) xi += (i ? ", " : "") + fmt(c.constants[i]);
  out << "xi          [" << xi << "]\n";
  out << "nrmse       " << fmt(c.nrmse) << "\n";
  out << "m           " << c.term_count << "\n";
  out << "score       " << fmt(c.score, 10) << "\n";

  if (const auto* g = std::get_if<PdeGrid>(&data); g && !g->truth.empty()) {
    if (const auto e = recovery_error(g->truth, c)) {
      out << "E           " << fmt(*e, 4) << "%\n";
    } else {
      out << "E           n/a (terms differ from ground truth)\n";
    }
  }
  if (const auto* t = std::get_if<OdeTrajectory>(&data)) {
    auto show = [&](const char* label, const OdeTrajectory& traj) {
      const auto r2 = trajectory_r2(c, traj);
      out << label << (r2 ? fmt(*r2, 6) : std::string("invalid (integration failed)")) << "\n";
    };
    if (t->system_id) {
      const double t_end = t->t.back();
      show("r2_train    ", generate_odebench(*t->system_id, WhichIc::Train, t_end, t->t.size()));
      show("r2_test     ", generate_odebench(*t->system_id, WhichIc::Test, t_end, t->t.size()));
    } else {
      show("r2          ", *t);
    }
  }
  return kOk;
}

struct DiscoverArgs {
  std::string data;
  std::string config;
  std::string backend = "native-only";
  std::string out_dir = "run";
  std::string schedule;
  std::string record;
  std::string templates;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;
  std::optional<double> target_score;
  bool no_fallback = false;
};

int cmd_discover(const DiscoverArgs& a, std::ostream& out, std::ostream& err) {
  Settings s;
  if (!a.config.empty()) apply_config(read_file(a.config), s);
  if (a.seed) s.search.seed = *a.seed;
  if (a.max_iters) s.search.P = *a.max_iters;
  if (a.target_score) s.search.target_score = *a.target_score;
  if (!a.schedule.empty()) {
    const std::string name = a.schedule == "self-improve" ? "self-improve-only"
                             : a.schedule == "evolve"     ? "evolve-only"
                                                          : a.schedule;
    const auto sch = schedule_from_name(name);
    if (!sch) throw UsageError("unknown schedule '" + a.schedule + "'");
    s.search.schedule = *sch;
  }
  if (a.no_fallback) s.search.fallback_enabled = false;
  if (a.backend == "native-only") s.search.fallback_enabled = true;
  if (!a.templates.empty()) s.templates_dir = a.templates;
  s.search.check();
  s.backend.check();

  const Dataset data = resolve_dataset(a.data);
  s.eval.mode = mode_of(data);
  s.eval.check();
  const SymbolLibrary lib = library_for(data);
  const PromptSet prompts = s.templates_dir.empty() ? PromptSet::defaults() : PromptSet::load(s.templates_dir);

  std::shared_ptr<Backend> backend;
  try {
    backend = make_backend(a.backend, s.backend);
  } catch (const BackendError& e) {
    throw DatasetError(e.what());
  }
  if (!a.record.empty()) {
    backend = std::make_shared<RecordingBackend>(backend, a.record, s.backend.model_name, s.backend.temperature);
  }

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  std::ofstream log(dir / "run.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw DatasetError("cannot write '" + (dir / "run.jsonl").string() + "'");

  RunRecord last;
  SearchHooks hooks;
  hooks.on_iteration = [&](const RunRecord& r, const IterationRecord& it) {
    if (it.iteration == 0) log << run_head_json(r) << '\n';
    log << iteration_json(it) << '\n';
    log.flush();
    last = r;
  };

  auto finish = [&](const RunRecord& r) {
    log << run_end_json(r) << '\n';
    log.close();
    const std::string text = read_file((dir / "run.jsonl").string());
    write_file(dir / "queue.json",
               candidates_json(r.iterations.empty() ? std::vector<Candidate>{} : r.iterations.back().queue) + "\n");
    write_file(dir / "report.txt", render_report(text));
    write_file(dir / "trace.csv", render_trace_csv(text));
  };

  RunRecord run;
  try {
    run = run_search(data, lib, s.search, *backend, s.eval, prompts, hooks);
  } catch (const BackendError& e) {
    last.stop_reason = "transport-error";
    finish(last);
    err << "error: " << e.what() << "\n";
    if (const auto* te = dynamic_cast<const TransportError*>(&e); te && te->status()) {
      err << "upstream status " << te->status() << "\n";
    }
    return kTransportError;
  }
  finish(run);

  out << "iterations  " << run.stopped_at() << " (" << run.stop_reason << ")\n";
  out << "evaluated   " << run.evaluated << "\n";
  if (const auto* b = run.best()) {
    out << "best        " << equation_text(s.eval.mode, b->terms, b->constants, b->key()) << "\n";
    out << "score       " << fmt(b->score, 10) << "\n";
  } else {
    out << "best        none\n";
  }
  out << "report      " << (dir / "report.txt").string() << "\n";
  return kOk;
}

int cmd_report(const std::string& path, const std::string& out_path, const std::string& csv_path,
               std::ostream& out) {
  const std::string text = read_file(path);
  const std::string report = render_report(text);
  if (out_path.empty()) {
    out << report;
  } else {
    write_file(out_path, report);
  }
  if (!csv_path.empty()) write_file(csv_path, render_trace_csv(text));
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------- public helpers

void apply_config(std::string_view json_text, Settings& s) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "M") s.search.M = v.get<int>();
      else if (key == "P") s.search.P = v.get<int>();
      else if (key == "K") s.search.K = v.get<int>();
      else if (key == "seed") s.search.seed = v.get<std::uint64_t>();
      else if (key == "schedule") {
        const auto sch = schedule_from_name(v.get<std::string>());
        if (!sch) throw UsageError("config: unknown schedule '" + v.get<std::string>() + "'");
        s.search.schedule = *sch;
      } else if (key == "target_score") {
        if (v.is_null()) s.search.target_score.reset();
        else s.search.target_score = v.get<double>();
      } else if (key == "fallback") s.search.fallback_enabled = v.get<bool>();
      else if (key == "stagnation_window") s.search.stagnation_window = v.get<int>();
      else if (key == "N_term") s.eval.n_term_max = v.get<int>();
      else if (key == "zeta1") s.eval.zeta1 = v.get<double>();
      else if (key == "lambda") s.eval.lambda = v.get<double>();
      else if (key == "stridge_threshold") s.eval.stridge_threshold = v.get<double>();
      else if (key == "stridge_max_iter") s.eval.stridge_max_iter = v.get<int>();
      else if (key == "fit_restarts") s.eval.fit_restarts = v.get<int>();
      else if (key == "T") s.backend.temperature = v.get<double>();
      else if (key == "templates") s.templates_dir = v.get<std::string>();
      else if (key == "llm") {
        for (const auto& [k, w] : v.items()) {
          if (k == "endpoint_url") s.backend.endpoint_url = w.get<std::string>();
          else if (k == "model") s.backend.model_name = w.get<std::string>();
          else if (k == "max_retries") s.backend.max_retries = w.get<int>();
          else if (k == "timeout_s") s.backend.timeout = std::chrono::milliseconds(static_cast<long>(w.get<double>() * 1000));
          else if (k == "initial_backoff_ms") s.backend.initial_backoff = std::chrono::milliseconds(w.get<long>());
          else if (k == "api_key_env") s.backend.api_key_env = w.get<std::string>();
          else if (k == "max_concurrent_requests") s.backend.max_concurrent_requests = w.get<int>();
          else throw UsageError("config: unknown key 'llm." + k + "'");
        }
      } else {
        throw UsageError("config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

std::shared_ptr<Backend> make_backend(std::string_view spec, const BackendConfig& cfg) {
  if (spec == "live") return std::make_shared<LiveBackend>(cfg);
  if (spec == "native-only") return std::make_shared<NullBackend>();
  if (spec.starts_with("replay:")) return ReplayBackend::from_file(std::string(spec.substr(7)));
  if (spec.starts_with("mock:")) return MockBackend::from_file(std::string(spec.substr(5)));
  throw UsageError("unknown backend '" + std::string(spec) + "' (live, replay:<path>, mock:<path>, native-only)");
}

Dataset resolve_dataset(const std::string& spec) {
  if (spec.starts_with("pde:")) {
    const auto id = pde_system_from_name(spec.substr(4));
    if (!id) throw UsageError("unknown PDE system '" + spec.substr(4) + "'");
    return generate_pde(*id);
  }
  if (spec.starts_with("ode:")) {
    std::string rest = spec.substr(4);
    WhichIc which = WhichIc::Train;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
      const std::string ic = rest.substr(colon + 1);
      if (ic == "test") which = WhichIc::Test;
      else if (ic != "train") throw UsageError("initial condition must be train or test");
      rest = rest.substr(0, colon);
    }
    int id = 0;
    try {
      id = std::stoi(rest);
    } catch (const std::exception&) {
      throw UsageError("bad ODE id '" + rest + "'");
    }
    if (id < 1 || id > static_cast<int>(odebench().size())) throw UsageError("ODE id must be 1..16");
    return generate_odebench(id, which);
  }
  return load_dataset(spec);
}

namespace {

struct ParsedRun {
  json head;
  std::vector<json> iterations;
  json end;
};

ParsedRun parse_run(std::string_view text) {
  ParsedRun r;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("run log line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "head") r.head = std::move(j);
    else if (type == "iteration") r.iterations.push_back(std::move(j));
    else if (type == "end") r.end = std::move(j);
    else throw FormatError("run log line " + std::to_string(lineno) + ": unknown record type");
  }
  if (r.head.is_null()) throw FormatError("run log has no head record");
  return r;
}

}  // namespace

std::string render_report(std::string_view run_jsonl) {
  const ParsedRun run = parse_run(run_jsonl);
  const Mode mode = run.head["eval"].value("mode", "pde") == "ode" ? Mode::Ode : Mode::Pde;
  std::ostringstream os;
  os << "equation discovery report\n\n";
  os << "dataset     " << run.head.value("dataset", "") << "\n";
  os << "backend     " << run.head.value("backend", "") << "\n";
  os << "schedule    " << run.head["config"].value("schedule", "") << "\n";
  os << "iterations  " << run.iterations.size();
  if (!run.end.is_null()) os << " (stop: " << run.end.value("stop_reason", "") << ")";
  os << "\n";
  if (!run.end.is_null()) os << "evaluated   " << run.end.value("evaluated", 0) << "\n";

  json best;
  if (!run.end.is_null() && run.end.contains("best")) {
    best = run.end["best"];
  } else if (!run.iterations.empty() && !run.iterations.back()["queue"].empty()) {
    best = run.iterations.back()["queue"][0];
  }
  os << "\nbest equation\n";
  if (best.is_null()) {
    os << "  none scored\n";
  } else {
    const auto terms = best.value("terms", std::vector<std::string>{});
    std::vector<double> constants;
    for (const auto& c : best["constants"]) constants.push_back(c.is_number() ? c.get<double>() : std::nan(""));
    os << "  " << equation_text(mode, terms, constants, best.value("key", "")) << "\n";
    os << "  skeleton  " << best.value("key", "") << "\n";
    std::string xi;
    for (std::size_t i = 0; i < constants.size(); ++i) xi += (i ? ", " : "") + fmt(constants[i]);
    os << "  xi        [" << xi << "]\n";
    os << "  nrmse     " << fmt(best.value("nrmse", 0.0)) << "\n";
    os << "  m         " << best.value("m", 0) << "\n";
    os << "  score     " << fmt(best.value("score", 0.0), 10) << "\n";
    const auto& truth = run.head["truth"];
    if (truth.is_array() && !truth.empty()) {
      std::vector<TruthTerm> tt;
      for (const auto& t : truth) tt.push_back({t["term"].get<std::string>(), t["coefficient"].get<double>()});
      Candidate c;
      c.status = Status::Scored;
      c.terms = terms;
      c.constants = constants;
      if (const auto e = recovery_error(tt, c)) {
        os << "  E         " << fmt(*e, 4) << "% (terms match ground truth)\n";
      } else {
        os << "  E         n/a (terms differ from ground truth)\n";
      }
    }
  }

  if (!run.iterations.empty()) {
    os << "\nfinal queue\n";
    int rank = 1;
    for (const auto& c : run.iterations.back()["queue"]) {
      os << "  " << rank++ << ". " << std::left << std::setw(12) << fmt(c.value("score", 0.0), 8) << " "
         << c.value("key", "") << "\n";
    }
  }

  os << "\nbest-score trace\n";
  os << "  iteration  strategy      best_score\n";
  for (const auto& it : run.iterations) {
    os << "  " << std::left << std::setw(10) << it.value("iteration", 0) << " " << std::setw(13)
       << it.value("strategy", "") << " " << fmt(it.value("best_score", 0.0), 10) << "\n";
  }
  return os.str();
}

std::string render_trace_csv(std::string_view run_jsonl) {
  const ParsedRun run = parse_run(run_jsonl);
  std::string out = "iteration,strategy,best_score,best\n";
  for (const auto& it : run.iterations) {
    out += std::to_string(it.value("iteration", 0)) + "," + it.value("strategy", "") + "," +
           fmt(it.value("best_score", 0.0), 17) + ",\"" + it.value("best", "") + "\"\n";
  }
  return out;
}

// ---------------------------------------------------------------- entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Symbolic equation discovery from data"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate benchmark datasets");
  gen->require_subcommand(1);
  auto* gen_pde = gen->add_subcommand("pde", "Integrate a canonical PDE system");
  std::string system, pde_out = ".";
  int refine = 4;
  std::size_t n_t = 0;
  gen_pde->add_option("system", system, "burgers, chafee-infante, pde-divide, fisher-kpp, ks")->required();
  gen_pde->add_option("-o,--out", pde_out, "Output directory");
  gen_pde->add_option("--refine", refine, "Fine-grid refinement factor")->check(CLI::Range(1, 16));
  gen_pde->add_option("--n-t", n_t, "Override the number of time samples");

  auto* gen_ode = gen->add_subcommand("ode", "Integrate an ODEBench system");
  int ode_id = 0;
  std::string ic = "train", ode_out = ".";
  double t_end = 10.0;
  std::size_t points = 512;
  gen_ode->add_option("id", ode_id, "System id 1..16")->required();
  gen_ode->add_option("--ic", ic, "train, test or both");
  gen_ode->add_option("-o,--out", ode_out, "Output directory");
  gen_ode->add_option("--t-end", t_end, "End of the time span");
  gen_ode->add_option("--points", points, "Number of samples");

  auto* discover = app.add_subcommand("discover", "Run the equation search");
  DiscoverArgs d;
  discover->add_option("--data", d.data, "Dataset file, pde:<system> or ode:<id>[:train|test]")->required();
  discover->add_option("--config", d.config, "JSON config file");
  discover->add_option("--seed", d.seed, "Run seed");
  discover->add_option("--backend", d.backend, "live, replay:<path>, mock:<path> or native-only");
  discover->add_option("--out", d.out_dir, "Output directory");
  discover->add_option("--schedule", d.schedule, "alternate, self-improve or evolve");
  discover->add_option("--max-iters", d.max_iters, "Iterations after initialisation (P)");
  discover->add_option("--target-score", d.target_score, "Stop once the best score reaches this value");
  discover->add_option("--record", d.record, "Append exchanges to a replay transcript");
  discover->add_option("--templates", d.templates, "Directory of prompt templates");
  discover->add_flag("--no-fallback", d.no_fallback, "Do not top up populations with native offspring");

  auto* eval = app.add_subcommand("eval", "Score one expression on a dataset");
  std::string expr, eval_data, eval_mode;
  std::uint64_t eval_seed = 0;
  eval->add_option("expression", expr, "Right-hand side")->required();
  eval->add_option("--data", eval_data, "Dataset file, pde:<system> or ode:<id>[:train|test]")->required();
  eval->add_option("--mode", eval_mode, "pde or ode")->check(CLI::IsMember({"pde", "ode"}));
  eval->add_option("--seed", eval_seed, "Seed for constant fitting restarts");

  auto* report = app.add_subcommand("report", "Render a report from a run log");
  std::string run_path, report_out, csv_out;
  report->add_option("run", run_path, "run.jsonl")->required();
  report->add_option("-o,--out", report_out, "Write the report here instead of stdout");
  report->add_option("--csv", csv_out, "Also write the best-score trace as CSV");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadArgs;
  }

  try {
    if (gen_pde->parsed()) return cmd_gen_pde(system, pde_out, refine, n_t, out);
    if (gen_ode->parsed()) return cmd_gen_ode(ode_id, ic, ode_out, t_end, points, out);
    if (discover->parsed()) return cmd_discover(d, out, err);
    if (eval->parsed()) return cmd_eval(expr, eval_data, eval_mode, eval_seed, out);
    if (report->parsed()) return cmd_report(run_path, report_out, csv_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const ExprError& e) {
    err << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const BackendError& e) {
    err << "error: " << e.what() << "\n";
    return kTransportError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kBadArgs;
}

}  // namespace eqdisc::cli
