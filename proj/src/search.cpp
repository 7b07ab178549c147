#include "eqdisc/search.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <sstream>

namespace eqdisc {

using json = nlohmann::json;

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Init: return "init";
    case Strategy::SelfImprove: return "self_improve";
    case Strategy::Evolve: return "evolve";
  }
  return "?";
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  if (name == "init") return Strategy::Init;
  if (name == "self_improve") return Strategy::SelfImprove;
  if (name == "evolve") return Strategy::Evolve;
  return std::nullopt;
}

std::string_view schedule_name(Schedule s) {
  switch (s) {
    case Schedule::Alternate: return "alternate";
    case Schedule::SelfImproveOnly: return "self-improve-only";
    case Schedule::EvolveOnly: return "evolve-only";
  }
  return "?";
}

std::optional<Schedule> schedule_from_name(std::string_view name) {
  if (name == "alternate") return Schedule::Alternate;
  if (name == "self-improve-only" || name == "self_improve_only") return Schedule::SelfImproveOnly;
  if (name == "evolve-only" || name == "evolve_only") return Schedule::EvolveOnly;
  return std::nullopt;
}

void SearchConfig::check() const {
  if (M < 1) throw std::invalid_argument("SearchConfig: M must be positive");
  if (K < 1 || K > M) throw std::invalid_argument("SearchConfig: 1 <= K <= M required");
  if (P < 1) throw std::invalid_argument("SearchConfig: P must be positive");
  if (stagnation_window < 1) throw std::invalid_argument("SearchConfig: stagnation window must be positive");
}

Strategy strategy_for(Schedule schedule, int iteration) {
  if (iteration == 0) return Strategy::Init;
  switch (schedule) {
    case Schedule::SelfImproveOnly: return Strategy::SelfImprove;
    case Schedule::EvolveOnly: return Strategy::Evolve;
    case Schedule::Alternate: break;
  }
  return iteration % 2 == 1 ? Strategy::SelfImprove : Strategy::Evolve;
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  const auto ka = a.key();
  const auto kb = b.key();
  if (ka.size() != kb.size()) return ka.size() < kb.size();
  return ka < kb;
}

// ---------------------------------------------------------------- queue

PriorityQueue::PriorityQueue(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("PriorityQueue: capacity must be positive");
}

void PriorityQueue::update(const std::vector<Candidate>& batch) {
  for (const auto& c : batch) {
    if (!c.scored() || !std::isfinite(c.score)) continue;
    const auto key = c.key();
    if (key.empty()) continue;
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Candidate& e) { return e.key() == key; });
    if (it != entries_.end()) {
      if (c.score > it->score) *it = c;
      continue;
    }
    entries_.push_back(c);
  }
  std::stable_sort(entries_.begin(), entries_.end(), ranks_before);
  if (entries_.size() > static_cast<std::size_t>(capacity_)) entries_.resize(static_cast<std::size_t>(capacity_));
}

PriorityQueue update_queue(PriorityQueue q, const std::vector<Candidate>& batch) {
  q.update(batch);
  return q;
}

std::vector<Candidate> select_examples(const PriorityQueue& q, const std::vector<Candidate>& last_batch, int M) {
  std::vector<Candidate> out;
  std::set<std::string> seen;
  for (const auto& c : q.entries()) {
    if (static_cast<int>(out.size()) >= M) break;
    out.push_back(c);
    seen.insert(c.key());
  }
  std::vector<Candidate> rest;
  for (const auto& c : last_batch) {
    if (c.scored() && std::isfinite(c.score) && !c.key().empty()) rest.push_back(c);
  }
  std::stable_sort(rest.begin(), rest.end(), ranks_before);
  for (const auto& c : rest) {
    if (static_cast<int>(out.size()) >= M) break;
    if (seen.insert(c.key()).second) out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------- native operators

namespace gp {

namespace {

void preorder(const NodePtr& n, std::vector<NodePtr>& out) {
  out.push_back(n);
  if (n->lhs) preorder(n->lhs, out);
  if (n->rhs) preorder(n->rhs, out);
}

NodePtr rebuild(const NodePtr& n, std::size_t& counter, std::size_t target, const NodePtr& replacement) {
  if (counter == target) {
    counter += node_count(Expression(n));
    return replacement;
  }
  ++counter;
  if (!n->lhs) return n;
  const NodePtr l = rebuild(n->lhs, counter, target, replacement);
  const NodePtr r = n->rhs ? rebuild(n->rhs, counter, target, replacement) : nullptr;
  if (l == n->lhs && r == n->rhs) return n;
  auto copy = std::make_shared<Node>(*n);
  copy->lhs = l;
  copy->rhs = r;
  return copy;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool chance(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

constexpr Op kBinaryOps[] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};
constexpr Op kFunctions[] = {Op::Sin, Op::Cos, Op::Log, Op::Exp};

}  // namespace

Expression term_swap(const Expression& a, std::size_t i, const Expression& b, std::size_t j) {
  auto ta = split_terms(a);
  const auto tb = split_terms(b);
  if (i >= ta.size() || j >= tb.size()) throw std::out_of_range("term_swap: term index out of range");
  ta[i] = tb[j];
  return join_terms(ta);
}

std::size_t subtree_count(const Expression& e) { return node_count(e); }

Expression subtree_at(const Expression& e, std::size_t index) {
  std::vector<NodePtr> nodes;
  preorder(e.root(), nodes);
  if (index >= nodes.size()) throw std::out_of_range("subtree_at: index out of range");
  return Expression(nodes[index]);
}

Expression replace_subtree(const Expression& e, std::size_t index, const Expression& replacement) {
  if (index >= node_count(e)) throw std::out_of_range("replace_subtree: index out of range");
  std::size_t counter = 0;
  return Expression(rebuild(e.root(), counter, index, replacement.root()));
}

std::optional<Expression> mutate(const Expression& e, const SymbolLibrary& lib, std::mt19937_64& rng) {
  std::vector<NodePtr> nodes;
  preorder(e.root(), nodes);
  struct Site {
    std::size_t index;
    std::vector<Op> ops;
    std::vector<std::string> names;
  };
  std::vector<Site> sites;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Node& n = *nodes[k];
    Site s{k, {}, {}};
    if (n.kind == Node::Kind::Binary) {
      for (Op op : kBinaryOps) {
        if (op != n.op && lib.has_operator(op)) s.ops.push_back(op);
      }
    } else if (n.kind == Node::Kind::Unary && is_function(n.op)) {
      for (Op op : kFunctions) {
        if (op != n.op && lib.has_operator(op)) s.ops.push_back(op);
      }
    } else if (n.kind == Node::Kind::Variable) {
      for (const auto& name : lib.operands) {
        if (name != n.name) s.names.push_back(name);
      }
    }
    if (!s.ops.empty() || !s.names.empty()) sites.push_back(std::move(s));
  }
  if (sites.empty()) return std::nullopt;
  const Site& site = pick(sites, rng);
  auto copy = std::make_shared<Node>(*nodes[site.index]);
  if (!site.ops.empty()) {
    copy->op = pick(site.ops, rng);
  } else {
    copy->name = pick(site.names, rng);
  }
  return replace_subtree(e, site.index, Expression(NodePtr(copy)));
}

Expression crossover(const Expression& a, const Expression& b, std::mt19937_64& rng) {
  auto ta = split_terms(a);
  const auto tb = split_terms(b);
  const std::size_t i = std::uniform_int_distribution<std::size_t>(0, ta.size() - 1)(rng);
  const std::size_t j = std::uniform_int_distribution<std::size_t>(0, tb.size() - 1)(rng);
  if (chance(0.3, rng)) {
    const Expression& host = ta[i].term;
    const Expression& donor = tb[j].term;
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, subtree_count(host) - 1)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(0, subtree_count(donor) - 1)(rng);
    ta[i].term = replace_subtree(host, s, subtree_at(donor, d));
    return join_terms(ta);
  }
  ta[i] = tb[j];
  return join_terms(ta);
}

}  // namespace gp

namespace {

std::optional<Expression> admit(const Expression& e, const SymbolLibrary& lib) {
  try {
    auto n = renumber_constants(normalize_for_mode(e, lib.mode));
    if (validate(n, lib).empty()) return n;
  } catch (const ExprError&) {
  }
  return std::nullopt;
}

}  // namespace

std::vector<Expression> native_evolve(const std::vector<Expression>& parents, const SymbolLibrary& lib, int n,
                                      std::uint64_t seed) {
  if (parents.size() < 2) throw TooFewParents("native_evolve needs at least two parents");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> parent(0, parents.size() - 1);
  std::vector<Expression> out;
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const std::size_t i = parent(rng);
      std::size_t j = parent(rng);
      while (j == i) j = parent(rng);
      Expression child = gp::crossover(parents[i], parents[j], rng);
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.3) {
        if (auto m = gp::mutate(child, lib, rng)) child = *m;
      }
      if (auto ok = admit(child, lib)) {
        out.push_back(*ok);
        break;
      }
    }
  }
  return out;
}

std::vector<Expression> native_random(const SymbolLibrary& lib, int n, std::uint64_t seed, int max_terms) {
  if (lib.operands.empty()) throw std::invalid_argument("native_random: library has no operands");
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  std::vector<Op> functions;
  for (Op op : {Op::Sin, Op::Cos, Op::Log, Op::Exp}) {
    if (lib.has_operator(op)) functions.push_back(op);
  }
  auto operand = [&] {
    return Expression::variable(lib.operands[static_cast<std::size_t>(uniform(0, static_cast<int>(lib.operands.size()) - 1))]);
  };
  auto factor = [&] {
    Expression f = operand();
    if (!functions.empty() && coin(0.25)) {
      f = Expression::unary(functions[static_cast<std::size_t>(uniform(0, static_cast<int>(functions.size()) - 1))], f);
    } else if (lib.has_operator(Op::Pow) && lib.max_pow >= 2 && coin(0.25)) {
      f = Expression::binary(Op::Pow, f, Expression::literal(uniform(2, lib.max_pow)));
    }
    return f;
  };
  auto term = [&] {
    Expression t = factor();
    if (lib.has_operator(Op::Mul) && coin(0.5)) t = t * factor();
    if (lib.has_operator(Op::Div) && coin(0.1)) t = t / operand();
    if (lib.allows_const && lib.has_operator(Op::Mul)) t = Expression::constant(0) * t;
    return t;
  };

  const int term_cap = std::max(1, max_terms);
  std::vector<Expression> out;
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      TermList terms;
      const int count = uniform(1, std::min(3, term_cap));
      for (int t = 0; t < count; ++t) {
        const int sign = lib.has_operator(Op::Sub) && coin(0.3) ? -1 : 1;
        terms.push_back({t == 0 ? 1 : sign, term()});
      }
      if (lib.allows_const && lib.has_operator(Op::Add) && coin(0.5)) terms.push_back({1, Expression::constant(0)});
      if (auto ok = admit(join_terms(terms), lib)) {
        out.push_back(*ok);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- runs

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

const Candidate* RunRecord::best() const {
  for (auto it = iterations.rbegin(); it != iterations.rend(); ++it) {
    if (!it->queue.empty()) return &it->queue.front();
  }
  return nullptr;
}

std::vector<double> RunRecord::best_trace() const {
  std::vector<double> out;
  out.reserve(iterations.size());
  for (const auto& it : iterations) out.push_back(it.best_score);
  return out;
}

namespace {

Provenance provenance_for(Strategy s) {
  switch (s) {
    case Strategy::Init: return Provenance::Init;
    case Strategy::SelfImprove: return Provenance::SelfImprove;
    case Strategy::Evolve: return Provenance::Evolution;
  }
  return Provenance::User;
}

bool reached(double best, double target) { return best >= target - 1e-6 * std::abs(target); }

}  // namespace

RunRecord run_search(const Dataset& data, const SymbolLibrary& lib, const SearchConfig& cfg, Backend& backend,
                     const EvalConfig& eval, const PromptSet& prompts, const SearchHooks& hooks) {
  cfg.check();
  eval.check();
  lib.check();
  if (lib.mode != eval.mode) throw std::invalid_argument("run_search: library and evaluation modes differ");
  const bool pde = std::holds_alternative<PdeGrid>(data);
  if (pde != (eval.mode == Mode::Pde)) throw std::invalid_argument("run_search: dataset does not match the mode");
  std::visit([](const auto& d) { d.check(); }, data);

  RunRecord run;
  run.config = cfg;
  run.eval = eval;
  run.dataset_fingerprint = fingerprint(data);
  run.backend_id = backend.id();
  run.task = describe_task(data);
  if (const auto* g = std::get_if<PdeGrid>(&data)) run.truth = g->truth;
  if (const auto* t = std::get_if<OdeTrajectory>(&data)) run.system_id = t->system_id;

  PriorityQueue queue(cfg.K);
  std::vector<Candidate> last_batch;
  std::set<std::string> ledger;
  int unchanged = 0;

  for (int iter = 0; iter <= cfg.P; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;
    rec.strategy = strategy_for(cfg.schedule, iter);

    const auto examples = select_examples(queue, last_batch, cfg.M);
    std::string prompt;
    PromptKind kind = PromptKind::Init;
    if (rec.strategy == Strategy::SelfImprove && !examples.empty()) {
      std::vector<std::pair<std::string, double>> pairs;
      for (const auto& c : examples) pairs.emplace_back(c.key(), c.score);
      prompt = render_self_improve_prompt(pairs, lib, run.task, cfg.M, prompts);
      kind = PromptKind::SelfImprove;
    } else if (rec.strategy == Strategy::Evolve && examples.size() >= 2) {
      std::vector<std::string> parents;
      for (const auto& c : examples) parents.push_back(c.key());
      prompt = render_evolve_prompt(parents, lib, run.task, cfg.M, prompts);
      kind = PromptKind::Evolve;
    } else {
      prompt = render_init_prompt(lib, run.task, cfg.M, prompts);
    }
    rec.prompt_kind = kind;
    rec.prompt_sha256.push_back(sha256_hex(prompt));

    std::vector<Expression> fresh;
    std::vector<Provenance> origin;
    auto consider = [&](const Expression& e, Provenance p) {
      const std::string key = print_canonical(e);
      if (!ledger.insert(key).second) {
        ++rec.duplicates;
        return false;
      }
      fresh.push_back(e);
      origin.push_back(p);
      rec.raw_candidates.push_back(key);
      return true;
    };

    std::exception_ptr failure;
    try {
      const ChatExchange ex = backend.complete(prompt);
      rec.response = ex.response;
      auto extracted = extract_equations(ex.response, lib, cfg.M);
      rec.rejected = std::move(extracted.rejected);
      for (const auto& e : extracted.equations) {
        if (consider(e, provenance_for(rec.strategy))) ++rec.llm_count;
      }
    } catch (const BackendError& e) {
      rec.error = e.what();
      if (!cfg.fallback_enabled) failure = std::current_exception();
    }

    if (!failure && cfg.fallback_enabled) {
      std::vector<Expression> parents;
      for (const auto& c : examples) parents.push_back(c.skeleton);
      for (int round = 0; round < 8 && static_cast<int>(fresh.size()) < cfg.M; ++round) {
        const int need = cfg.M - static_cast<int>(fresh.size());
        const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(iter), 1000 + round);
        const auto offspring = parents.size() >= 2 ? native_evolve(parents, lib, need, seed)
                                                   : native_random(lib, need, seed, std::min(4, eval.n_term_max));
        for (const auto& e : offspring) {
          if (static_cast<int>(fresh.size()) >= cfg.M) break;
          if (consider(e, Provenance::NativeGa)) ++rec.native_count;
        }
      }
    }

    if (!fresh.empty()) {
      std::vector<std::uint64_t> seeds(fresh.size());
      for (std::size_t i = 0; i < fresh.size(); ++i) seeds[i] = derive_seed(cfg.seed, static_cast<std::uint64_t>(iter), i);
      rec.candidates = evaluate_batch(fresh, data, eval, seeds);
      for (std::size_t i = 0; i < rec.candidates.size(); ++i) rec.candidates[i].provenance = origin[i];
      run.evaluated += fresh.size();
    }

    const std::string prev_key = queue.empty() ? std::string() : queue.best()->key();
    const double prev_score = queue.empty() ? 0.0 : queue.best()->score;
    queue.update(rec.candidates);
    last_batch = rec.candidates;
    rec.queue = queue.entries();
    if (const auto* b = queue.best()) {
      rec.best_score = b->score;
      rec.best_key = b->key();
    }
    if (iter > 0) unchanged = (rec.best_key == prev_key && rec.best_score == prev_score) ? unchanged + 1 : 0;

    run.iterations.push_back(std::move(rec));
    const auto& logged = run.iterations.back();
    if (hooks.on_iteration) hooks.on_iteration(run, logged);
    if (failure) {
      std::rethrow_exception(failure);
    }

    if (cfg.target_score && !queue.empty() && reached(logged.best_score, *cfg.target_score)) {
      run.stop_reason = "target";
      return run;
    }
    if (unchanged >= cfg.stagnation_window) {
      run.stop_reason = "stagnation";
      return run;
    }
  }
  run.stop_reason = "max-iterations";
  return run;
}

// ---------------------------------------------------------------- serialisation

namespace {

json candidate_json(const Candidate& c) {
  json j = {
      {"key", c.key()},
      {"proposed", c.proposed_key()},
      {"status", status_name(c.status)},
      {"provenance", provenance_name(c.provenance)},
  };
  if (c.scored()) {
    j["score"] = c.score;
    j["nrmse"] = c.nrmse;
    j["m"] = c.term_count;
    j["terms"] = c.terms;
    j["constants"] = c.constants;
  } else {
    j["reason"] = c.invalid_reason;
  }
  return j;
}

}  // namespace

std::string run_head_json(const RunRecord& r) {
  json cfg = {
      {"M", r.config.M},
      {"P", r.config.P},
      {"K", r.config.K},
      {"seed", r.config.seed},
      {"schedule", schedule_name(r.config.schedule)},
      {"fallback", r.config.fallback_enabled},
      {"stagnation_window", r.config.stagnation_window},
  };
  cfg["target_score"] = r.config.target_score ? json(*r.config.target_score) : json(nullptr);
  json eval = {
      {"zeta1", r.eval.zeta1},
      {"lambda", r.eval.lambda},
      {"n_term_max", r.eval.n_term_max},
      {"mode", r.eval.mode == Mode::Pde ? "pde" : "ode"},
      {"stridge_threshold", r.eval.stridge_threshold},
      {"fit_restarts", r.eval.fit_restarts},
  };
  json head = {{"type", "head"},         {"config", cfg},         {"eval", eval},
               {"dataset", r.dataset_fingerprint}, {"backend", r.backend_id}, {"task", r.task}};
  json truth = json::array();
  for (const auto& t : r.truth) truth.push_back({{"term", t.term}, {"coefficient", t.coefficient}});
  head["truth"] = truth;
  head["system_id"] = r.system_id ? json(*r.system_id) : json(nullptr);
  return head.dump();
}

std::string iteration_json(const IterationRecord& it) {
  json j = {
      {"type", "iteration"},
      {"iteration", it.iteration},
      {"strategy", strategy_name(it.strategy)},
      {"prompt_sha256", it.prompt_sha256},
      {"raw", it.raw_candidates},
      {"duplicates", it.duplicates},
      {"llm", it.llm_count},
      {"native", it.native_count},
      {"best_score", it.best_score},
      {"best", it.best_key},
  };
  if (it.prompt_kind) {
    j["prompt"] = it.prompt_kind == PromptKind::Init ? "init"
                  : it.prompt_kind == PromptKind::SelfImprove ? "self_improve"
                                                               : "evolve";
  }
  j["error"] = it.error ? json(*it.error) : json(nullptr);
  json rejected = json::array();
  for (const auto& r : it.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
  j["rejected"] = rejected;
  json cands = json::array();
  for (const auto& c : it.candidates) cands.push_back(candidate_json(c));
  j["candidates"] = cands;
  json queue = json::array();
  for (const auto& c : it.queue) queue.push_back(candidate_json(c));
  j["queue"] = queue;
  return j.dump();
}

std::string run_end_json(const RunRecord& r) {
  json j = {{"type", "end"},
            {"stop_reason", r.stop_reason},
            {"iterations", r.stopped_at()},
            {"evaluated", r.evaluated}};
  if (const auto* b = r.best()) j["best"] = candidate_json(*b);
  return j.dump();
}

std::string candidates_json(const std::vector<Candidate>& cs) {
  json arr = json::array();
  for (const auto& c : cs) arr.push_back(candidate_json(c));
  return arr.dump(2);
}

std::string serialize_run(const RunRecord& r) {
  std::string out = run_head_json(r) + '\n';
  for (const auto& it : r.iterations) out += iteration_json(it) + '\n';
  out += run_end_json(r) + '\n';
  return out;
}

}  // namespace eqdisc
