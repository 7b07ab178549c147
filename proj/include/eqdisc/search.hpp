#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eqdisc/datasets.hpp"
#include "eqdisc/evaluation.hpp"
#include "eqdisc/expr.hpp"
#include "eqdisc/llm.hpp"

namespace eqdisc {

enum class Strategy { Init, SelfImprove, Evolve };
enum class Schedule { Alternate, SelfImproveOnly, EvolveOnly };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(std::string_view name);
std::string_view schedule_name(Schedule s);
std::optional<Schedule> schedule_from_name(std::string_view name);

struct SearchConfig {
  int M = 10;
  int P = 100;
  int K = 5;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Alternate;
  std::optional<double> target_score;
  bool fallback_enabled = true;
  int stagnation_window = 25;

  void check() const;
};

/// Strategy used at `iteration` (0 is always Init).
Strategy strategy_for(Schedule schedule, int iteration);

/// Ranking used by the queue and example selection: higher score first,
/// then shorter key, then lexicographic key.
bool ranks_before(const Candidate& a, const Candidate& b);

/// Elite archive of at most K scored candidates with unique keys.
class PriorityQueue {
 public:
  explicit PriorityQueue(int capacity = 5);

  /// Folds in a batch: invalid candidates are ignored, duplicates keep the
  /// better-ranked instance, overflow evicts the lowest-ranked entries.
  void update(const std::vector<Candidate>& batch);

  const std::vector<Candidate>& entries() const { return entries_; }
  int capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Candidate* best() const { return entries_.empty() ? nullptr : &entries_.front(); }

 private:
  int capacity_;
  std::vector<Candidate> entries_;
};

PriorityQueue update_queue(PriorityQueue q, const std::vector<Candidate>& batch);

/// Queue members followed by the best distinct-keyed candidates of the last
/// batch, up to M in total.
std::vector<Candidate> select_examples(const PriorityQueue& q, const std::vector<Candidate>& last_batch, int M);

// ---------------------------------------------------------------- native operators

namespace gp {

/// Replaces signed term `i` of `a` with signed term `j` of `b`.
Expression term_swap(const Expression& a, std::size_t i, const Expression& b, std::size_t j);

/// Pre-order subtree count and access.
std::size_t subtree_count(const Expression& e);
Expression subtree_at(const Expression& e, std::size_t index);
Expression replace_subtree(const Expression& e, std::size_t index, const Expression& replacement);

/// Swaps one operator for a same-arity library operator, or one operand for
/// another library operand. Returns nullopt when nothing can change.
std::optional<Expression> mutate(const Expression& e, const SymbolLibrary& lib, std::mt19937_64& rng);

Expression crossover(const Expression& a, const Expression& b, std::mt19937_64& rng);

}  // namespace gp

/// GA offspring from at least two parents. Offspring failing validation are
/// regenerated up to 20 times and then skipped, so fewer than n may return.
std::vector<Expression> native_evolve(const std::vector<Expression>& parents, const SymbolLibrary& lib, int n,
                                      std::uint64_t seed);

/// Random valid expressions built from the library.
std::vector<Expression> native_random(const SymbolLibrary& lib, int n, std::uint64_t seed, int max_terms = 4);

// ---------------------------------------------------------------- runs

struct IterationRecord {
  int iteration = 0;
  Strategy strategy = Strategy::Init;
  /// Template actually rendered; Init when the queue could not supply examples.
  std::optional<PromptKind> prompt_kind;
  std::vector<std::string> prompt_sha256;
  std::string response;
  std::optional<std::string> error;
  std::vector<Rejection> rejected;
  /// Canonical strings of the fresh proposals, in evaluation order.
  std::vector<std::string> raw_candidates;
  std::size_t duplicates = 0;
  std::size_t llm_count = 0;
  std::size_t native_count = 0;
  std::vector<Candidate> candidates;
  std::vector<Candidate> queue;
  double best_score = 0.0;
  std::string best_key;
};

struct RunRecord {
  SearchConfig config;
  EvalConfig eval;
  std::string dataset_fingerprint;
  std::string backend_id;
  std::string task;
  /// Known PDE terms, or the ODEBench id of a generated trajectory.
  std::vector<TruthTerm> truth;
  std::optional<int> system_id;
  std::vector<IterationRecord> iterations;
  std::string stop_reason;
  std::size_t evaluated = 0;

  /// Number of iterations executed, init included.
  int stopped_at() const { return static_cast<int>(iterations.size()); }
  const Candidate* best() const;
  std::vector<double> best_trace() const;
};

struct SearchHooks {
  /// Called after every iteration is complete, before any error propagates.
  std::function<void(const RunRecord&, const IterationRecord&)> on_iteration;
};

/// Runs the propose / evaluate / select loop. Backend failures are fatal
/// unless the native fallback is enabled.
RunRecord run_search(const Dataset& data, const SymbolLibrary& lib, const SearchConfig& cfg, Backend& backend,
                     const EvalConfig& eval, const PromptSet& prompts = PromptSet::defaults(),
                     const SearchHooks& hooks = {});

/// Line-delimited JSON: head object, one object per iteration, end object.
std::string run_head_json(const RunRecord& r);
std::string iteration_json(const IterationRecord& it);
std::string run_end_json(const RunRecord& r);
std::string serialize_run(const RunRecord& r);
/// JSON array of candidates in the log's candidate layout.
std::string candidates_json(const std::vector<Candidate>& cs);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace eqdisc
