#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "eqdisc/evaluation.hpp"
#include "eqdisc/llm.hpp"
#include "eqdisc/search.hpp"

namespace eqdisc::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kBadArgs = 2, kDataError = 3, kTransportError = 4 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Settings a run config file can set. Keys follow the hyperparameter names
/// M, P, K, N_term, zeta1, lambda, T.
struct Settings {
  SearchConfig search;
  EvalConfig eval;
  BackendConfig backend;
  std::string templates_dir;
};

/// Applies a JSON config document on top of `s`. Unknown keys are errors.
void apply_config(std::string_view json_text, Settings& s);

/// Backend spec: live, replay:<path>, mock:<path>, native-only.
std::shared_ptr<Backend> make_backend(std::string_view spec, const BackendConfig& cfg);

/// Loads a dataset file, or generates one from pde:<system> / ode:<id>[:train|test].
Dataset resolve_dataset(const std::string& spec);

/// Plain-text report built from a run log.
std::string render_report(std::string_view run_jsonl);
/// iteration,strategy,best_score,best rows.
std::string render_trace_csv(std::string_view run_jsonl);

/// Entry point; `argv[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eqdisc::cli
