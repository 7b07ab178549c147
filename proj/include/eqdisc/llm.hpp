#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqdisc/datasets.hpp"
#include "eqdisc/expr.hpp"

namespace eqdisc {

class TooFewParents : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------- prompts

enum class PromptKind { Init, SelfImprove, Evolve };

/// Prompt templates. `{name}` markers are substituted at render time:
/// {task}, {operators}, {operands}, {constraints}, {output_format}, {n},
/// plus {examples} (self-improve) and {parents} (evolve).
struct PromptSet {
  std::string init;
  std::string self_improve;
  std::string evolve;
  /// Term limit quoted in the constraints section.
  int max_terms = 6;

  static const PromptSet& defaults();
  /// Defaults overridden by init.txt / self_improve.txt / evolve.txt found in `dir`.
  static PromptSet load(const std::string& dir);
  const std::string& text(PromptKind kind) const;
};

/// One-paragraph task statement for a dataset.
std::string describe_task(const Dataset& data);

std::string render_init_prompt(const SymbolLibrary& lib, std::string_view task, int n,
                               const PromptSet& prompts = PromptSet::defaults());

/// `examples` must be non-empty and sorted by descending score.
std::string render_self_improve_prompt(const std::vector<std::pair<std::string, double>>& examples,
                                       const SymbolLibrary& lib, std::string_view task, int n = 10,
                                       const PromptSet& prompts = PromptSet::defaults());

/// Throws TooFewParents for fewer than two parents.
std::string render_evolve_prompt(const std::vector<std::string>& parents, const SymbolLibrary& lib,
                                 std::string_view task, int n = 10,
                                 const PromptSet& prompts = PromptSet::defaults());

// ---------------------------------------------------------------- transport

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public BackendError {
 public:
  TransportError(const std::string& what, int status = 0) : BackendError(what), status_(status) {}
  /// Upstream HTTP status, 0 when no response was received.
  int status() const { return status_; }

 private:
  int status_;
};

class ReplayMiss : public BackendError {
 public:
  using BackendError::BackendError;
};

class ScriptExhausted : public BackendError {
 public:
  using BackendError::BackendError;
};

struct BackendConfig {
  std::string endpoint_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.9;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds initial_backoff{500};
  std::string api_key_env = "OPENAI_API_KEY";
  int max_concurrent_requests = 4;

  void check() const;
};

struct ChatExchange {
  std::string prompt;
  std::string response;
  std::chrono::duration<double> latency{0};
  std::string backend_id;
  std::chrono::system_clock::time_point timestamp;
};

/// Backends are shared across concurrent callers and must be thread-safe.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatExchange complete(const std::string& prompt) = 0;
  virtual std::string id() const = 0;
};

/// OpenAI-style chat completions over HTTP(S).
class LiveBackend : public Backend {
 public:
  explicit LiveBackend(BackendConfig cfg);
  ChatExchange complete(const std::string& prompt) override;
  std::string id() const override { return "live:" + cfg_.model_name; }

  /// Request body sent for `prompt`.
  std::string request_body(const std::string& prompt) const;

 private:
  BackendConfig cfg_;
  std::string host_;
  std::string base_path_;
};

struct ReplayRecord {
  std::string prompt_sha256;
  std::string response;
  std::string model;
  double temperature = 0.0;
  std::string timestamp;
};

std::vector<ReplayRecord> load_replay_records(const std::string& path);
std::string replay_record_json(const ReplayRecord& r);

/// Answers prompts from a recorded transcript, keyed by prompt hash. Repeated
/// prompts consume their records in order; the last one repeats.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::vector<ReplayRecord> records);
  static std::unique_ptr<ReplayBackend> from_file(const std::string& path);
  ChatExchange complete(const std::string& prompt) override;
  std::string id() const override { return "replay"; }

 private:
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>> responses_;
  std::map<std::string, std::size_t> cursor_;
};

/// Returns scripted responses in order. With `cycle` the script restarts
/// instead of running out.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::vector<std::string> responses, bool cycle = false);
  /// Script file: responses separated by lines containing only `---`.
  static std::unique_ptr<MockBackend> from_file(const std::string& path, bool cycle = false);
  static std::vector<std::string> parse_script(std::string_view text);
  ChatExchange complete(const std::string& prompt) override;
  std::string id() const override { return "mock"; }

 private:
  std::mutex mu_;
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
  bool cycle_;
};

/// Always fails; stands in for an unreachable service.
class NullBackend : public Backend {
 public:
  ChatExchange complete(const std::string& prompt) override;
  std::string id() const override { return "null"; }
};

/// Forwards to `inner` and appends every exchange to a replay file.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::string path, std::string model, double temperature);
  ChatExchange complete(const std::string& prompt) override;
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<Backend> inner_;
  std::string path_;
  std::string model_;
  double temperature_;
  std::mutex mu_;
};

/// Issues up to `max_concurrent` requests at a time; results keep request
/// order. The first failure (in request order) is rethrown.
std::vector<ChatExchange> complete_all(Backend& backend, const std::vector<std::string>& prompts,
                                       int max_concurrent);

// ---------------------------------------------------------------- extraction

struct Rejection {
  std::string line;
  std::string reason;
};

struct ExtractionResult {
  std::vector<Expression> equations;
  std::vector<Rejection> rejected;
};

/// Pulls candidate equations out of free-form model output: fenced blocks
/// first, then numbered or bulleted lines, then any remaining line. Each
/// candidate goes through the mode's literal policy and library validation.
ExtractionResult extract_equations(std::string_view response, const SymbolLibrary& lib, int max_n);

std::string format_timestamp(std::chrono::system_clock::time_point tp);

}  // namespace eqdisc
