#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "eqdisc/llm.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <future>
#include <json.hpp>
#include <regex>
#include <sstream>
#include <thread>

namespace eqdisc {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------- templates

constexpr std::string_view kInitTemplate = R"(Task
{task}

Symbol library
Operators: {operators}
Operands: {operands}

Instructions
Freely combine the symbols of the library to write {n} different candidate equations for the right-hand side. Favour compact equations whose terms each have a clear physical role, and vary their structure so the candidates cover different hypotheses.

Constraints
{constraints}

Output format
{output_format}
)";

constexpr std::string_view kSelfImproveTemplate = R"(Task
{task}

Symbol library
Operators: {operators}
Operands: {operands}

Previously evaluated equations, best first (score in [0, 1], higher is better):
{examples}

Instructions
Study the equations above and how their scores differ, then write {n} improved equations. Two kinds of edits are useful:
1. Recognize and eliminate redundant equation terms that do not raise the score.
2. Add novel terms that may capture dynamics the current equations miss.
Do not repeat an equation that is already listed.

Constraints
{constraints}

Output format
{output_format}
)";

constexpr std::string_view kEvolveTemplate = R"(Task
{task}

Symbol library
Operators: {operators}
Operands: {operands}

Current population:
{parents}

Instructions
Create {n} new equations from the population by repeating these steps:
1. Selection: randomly select two equations from the population as parents.
2. Crossover: exchange terms or sub-expressions between the two parents to form a child equation.
3. Mutation: randomly change an operator or an operand of the child.
Each new equation must differ from every equation in the population.

Constraints
{constraints}

Output format
{output_format}
)";

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string operator_list(const SymbolLibrary& lib) {
  static const std::pair<Op, std::string_view> kSymbols[] = {
      {Op::Add, "+"},     {Op::Sub, "-"},     {Op::Mul, "*"},     {Op::Div, "/"},    {Op::Pow, "^"},
      {Op::Sin, "sin()"}, {Op::Cos, "cos()"}, {Op::Log, "log()"}, {Op::Exp, "exp()"},
  };
  std::string out;
  for (const auto& [op, sym] : kSymbols) {
    if (!lib.has_operator(op)) continue;
    if (!out.empty()) out += ", ";
    out += sym;
  }
  return out;
}

std::string operand_list(const SymbolLibrary& lib) {
  std::string out;
  for (const auto& name : lib.operands) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  if (lib.allows_const) out += out.empty() ? "const" : ", const";
  return out;
}

std::string constraints_text(const SymbolLibrary& lib, int max_terms) {
  std::ostringstream os;
  if (lib.mode == Mode::Pde) {
    os << "- Each equation is a sum of at most " << max_terms
       << " terms; the coefficient of every term is fitted afterwards by sparse regression.\n";
  } else {
    os << "- Keep each equation short: at most " << max_terms << " additive terms.\n";
  }
  if (lib.allows_const) {
    os << "- Write every unknown numeric constant as `const`; each occurrence is fitted independently.\n";
  } else {
    os << "- Do not write numbers or constants of any kind. Write terms only, e.g. u*u_x rather than 0.5*u*u_x.\n";
  }
  if (lib.has_operator(Op::Pow)) {
    if (lib.pow_literal_only) {
      os << "- Powers use an integer exponent between 2 and " << lib.max_pow << ", e.g. u^2.\n";
    } else {
      os << "- Exponents of ^ may be any sub-expression; integer exponents should not exceed " << lib.max_pow
         << ".\n";
    }
  }
  const bool has_functions = lib.has_operator(Op::Sin) || lib.has_operator(Op::Cos) ||
                             lib.has_operator(Op::Log) || lib.has_operator(Op::Exp);
  if (has_functions) {
    os << "- Nest functions at most " << lib.max_nesting_depth << " deep, e.g. sin(cos(x)) is the limit.\n";
  }
  os << "- Use only the operators and operands listed above.";
  return os.str();
}

std::string output_format_text(int n) {
  if (n == 1) {
    return "Return exactly one expression, the right-hand side only, inside a single fenced code block (```). "
           "Do not add numbering or explanations inside the block.";
  }
  return "Return exactly " + std::to_string(n) +
         " expressions, one per line, right-hand sides only, inside a single fenced code block (```). "
         "Do not add numbering or explanations inside the block.";
}

std::map<std::string, std::string> common_values(const SymbolLibrary& lib, std::string_view task, int n,
                                                 const PromptSet& prompts) {
  return {
      {"task", std::string(task)},
      {"operators", operator_list(lib)},
      {"operands", operand_list(lib)},
      {"constraints", constraints_text(lib, prompts.max_terms)},
      {"output_format", output_format_text(n)},
      {"n", std::to_string(n)},
  };
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- extraction helpers

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

const std::regex& list_marker() {
  static const std::regex re(R"(^\s*(?:\d+\s*[.):]|[-*+•])\s+)");
  return re;
}

// Removes decoration a model tends to wrap around an equation.
std::string clean_candidate(std::string_view line) {
  std::string s(trim(line));
  std::smatch m;
  if (std::regex_search(s, m, list_marker())) s = s.substr(static_cast<std::size_t>(m.length(0)));
  s.erase(std::remove(s.begin(), s.end(), '`'), s.end());
  if (const auto eq = s.rfind('='); eq != std::string::npos) s = s.substr(eq + 1);
  std::string_view v = trim(s);
  while (!v.empty() && (v.back() == '.' || v.back() == ',' || v.back() == ';')) v.remove_suffix(1);
  if (v.size() >= 2 && v.front() == '$' && v.back() == '$') v = v.substr(1, v.size() - 2);
  return std::string(trim(v));
}

// Longest suffix, starting at a word boundary, that parses.
std::optional<Expression> parse_suffix(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0 && s[i - 1] != ' ') continue;
    if (s[i] == ' ') continue;
    try {
      return parse_unchecked(std::string_view(s).substr(i));
    } catch (const SyntaxError&) {
    }
  }
  return std::nullopt;
}

std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

// ---------------------------------------------------------------- prompts

const PromptSet& PromptSet::defaults() {
  static const PromptSet p{std::string(kInitTemplate), std::string(kSelfImproveTemplate),
                           std::string(kEvolveTemplate), 6};
  return p;
}

PromptSet PromptSet::load(const std::string& dir) {
  PromptSet p = defaults();
  const std::pair<const char*, std::string*> files[] = {
      {"init.txt", &p.init}, {"self_improve.txt", &p.self_improve}, {"evolve.txt", &p.evolve}};
  for (const auto& [name, slot] : files) {
    const std::string path = dir + "/" + name;
    if (std::ifstream(path)) *slot = read_text(path);
  }
  return p;
}

const std::string& PromptSet::text(PromptKind kind) const {
  switch (kind) {
    case PromptKind::Init: return init;
    case PromptKind::SelfImprove: return self_improve;
    case PromptKind::Evolve: return evolve;
  }
  return init;
}

std::string describe_task(const Dataset& data) {
  if (const auto* g = std::get_if<PdeGrid>(&data)) {
    std::ostringstream os;
    os << "Discover the partial differential equation " << g->target
       << " = F(...) that governs the field u(x, t). The field is sampled on a uniform grid of " << g->n_x()
       << " points in x and " << g->n_t() << " points in t. Write F as a combination of the operands below.";
    return os.str();
  }
  return "Discover the right-hand side f of the ordinary differential equation dx/dt = f(x) that produced the "
         "observed trajectory x(t). Write f in terms of x and constants.";
}

std::string render_init_prompt(const SymbolLibrary& lib, std::string_view task, int n, const PromptSet& prompts) {
  if (n < 1) throw std::invalid_argument("render_init_prompt: n must be at least 1");
  return substitute(prompts.init, common_values(lib, task, n, prompts));
}

std::string render_self_improve_prompt(const std::vector<std::pair<std::string, double>>& examples,
                                       const SymbolLibrary& lib, std::string_view task, int n,
                                       const PromptSet& prompts) {
  if (examples.empty()) throw std::invalid_argument("render_self_improve_prompt: no examples");
  if (n < 1) throw std::invalid_argument("render_self_improve_prompt: n must be at least 1");
  for (std::size_t i = 1; i < examples.size(); ++i) {
    if (examples[i].second > examples[i - 1].second) {
      throw std::invalid_argument("render_self_improve_prompt: examples must be sorted by descending score");
    }
  }
  std::string block;
  char buf[32];
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.4f", examples[i].second);
    block += std::to_string(i + 1) + ". " + examples[i].first + "    score: " + buf;
    if (i + 1 < examples.size()) block += '\n';
  }
  auto values = common_values(lib, task, n, prompts);
  values["examples"] = block;
  return substitute(prompts.self_improve, values);
}

std::string render_evolve_prompt(const std::vector<std::string>& parents, const SymbolLibrary& lib,
                                 std::string_view task, int n, const PromptSet& prompts) {
  if (parents.size() < 2) throw TooFewParents("evolution needs at least two parents");
  if (n < 1) throw std::invalid_argument("render_evolve_prompt: n must be at least 1");
  std::string block;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    block += std::to_string(i + 1) + ". " + parents[i];
    if (i + 1 < parents.size()) block += '\n';
  }
  auto values = common_values(lib, task, n, prompts);
  values["parents"] = block;
  return substitute(prompts.evolve, values);
}

// ---------------------------------------------------------------- backends

void BackendConfig::check() const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw std::invalid_argument("temperature must lie in [0, 2]");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
  if (max_concurrent_requests < 1) throw std::invalid_argument("max_concurrent_requests must be positive");
  if (endpoint_url.empty()) throw std::invalid_argument("endpoint_url is empty");
}

std::string format_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LiveBackend::LiveBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.check();
  std::tie(host_, base_path_) = split_endpoint(cfg_.endpoint_url);
}

std::string LiveBackend::request_body(const std::string& prompt) const {
  json body = {
      {"model", cfg_.model_name},
      {"temperature", cfg_.temperature},
      {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
  };
  return body.dump();
}

ChatExchange LiveBackend::complete(const std::string& prompt) {
  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(prompt);
  const std::string path = base_path_ + "/chat/completions";

  const auto start = std::chrono::steady_clock::now();
  auto backoff = cfg_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    int status = 0;
    std::string detail;
    if (!res) {
      detail = "request failed: " + httplib::to_string(res.error());
    } else {
      status = res->status;
      if (status == 200) {
        try {
          const auto reply = json::parse(res->body);
          ChatExchange ex;
          ex.prompt = prompt;
          ex.response = reply.at("choices").at(0).at("message").at("content").get<std::string>();
          ex.latency = std::chrono::steady_clock::now() - start;
          ex.backend_id = id();
          ex.timestamp = std::chrono::system_clock::now();
          return ex;
        } catch (const json::exception& e) {
          throw TransportError(std::string("malformed completion response: ") + e.what(), status);
        }
      }
      detail = "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 300);
      const bool transient = status == 429 || status >= 500;
      if (!transient) throw TransportError(detail, status);
    }
    if (attempt >= cfg_.max_retries) {
      throw TransportError(detail + " (after " + std::to_string(attempt + 1) + " attempts)", status);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::string replay_record_json(const ReplayRecord& r) {
  json j = {{"prompt_sha256", r.prompt_sha256},
            {"response", r.response},
            {"model", r.model},
            {"temperature", r.temperature},
            {"timestamp", r.timestamp}};
  return j.dump();
}

std::vector<ReplayRecord> load_replay_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot open replay file '" + path + "'");
  std::vector<ReplayRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      ReplayRecord r;
      r.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
      r.response = j.at("response").get<std::string>();
      r.model = j.value("model", "");
      r.temperature = j.value("temperature", 0.0);
      r.timestamp = j.value("timestamp", "");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw BackendError(path + ":" + std::to_string(lineno) + ": bad replay record: " + e.what());
    }
  }
  return out;
}

ReplayBackend::ReplayBackend(std::vector<ReplayRecord> records) {
  for (auto& r : records) responses_[r.prompt_sha256].push_back(std::move(r.response));
}

std::unique_ptr<ReplayBackend> ReplayBackend::from_file(const std::string& path) {
  return std::make_unique<ReplayBackend>(load_replay_records(path));
}

ChatExchange ReplayBackend::complete(const std::string& prompt) {
  const std::string hash = sha256_hex(prompt);
  ChatExchange ex;
  {
    std::lock_guard lock(mu_);
    const auto it = responses_.find(hash);
    if (it == responses_.end()) throw ReplayMiss("no recorded response for prompt " + hash);
    auto& pos = cursor_[hash];
    ex.response = it->second[std::min(pos, it->second.size() - 1)];
    ++pos;
  }
  ex.prompt = prompt;
  ex.backend_id = id();
  ex.timestamp = std::chrono::system_clock::now();
  return ex;
}

MockBackend::MockBackend(std::vector<std::string> responses, bool cycle)
    : responses_(std::move(responses)), cycle_(cycle) {}

std::vector<std::string> MockBackend::parse_script(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  bool any = false;
  for (auto line : lines_of(text)) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == "---") {
      out.push_back(current);
      current.clear();
      any = false;
      continue;
    }
    if (any) current += '\n';
    current += line;
    any = true;
  }
  while (!current.empty() && current.back() == '\n') current.pop_back();
  if (!trim(current).empty()) out.push_back(current);
  return out;
}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::string& path, bool cycle) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error& e) {
    throw BackendError(e.what());
  }
  return std::make_unique<MockBackend>(parse_script(text), cycle);
}

ChatExchange MockBackend::complete(const std::string& prompt) {
  ChatExchange ex;
  {
    std::lock_guard lock(mu_);
    if (next_ >= responses_.size()) {
      if (!cycle_ || responses_.empty()) throw ScriptExhausted("mock script has no more responses");
      next_ = 0;
    }
    ex.response = responses_[next_++];
  }
  ex.prompt = prompt;
  ex.backend_id = id();
  ex.timestamp = std::chrono::system_clock::now();
  return ex;
}

ChatExchange NullBackend::complete(const std::string&) { throw TransportError("no language model configured"); }

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::string path, std::string model,
                                   double temperature)
    : inner_(std::move(inner)), path_(std::move(path)), model_(std::move(model)), temperature_(temperature) {}

ChatExchange RecordingBackend::complete(const std::string& prompt) {
  ChatExchange ex = inner_->complete(prompt);
  ReplayRecord r{sha256_hex(prompt), ex.response, model_, temperature_, format_timestamp(ex.timestamp)};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw BackendError("cannot append to '" + path_ + "'");
  out << replay_record_json(r) << '\n';
  return ex;
}

std::vector<ChatExchange> complete_all(Backend& backend, const std::vector<std::string>& prompts,
                                       int max_concurrent) {
  const std::size_t width = static_cast<std::size_t>(std::max(1, max_concurrent));
  std::vector<std::future<ChatExchange>> pending(prompts.size());
  for (std::size_t begin = 0; begin < prompts.size(); begin += width) {
    const std::size_t end = std::min(prompts.size(), begin + width);
    for (std::size_t i = begin; i < end; ++i) {
      pending[i] = std::async(std::launch::async, [&backend, &p = prompts[i]] { return backend.complete(p); });
    }
    for (std::size_t i = begin; i < end; ++i) pending[i].wait();
  }
  std::vector<ChatExchange> out;
  out.reserve(prompts.size());
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

// ---------------------------------------------------------------- extraction

ExtractionResult extract_equations(std::string_view response, const SymbolLibrary& lib, int max_n) {
  ExtractionResult result;
  const auto lines = lines_of(response);

  std::vector<std::string_view> fenced;
  std::vector<std::string_view> listed;
  std::vector<std::string_view> other;
  bool in_fence = false;
  bool saw_fence = false;
  for (auto line : lines) {
    const auto t = trim(line);
    if (t.starts_with("```")) {
      in_fence = !in_fence;
      saw_fence = true;
      continue;
    }
    if (t.empty()) continue;
    if (in_fence) {
      fenced.push_back(t);
    } else if (std::regex_search(t.begin(), t.end(), list_marker())) {
      listed.push_back(t);
    } else {
      other.push_back(t);
    }
  }

  const bool prose = !saw_fence && listed.empty();
  const auto& candidates = saw_fence ? fenced : (!listed.empty() ? listed : other);

  for (auto raw : candidates) {
    if (static_cast<int>(result.equations.size()) >= max_n) break;
    const std::string cleaned = clean_candidate(raw);
    if (cleaned.empty()) continue;
    std::optional<Expression> parsed;
    std::string syntax_error;
    try {
      parsed = parse_unchecked(cleaned);
    } catch (const SyntaxError& e) {
      syntax_error = e.what();
      if (prose) parsed = parse_suffix(cleaned);
    }
    if (!parsed) {
      result.rejected.push_back({std::string(raw), "SyntaxError: " + syntax_error});
      continue;
    }
    Expression e;
    try {
      e = normalize_for_mode(*parsed, lib.mode);
    } catch (const ExprError& err) {
      result.rejected.push_back({std::string(raw), err.what()});
      continue;
    }
    const auto violations = validate(e, lib);
    if (!violations.empty()) {
      const auto& v = violations.front();
      result.rejected.push_back({std::string(raw), std::string(violation_name(v.kind)) + ": " + v.detail});
      continue;
    }
    result.equations.push_back(renumber_constants(e));
  }
  return result;
}

}  // namespace eqdisc
