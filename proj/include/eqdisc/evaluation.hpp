#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqdisc/datasets.hpp"
#include "eqdisc/expr.hpp"

namespace eqdisc {

enum class Status { Scored, Invalid };
enum class Provenance { Init, SelfImprove, Evolution, NativeGa, User };

std::string_view status_name(Status s);
std::string_view provenance_name(Provenance p);
std::optional<Provenance> provenance_from_name(std::string_view name);

/// A scored equation. `skeleton` is the coefficient-bearing form: for PDEs
/// the surviving terms (one coefficient per term, in `terms` order), for
/// ODEs the canonical skeleton whose placeholders hold `constants`.
struct Candidate {
  Expression skeleton;
  Expression proposed;
  std::vector<double> constants;
  std::vector<std::string> terms;
  int term_count = 0;
  double nrmse = 0.0;
  double score = 0.0;
  Status status = Status::Invalid;
  Provenance provenance = Provenance::User;
  std::string invalid_reason;

  /// Dedup/ranking key: canonical string of the coefficient-bearing form.
  std::string key() const;
  /// Canonical string of the proposal as received.
  std::string proposed_key() const;
  bool scored() const { return status == Status::Scored; }
};

struct EvalConfig {
  double zeta1 = 0.01;
  double lambda = 1e-3;
  int n_term_max = 6;
  Mode mode = Mode::Pde;
  /// Relative STRidge threshold on unit-RMS columns.
  double stridge_threshold = 0.05;
  int stridge_max_iter = 10;
  int fit_restarts = 10;
  /// Fraction of non-finite interior values a PDE term may have before
  /// the candidate is rejected.
  double max_nonfinite_fraction = 0.01;

  void check() const;
};

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class ConstantTruth : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// (1 - zeta1*m) / (1 + nrmse).
double score(double nrmse, int m, double zeta1);

/// Population-std normalised RMS error.
double nrmse(std::span<const double> target, std::span<const double> prediction);

Candidate evaluate_pde(const Expression& skeleton, const PdeGrid& data, const EvalConfig& cfg);
Candidate evaluate_ode(const Expression& skeleton, const OdeTrajectory& data, const EvalConfig& cfg,
                       std::uint64_t seed = 0);
Candidate evaluate(const Expression& skeleton, const Dataset& data, const EvalConfig& cfg, std::uint64_t seed = 0);

/// Evaluates a batch concurrently; results come back in input order and do
/// not depend on scheduling.
std::vector<Candidate> evaluate_batch(const std::vector<Expression>& skeletons, const Dataset& data,
                                      const EvalConfig& cfg, std::span<const std::uint64_t> seeds);

/// Mean relative coefficient error in percent.
double coefficient_error(std::span<const double> truth, std::span<const double> found);

/// Coefficient error matched by term identity; nullopt when the surviving
/// term set differs from the truth term set.
std::optional<double> recovery_error(const std::vector<TruthTerm>& truth, const Candidate& c);
bool symbolically_correct(const std::vector<TruthTerm>& truth, const Candidate& c);

double r_squared(std::span<const double> truth, std::span<const double> prediction);

/// Integrates the candidate from the trajectory's initial condition and
/// scores the solution against the observed states. nullopt when the
/// integration is Invalid.
std::optional<double> trajectory_r2(const Candidate& c, const OdeTrajectory& observed);

/// Canonical row-trim margins applied before PDE regression.
inline constexpr std::size_t kSpaceMargin = 2;
inline constexpr std::size_t kTimeMargin = 1;

}  // namespace eqdisc
