#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "eqdisc/expr.hpp"

namespace eqdisc {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FormatError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class UnstableIntegration : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

/// Uniform axis: value(i) = start + i * step.
struct UniformAxis {
  double start = 0.0;
  double step = 1.0;
  std::size_t count = 0;

  double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
  std::vector<double> values() const;
};

/// Known coefficient of one equation term, keyed by canonical term string.
struct TruthTerm {
  std::string term;
  double coefficient = 0.0;
};

/// Fields sampled on a uniform (t, x) grid, stored t-major.
struct PdeGrid {
  std::string system;
  std::vector<std::string> field_names;
  std::map<std::string, std::vector<double>> fields;
  /// Derivative features (u_x .. u_xxxx, u_t per field) plus coordinate
  /// columns x and t broadcast over the grid.
  std::map<std::string, std::vector<double>> features;
  UniformAxis x;
  UniformAxis t;
  std::string target = "u_t";
  std::vector<TruthTerm> truth;

  std::size_t n_t() const { return t.count; }
  std::size_t n_x() const { return x.count; }
  std::size_t size() const { return t.count * x.count; }

  /// Field, feature, or coordinate column.
  std::span<const double> column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::vector<std::string> operand_names() const;

  /// Recomputes derivative features from the stored fields.
  void compute_features();
  void check() const;

  std::optional<Expression> truth_skeleton() const;
};

struct OdeTrajectory {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> xdot;
  double initial_condition = 0.0;
  /// ODEBench system id when generated from the benchmark table.
  std::optional<int> system_id;
  std::string which_ic;

  void check() const;
};

using Dataset = std::variant<PdeGrid, OdeTrajectory>;

// ---------------------------------------------------------------- PDE systems

enum class PdeSystem { Burgers, ChafeeInfante, PdeDivide, FisherKpp, KuramotoSivashinsky };

std::string_view pde_system_name(PdeSystem s);
std::optional<PdeSystem> pde_system_from_name(std::string_view name);
std::vector<PdeSystem> all_pde_systems();

struct PdeOverrides {
  /// Fine-grid refinement used while integrating; output is subsampled.
  int refine = 4;
  std::optional<std::size_t> n_t;
};

PdeGrid generate_pde(PdeSystem system, const PdeOverrides& overrides = {});

// ---------------------------------------------------------------- ODEBench

struct OdeBenchSystem {
  int id;
  std::string_view description;
  /// Right-hand side in the state variable x with the listed parameters
  /// substituted.
  std::string_view equation;
  std::vector<double> parameters;
  double ic_train;
  double ic_test;
  /// Skeleton reported as rediscovered for this system.
  std::string_view discovered;
};

const std::vector<OdeBenchSystem>& odebench();
const OdeBenchSystem& odebench_system(int id);
Expression odebench_rhs(int id);

enum class WhichIc { Train, Test };

OdeTrajectory generate_odebench(int id, WhichIc which, double t_end = 10.0, std::size_t n_points = 512);

// ---------------------------------------------------------------- files

void save_grid(const PdeGrid& grid, const std::string& path);
PdeGrid load_grid(const std::string& path);
std::string serialize_grid(const PdeGrid& grid, bool include_features = false);
PdeGrid parse_grid(std::string_view text);

void save_trajectory(const OdeTrajectory& traj, const std::string& path);
OdeTrajectory load_trajectory(const std::string& path);
std::string serialize_trajectory(const OdeTrajectory& traj);
OdeTrajectory parse_trajectory(std::string_view text);

/// Loads either format, sniffing the header line.
Dataset load_dataset(const std::string& path);

/// SHA-256 of the canonical serialisation.
std::string fingerprint(const PdeGrid& grid);
std::string fingerprint(const OdeTrajectory& traj);
std::string fingerprint(const Dataset& data);

std::string sha256_hex(std::string_view bytes);

}  // namespace eqdisc
