#pragma once

#include "mfslq/common.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>

namespace mfslq {

struct Dimensions {
  int n = 1;  ///< state dimension
  int m = 1;  ///< control dimension

  void validate() const;
};

/// Uniform grid t_i = i*dt on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double time(int i) const { return i == steps_ ? horizon_ : i * dt_; }
  bool uniform() const { return true; }

 private:
  double horizon_;
  int steps_;
  double dt_;
};

/// Deterministic function on the grid cells [t_i, t_{i+1}), stacked as n*N values.
struct GridVector {
  int dim = 0;
  int steps = 0;
  double dt = 0.0;
  Vector values;

  static GridVector zeros(int dim, int steps, double dt);
  static GridVector constant(const Vector& value, int steps, double dt);

  auto cell(int i) { return values.segment(static_cast<Eigen::Index>(i) * dim, dim); }
  auto cell(int i) const { return values.segment(static_cast<Eigen::Index>(i) * dim, dim); }

  /// dt-weighted inner product.
  double inner(const GridVector& other) const;
  double norm() const { return std::sqrt(inner(*this)); }
  void check_compatible(const GridVector& other, const char* what) const;
};

/// What a coefficient rule may look at: the node's time and the path up to it.
struct PathView {
  int level = 0;
  std::size_t index = 0;
  double t = 0.0;
  double w = 0.0;
  std::span<const double> increments;  ///< ΔW of the steps leading to this node
};

class CoefficientRule {
 public:
  using PathFunction = std::function<Matrix(const PathView&)>;
  using TimeFunction = std::function<Matrix(double)>;

  CoefficientRule() = default;

  static CoefficientRule constant(Matrix value);
  static CoefficientRule of_time(TimeFunction f);
  static CoefficientRule of_path(PathFunction f);

  bool empty() const { return !path_ && !time_; }
  bool deterministic() const { return static_cast<bool>(time_); }
  Matrix operator()(const PathView& view) const;
  Matrix at_time(double t) const;

 private:
  PathFunction path_;
  TimeFunction time_;
};

struct CoefficientRules {
  CoefficientRule A, A1, B, C, C1, D, Q, Q1, R, G;
};

struct ProblemSpec {
  std::string name;
  Dimensions dims;
  TimeGrid grid{1.0, 1};
  CoefficientRules coefficients;
  Vector xi;
  double delta = 1.0;

  /// True when every coefficient depends on time only.
  bool deterministic() const;
  void validate() const;
};

/// Non-recombining binary tree with ΔW = ±sqrt(dt); node (i, j) has children
/// (i+1, 2j) for +sqrt(dt) and (i+1, 2j+1) for -sqrt(dt).
class ScenarioTree {
 public:
  static constexpr int kDefaultMaxSteps = 16;

  explicit ScenarioTree(TimeGrid grid, int max_steps = kDefaultMaxSteps);

  const TimeGrid& grid() const { return grid_; }
  int steps() const { return grid_.steps(); }
  double dt() const { return grid_.dt(); }
  double sqrt_dt() const { return h_; }

  std::size_t width(int level) const { return std::size_t{1} << level; }
  std::size_t node_count() const { return (std::size_t{1} << (steps() + 1)) - 1; }
  /// Position of (level, index) in a level-major enumeration of all nodes.
  std::size_t flat_index(int level, std::size_t index) const { return width(level) - 1 + index; }
  double probability(int level) const { return std::ldexp(1.0, -level); }
  double brownian(int level, std::size_t index) const { return w_[level][index]; }
  /// Increment of the step that leads into (level, index), level >= 1.
  double increment_into(std::size_t index) const { return (index & 1U) ? -h_ : h_; }
  /// Increment towards child b (0 for up, 1 for down).
  double child_increment(int b) const { return b == 0 ? h_ : -h_; }
  std::vector<double> path_increments(int level, std::size_t index) const;

  template <typename T>
  NodeMap<T> make_map(int first_level, int last_level, const T& init) const {
    NodeMap<T> map(static_cast<std::size_t>(last_level + 1));
    for (int i = first_level; i <= last_level; ++i) map[i].assign(width(i), init);
    return map;
  }

 private:
  TimeGrid grid_;
  double h_;
  std::vector<std::vector<double>> w_;
};

std::shared_ptr<const ScenarioTree> build_tree(const TimeGrid& grid,
                                               int max_steps = ScenarioTree::kDefaultMaxSteps);

/// Coefficients evaluated on every node of a tree. Running coefficients live on
/// levels 0..N-1, G on the leaves.
struct CoefficientField {
  std::shared_ptr<const ScenarioTree> tree;
  Dimensions dims;
  double delta = 1.0;
  NodeMap<Matrix> A, A1, B, C, C1, D, Q, Q1, R;
  std::vector<Matrix> G;
  std::vector<Matrix> mean_Q1;  ///< E[Q1] per level

  int steps() const { return tree->steps(); }
  double dt() const { return tree->dt(); }
};

CoefficientField evaluate_coefficients(const ProblemSpec& spec,
                                       std::shared_ptr<const ScenarioTree> tree);

/// Convenience: builds the tree for the problem's grid and evaluates on it.
CoefficientField evaluate_coefficients(const ProblemSpec& spec);

struct Violation {
  std::string assumption;
  int level = -1;
  std::size_t index = 0;
  std::string detail;
};

struct AssumptionReport {
  bool h1_ok = true;
  bool h2_ok = true;
  bool h3_ok = true;
  bool h3_provisional = true;
  double min_eig_R = std::numeric_limits<double>::infinity();
  double max_norm_Psi = std::numeric_limits<double>::quiet_NaN();
  std::vector<Violation> violations;
};

AssumptionReport validate_assumptions(const CoefficientField& field, double tol = 1e-10);

}  // namespace mfslq
