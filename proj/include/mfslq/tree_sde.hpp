#pragma once

#include "mfslq/model.hpp"

#include <optional>
#include <variant>

namespace mfslq {

struct OpenLoopControl {
  NodeMap<Vector> u;  ///< levels 0..N-1
};

/// u = gain * X + offset at every node.
struct FeedbackControl {
  NodeMap<Matrix> gain;
  NodeMap<Vector> offset;
};

using ControlProcess = std::variant<OpenLoopControl, FeedbackControl>;

struct StatePath {
  NodeMap<Vector> X;         ///< levels 0..N
  std::vector<Vector> mean;  ///< EX(t_i), i = 0..N
};

struct CostBreakdown {
  double running_state = 0.0;
  double running_mean = 0.0;
  double running_control = 0.0;
  double terminal = 0.0;
  double multiplier = 0.0;

  double total() const {
    return running_state + running_mean + running_control + terminal + multiplier;
  }
};

OpenLoopControl zero_control(const ScenarioTree& tree, int m);
OpenLoopControl constant_control(const ScenarioTree& tree, const Vector& value);

/// Mean of a node-indexed level, using the tree probabilities.
Vector level_mean(const std::vector<Vector>& level);

/// Euler step on the tree with the exact level mean in the mean-field terms.
StatePath propagate_state(const CoefficientField& field, const ControlProcess& u, const Vector& xi);

/// Same dynamics with EX replaced by a prescribed deterministic trajectory.
StatePath propagate_state_frozen_mean(const CoefficientField& field, const ControlProcess& u,
                                      const Vector& xi, const GridVector& alpha);

/// Evaluates a feedback law along a path, giving the realized open-loop control.
OpenLoopControl realize_control(const ControlProcess& u, const StatePath& path);

CostBreakdown evaluate_cost(const CoefficientField& field, const StatePath& path,
                            const ControlProcess& u);

/// Cost with the mean replaced by alpha and the multiplier term 2<lambda, X - alpha>.
CostBreakdown evaluate_cost_problem1(const CoefficientField& field, const StatePath& path,
                                     const ControlProcess& u, const GridVector& alpha,
                                     const GridVector& lambda);

struct FbsdeSolution;
struct OperatorBundle;

/// Cost of the multiplier-relaxed problem whose state is the tilde system.
CostBreakdown evaluate_cost_problem2(const CoefficientField& field, const FbsdeSolution& tilde,
                                     const GridVector& alpha, const GridVector& lambda,
                                     const GridVector& beta, const OperatorBundle& operators);

/// sum_i dt E|u_i|^2
double control_energy(const ScenarioTree& tree, const OpenLoopControl& u);

/// Elementwise a*u1 + b*u2.
OpenLoopControl combine(const OpenLoopControl& u1, double a, const OpenLoopControl& u2, double b);

// ---------------------------------------------------------------------------
// Particle approximation

/// Feedback evaluated along a sampled Gaussian path.
struct ParticleFeedback {
  std::function<Matrix(const PathView&)> gain;
  std::function<Vector(const PathView&)> offset;

  static ParticleFeedback zero(const Dimensions& dims);
  /// Time-indexed gain/offset tables with one entry per step.
  static ParticleFeedback time_indexed(std::vector<Matrix> gains, std::vector<Vector> offsets);
};

struct ParticleOptions {
  std::size_t particles = 10000;
  int steps = 0;  ///< 0 means: use the problem's grid
  std::uint64_t seed = 20240601;
  std::size_t record_paths = 0;
};

struct ParticleSummary {
  std::vector<double> times;
  std::vector<Vector> mean;
  std::vector<Vector> mean_stderr;
  std::vector<double> second_moment;
  double sup_second_moment = 0.0;
  std::vector<std::vector<Vector>> recorded;  ///< first `record_paths` particle paths
};

/// Standard normal draw determined only by (seed, particle, step).
double counter_normal(std::uint64_t seed, std::uint64_t particle, std::uint64_t step);

ParticleSummary simulate_mfsde_particles(const ProblemSpec& spec, const ParticleFeedback& u,
                                         const ParticleOptions& options);

}  // namespace mfslq
