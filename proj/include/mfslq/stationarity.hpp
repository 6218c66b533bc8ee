#pragma once

#include "mfslq/operators.hpp"

#include <map>
#include <memory>

namespace mfslq {

struct MultiplierTriple {
  GridVector alpha;
  GridVector lambda;
  GridVector beta;
};

/// Solver for the multiplier-relaxed Hamiltonian system and its adjoint chain.
/// Both share the same system matrix: only the exogenous data differ.
///
///   tilde:  X̃' = X̃ + (AX̃ + A1α + Bũ)dt + (CX̃ + C1α + Dũ)ΔW,  ũ = -R⁻¹(BᵀȲ + DᵀZ̃)
///           Ỹ_i = Ȳ + dt(AᵀȲ + CᵀZ̃ + QX̃ + λ),              Ỹ_N = G X̃_N
///   chain:  k' = k + (Ak - BR⁻¹(Bᵀm̄ + Dᵀn) - Bũ)dt + (Ck - DR⁻¹(Bᵀm̄ + Dᵀn) - Dũ)ΔW,  k_0 = 0
///           m_i = m̄ + dt(Aᵀm̄ + Cᵀn + Qk + QX̃),              m_N = G X̃_N + G k_N
/// where Ȳ, m̄ denote conditional means of the next level.
class AdjointChainSolver {
 public:
  explicit AdjointChainSolver(const CoefficientField& field);

  FbsdeSolution tilde(const Vector& xi, const GridVector& alpha, const GridVector& lambda) const;
  /// (X, Y, Z) of the result hold (k, m, n).
  FbsdeSolution chain(const FbsdeSolution& tilde) const;
  OpenLoopControl tilde_control(const FbsdeSolution& tilde) const;

  /// Gradient of half the relaxed cost in the dt-weighted inner product:
  /// alpha part E[Q1α + A1ᵀm̄ + C1ᵀn], lambda part E[k].
  std::pair<GridVector, GridVector> gradient(const Vector& xi, const GridVector& alpha,
                                             const GridVector& lambda) const;

  const CoupledFbsdeSolver& system() const { return *solver_; }

 private:
  const CoefficientField& field_;
  std::unique_ptr<CoupledFbsdeSolver> solver_;
};

/// Affine maps (α, λ) ↦ alpha/lambda parts of the adjoint gradient.
struct AdjointResponse {
  int dim = 0;
  int steps = 0;
  double dt = 0.0;
  Matrix M_alpha, M_lambda;
  Vector r_xi;
  Matrix K_alpha, K_lambda;
  Vector k_xi;

  GridVector alpha_line(const GridVector& alpha, const GridVector& lambda) const;
  GridVector lambda_line(const GridVector& alpha, const GridVector& lambda) const;
};

AdjointResponse assemble_adjoint_response(const CoefficientField& field, const Vector& xi);

struct StationarityOptions {
  double tol = 1e-8;
  double rank_threshold = 1e-10;
};

struct StationarityResult {
  MultiplierTriple triple;
  RankReport rank;
  bool nonunique = false;
  std::array<double, 3> block_residuals{};  ///< relative, max norm
  double literal_lambda_line = 0.0;         ///< ‖L1ᵀβ‖ without the E[k] term
};

/// Stacks
///   M_α α + M_λ λ + r_ξ − β + L2ᵀβ = 0
///   K_α α + K_λ λ + k_ξ + L1ᵀβ     = 0
///   Pξ + L1 λ + L2 α − α           = 0
/// and returns the minimum-norm least-squares solution.
StationarityResult solve_stationarity(const AdjointResponse& responses, const OperatorBundle& operators,
                                      const StationarityOptions& options = {});

struct ControlLaw {
  NodeMap<Matrix> gain;
  NodeMap<Vector> offset;

  FeedbackControl feedback() const { return {gain, offset}; }
};

struct SolveReport {
  std::string name;
  std::shared_ptr<const ScenarioTree> tree;
  Dimensions dims;
  ControlLaw u_star;
  StatePath X_star;
  OpenLoopControl u_realized;
  CostBreakdown J_star;
  MultiplierTriple multipliers;
  RankReport kkt_rank;
  bool nonunique = false;
  std::map<std::string, double> residuals;
  Matrix sigma0;
  AssumptionReport assumptions;
  double min_gap = 0.0;
};

/// Offset BSDE, feedback law and closed loop for a multiplier triple.
SolveReport recover_control(const CoefficientField& field, const RiccatiSolution& ric,
                            const HatCoefficients& hat, const MultiplierTriple& triple, const Vector& xi);

struct Problem1Result {
  ControlLaw law;
  StatePath X;
  OpenLoopControl u;
  CostBreakdown J;
};

/// Optimal feedback of the problem with EX frozen to α and multiplier λ.
Problem1Result solve_problem1(const CoefficientField& field, const RiccatiSolution& ric,
                              const HatCoefficients& hat, const GridVector& alpha,
                              const GridVector& lambda, const Vector& xi);

struct SolveOptions {
  StationarityOptions stationarity;
  int max_steps = ScenarioTree::kDefaultMaxSteps;
};

SolveReport solve_mfslq(const ProblemSpec& spec, const SolveOptions& options = {});

}  // namespace mfslq
