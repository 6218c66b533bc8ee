#pragma once

#include "mfslq/model.hpp"

namespace mfslq {

enum class RiccatiScheme {
  /// Exact dynamic programming on the tree: the feedback it induces is the
  /// optimal control of the discrete problem.
  DiscreteDynamicProgramming,
  /// Euler step of the continuous Riccati driver evaluated at E[Σ_{i+1}|node].
  ExplicitEuler,
};

struct RiccatiSolution {
  RiccatiScheme scheme = RiccatiScheme::DiscreteDynamicProgramming;
  NodeMap<Matrix> Sigma;  ///< levels 0..N
  NodeMap<Matrix> Psi;    ///< levels 0..N-1, Psi*dt = E[Σ_{i+1} ΔW | node]
  NodeMap<Matrix> S;      ///< levels 0..N-1, E[Σ_{i+1} | node]
  NodeMap<Matrix> gap;    ///< levels 0..N-1, the matrix inverted by the feedback
  double min_gap = 0.0;
  double min_eig_sigma = 0.0;
  double max_norm_psi = 0.0;
  std::vector<std::string> warnings;
};

inline constexpr double kDefinitenessThreshold = 1e-12;
inline constexpr double kPsdWarningThreshold = -1e-10;

RiccatiSolution solve_riccati_tree(const CoefficientField& field,
                                   RiccatiScheme scheme = RiccatiScheme::DiscreteDynamicProgramming);

/// Σ at the grid points of a deterministic problem, Ψ = 0.
struct RiccatiOdeSolution {
  std::vector<double> times;
  std::vector<Matrix> Sigma;
};

/// Classical RK4 integrated backward from Σ(T) = G with `substeps` per grid cell.
RiccatiOdeSolution solve_riccati_ode(const ProblemSpec& spec, int substeps = 8);

/// Right-hand side of dΣ/dt = -F(Σ) for deterministic coefficients.
Matrix riccati_ode_driver(const Matrix& Sigma, const Matrix& A, const Matrix& B, const Matrix& C,
                          const Matrix& D, const Matrix& Q, const Matrix& R);

struct HatCoefficients {
  std::shared_ptr<const ScenarioTree> tree;
  Dimensions dims;
  RiccatiScheme scheme = RiccatiScheme::DiscreteDynamicProgramming;
  NodeMap<Matrix> A_hat, A1_hat, B_hat, B1_hat, C_hat, C1_hat, D_hat, D1_hat;
  NodeMap<Matrix> M_hat, N_hat, Q_hat;
  // u = gain X + alpha_gain α + adjoint_gain E[φ_{i+1}|node] + martingale_gain ψ
  NodeMap<Matrix> gain, alpha_gain, adjoint_gain, martingale_gain;
};

HatCoefficients hat_coefficients(const CoefficientField& field, const RiccatiSolution& ric);

struct DefinitenessReport {
  double min_gap = 0.0;
  int gap_level = -1;
  std::size_t gap_index = 0;
  double min_eig_sigma = 0.0;
  double max_norm_psi = 0.0;
};

/// Recomputes the eigenvalue checks from scratch.
DefinitenessReport check_definiteness(const CoefficientField& field, const RiccatiSolution& ric);

/// Completes the assumption report once Ψ is known.
void finalize_h3(AssumptionReport& report, const RiccatiSolution& ric);

}  // namespace mfslq
