#pragma once

#include "mfslq/stationarity.hpp"

namespace mfslq {

enum class OracleMethod { Auto, Direct, ConjugateGradient };

struct OracleResult {
  OpenLoopControl u;
  double J = 0.0;
  std::string method;
  int iterations = 0;
  double gradient_norm = 0.0;
  double min_eig_estimate = 0.0;  ///< of the reduced Hessian
  double max_eig_estimate = 0.0;
};

/// Exact minimizer of the discrete cost over all adapted open-loop node controls.
OracleResult brute_force_optimal(const CoefficientField& field, const Vector& xi,
                                 OracleMethod method = OracleMethod::Auto, double tol = 1e-12);

/// Exact discrete adjoint of the tree dynamics for a given control:
///   Y_i = Ȳ + dt(AᵀȲ + CᵀZ + QX + E[Q1]EX + E[A1ᵀȲ + C1ᵀZ]),  Y_N = G X_N,
/// and the reduced gradient g = Ru + BᵀȲ + DᵀZ, so that dJ(u)[v] = 2 Σ dt E<g, v>.
struct DiscreteAdjoint {
  StatePath X;
  BsdePath YZ;
  NodeMap<Vector> gradient;
};

DiscreteAdjoint discrete_adjoint(const CoefficientField& field, const Vector& xi, const ControlProcess& u);

/// sqrt(Σ_i dt E|g_i|²)
double grid_norm(const ScenarioTree& tree, const NodeMap<Vector>& g);

struct SmpReport {
  double max_residual = 0.0;           ///< max over nodes of |Ru + BᵀY_i + DᵀZ_i|
  double rms_residual = 0.0;
  double discrete_max_residual = 0.0;  ///< same with the exact discrete adjoint
  NodeMap<Vector> residual;
  FbsdeSolution fbsde;
};

/// Solves the optimality FBSDE for a given control (Y implicit in the driver,
/// mean-field terms inside the global system) and evaluates the stationary condition.
SmpReport check_smp(const CoefficientField& field, const Vector& xi, const ControlProcess& u);

struct GateauxReport {
  double formula = 0.0;
  double duality = 0.0;
  double finite_difference = 0.0;
  double gap_formula_duality = 0.0;
  double gap_formula_fd = 0.0;
  double gap_duality_fd = 0.0;

  double max_relative_gap() const;
};

GateauxReport gateaux_derivative(const CoefficientField& field, const Vector& xi,
                                 const OpenLoopControl& u, const OpenLoopControl& v);

/// J(½u1+½u2) − ½J(u1) − ½J(u2) + (δ/4) Σ dt E|u1−u2|²; nonpositive under strict convexity.
double check_convexity(const CoefficientField& field, const Vector& xi, const OpenLoopControl& u1,
                       const OpenLoopControl& u2);

double cost_of(const CoefficientField& field, const Vector& xi, const OpenLoopControl& u);

struct DegenerationReport {
  double max_control_gap = 0.0;
  double J_star = 0.0;
  double J_classical = 0.0;
  double riccati_value = 0.0;  ///< <Σ(0)ξ, ξ>
  double value_gap = 0.0;
  double dt = 0.0;
};

/// Compares the full pipeline with the classical Riccati feedback when the
/// mean-field channels are absent.
DegenerationReport degeneration_check(const ProblemSpec& spec);

}  // namespace mfslq
