#pragma once

#include "mfslq/bsde.hpp"
#include "mfslq/riccati.hpp"

namespace mfslq {

/// Dense matrix acting on stacked grid vectors.
struct DiscreteOperator {
  std::string name;
  bool is_adjoint = false;
  int dim = 0;
  int steps = 0;
  double dt = 0.0;
  bool uniform_grid = true;
  Matrix matrix;

  GridVector apply(const GridVector& f) const;
};

struct OperatorBundle {
  GridVector p_xi;
  DiscreteOperator L1;
  DiscreteOperator L2;
};

/// Offset pair (φ, ψ) together with the closed-loop state of the hat dynamics.
struct HatResponse {
  BsdePath offset;
  StatePath X;
  GridVector mean;
};

/// Solves the backward offset equation with source λ + Q̂α and the forward hat
/// dynamics driven by (ξ, α, φ, ψ); returns EX on the grid cells.
HatResponse solve_hat_system(const HatCoefficients& hat, const Vector& xi, const GridVector& alpha,
                             const GridVector& lambda);

GridVector assemble_P(const HatCoefficients& hat, const Vector& xi);
DiscreteOperator assemble_L1(const HatCoefficients& hat);
DiscreteOperator assemble_L2(const HatCoefficients& hat);
DiscreteOperator adjoint(const DiscreteOperator& op);

OperatorBundle assemble_operators(const HatCoefficients& hat, const Vector& xi);

/// Mean trajectory EX(t_0..t_{N-1}) as a grid vector.
GridVector mean_on_cells(const StatePath& path, double dt);

}  // namespace mfslq
