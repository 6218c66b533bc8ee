#pragma once

#include "mfslq/tree_sde.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace mfslq {

struct BsdePath {
  NodeMap<Vector> Y;  ///< levels 0..N
  NodeMap<Vector> Z;  ///< levels 0..N-1, Z*dt = E[Y_{i+1} ΔW | node]
};

enum class BsdeScheme {
  /// Y_i = E[Y_{i+1}|node] + dt (M Y_i + N Z_i + f_i)
  Implicit,
  /// Y_i = E[Y_{i+1}|node] + dt (M E[Y_{i+1}|node] + N Z_i + f_i)
  Explicit,
};

/// Conditional mean and martingale coefficient of a child level at node j.
Vector conditional_mean(const std::vector<Vector>& next, std::size_t j);
Vector conditional_martingale(const std::vector<Vector>& next, std::size_t j, const ScenarioTree& tree);
Matrix conditional_mean(const std::vector<Matrix>& next, std::size_t j);
Matrix conditional_martingale(const std::vector<Matrix>& next, std::size_t j, const ScenarioTree& tree);

/// Node-indexed source that equals the grid vector's cell value on every node of each level.
NodeMap<Vector> broadcast(const ScenarioTree& tree, const GridVector& g);

BsdePath solve_linear_bsde(const ScenarioTree& tree, const NodeMap<Matrix>& M, const NodeMap<Matrix>& N,
                           const NodeMap<Vector>& source, const std::vector<Vector>& terminal,
                           BsdeScheme scheme = BsdeScheme::Implicit);

/// Largest defect of the one-step identities of a path for the given driver.
double bsde_residual(const ScenarioTree& tree, const BsdePath& path, const NodeMap<Matrix>& M,
                     const NodeMap<Matrix>& N, const NodeMap<Vector>& source,
                     const std::vector<Vector>& terminal, BsdeScheme scheme);

struct MeanFieldBsdeOptions {
  int max_iter = 200;
  double tol = 1e-12;
  double sigma = -1.0;  ///< weight of the contraction norm; negative selects 32K²+4K+2
  BsdeScheme scheme = BsdeScheme::Implicit;
};

struct MeanFieldBsdeResult {
  BsdePath path;
  int iterations = 0;
  double sigma = 0.0;
  std::vector<double> differences;        ///< ‖iterate_k − iterate_{k−1}‖_σ
  std::vector<double> contraction_ratios;
};

/// Driver Aᵀ Y + Cᵀ Z + E[A1ᵀ Y + C1ᵀ Z] + source, solved by Picard iteration.
MeanFieldBsdeResult solve_meanfield_bsde(const CoefficientField& field, const NodeMap<Vector>& source,
                                         const std::vector<Vector>& terminal,
                                         const MeanFieldBsdeOptions& options = {});

// ---------------------------------------------------------------------------
// Coupled linear FBSDE on the tree, solved as one sparse system.

enum class Operand {
  State,        ///< X_i
  Adjoint,      ///< Y_i
  AdjointNext,  ///< E[Y_{i+1} | node]
  Martingale,   ///< Z_i
};

/// coeff(node) * operand(node); coefficients on levels 0..N-1.
struct LinearBlock {
  Operand operand;
  NodeMap<Matrix> coeff;
};

/// outer(node) * E[inner * operand] at the node's level; empty maps mean identity.
struct MeanFieldBlock {
  Operand operand;
  NodeMap<Matrix> outer;
  NodeMap<Matrix> inner;
};

struct FbsdeEquation {
  std::vector<LinearBlock> linear;
  std::vector<MeanFieldBlock> mean_field;
};

/// X_{i+1} = X_i + drift dt + diffusion ΔW,  Y_i = E[Y_{i+1}|node] + driver dt,
/// Y_N = terminal_gain X_N + g.
struct FbsdeCoefficients {
  std::shared_ptr<const ScenarioTree> tree;
  int dim = 1;
  FbsdeEquation drift, diffusion, driver;
  std::vector<Matrix> terminal_gain;  ///< empty means zero
};

/// Exogenous data; empty maps mean zero.
struct FbsdeData {
  Vector x0;
  NodeMap<Vector> drift_source, diffusion_source, driver_source;
  std::vector<Vector> terminal_offset;
};

struct FbsdeSolution {
  StatePath X;
  BsdePath YZ;
  double residual = 0.0;
};

/// Assembles and factorizes the system once; `solve` can be called for many data sets.
class CoupledFbsdeSolver {
 public:
  explicit CoupledFbsdeSolver(FbsdeCoefficients coefficients);

  FbsdeSolution solve(const FbsdeData& data) const;
  std::size_t unknowns() const { return static_cast<std::size_t>(matrix_.cols()); }
  const RankReport& rank() const { return rank_; }

 private:
  std::size_t x_index(int level, std::size_t j) const;
  std::size_t y_index(int level, std::size_t j) const;
  std::size_t z_index(int level, std::size_t j) const;
  Vector rhs(const FbsdeData& data) const;
  Vector solve_raw(const Vector& b) const;

  FbsdeCoefficients c_;
  std::size_t n_nodes_ = 0;
  std::size_t n_internal_ = 0;
  std::size_t aux_offset_ = 0;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  // Bordered elimination of the auxiliary mean unknowns: lu_ then factors the
  // node block only and schur_ holds the small dense complement.
  bool bordered_ = false;
  Eigen::SparseMatrix<double> coupling_, aux_rows_;
  Eigen::FullPivLU<Matrix> schur_;
  RankReport rank_;
};

FbsdeSolution solve_coupled_fbsde(const FbsdeCoefficients& coefficients, const FbsdeData& data);

}  // namespace mfslq
