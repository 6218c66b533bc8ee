#include "mfslq/operators.hpp"

namespace mfslq {

GridVector DiscreteOperator::apply(const GridVector& f) const {
  if (f.dim != dim || f.steps != steps || f.dt != dt) throw ShapeError(name + ": argument does not match the grid");
  return GridVector{dim, steps, dt, matrix * f.values};
}

GridVector mean_on_cells(const StatePath& path, double dt) {
  const int N = static_cast<int>(path.mean.size()) - 1;
  const int n = static_cast<int>(path.mean.front().size());
  GridVector g = GridVector::zeros(n, N, dt);
  for (int i = 0; i < N; ++i) g.cell(i) = path.mean[i];
  return g;
}

HatResponse solve_hat_system(const HatCoefficients& hat, const Vector& xi, const GridVector& alpha,
                             const GridVector& lambda) {
  const auto& tree = *hat.tree;
  const int N = tree.steps();
  const int n = hat.dims.n;
  const double dt = tree.dt();
  const double h = tree.sqrt_dt();
  if (xi.size() != n) throw ShapeError("initial state has wrong length");
  for (const GridVector* g : {&alpha, &lambda}) {
    if (g->dim != n || g->steps != N) throw ShapeError("grid vector does not match the hat coefficients");
  }

  NodeMap<Vector> source(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    source[i].resize(tree.width(i));
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      source[i][j] = lambda.cell(i) + hat.Q_hat[i][j] * alpha.cell(i);
    }
  }
  HatResponse r;
  r.offset = solve_linear_bsde(tree, hat.M_hat, hat.N_hat, source,
                               std::vector<Vector>(tree.width(N), Vector::Zero(n)), BsdeScheme::Explicit);

  r.X.X.resize(static_cast<std::size_t>(N) + 1);
  r.X.mean.resize(static_cast<std::size_t>(N) + 1);
  r.X.X[0] = {xi};
  r.X.mean[0] = xi;
  for (int i = 0; i < N; ++i) {
    const Vector a = alpha.cell(i);
    const auto& cur = r.X.X[i];
    auto& next = r.X.X[i + 1];
    next.resize(2 * cur.size());
    for (std::size_t j = 0; j < cur.size(); ++j) {
      const Vector pb = conditional_mean(r.offset.Y[i + 1], j);
      const Vector& ps = r.offset.Z[i][j];
      const Vector drift = hat.A_hat[i][j] * cur[j] + hat.A1_hat[i][j] * a + hat.B_hat[i][j] * pb +
                           hat.B1_hat[i][j] * ps;
      const Vector diff = hat.C_hat[i][j] * cur[j] + hat.C1_hat[i][j] * a + hat.D_hat[i][j] * pb +
                          hat.D1_hat[i][j] * ps;
      next[2 * j] = cur[j] + dt * drift + h * diff;
      next[2 * j + 1] = cur[j] + dt * drift - h * diff;
    }
    r.X.mean[i + 1] = level_mean(next);
  }
  r.mean = mean_on_cells(r.X, dt);
  return r;
}

GridVector assemble_P(const HatCoefficients& hat, const Vector& xi) {
  const auto& tree = *hat.tree;
  const GridVector zero = GridVector::zeros(hat.dims.n, tree.steps(), tree.dt());
  return solve_hat_system(hat, xi, zero, zero).mean;
}

namespace {

DiscreteOperator impulse_operator(const HatCoefficients& hat, const std::string& name, bool lambda_side) {
  const auto& tree = *hat.tree;
  const int n = hat.dims.n;
  const int N = tree.steps();
  DiscreteOperator op;
  op.name = name;
  op.dim = n;
  op.steps = N;
  op.dt = tree.dt();
  op.matrix = Matrix::Zero(static_cast<Eigen::Index>(n) * N, static_cast<Eigen::Index>(n) * N);
  const Vector x0 = Vector::Zero(n);
  const GridVector zero = GridVector::zeros(n, N, tree.dt());
  for (Eigen::Index col = 0; col < op.matrix.cols(); ++col) {
    GridVector e = zero;
    e.values(col) = 1.0;
    const HatResponse r = lambda_side ? solve_hat_system(hat, x0, zero, e) : solve_hat_system(hat, x0, e, zero);
    op.matrix.col(col) = r.mean.values;
  }
  return op;
}

}  // namespace

DiscreteOperator assemble_L1(const HatCoefficients& hat) { return impulse_operator(hat, "L1", true); }

DiscreteOperator assemble_L2(const HatCoefficients& hat) { return impulse_operator(hat, "L2", false); }

DiscreteOperator adjoint(const DiscreteOperator& op) {
  if (!op.uniform_grid) throw UnsupportedGridError(op.name + ": adjoint needs a uniform grid");
  if (op.matrix.rows() != op.matrix.cols()) throw ShapeError(op.name + ": adjoint needs a square operator");
  DiscreteOperator out = op;
  out.matrix = op.matrix.transpose();
  out.is_adjoint = !op.is_adjoint;
  return out;
}

OperatorBundle assemble_operators(const HatCoefficients& hat, const Vector& xi) {
  return {assemble_P(hat, xi), assemble_L1(hat), assemble_L2(hat)};
}

}  // namespace mfslq
