#include "mfslq/stationarity.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <exception>
#include <sstream>

namespace mfslq {

namespace {

FbsdeCoefficients hamiltonian_system(const CoefficientField& f) {
  const auto& tree = *f.tree;
  const int N = tree.steps();
  FbsdeCoefficients c;
  c.tree = f.tree;
  c.dim = f.dims.n;
  auto map = [&] { return tree.make_map<Matrix>(0, N - 1, Matrix()); };
  NodeMap<Matrix> A = f.A, C = f.C, Q = f.Q, At = map(), Ct = map();
  NodeMap<Matrix> bb = map(), bd = map(), db = map(), dd = map();
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const auto rinv = f.R[i][j].llt();
      const Matrix& B = f.B[i][j];
      const Matrix& D = f.D[i][j];
      const Matrix RiBt = rinv.solve(B.transpose());
      const Matrix RiDt = rinv.solve(D.transpose());
      bb[i][j] = -B * RiBt;
      bd[i][j] = -B * RiDt;
      db[i][j] = -D * RiBt;
      dd[i][j] = -D * RiDt;
      At[i][j] = f.A[i][j].transpose();
      Ct[i][j] = f.C[i][j].transpose();
    }
  }
  c.drift.linear = {{Operand::State, A}, {Operand::AdjointNext, bb}, {Operand::Martingale, bd}};
  c.diffusion.linear = {{Operand::State, C}, {Operand::AdjointNext, db}, {Operand::Martingale, dd}};
  c.driver.linear = {{Operand::AdjointNext, At}, {Operand::Martingale, Ct}, {Operand::State, Q}};
  c.terminal_gain = f.G;
  return c;
}

}  // namespace

AdjointChainSolver::AdjointChainSolver(const CoefficientField& field)
    : field_(field), solver_(std::make_unique<CoupledFbsdeSolver>(hamiltonian_system(field))) {}

FbsdeSolution AdjointChainSolver::tilde(const Vector& xi, const GridVector& alpha,
                                        const GridVector& lambda) const {
  const auto& tree = *field_.tree;
  const int N = tree.steps();
  FbsdeData d;
  d.x0 = xi;
  d.drift_source = tree.make_map<Vector>(0, N - 1, Vector());
  d.diffusion_source = d.drift_source;
  d.driver_source = broadcast(tree, lambda);
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      d.drift_source[i][j] = field_.A1[i][j] * alpha.cell(i);
      d.diffusion_source[i][j] = field_.C1[i][j] * alpha.cell(i);
    }
  }
  return solver_->solve(d);
}

OpenLoopControl AdjointChainSolver::tilde_control(const FbsdeSolution& t) const {
  const auto& tree = *field_.tree;
  OpenLoopControl u;
  u.u.resize(static_cast<std::size_t>(tree.steps()));
  for (int i = 0; i < tree.steps(); ++i) {
    u.u[i].resize(tree.width(i));
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector y = conditional_mean(t.YZ.Y[i + 1], j);
      u.u[i][j] = -field_.R[i][j].llt().solve(field_.B[i][j].transpose() * y +
                                              field_.D[i][j].transpose() * t.YZ.Z[i][j]);
    }
  }
  return u;
}

FbsdeSolution AdjointChainSolver::chain(const FbsdeSolution& t) const {
  const auto& tree = *field_.tree;
  const int N = tree.steps();
  const OpenLoopControl u = tilde_control(t);
  FbsdeData d;
  d.x0 = Vector::Zero(field_.dims.n);
  d.drift_source = tree.make_map<Vector>(0, N - 1, Vector());
  d.diffusion_source = d.drift_source;
  d.driver_source = d.drift_source;
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      d.drift_source[i][j] = -field_.B[i][j] * u.u[i][j];
      d.diffusion_source[i][j] = -field_.D[i][j] * u.u[i][j];
      d.driver_source[i][j] = field_.Q[i][j] * t.X.X[i][j];
    }
  }
  d.terminal_offset.resize(tree.width(N));
  for (std::size_t j = 0; j < tree.width(N); ++j) d.terminal_offset[j] = field_.G[j] * t.X.X[N][j];
  return solver_->solve(d);
}

std::pair<GridVector, GridVector> AdjointChainSolver::gradient(const Vector& xi, const GridVector& alpha,
                                                               const GridVector& lambda) const {
  const auto& tree = *field_.tree;
  const FbsdeSolution t = tilde(xi, alpha, lambda);
  const FbsdeSolution k = chain(t);
  const int n = field_.dims.n;
  GridVector ga = GridVector::zeros(n, tree.steps(), tree.dt());
  GridVector gl = ga;
  for (int i = 0; i < tree.steps(); ++i) {
    Vector s = Vector::Zero(n);
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector mbar = conditional_mean(k.YZ.Y[i + 1], j);
      s += field_.A1[i][j].transpose() * mbar + field_.C1[i][j].transpose() * k.YZ.Z[i][j];
    }
    ga.cell(i) = field_.mean_Q1[i] * alpha.cell(i) + s * tree.probability(i);
    gl.cell(i) = k.X.mean[i];
  }
  return {ga, gl};
}

GridVector AdjointResponse::alpha_line(const GridVector& alpha, const GridVector& lambda) const {
  return GridVector{dim, steps, dt, M_alpha * alpha.values + M_lambda * lambda.values + r_xi};
}

GridVector AdjointResponse::lambda_line(const GridVector& alpha, const GridVector& lambda) const {
  return GridVector{dim, steps, dt, K_alpha * alpha.values + K_lambda * lambda.values + k_xi};
}

AdjointResponse assemble_adjoint_response(const CoefficientField& field, const Vector& xi) {
  const auto& tree = *field.tree;
  const int n = field.dims.n;
  const int N = tree.steps();
  const Eigen::Index size = static_cast<Eigen::Index>(n) * N;
  const AdjointChainSolver solver(field);
  const GridVector zero = GridVector::zeros(n, N, tree.dt());

  AdjointResponse r;
  r.dim = n;
  r.steps = N;
  r.dt = tree.dt();
  r.M_alpha = r.M_lambda = r.K_alpha = r.K_lambda = Matrix::Zero(size, size);
  {
    const auto [ga, gl] = solver.gradient(xi, zero, zero);
    r.r_xi = ga.values;
    r.k_xi = gl.values;
  }
  const Vector x0 = Vector::Zero(n);
  for (Eigen::Index col = 0; col < size; ++col) {
    GridVector e = zero;
    e.values(col) = 1.0;
    const auto [ga, gl] = solver.gradient(x0, e, zero);
    r.M_alpha.col(col) = ga.values;
    r.K_alpha.col(col) = gl.values;
    const auto [ha, hl] = solver.gradient(x0, zero, e);
    r.M_lambda.col(col) = ha.values;
    r.K_lambda.col(col) = hl.values;
  }
  return r;
}

StationarityResult solve_stationarity(const AdjointResponse& resp, const OperatorBundle& ops,
                                      const StationarityOptions& options) {
  const Eigen::Index s = static_cast<Eigen::Index>(resp.dim) * resp.steps;
  for (const DiscreteOperator* op : {&ops.L1, &ops.L2}) {
    if (op->dim != resp.dim || op->steps != resp.steps || op->dt != resp.dt) {
      throw ShapeError("stationarity inputs live on different grids");
    }
  }
  if (ops.p_xi.values.size() != s) throw ShapeError("P xi does not match the grid");

  const Matrix I = Matrix::Identity(s, s);
  const Matrix& L1 = ops.L1.matrix;
  const Matrix& L2 = ops.L2.matrix;
  Matrix K(3 * s, 3 * s);
  K << resp.M_alpha, resp.M_lambda, L2.transpose() - I,
       resp.K_alpha, resp.K_lambda, L1.transpose(),
       L2 - I, L1, Matrix::Zero(s, s);
  Vector rhs(3 * s);
  rhs << -resp.r_xi, -resp.k_xi, -ops.p_xi.values;

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  cod.setThreshold(options.rank_threshold);
  cod.compute(K);
  const Vector z = cod.solve(rhs);

  StationarityResult out;
  out.rank = {static_cast<std::size_t>(K.rows()), static_cast<std::size_t>(K.cols()),
              static_cast<std::size_t>(cod.rank())};
  out.nonunique = out.rank.rank < out.rank.cols;
  const auto cell = [&](Eigen::Index b) { return GridVector{resp.dim, resp.steps, resp.dt, z.segment(b * s, s)}; };
  out.triple = {cell(0), cell(1), cell(2)};

  const Vector r = K * z - rhs;
  const double scale = 1.0 + std::max(rhs.cwiseAbs().maxCoeff(),
                                      K.cwiseAbs().rowwise().sum().maxCoeff() * z.cwiseAbs().maxCoeff());
  for (int b = 0; b < 3; ++b) out.block_residuals[b] = r.segment(b * s, s).cwiseAbs().maxCoeff() / scale;
  out.literal_lambda_line = (L1.transpose() * out.triple.beta.values).cwiseAbs().maxCoeff();

  const double worst = *std::max_element(out.block_residuals.begin(), out.block_residuals.end());
  if (!(worst <= options.tol)) {
    std::ostringstream os;
    os << "stationarity system is inconsistent: block residuals " << out.block_residuals[0] << ", "
       << out.block_residuals[1] << ", " << out.block_residuals[2];
    throw InfeasibleError(out.block_residuals, os.str());
  }
  return out;
}

namespace {

ControlLaw control_law(const HatCoefficients& hat, const HatResponse& resp, const GridVector& alpha) {
  const auto& tree = *hat.tree;
  ControlLaw law;
  law.gain = hat.gain;
  law.offset.resize(static_cast<std::size_t>(tree.steps()));
  for (int i = 0; i < tree.steps(); ++i) {
    law.offset[i].resize(tree.width(i));
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector pb = conditional_mean(resp.offset.Y[i + 1], j);
      law.offset[i][j] = hat.alpha_gain[i][j] * alpha.cell(i) + hat.adjoint_gain[i][j] * pb +
                         hat.martingale_gain[i][j] * resp.offset.Z[i][j];
    }
  }
  return law;
}

double path_gap(const StatePath& a, const StatePath& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.X.size(); ++i) {
    for (std::size_t j = 0; j < a.X[i].size(); ++j) g = std::max(g, (a.X[i][j] - b.X[i][j]).cwiseAbs().maxCoeff());
  }
  return g;
}

}  // namespace

SolveReport recover_control(const CoefficientField& field, const RiccatiSolution& ric,
                            const HatCoefficients& hat, const MultiplierTriple& triple, const Vector& xi) {
  const auto& tree = *field.tree;
  const HatResponse resp = solve_hat_system(hat, xi, triple.alpha, triple.lambda);

  SolveReport rep;
  rep.tree = field.tree;
  rep.dims = field.dims;
  rep.multipliers = triple;
  rep.u_star = control_law(hat, resp, triple.alpha);
  rep.X_star = resp.X;
  rep.u_realized = realize_control(rep.u_star.feedback(), rep.X_star);
  rep.sigma0 = ric.Sigma[0][0];
  rep.min_gap = ric.min_gap;

  const StatePath actual = propagate_state(field, rep.u_realized, xi);
  rep.J_star = evaluate_cost(field, actual, rep.u_realized);
  rep.residuals["closed_loop_vs_state_equation"] = path_gap(actual, rep.X_star);

  double consistency = 0.0;
  for (int i = 0; i < tree.steps(); ++i) {
    consistency = std::max(consistency, (rep.X_star.mean[i] - triple.alpha.cell(i)).cwiseAbs().maxCoeff());
  }
  rep.residuals["mean_consistency"] = consistency;
  return rep;
}

Problem1Result solve_problem1(const CoefficientField& field, const RiccatiSolution& /*ric*/,
                              const HatCoefficients& hat, const GridVector& alpha,
                              const GridVector& lambda, const Vector& xi) {
  const HatResponse resp = solve_hat_system(hat, xi, alpha, lambda);
  Problem1Result r;
  r.law = control_law(hat, resp, alpha);
  r.X = resp.X;
  r.u = realize_control(r.law.feedback(), r.X);
  r.J = evaluate_cost_problem1(field, r.X, r.u, alpha, lambda);
  return r;
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    std::throw_with_nested(StageError(name, e.what()));
  }
}

}  // namespace

SolveReport solve_mfslq(const ProblemSpec& spec, const SolveOptions& options) {
  const auto tree = stage("tree", [&] { return build_tree(spec.grid, options.max_steps); });
  const CoefficientField field = stage("coefficients", [&] { return evaluate_coefficients(spec, tree); });
  AssumptionReport assumptions = validate_assumptions(field);
  if (!assumptions.h1_ok || !assumptions.h2_ok) {
    const Violation& v = assumptions.violations.front();
    throw StageError("assumptions", v.assumption + " violated at level " + std::to_string(v.level) +
                                        " node " + std::to_string(v.index) + ": " + v.detail);
  }
  const RiccatiSolution ric = stage("riccati", [&] { return solve_riccati_tree(field); });
  finalize_h3(assumptions, ric);
  const HatCoefficients hat = stage("hat", [&] { return hat_coefficients(field, ric); });
  const OperatorBundle ops = stage("operators", [&] { return assemble_operators(hat, spec.xi); });
  const AdjointResponse resp =
      stage("adjoint_response", [&] { return assemble_adjoint_response(field, spec.xi); });
  const StationarityResult st =
      stage("stationarity", [&] { return solve_stationarity(resp, ops, options.stationarity); });
  SolveReport rep = stage("recovery", [&] { return recover_control(field, ric, hat, st.triple, spec.xi); });
  rep.name = spec.name;
  rep.assumptions = assumptions;
  rep.kkt_rank = st.rank;
  rep.nonunique = st.nonunique;
  rep.residuals["kkt_alpha_line"] = st.block_residuals[0];
  rep.residuals["kkt_lambda_line"] = st.block_residuals[1];
  rep.residuals["kkt_consistency_line"] = st.block_residuals[2];
  rep.residuals["literal_lambda_line"] = st.literal_lambda_line;
  rep.residuals["riccati_min_gap"] = ric.min_gap;
  return rep;
}

}  // namespace mfslq
