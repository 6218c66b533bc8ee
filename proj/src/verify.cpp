#include "mfslq/verify.hpp"

#include <cmath>
#include <sstream>

namespace mfslq {

double cost_of(const CoefficientField& field, const Vector& xi, const OpenLoopControl& u) {
  return evaluate_cost(field, propagate_state(field, u, xi), u).total();
}

double grid_norm(const ScenarioTree& tree, const NodeMap<Vector>& g) {
  double s = 0.0;
  for (int i = 0; i < tree.steps(); ++i) {
    double lvl = 0.0;
    for (const auto& v : g[i]) lvl += v.squaredNorm();
    s += tree.dt() * lvl * tree.probability(i);
  }
  return std::sqrt(s);
}

DiscreteAdjoint discrete_adjoint(const CoefficientField& field, const Vector& xi, const ControlProcess& u) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  const int n = field.dims.n;
  DiscreteAdjoint a;
  a.X = propagate_state(field, u, xi);
  const OpenLoopControl ol = realize_control(u, a.X);
  a.YZ.Y.resize(static_cast<std::size_t>(N) + 1);
  a.YZ.Z.resize(static_cast<std::size_t>(N));
  a.gradient.resize(static_cast<std::size_t>(N));
  a.YZ.Y[N].resize(tree.width(N));
  for (std::size_t j = 0; j < tree.width(N); ++j) a.YZ.Y[N][j] = field.G[j] * a.X.X[N][j];
  for (int i = N - 1; i >= 0; --i) {
    const std::size_t w = tree.width(i);
    std::vector<Vector> ybar(w);
    a.YZ.Z[i].resize(w);
    Vector e = Vector::Zero(n);
    for (std::size_t j = 0; j < w; ++j) {
      ybar[j] = conditional_mean(a.YZ.Y[i + 1], j);
      a.YZ.Z[i][j] = conditional_martingale(a.YZ.Y[i + 1], j, tree);
      e += field.A1[i][j].transpose() * ybar[j] + field.C1[i][j].transpose() * a.YZ.Z[i][j];
    }
    e = e * tree.probability(i) + field.mean_Q1[i] * a.X.mean[i];
    a.YZ.Y[i].resize(w);
    a.gradient[i].resize(w);
    for (std::size_t j = 0; j < w; ++j) {
      const Vector& z = a.YZ.Z[i][j];
      a.YZ.Y[i][j] = ybar[j] + dt * (field.A[i][j].transpose() * ybar[j] + field.C[i][j].transpose() * z +
                                     field.Q[i][j] * a.X.X[i][j] + e);
      a.gradient[i][j] = field.R[i][j] * ol.u[i][j] + field.B[i][j].transpose() * ybar[j] +
                         field.D[i][j].transpose() * z;
    }
  }
  return a;
}

namespace {

OpenLoopControl unflatten(const ScenarioTree& tree, const Vector& v, int m) {
  OpenLoopControl u = zero_control(tree, m);
  for (int i = 0; i < tree.steps(); ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      u.u[i][j] = v.segment(static_cast<Eigen::Index>(tree.flat_index(i, j)) * m, m);
    }
  }
  return u;
}

Vector flatten_states(const ScenarioTree& tree, const StatePath& p, int n) {
  Vector v(static_cast<Eigen::Index>(tree.node_count()) * n);
  for (int i = 0; i <= tree.steps(); ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      v.segment(static_cast<Eigen::Index>(tree.flat_index(i, j)) * n, n) = p.X[i][j];
    }
  }
  return v;
}

OracleResult direct_oracle(const CoefficientField& field, const Vector& xi) {
  const auto& tree = *field.tree;
  const int n = field.dims.n;
  const int m = field.dims.m;
  const int N = tree.steps();
  const double dt = tree.dt();
  const Eigen::Index U = (static_cast<Eigen::Index>(tree.width(N)) - 1) * m;
  const Eigen::Index S = static_cast<Eigen::Index>(tree.node_count()) * n;

  // State responses to unit controls: X(u) = X0 + Phi u.
  const Vector X0 = flatten_states(tree, propagate_state(field, zero_control(tree, m), xi), n);
  Matrix Phi(S, U);
  const Vector zero_xi = Vector::Zero(n);
  for (Eigen::Index c = 0; c < U; ++c) {
    Vector e = Vector::Zero(U);
    e(c) = 1.0;
    Phi.col(c) = flatten_states(tree, propagate_state(field, unflatten(tree, e, m), zero_xi), n);
  }

  // Node weights: p*dt*Q on running levels, p*G on leaves.
  Matrix WPhi(S, U);
  Vector WX0(S);
  Matrix H = Matrix::Zero(U, U);
  Vector b = Vector::Zero(U);
  for (int i = 0; i <= N; ++i) {
    const double p = tree.probability(i);
    Matrix meanPhi = Matrix::Zero(n, U);
    Vector meanX0 = Vector::Zero(n);
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Eigen::Index r = static_cast<Eigen::Index>(tree.flat_index(i, j)) * n;
      const Matrix W = i < N ? Matrix(p * dt * field.Q[i][j]) : Matrix(p * field.G[j]);
      WPhi.middleRows(r, n) = W * Phi.middleRows(r, n);
      WX0.segment(r, n) = W * X0.segment(r, n);
      meanPhi += p * Phi.middleRows(r, n);
      meanX0 += p * X0.segment(r, n);
    }
    if (i < N) {
      H += dt * meanPhi.transpose() * field.mean_Q1[i] * meanPhi;
      b += dt * meanPhi.transpose() * field.mean_Q1[i] * meanX0;
      for (std::size_t j = 0; j < tree.width(i); ++j) {
        const Eigen::Index r = static_cast<Eigen::Index>(tree.flat_index(i, j)) * m;
        H.block(r, r, m, m) += p * dt * field.R[i][j];
      }
    }
  }
  H += Phi.transpose() * WPhi;
  b += Phi.transpose() * WX0;
  H = linalg::symmetrize(H);

  const Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError(linalg::min_symmetric_eigenvalue(H), linalg::max_symmetric_eigenvalue(H),
                            "oracle Hessian is not positive definite");
  }
  OracleResult r;
  r.method = "direct";
  r.u = unflatten(tree, llt.solve(-b), m);
  r.J = cost_of(field, xi, r.u);
  // Eigenvalues of the Hessian in the weighted metric p*dt.
  Vector wdiag(U);
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      wdiag.segment(static_cast<Eigen::Index>(tree.flat_index(i, j)) * m, m).setConstant(
          1.0 / std::sqrt(tree.probability(i) * dt));
    }
  }
  const Matrix Hw = wdiag.asDiagonal() * H * wdiag.asDiagonal();
  r.min_eig_estimate = linalg::min_symmetric_eigenvalue(Hw);
  r.max_eig_estimate = linalg::max_symmetric_eigenvalue(Hw);
  return r;
}

double weighted_dot(const ScenarioTree& tree, const NodeMap<Vector>& a, const NodeMap<Vector>& b) {
  double s = 0.0;
  for (int i = 0; i < tree.steps(); ++i) {
    double lvl = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) lvl += a[i][j].dot(b[i][j]);
    s += tree.dt() * tree.probability(i) * lvl;
  }
  return s;
}

void axpy(NodeMap<Vector>& y, double a, const NodeMap<Vector>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y[i].size(); ++j) y[i][j] += a * x[i][j];
  }
}

/// CG on the reduced gradient map, which is self-adjoint in the p*dt metric.
OracleResult cg_oracle(const CoefficientField& field, const Vector& xi, double tol) {
  const auto& tree = *field.tree;
  const int m = field.dims.m;
  const Vector zero_xi = Vector::Zero(field.dims.n);
  auto apply = [&](const NodeMap<Vector>& v) {
    return discrete_adjoint(field, zero_xi, OpenLoopControl{v}).gradient;
  };

  OpenLoopControl u = zero_control(tree, m);
  NodeMap<Vector> r = discrete_adjoint(field, xi, u).gradient;
  for (auto& lvl : r) {
    for (auto& v : lvl) v = -v;
  }
  NodeMap<Vector> p = r;
  double rr = weighted_dot(tree, r, r);
  const double r0 = std::sqrt(rr);
  const int max_iter = 5000;
  OracleResult res;
  res.method = "conjugate_gradient";
  res.min_eig_estimate = std::numeric_limits<double>::infinity();
  res.max_eig_estimate = 0.0;
  int k = 0;
  while (std::sqrt(rr) > tol * (1.0 + r0) && k < max_iter) {
    const NodeMap<Vector> Ap = apply(p);
    const double pAp = weighted_dot(tree, p, Ap);
    const double pp = weighted_dot(tree, p, p);
    res.min_eig_estimate = std::min(res.min_eig_estimate, pAp / pp);
    res.max_eig_estimate = std::max(res.max_eig_estimate, pAp / pp);
    if (!(pAp > 0.0)) break;
    const double a = rr / pAp;
    axpy(u.u, a, p);
    axpy(r, -a, Ap);
    const double rr_new = weighted_dot(tree, r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < p[i].size(); ++j) p[i][j] = r[i][j] + beta * p[i][j];
    }
    ++k;
  }
  res.iterations = k;
  if (std::sqrt(rr) > tol * (1.0 + r0)) {
    std::ostringstream os;
    os << "conjugate gradient stagnated after " << k << " iterations (residual " << std::sqrt(rr)
       << ", eigenvalue estimates [" << res.min_eig_estimate << ", " << res.max_eig_estimate << "])";
    throw ConditioningError(res.min_eig_estimate, res.max_eig_estimate, os.str());
  }
  res.u = std::move(u);
  res.J = cost_of(field, xi, res.u);
  return res;
}

}  // namespace

OracleResult brute_force_optimal(const CoefficientField& field, const Vector& xi, OracleMethod method,
                                 double tol) {
  const auto& tree = *field.tree;
  const std::size_t unknowns = (tree.width(tree.steps()) - 1) * static_cast<std::size_t>(field.dims.m);
  if (method == OracleMethod::Auto) method = unknowns <= 2048 ? OracleMethod::Direct : OracleMethod::ConjugateGradient;
  OracleResult r = method == OracleMethod::Direct ? direct_oracle(field, xi) : cg_oracle(field, xi, tol);
  r.gradient_norm = grid_norm(tree, discrete_adjoint(field, xi, r.u).gradient);
  return r;
}

SmpReport check_smp(const CoefficientField& field, const Vector& xi, const ControlProcess& u) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const StatePath forward = propagate_state(field, u, xi);
  const OpenLoopControl ol = realize_control(u, forward);

  FbsdeCoefficients c;
  c.tree = field.tree;
  c.dim = field.dims.n;
  NodeMap<Matrix> At = field.A, Ct = field.C, A1t = field.A1, C1t = field.C1, Q1bar = field.Q1;
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      At[i][j].transposeInPlace();
      Ct[i][j].transposeInPlace();
      A1t[i][j].transposeInPlace();
      C1t[i][j].transposeInPlace();
      Q1bar[i][j] = field.mean_Q1[i];
    }
  }
  c.drift.linear = {{Operand::State, field.A}};
  c.drift.mean_field = {{Operand::State, field.A1, {}}};
  c.diffusion.linear = {{Operand::State, field.C}};
  c.diffusion.mean_field = {{Operand::State, field.C1, {}}};
  c.driver.linear = {{Operand::Adjoint, At}, {Operand::Martingale, Ct}, {Operand::State, field.Q}};
  c.driver.mean_field = {{Operand::State, Q1bar, {}}, {Operand::Adjoint, {}, A1t}, {Operand::Martingale, {}, C1t}};
  c.terminal_gain = field.G;

  FbsdeData d;
  d.x0 = xi;
  d.drift_source = tree.make_map<Vector>(0, N - 1, Vector());
  d.diffusion_source = d.drift_source;
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      d.drift_source[i][j] = field.B[i][j] * ol.u[i][j];
      d.diffusion_source[i][j] = field.D[i][j] * ol.u[i][j];
    }
  }

  SmpReport rep;
  rep.fbsde = solve_coupled_fbsde(c, d);
  rep.residual = tree.make_map<Vector>(0, N - 1, Vector());
  double sq = 0.0;
  for (int i = 0; i < N; ++i) {
    double lvl = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector r = field.R[i][j] * ol.u[i][j] + field.B[i][j].transpose() * rep.fbsde.YZ.Y[i][j] +
                       field.D[i][j].transpose() * rep.fbsde.YZ.Z[i][j];
      rep.max_residual = std::max(rep.max_residual, r.cwiseAbs().maxCoeff());
      lvl += r.squaredNorm();
      rep.residual[i][j] = r;
    }
    sq += tree.dt() * lvl * tree.probability(i);
  }
  rep.rms_residual = std::sqrt(sq / tree.grid().horizon());

  const DiscreteAdjoint exact = discrete_adjoint(field, xi, ol);
  for (int i = 0; i < N; ++i) {
    for (const auto& g : exact.gradient[i]) {
      rep.discrete_max_residual = std::max(rep.discrete_max_residual, g.cwiseAbs().maxCoeff());
    }
  }
  return rep;
}

double GateauxReport::max_relative_gap() const {
  return std::max({gap_formula_duality, gap_formula_fd, gap_duality_fd});
}

GateauxReport gateaux_derivative(const CoefficientField& field, const Vector& xi, const OpenLoopControl& u,
                                 const OpenLoopControl& v) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  GateauxReport g;

  // Variation equation: the homogeneous state equation driven by v.
  const StatePath X = propagate_state(field, u, xi);
  const StatePath X1 = propagate_state(field, v, Vector::Zero(field.dims.n));
  double a = 0.0;
  for (int i = 0; i < N; ++i) {
    double lvl = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      lvl += (field.Q[i][j] * X.X[i][j]).dot(X1.X[i][j]) + (field.R[i][j] * u.u[i][j]).dot(v.u[i][j]);
    }
    a += dt * (lvl * tree.probability(i) + (field.mean_Q1[i] * X.mean[i]).dot(X1.mean[i]));
  }
  double term = 0.0;
  for (std::size_t j = 0; j < tree.width(N); ++j) term += (field.G[j] * X.X[N][j]).dot(X1.X[N][j]);
  g.formula = 2.0 * (a + term * tree.probability(N));

  const DiscreteAdjoint adj = discrete_adjoint(field, xi, u);
  g.duality = 2.0 * weighted_dot(tree, adj.gradient, v.u);

  const double J0 = cost_of(field, xi, u);
  const double e1 = 1e-2;
  const double e2 = 1e-3;
  const double d1 = (cost_of(field, xi, combine(u, 1.0, v, e1)) - J0) / e1;
  const double d2 = (cost_of(field, xi, combine(u, 1.0, v, e2)) - J0) / e2;
  g.finite_difference = (e1 * d2 - e2 * d1) / (e1 - e2);

  const double scale = 1.0 + std::abs(g.formula);
  g.gap_formula_duality = std::abs(g.formula - g.duality) / scale;
  g.gap_formula_fd = std::abs(g.formula - g.finite_difference) / scale;
  g.gap_duality_fd = std::abs(g.duality - g.finite_difference) / scale;
  return g;
}

double check_convexity(const CoefficientField& field, const Vector& xi, const OpenLoopControl& u1,
                       const OpenLoopControl& u2) {
  const double Jmid = cost_of(field, xi, combine(u1, 0.5, u2, 0.5));
  const double J1 = cost_of(field, xi, u1);
  const double J2 = cost_of(field, xi, u2);
  const double dist = control_energy(*field.tree, combine(u1, 1.0, u2, -1.0));
  return Jmid - 0.5 * J1 - 0.5 * J2 + 0.25 * field.delta * dist;
}

DegenerationReport degeneration_check(const ProblemSpec& spec) {
  const CoefficientField field = evaluate_coefficients(spec);
  const auto& tree = *field.tree;
  for (const auto* m : {&field.A1, &field.C1, &field.Q1}) {
    for (const auto& lvl : *m) {
      for (const auto& x : lvl) {
        if (!x.isZero(0.0)) throw Error("degeneration check needs A1 = C1 = Q1 = 0");
      }
    }
  }
  const SolveReport rep = solve_mfslq(spec);
  const RiccatiSolution ric = solve_riccati_tree(field);
  const HatCoefficients hat = hat_coefficients(field, ric);
  FeedbackControl classical{hat.gain, tree.make_map<Vector>(0, tree.steps() - 1, Vector::Zero(field.dims.m))};
  const StatePath path = propagate_state(field, classical, spec.xi);
  const OpenLoopControl u = realize_control(classical, path);

  DegenerationReport d;
  d.dt = tree.dt();
  for (int i = 0; i < tree.steps(); ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      d.max_control_gap = std::max(d.max_control_gap, (u.u[i][j] - rep.u_realized.u[i][j]).cwiseAbs().maxCoeff());
    }
  }
  d.J_star = rep.J_star.total();
  d.J_classical = evaluate_cost(field, path, u).total();
  d.riccati_value = spec.xi.dot(ric.Sigma[0][0] * spec.xi);
  d.value_gap = std::abs(d.J_star - d.riccati_value);
  return d;
}

}  // namespace mfslq
