#include "mfslq/riccati.hpp"

#include "mfslq/bsde.hpp"

#include <sstream>

namespace mfslq {

namespace {

/// Ingredients of the one-step feedback at a node: u = -H^{-1}(L X + ell α + Bᵀφ̄ + Dᵀψ).
struct StepData {
  Matrix H;
  Matrix L;
  Matrix ell;      ///< coefficient of α in the feedback numerator
  Matrix Q_alpha;  ///< coefficient of α in the offset driver before the feedback correction
  Matrix Sigma;    ///< Σ_i produced by this step
};

StepData step_data(const CoefficientField& f, RiccatiScheme scheme, int i, std::size_t j,
                   const Matrix& S, const Matrix& P) {
  const double dt = f.dt();
  const Matrix& A = f.A[i][j];
  const Matrix& A1 = f.A1[i][j];
  const Matrix& B = f.B[i][j];
  const Matrix& C = f.C[i][j];
  const Matrix& C1 = f.C1[i][j];
  const Matrix& D = f.D[i][j];
  const Matrix& Q = f.Q[i][j];
  const Matrix& R = f.R[i][j];
  const Eigen::Index n = A.rows();

  StepData d;
  if (scheme == RiccatiScheme::DiscreteDynamicProgramming) {
    const Matrix F = Matrix::Identity(n, n) + dt * A;
    d.H = R + D.transpose() * S * D +
          dt * (B.transpose() * S * B + B.transpose() * P * D + D.transpose() * P * B);
    d.L = B.transpose() * S * F + dt * B.transpose() * P * C + D.transpose() * P * F +
          D.transpose() * S * C;
    d.ell = dt * (B.transpose() * S * A1 + B.transpose() * P * C1 + D.transpose() * P * A1) +
            D.transpose() * S * C1;
    d.Q_alpha = F.transpose() * S * A1 + F.transpose() * P * C1 + dt * C.transpose() * P * A1 +
                C.transpose() * S * C1;
    d.Sigma = dt * Q + F.transpose() * S * F + dt * (F.transpose() * P * C + C.transpose() * P * F) +
              dt * C.transpose() * S * C;
  } else {
    d.H = R + D.transpose() * S * D;
    d.L = B.transpose() * S + D.transpose() * P + D.transpose() * S * C;
    d.ell = D.transpose() * S * C1;
    d.Q_alpha = C.transpose() * S * C1 + P * C1 + S * A1;
    d.Sigma = S + dt * (S * A + A.transpose() * S + P * C + C.transpose() * P +
                        C.transpose() * S * C + Q);
  }
  return d;
}

DefinitenessError gap_failure(int i, std::size_t j, double e) {
  std::ostringstream os;
  os << "Riccati gap matrix is not positive definite at level " << i << " node " << j
     << " (smallest eigenvalue " << e << ")";
  return DefinitenessError(i, j, e, os.str());
}

}  // namespace

RiccatiSolution solve_riccati_tree(const CoefficientField& field, RiccatiScheme scheme) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  for (std::size_t j = 0; j < field.G.size(); ++j) {
    const Matrix& G = field.G[j];
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + G.cwiseAbs().maxCoeff())) {
      throw ShapeError("terminal weight G must be symmetric (leaf " + std::to_string(j) + ")");
    }
  }

  RiccatiSolution sol;
  sol.scheme = scheme;
  sol.Sigma.resize(static_cast<std::size_t>(N) + 1);
  sol.Psi.resize(static_cast<std::size_t>(N));
  sol.S.resize(static_cast<std::size_t>(N));
  sol.gap.resize(static_cast<std::size_t>(N));
  sol.Sigma[N] = field.G;
  sol.min_gap = std::numeric_limits<double>::infinity();
  sol.min_eig_sigma = linalg::min_symmetric_eigenvalue(field.G.front());
  for (const auto& g : field.G) sol.min_eig_sigma = std::min(sol.min_eig_sigma, linalg::min_symmetric_eigenvalue(g));

  for (int i = N - 1; i >= 0; --i) {
    const std::size_t w = tree.width(i);
    sol.Sigma[i].resize(w);
    sol.Psi[i].resize(w);
    sol.S[i].resize(w);
    sol.gap[i].resize(w);
    for (std::size_t j = 0; j < w; ++j) {
      const Matrix S = conditional_mean(sol.Sigma[i + 1], j);
      const Matrix P = conditional_martingale(sol.Sigma[i + 1], j, tree);
      StepData d = step_data(field, scheme, i, j, S, P);
      const double e = linalg::min_symmetric_eigenvalue(d.H);
      if (!(e > kDefinitenessThreshold)) throw gap_failure(i, j, e);
      sol.min_gap = std::min(sol.min_gap, e);
      const Matrix correction = d.L.transpose() * d.H.ldlt().solve(d.L);
      Matrix sigma = d.Sigma - dt * correction;
      if (!sigma.allFinite()) {
        throw NumericalOverflowError(i, "Riccati solution became non-finite at level " + std::to_string(i));
      }
      sigma = linalg::symmetrize(sigma);
      const double es = linalg::min_symmetric_eigenvalue(sigma);
      sol.min_eig_sigma = std::min(sol.min_eig_sigma, es);
      if (es < kPsdWarningThreshold) {
        std::ostringstream os;
        os << "Sigma has eigenvalue " << es << " at level " << i << " node " << j;
        sol.warnings.push_back(os.str());
      }
      sol.max_norm_psi = std::max(sol.max_norm_psi, linalg::spectral_norm(P));
      sol.Sigma[i][j] = std::move(sigma);
      sol.Psi[i][j] = P;
      sol.S[i][j] = S;
      sol.gap[i][j] = std::move(d.H);
    }
  }
  return sol;
}

Matrix riccati_ode_driver(const Matrix& Sigma, const Matrix& A, const Matrix& B, const Matrix& C,
                          const Matrix& D, const Matrix& Q, const Matrix& R) {
  const Matrix H = D.transpose() * Sigma * D + R;
  const Matrix L = B.transpose() * Sigma + D.transpose() * Sigma * C;
  return Sigma * A + A.transpose() * Sigma + C.transpose() * Sigma * C + Q -
         L.transpose() * H.ldlt().solve(L);
}

RiccatiOdeSolution solve_riccati_ode(const ProblemSpec& spec, int substeps) {
  spec.validate();
  if (!spec.deterministic()) {
    throw Error("the Riccati ODE backend needs coefficients that depend on time only");
  }
  if (substeps < 1) throw ShapeError("substeps must be positive");
  const auto& c = spec.coefficients;
  const int N = spec.grid.steps();
  const double T = spec.grid.horizon();
  const double tau = spec.grid.dt() / substeps;

  // dΣ/ds = F(Σ, t) with s = T - t.
  auto rhs = [&](const Matrix& sigma, double t) {
    const Matrix D = c.D.at_time(t);
    const Matrix R = c.R.at_time(t);
    const double e = linalg::min_symmetric_eigenvalue(D.transpose() * sigma * D + R);
    if (!(e > kDefinitenessThreshold)) {
      throw DefinitenessError(-1, 0, e, "Riccati ODE step rejected at t=" + std::to_string(t) +
                                            ": gap matrix lost definiteness");
    }
    return riccati_ode_driver(sigma, c.A.at_time(t), c.B.at_time(t), c.C.at_time(t), D,
                              c.Q.at_time(t), R);
  };

  RiccatiOdeSolution out;
  out.times.resize(static_cast<std::size_t>(N) + 1);
  out.Sigma.resize(static_cast<std::size_t>(N) + 1);
  Matrix sigma = c.G.at_time(T);
  out.times[N] = T;
  out.Sigma[N] = sigma;
  for (int i = N - 1; i >= 0; --i) {
    for (int k = 0; k < substeps; ++k) {
      const double t = spec.grid.time(i + 1) - k * tau;
      const Matrix k1 = rhs(sigma, t);
      const Matrix k2 = rhs(sigma + 0.5 * tau * k1, t - 0.5 * tau);
      const Matrix k3 = rhs(sigma + 0.5 * tau * k2, t - 0.5 * tau);
      const Matrix k4 = rhs(sigma + tau * k3, t - tau);
      sigma = linalg::symmetrize(sigma + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    out.times[i] = spec.grid.time(i);
    out.Sigma[i] = sigma;
  }
  return out;
}

HatCoefficients hat_coefficients(const CoefficientField& field, const RiccatiSolution& ric) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  HatCoefficients hat;
  hat.tree = field.tree;
  hat.dims = field.dims;
  hat.scheme = ric.scheme;
  for (auto* m : {&hat.A_hat, &hat.A1_hat, &hat.B_hat, &hat.B1_hat, &hat.C_hat, &hat.C1_hat,
                  &hat.D_hat, &hat.D1_hat, &hat.M_hat, &hat.N_hat, &hat.Q_hat, &hat.gain,
                  &hat.alpha_gain, &hat.adjoint_gain, &hat.martingale_gain}) {
    *m = tree.make_map<Matrix>(0, N - 1, Matrix());
  }
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const StepData d = step_data(field, ric.scheme, i, j, ric.S[i][j], ric.Psi[i][j]);
      const double e = linalg::min_symmetric_eigenvalue(d.H);
      if (!(e > kDefinitenessThreshold)) throw gap_failure(i, j, e);
      const auto Hinv = d.H.ldlt();
      const Matrix& A = field.A[i][j];
      const Matrix& B = field.B[i][j];
      const Matrix& C = field.C[i][j];
      const Matrix& D = field.D[i][j];
      const Matrix K = -Hinv.solve(d.L);
      const Matrix Ka = -Hinv.solve(d.ell);
      const Matrix Kb = -Hinv.solve(B.transpose());
      const Matrix Kd = -Hinv.solve(D.transpose());
      hat.gain[i][j] = K;
      hat.alpha_gain[i][j] = Ka;
      hat.adjoint_gain[i][j] = Kb;
      hat.martingale_gain[i][j] = Kd;
      hat.A_hat[i][j] = A + B * K;
      hat.C_hat[i][j] = C + D * K;
      hat.A1_hat[i][j] = field.A1[i][j] + B * Ka;
      hat.C1_hat[i][j] = field.C1[i][j] + D * Ka;
      hat.B_hat[i][j] = B * Kb;
      hat.B1_hat[i][j] = B * Kd;
      hat.D_hat[i][j] = D * Kb;
      hat.D1_hat[i][j] = D * Kd;
      hat.M_hat[i][j] = A.transpose() + d.L.transpose() * Kb;
      hat.N_hat[i][j] = C.transpose() + d.L.transpose() * Kd;
      hat.Q_hat[i][j] = d.Q_alpha + d.L.transpose() * Ka;
    }
  }
  return hat;
}

DefinitenessReport check_definiteness(const CoefficientField& field, const RiccatiSolution& ric) {
  DefinitenessReport r;
  r.min_gap = std::numeric_limits<double>::infinity();
  r.min_eig_sigma = std::numeric_limits<double>::infinity();
  const int N = field.steps();
  for (int i = 0; i <= N; ++i) {
    for (std::size_t j = 0; j < ric.Sigma[i].size(); ++j) {
      const Matrix& sigma = ric.Sigma[i][j];
      r.min_eig_sigma = std::min(r.min_eig_sigma, linalg::min_symmetric_eigenvalue(sigma));
      if (i == N) continue;
      const Matrix& D = field.D[i][j];
      const double e = linalg::min_symmetric_eigenvalue(D.transpose() * sigma * D + field.R[i][j]);
      if (e < r.min_gap) {
        r.min_gap = e;
        r.gap_level = i;
        r.gap_index = j;
      }
      r.max_norm_psi = std::max(r.max_norm_psi, linalg::spectral_norm(ric.Psi[i][j]));
    }
  }
  return r;
}

void finalize_h3(AssumptionReport& report, const RiccatiSolution& ric) {
  report.max_norm_Psi = ric.max_norm_psi;
  report.h3_ok = std::isfinite(ric.max_norm_psi);
  report.h3_provisional = false;
  if (!report.h3_ok) report.violations.push_back({"H3", -1, 0, "Psi is not finite"});
}

}  // namespace mfslq
