// Property tests over randomly drawn small problems.
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace mfslq;
using namespace mfslq::test;

namespace {

io::Json random_matrix(std::mt19937_64& rng, int rows, int cols, double amp) {
  std::uniform_real_distribution<double> U(-amp, amp);
  io::Json m = io::Json::array();
  for (int r = 0; r < rows; ++r) {
    io::Json row = io::Json::array();
    for (int c = 0; c < cols; ++c) row.push_back(U(rng));
    m.push_back(row);
  }
  return m;
}

io::Json random_psd(std::mt19937_64& rng, int n, double shift) {
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  Matrix F(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) F(r, c) = U(rng);
  }
  const Matrix P = F * F.transpose() + shift * Matrix::Identity(n, n);
  io::Json m = io::Json::array();
  for (int r = 0; r < n; ++r) {
    io::Json row = io::Json::array();
    for (int c = 0; c < n; ++c) row.push_back(P(r, c));
    m.push_back(row);
  }
  return m;
}

/// Small problem with random dense coefficients; half of them get a sign rule on A.
io::Json random_instance(std::mt19937_64& rng, int trial) {
  const int n = 1 + trial % 2;
  const int m = 1 + (trial / 2) % 2;
  const int N = 2 + trial % 4;
  io::Json doc{{"name", "random_" + std::to_string(trial)},
               {"dimensions", {{"n", n}, {"m", m}}},
               {"grid", {{"T", 1.0}, {"N", N}}},
               {"xi", random_matrix(rng, n, 1, 1.0)},
               {"delta", 0.5}};
  io::Json xi = io::Json::array();
  for (const auto& row : doc["xi"]) xi.push_back(row[0]);
  doc["xi"] = xi;
  io::Json c;
  c["A"] = random_matrix(rng, n, n, 0.5);
  if (trial % 2 == 1) c["A"] = {{"rule", "sign_w"}, {"base", c["A"]}, {"scale", random_matrix(rng, n, n, 0.3)}};
  c["A1"] = random_matrix(rng, n, n, 0.3);
  c["B"] = random_matrix(rng, n, m, 1.0);
  c["C"] = random_matrix(rng, n, n, 0.3);
  c["C1"] = random_matrix(rng, n, n, 0.2);
  c["D"] = random_matrix(rng, n, m, 0.5);
  c["Q"] = random_psd(rng, n, 0.1);
  c["Q1"] = random_psd(rng, n, 0.0);
  c["R"] = random_psd(rng, m, 0.5);
  c["G"] = random_psd(rng, n, 0.1);
  doc["coefficients"] = c;
  return doc;
}

}  // namespace

TEST_CASE("pipeline equals the brute-force optimum on random problems") {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 16; ++trial) {
    const ProblemSpec s = spec(random_instance(rng, trial));
    CAPTURE(s.name);
    const SolveReport rep = solve_mfslq(s);
    const CoefficientField field = evaluate_coefficients(s);
    const OracleResult o = brute_force_optimal(field, s.xi);
    CHECK(max_control_gap(rep.u_realized, o.u) < 1e-8);
    CHECK(rep.J_star.total() == doctest::Approx(o.J).epsilon(1e-10));
    CHECK(rep.residuals.at("mean_consistency") < 1e-8);
    // Any perturbation of the optimum costs more.
    const OpenLoopControl v = random_control(*field.tree, s.dims.m, rng, 0.1);
    CHECK(cost_of(field, s.xi, combine(o.u, 1.0, v, 1.0)) >= o.J);
  }
}

TEST_CASE("state is affine in the control and linear in the initial state") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 8; ++trial) {
    const ProblemSpec s = spec(random_instance(rng, trial));
    const CoefficientField field = evaluate_coefficients(s);
    const OpenLoopControl u1 = random_control(*field.tree, s.dims.m, rng);
    const OpenLoopControl u2 = random_control(*field.tree, s.dims.m, rng);
    const Vector zero = Vector::Zero(s.dims.n);
    const double a = 0.7, b = -1.3;
    const StatePath x1 = propagate_state(field, u1, zero);
    const StatePath x2 = propagate_state(field, u2, zero);
    const StatePath x12 = propagate_state(field, combine(u1, a, u2, b), zero);
    const StatePath xi_only = propagate_state(field, zero_control(*field.tree, s.dims.m), s.xi);
    const StatePath full = propagate_state(field, u1, s.xi);
    double gap = 0.0, gap_xi = 0.0;
    for (int i = 0; i <= field.steps(); ++i) {
      for (std::size_t j = 0; j < field.tree->width(i); ++j) {
        gap = std::max(gap, (x12.X[i][j] - a * x1.X[i][j] - b * x2.X[i][j]).cwiseAbs().maxCoeff());
        gap_xi = std::max(gap_xi, (full.X[i][j] - xi_only.X[i][j] - x1.X[i][j]).cwiseAbs().maxCoeff());
      }
    }
    CHECK(gap < 1e-12);
    CHECK(gap_xi < 1e-12);
  }
}

TEST_CASE("cost is a convex quadratic along random lines") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    const ProblemSpec s = spec(random_instance(rng, trial));
    const CoefficientField field = evaluate_coefficients(s);
    const OpenLoopControl u = random_control(*field.tree, s.dims.m, rng);
    const OpenLoopControl v = random_control(*field.tree, s.dims.m, rng);
    auto J = [&](double t) { return cost_of(field, s.xi, combine(u, 1.0, v, t)); };
    // Third differences of a quadratic vanish; the second difference bounds delta |v|².
    const double third = J(2.0) - 3.0 * J(1.0) + 3.0 * J(0.0) - J(-1.0);
    CHECK(std::abs(third) < 1e-9 * (1.0 + std::abs(J(0.0))));
    const double second = J(1.0) - 2.0 * J(0.0) + J(-1.0);
    CHECK(second >= 2.0 * s.delta * control_energy(*field.tree, v) - 1e-10);
  }
}

TEST_CASE("Riccati solution is symmetric and positive semidefinite") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const ProblemSpec s = spec(random_instance(rng, trial));
    const CoefficientField field = evaluate_coefficients(s);
    const RiccatiSolution r = solve_riccati_tree(field);
    for (const auto& level : r.Sigma) {
      for (const Matrix& S : level) {
        CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(linalg::min_symmetric_eigenvalue(S) > -1e-12);
      }
    }
    CHECK(r.min_gap >= s.delta - 1e-12);
  }
}
