#include "test_support.hpp"

#include <cmath>

using namespace mfslq;
using namespace mfslq::test;

TEST_CASE("dynamic programming recursion is exact for the scalar closed form") {
  for (int N : {2, 8, 16}) {
    const CoefficientField f = evaluate_coefficients(spec(instances::scalar_closed_form(N)));
    const RiccatiSolution r = solve_riccati_tree(f);
    for (int i = 0; i <= N; ++i) {
      const double t = f.tree->grid().time(i);
      CHECK(r.Sigma[i][0](0, 0) == doctest::Approx(1.0 / (1.0 + (1.0 - t))).epsilon(1e-13));
    }
  }
}

TEST_CASE("Euler scheme converges at first order on the closed form") {
  double prev = 0.0;
  for (int N : {4, 8, 16}) {
    const CoefficientField f = evaluate_coefficients(spec(instances::scalar_closed_form(N)));
    const double err = std::abs(solve_riccati_tree(f, RiccatiScheme::ExplicitEuler).Sigma[0][0](0, 0) - 0.5);
    if (N == 8) CHECK(err <= 0.05);
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.2));
    prev = err;
  }
}

TEST_CASE("tree Riccati converges to the ODE on INSTANCE-1") {
  const ProblemSpec s = instance1(4);
  ProblemSpec fine = s;
  fine.grid = TimeGrid(1.0, 64);
  const double exact = solve_riccati_ode(fine, 64).Sigma.front()(0, 0);
  CHECK(exact == doctest::Approx(1.137157088336174).epsilon(1e-10));
  const RiccatiStudy st = riccati_study(s, {4, 8, 16});
  for (double q : st.ratios) CHECK(q == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("terminal condition and symmetry") {
  const CoefficientField f = evaluate_coefficients(spec(instances::instance1_random(4)));
  const RiccatiSolution r = solve_riccati_tree(f);
  for (const auto& s : r.Sigma[4]) CHECK(s(0, 0) == 1.0);
  CHECK(r.min_eig_sigma >= 0.0);
  CHECK(r.warnings.empty());
  // Random A makes Σ node dependent, so Ψ is not identically zero.
  CHECK(r.max_norm_psi > 0.0);
}

TEST_CASE("singular gap matrix is reported at its node") {
  io::Json doc = instances::scalar_closed_form(1);
  doc["coefficients"]["B"] = 0.0;
  doc["coefficients"]["D"] = 1.0;
  doc["coefficients"]["G"] = -1.0;
  try {
    solve_riccati_tree(evaluate_coefficients(spec(doc)));
    FAIL("expected a definiteness error");
  } catch (const DefinitenessError& e) {
    CHECK(e.level() == 0);
    CHECK(e.index() == 0);
    CHECK(std::abs(e.eigenvalue()) < 1e-12);
  }
}

TEST_CASE("non-symmetric terminal weight is rejected") {
  ProblemSpec s = spec(instances::instance1(2));
  s.dims = {2, 1};
  s.xi = Vector::Ones(2);
  auto& c = s.coefficients;
  for (auto* r : {&c.A, &c.A1, &c.C, &c.C1, &c.Q, &c.Q1}) *r = CoefficientRule::constant(Matrix::Identity(2, 2));
  c.B = CoefficientRule::constant(Matrix::Ones(2, 1));
  c.D = CoefficientRule::constant(Matrix::Zero(2, 1));
  Matrix G(2, 2);
  G << 1.0, 0.5, 0.0, 1.0;
  c.G = CoefficientRule::constant(G);
  CHECK_THROWS_AS(solve_riccati_tree(evaluate_coefficients(s)), ShapeError);
}

TEST_CASE("hat coefficient at the root matches the scalar formula") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  const RiccatiSolution r = solve_riccati_tree(f);
  const HatCoefficients hat = hat_coefficients(f, r);
  const double A = 0.1, A1 = 0.05, B = 1.0, C = 0.2, C1 = 0.1, D = 0.5, R = 1.0, dt = 0.25;
  const double S = r.Sigma[1][0](0, 0);  // deterministic data: Ψ = 0
  const double F = 1.0 + A * dt;
  const double H = R + D * D * S + dt * B * B * S;
  const double L = B * S * F + D * S * C;
  const double ell = dt * B * S * A1 + D * S * C1;
  const double Q_alpha = F * S * A1 + C * S * C1;
  CHECK(hat.Q_hat[0][0](0, 0) == doctest::Approx(Q_alpha - L * ell / H).epsilon(1e-14));
  CHECK(hat.gain[0][0](0, 0) == doctest::Approx(-L / H).epsilon(1e-14));
  CHECK(hat.A_hat[0][0](0, 0) == doctest::Approx(A - B * L / H).epsilon(1e-14));
}

TEST_CASE("gap is at least delta on INSTANCE-1") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  const RiccatiSolution r = solve_riccati_tree(f);
  const DefinitenessReport d = check_definiteness(f, r);
  CHECK(d.min_gap >= 1.0);
  CHECK(d.min_eig_sigma >= 0.0);
  CHECK(d.max_norm_psi == 0.0);
}

TEST_CASE("ODE backend needs deterministic data") {
  CHECK_THROWS_AS(solve_riccati_ode(spec(instances::instance1_random(4))), Error);
}
