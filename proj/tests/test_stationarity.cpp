#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace mfslq;
using namespace mfslq::test;

TEST_CASE("INSTANCE-1 optimum") {
  const SolveReport rep = solve_mfslq(instance1(4));
  CHECK(rep.J_star.total() == doctest::Approx(kInstance1Cost).epsilon(1e-10));
  const std::array<double, 4> alpha{1.0, 0.777969, 0.614226, 0.496722};
  const std::array<double, 4> lambda{0.0, 0.414197, 0.327236, 0.264453};
  for (int i = 0; i < 4; ++i) {
    CHECK(rep.multipliers.alpha.values(i) == doctest::Approx(alpha[i]).epsilon(1e-5));
    CHECK(rep.multipliers.lambda.values(i) == doctest::Approx(lambda[i]).epsilon(1e-5));
  }
  // X(t_0) = xi is deterministic, so the multiplier on the first cell is free:
  // exactly one null direction, resolved to zero by the minimum-norm solve.
  CHECK(rep.nonunique);
  CHECK(rep.kkt_rank.nullity() == 1);
  CHECK(rep.multipliers.lambda.values(0) == 0.0);
  for (const char* key : {"kkt_alpha_line", "kkt_lambda_line", "kkt_consistency_line", "mean_consistency",
                          "closed_loop_vs_state_equation"}) {
    CAPTURE(key);
    CHECK(rep.residuals.at(key) < 1e-10);
  }
}

TEST_CASE("alpha equals the optimal mean") {
  for (const io::Json& doc : {instances::instance1(6), instances::instance1_random(6)}) {
    const SolveReport rep = solve_mfslq(spec(doc));
    for (int i = 0; i < rep.tree->steps(); ++i) {
      CHECK(std::abs(rep.X_star.mean[i](0) - rep.multipliers.alpha.values(i)) < 1e-10);
    }
  }
}

TEST_CASE("random-coefficient variant") {
  const SolveReport rep = solve_mfslq(spec(instances::instance1_random(4)));
  CHECK(rep.J_star.total() == doctest::Approx(kInstance1RandomCost).epsilon(1e-10));
}

TEST_CASE("zero cost instance has zero value") {
  const SolveReport rep = solve_mfslq(spec(instances::zero_cost(4)));
  CHECK(std::abs(rep.J_star.total()) < 1e-20);
}

TEST_CASE("relaxed problem cost equals the true cost at the optimum") {
  for (const io::Json& doc : {instances::instance1(4), instances::instance1_random(5)}) {
    const ProblemSpec s = spec(doc);
    const CoefficientField field = evaluate_coefficients(s);
    const RiccatiSolution ric = solve_riccati_tree(field);
    const HatCoefficients hat = hat_coefficients(field, ric);
    const OperatorBundle ops = assemble_operators(hat, s.xi);
    const AdjointResponse resp = assemble_adjoint_response(field, s.xi);
    const StationarityResult st = solve_stationarity(resp, ops);
    const SolveReport rep = recover_control(field, ric, hat, st.triple, s.xi);
    const AdjointChainSolver chain(field);
    const FbsdeSolution tilde = chain.tilde(s.xi, st.triple.alpha, st.triple.lambda);
    const CostBreakdown c2 = evaluate_cost_problem2(field, tilde, st.triple.alpha, st.triple.lambda, st.triple.beta, ops);
    CHECK(c2.total() == doctest::Approx(evaluate_cost(field, rep.X_star, rep.u_star.feedback()).total()).epsilon(1e-8));
  }
}

TEST_CASE("adjoint response maps are affine") {
  const ProblemSpec s = instance1(5);
  const CoefficientField field = evaluate_coefficients(s);
  const AdjointResponse resp = assemble_adjoint_response(field, s.xi);
  const AdjointChainSolver chain(field);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    GridVector alpha = GridVector::zeros(1, 5, field.dt());
    GridVector lambda = alpha;
    for (int i = 0; i < 5; ++i) {
      alpha.values(i) = U(rng);
      lambda.values(i) = U(rng);
    }
    const auto [ga, gl] = chain.gradient(s.xi, alpha, lambda);
    const Vector ra = resp.M_alpha * alpha.values + resp.M_lambda * lambda.values + resp.r_xi;
    const Vector rl = resp.K_alpha * alpha.values + resp.K_lambda * lambda.values + resp.k_xi;
    CHECK((ga.values - ra).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((gl.values - rl).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("problem with frozen mean is solved by its feedback") {
  // Freezing alpha at the optimal mean and lambda at the optimal multiplier gives back u*.
  const ProblemSpec s = instance1(4);
  const CoefficientField field = evaluate_coefficients(s);
  const RiccatiSolution ric = solve_riccati_tree(field);
  const HatCoefficients hat = hat_coefficients(field, ric);
  const SolveReport rep = solve_mfslq(s);
  const Problem1Result p1 =
      solve_problem1(field, ric, hat, rep.multipliers.alpha, rep.multipliers.lambda, s.xi);
  CHECK(max_control_gap(p1.u, rep.u_realized) < 1e-10);
}

TEST_CASE("pipeline failures name their stage") {
  ProblemSpec s = instance1(4);
  s.grid = TimeGrid(1.0, 17);
  try {
    solve_mfslq(s);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "tree");
    CHECK_THROWS_AS(std::rethrow_if_nested(e), ResourceLimitError);
  }
}

TEST_CASE("assumption violations stop the pipeline") {
  io::Json doc = instances::instance1(4);
  doc["coefficients"]["R"] = 0.5;
  try {
    solve_mfslq(spec(doc));
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "assumptions");
    CHECK(std::string(e.what()).find("H2") != std::string::npos);
  }
}
