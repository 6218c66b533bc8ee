#include "test_support.hpp"

#include <cmath>

using namespace mfslq;
using namespace mfslq::test;

TEST_CASE("conditional mean and martingale of a child level") {
  const ScenarioTree tree(TimeGrid(1.0, 4));
  const std::vector<Vector> next{Vector::Constant(1, 3.0), Vector::Constant(1, 1.0)};
  CHECK(conditional_mean(next, 0)(0) == 2.0);
  // Z dt = E[Y ΔW]: (3h - h)/2 = h, so Z = h / dt.
  CHECK(conditional_martingale(next, 0, tree)(0) == doctest::Approx(tree.sqrt_dt() / tree.dt()));
}

TEST_CASE("zero data gives the zero solution") {
  const CoefficientField f = evaluate_coefficients(instance1(3));
  const BsdePath p = solve_linear_bsde(*f.tree, f.A, f.C, {}, std::vector<Vector>(8, Vector::Zero(1)));
  for (const auto& level : p.Y) {
    for (const auto& y : level) CHECK(y(0) == 0.0);
  }
}

TEST_CASE("linear BSDE agrees with the global system") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  const RiccatiSolution r = solve_riccati_tree(f);
  const HatCoefficients hat = hat_coefficients(f, r);
  const auto& tree = *f.tree;
  const NodeMap<Vector> source = tree.make_map<Vector>(0, 3, Vector::Ones(1));
  const std::vector<Vector> terminal(16, Vector::Zero(1));
  for (BsdeScheme scheme : {BsdeScheme::Implicit, BsdeScheme::Explicit}) {
    const BsdePath p = solve_linear_bsde(tree, hat.M_hat, hat.N_hat, source, terminal, scheme);
    FbsdeCoefficients c;
    c.tree = f.tree;
    c.dim = 1;
    const Operand y = scheme == BsdeScheme::Implicit ? Operand::Adjoint : Operand::AdjointNext;
    c.driver.linear = {{y, hat.M_hat}, {Operand::Martingale, hat.N_hat}};
    FbsdeData d;
    d.x0 = Vector::Zero(1);
    d.driver_source = source;
    const FbsdeSolution g = solve_coupled_fbsde(c, d);
    CHECK(p.Y[0][0](0) == doctest::Approx(g.YZ.Y[0][0](0)).epsilon(1e-10));
    CHECK(bsde_residual(tree, p, hat.M_hat, hat.N_hat, source, terminal, scheme) < 1e-13);
  }
}

TEST_CASE("implicit step with singular I - dt M is rejected") {
  const ScenarioTree tree(TimeGrid(1.0, 2));
  const NodeMap<Matrix> M = tree.make_map<Matrix>(0, 1, scalar(2.0));  // dt = 1/2
  CHECK_THROWS_AS(solve_linear_bsde(tree, M, {}, {}, std::vector<Vector>(4, Vector::Ones(1))), StepSizeError);
}

TEST_CASE("Picard iteration matches the global solve with node-dependent A1") {
  io::Json doc = instances::instance1(6);
  doc["coefficients"]["A1"] = io::Json{{"rule", "cos_w"}, {"base", 0.05}, {"scale", 0.1}};
  const CoefficientField f = evaluate_coefficients(spec(doc));
  const PicardComparison p = compare_meanfield_bsde(f);
  CHECK(p.gap <= 1e-9);
  CHECK(p.max_ratio < 1.0);
  CHECK(p.iterations > 1);
}

TEST_CASE("Picard iteration without mean-field coupling stops at once") {
  const CoefficientField f = evaluate_coefficients(spec(instances::without_mean_field(instances::instance1(4))));
  const auto& tree = *f.tree;
  const MeanFieldBsdeResult r =
      solve_meanfield_bsde(f, tree.make_map<Vector>(0, 3, Vector::Ones(1)), std::vector<Vector>(16, Vector::Ones(1)));
  CHECK(r.iterations == 1);
}

TEST_CASE("Picard iteration reports non-convergence") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  MeanFieldBsdeOptions o;
  o.max_iter = 2;
  o.tol = 0.0;
  try {
    solve_meanfield_bsde(f, {}, std::vector<Vector>(16, Vector::Ones(1)), o);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.iterations() == 2);
  }
}

TEST_CASE("tilde system agrees with the Riccati decoupling") {
  for (int N : {4, 8}) {
    const CoefficientField f = evaluate_coefficients(instance1(N));
    const RiccatiSolution r = solve_riccati_tree(f);
    const AdjointChainSolver chain(f);
    const GridVector zero = GridVector::zeros(1, N, f.dt());
    const FbsdeSolution t = chain.tilde(Vector::Ones(1), zero, zero);
    // With α = λ = 0 the offset φ vanishes, so Ỹ(0) = Σ(0) X̃(0) up to the scheme gap.
    CHECK(std::abs(t.YZ.Y[0][0](0) - r.Sigma[0][0](0, 0)) <= 2.0 * f.dt() * 2.0);
  }
}

TEST_CASE("singular coupled system reports its rank") {
  FbsdeCoefficients c;
  c.tree = std::make_shared<const ScenarioTree>(TimeGrid(1.0, 2));
  c.dim = 1;
  // Y_i = E[Y_{i+1}] + dt (-Y_i / dt) leaves Y_i undetermined: 1 - 1 = 0 on the diagonal.
  c.driver.linear = {{Operand::Adjoint, c.tree->make_map<Matrix>(0, 1, scalar(2.0))}};
  try {
    CoupledFbsdeSolver solver(c);
    FAIL("expected a singular system");
  } catch (const SingularSystemError& e) {
    CHECK(e.report().nullity() > 0);
  }
}
