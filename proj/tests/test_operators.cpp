#include "test_support.hpp"

#include <random>

using namespace mfslq;
using namespace mfslq::test;

namespace {

struct Setup {
  CoefficientField field;
  RiccatiSolution ric;
  HatCoefficients hat;
  OperatorBundle ops;

  explicit Setup(const ProblemSpec& spec)
      : field(evaluate_coefficients(spec)),
        ric(solve_riccati_tree(field)),
        hat(hat_coefficients(field, ric)),
        ops(assemble_operators(hat, spec.xi)) {}
};

GridVector random_grid(int dim, int steps, double dt, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  GridVector g = GridVector::zeros(dim, steps, dt);
  for (Eigen::Index k = 0; k < g.values.size(); ++k) g.values(k) = U(rng);
  return g;
}

double max_gap(const GridVector& a, const GridVector& b) { return (a.values - b.values).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("P xi is the mean of the closed loop without multipliers") {
  for (const ProblemSpec& sp : {instance1(4), spec(instances::instance1_random(6))}) {
    const Setup s(sp);
    const int N = s.field.steps();
    const GridVector zero = GridVector::zeros(1, N, s.field.dt());
    const FeedbackControl law{s.hat.gain, s.field.tree->make_map<Vector>(0, N - 1, Vector::Zero(1))};
    const StatePath path = propagate_state_frozen_mean(s.field, law, sp.xi, zero);
    CHECK(max_gap(mean_on_cells(path, s.field.dt()), s.ops.p_xi) < 1e-12);
  }
}

TEST_CASE("operators reproduce the hat system by superposition") {
  std::mt19937_64 rng(7);
  const io::Json two_dim = io::read_json(std::string(MFSLQ_SOURCE_DIR) + "/instances/two_dim.json");
  for (const ProblemSpec& sp :
       {instance1(4), spec(instances::instance1_random(5)), spec(instances::with_steps(two_dim, 4))}) {
    const Setup s(sp);
    const int n = s.field.dims.n;
    const int N = s.field.steps();
    for (int trial = 0; trial < 5; ++trial) {
      const GridVector alpha = random_grid(n, N, s.field.dt(), rng);
      const GridVector lambda = random_grid(n, N, s.field.dt(), rng);
      const HatResponse direct = solve_hat_system(s.hat, sp.xi, alpha, lambda);
      GridVector combined = s.ops.p_xi;
      combined.values += s.ops.L1.apply(lambda).values + s.ops.L2.apply(alpha).values;
      CHECK(max_gap(direct.mean, combined) < 1e-10);
    }
  }
}

TEST_CASE("unit multipliers match direct solves") {
  const ProblemSpec spec = instance1(6);
  const Setup s(spec);
  const int N = s.field.steps();
  const GridVector one = GridVector::constant(Vector::Ones(1), N, s.field.dt());
  const GridVector zero = GridVector::zeros(1, N, s.field.dt());
  const Vector x0 = Vector::Zero(1);
  CHECK(max_gap(solve_hat_system(s.hat, x0, zero, one).mean, s.ops.L1.apply(one)) < 1e-10);
  CHECK(max_gap(solve_hat_system(s.hat, x0, one, zero).mean, s.ops.L2.apply(one)) < 1e-10);
}

TEST_CASE("hat system mean agrees with the frozen-mean problem") {
  const ProblemSpec spec = instance1(4);
  const Setup s(spec);
  std::mt19937_64 rng(11);
  const GridVector alpha = random_grid(1, 4, s.field.dt(), rng);
  const GridVector lambda = random_grid(1, 4, s.field.dt(), rng);
  const Problem1Result p1 = solve_problem1(s.field, s.ric, s.hat, alpha, lambda, spec.xi);
  const HatResponse direct = solve_hat_system(s.hat, spec.xi, alpha, lambda);
  CHECK(max_gap(mean_on_cells(p1.X, s.field.dt()), direct.mean) < 1e-12);
}

TEST_CASE("adjoint identity in the dt-weighted inner product") {
  const Setup s(spec(instances::instance1_random(6)));
  std::mt19937_64 rng(3);
  for (const DiscreteOperator* op : {&s.ops.L1, &s.ops.L2}) {
    const DiscreteOperator star = adjoint(*op);
    CHECK(star.is_adjoint);
    for (int k = 0; k < 20; ++k) {
      const GridVector f = random_grid(1, 6, s.field.dt(), rng);
      const GridVector g = random_grid(1, 6, s.field.dt(), rng);
      CHECK(op->apply(f).inner(g) == doctest::Approx(f.inner(star.apply(g))).epsilon(1e-12));
    }
    CHECK(adjoint(star).matrix == op->matrix);
  }
}

TEST_CASE("the first cell does not respond to multipliers") {
  // EX(t_0) = xi regardless of alpha and lambda.
  const Setup s(instance1(5));
  CHECK(s.ops.L1.matrix.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.ops.L2.matrix.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.ops.p_xi.values(0) == 1.0);
}

TEST_CASE("non-uniform grids are rejected") {
  const Setup s(instance1(4));
  DiscreteOperator op = s.ops.L1;
  op.uniform_grid = false;
  CHECK_THROWS_AS(adjoint(op), UnsupportedGridError);
}

TEST_CASE("mismatched grid vectors are rejected") {
  const Setup s(instance1(4));
  CHECK_THROWS_AS(solve_hat_system(s.hat, Vector::Ones(1), GridVector::zeros(1, 3, 0.25), GridVector::zeros(1, 4, 0.25)),
                  ShapeError);
  CHECK_THROWS_AS(solve_hat_system(s.hat, Vector::Ones(2), GridVector::zeros(1, 4, 0.25), GridVector::zeros(1, 4, 0.25)),
                  ShapeError);
}
