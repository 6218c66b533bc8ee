#include "test_support.hpp"

#include <cmath>

using namespace mfslq;
using namespace mfslq::test;

TEST_CASE("single-step tree is symmetric") {
  const ScenarioTree tree(TimeGrid(1.0, 1));
  CHECK(tree.width(1) == 2);
  CHECK(tree.probability(1) == 0.5);
  CHECK(tree.brownian(1, 0) == 1.0);
  CHECK(tree.brownian(1, 1) == -1.0);
}

TEST_CASE("three-step tree has eight equally likely leaves") {
  const ScenarioTree tree(TimeGrid(1.0, 3));
  const double h = std::sqrt(1.0 / 3.0);
  CHECK(tree.width(3) == 8);
  CHECK(tree.probability(3) == 0.125);
  for (std::size_t j = 0; j < 8; ++j) {
    const auto inc = tree.path_increments(3, j);
    double w = 0.0;
    for (double d : inc) {
      CHECK(std::abs(d) == doctest::Approx(h));
      w += d;
    }
    CHECK(tree.brownian(3, j) == doctest::Approx(w).epsilon(1e-15));
  }
}

TEST_CASE("level probabilities sum to one exactly") {
  const ScenarioTree tree(TimeGrid(1.0, 4));
  for (int i = 0; i <= 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) s += tree.probability(i);
    CHECK(s == 1.0);
  }
}

TEST_CASE("increments have zero conditional mean and variance dt") {
  const ScenarioTree tree(TimeGrid(2.0, 5));
  for (int i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const double up = tree.brownian(i + 1, 2 * j) - tree.brownian(i, j);
      const double down = tree.brownian(i + 1, 2 * j + 1) - tree.brownian(i, j);
      CHECK(0.5 * (up + down) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
      CHECK(0.5 * (up * up + down * down) == doctest::Approx(tree.dt()).epsilon(1e-13));
    }
  }
}

TEST_CASE("tree size is capped") {
  CHECK_THROWS_AS(ScenarioTree(TimeGrid(1.0, 17)), ResourceLimitError);
  CHECK_NOTHROW(ScenarioTree(TimeGrid(1.0, 20), 20));
}

TEST_CASE("constant rule is the same on every node") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  for (const auto& level : f.A) {
    for (const auto& a : level) CHECK(a(0, 0) == 0.1);
  }
}

TEST_CASE("sign rule separates sibling subtrees") {
  const CoefficientField f = evaluate_coefficients(spec(instances::instance1_random(2)));
  CHECK(f.A[0][0](0, 0) == doctest::Approx(0.1));
  CHECK(f.A[1][0](0, 0) == doctest::Approx(0.3));
  CHECK(f.A[1][1](0, 0) == doctest::Approx(-0.1));
  CHECK(f.C1[1][0](0, 0) == doctest::Approx(0.1));
  CHECK(f.C1[1][1](0, 0) == 0.0);
}

TEST_CASE("rule with the wrong shape names the node") {
  ProblemSpec s = spec(instances::instance1(2));
  s.dims = {2, 2};
  s.xi = Vector::Ones(2);
  auto& c = s.coefficients;
  for (auto* r : {&c.A, &c.A1, &c.C, &c.C1, &c.Q, &c.Q1, &c.G, &c.B, &c.D, &c.R}) {
    *r = CoefficientRule::constant(Matrix::Identity(2, 2));
  }
  c.B = CoefficientRule::of_path([](const PathView&) { return Matrix::Ones(2, 3); });
  try {
    evaluate_coefficients(s);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("B") != std::string::npos);
    CHECK(std::string(e.what()).find("level 0") != std::string::npos);
  }
}

TEST_CASE("assumption report lists every violating node") {
  io::Json doc = instances::instance1_random(3);
  doc["coefficients"]["R"] = io::Json{{"rule", "sign_w"}, {"base", 0.6}, {"scale", 0.5}};
  doc["delta"] = 0.5;
  const CoefficientField f = evaluate_coefficients(spec(doc));
  const AssumptionReport r = validate_assumptions(f);
  CHECK_FALSE(r.h2_ok);
  CHECK(r.min_eig_R == doctest::Approx(0.1));
  // R = 0.1 where W < 0: node 1 of level 1 and node 3 of level 2 (W = -2h).
  std::vector<std::pair<int, std::size_t>> nodes;
  for (const auto& v : r.violations) {
    if (v.assumption == "H2") nodes.emplace_back(v.level, v.index);
  }
  CHECK(nodes == std::vector<std::pair<int, std::size_t>>{{1, 1}, {2, 3}});
}

TEST_CASE("assumptions hold on INSTANCE-1") {
  const AssumptionReport r = validate_assumptions(evaluate_coefficients(instance1()));
  CHECK(r.h1_ok);
  CHECK(r.h2_ok);
  CHECK(r.violations.empty());
  CHECK(r.min_eig_R == 1.0);
}

TEST_CASE("grid vector inner product is dt-weighted") {
  GridVector g = GridVector::constant(Vector::Ones(2), 4, 0.25);
  CHECK(g.inner(g) == doctest::Approx(2.0));
  CHECK(g.norm() == doctest::Approx(std::sqrt(2.0)));
}
