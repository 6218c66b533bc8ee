#include "test_support.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace mfslq;
using namespace mfslq::test;

namespace {

/// Independent enumeration of the scalar INSTANCE-1 cost for u ≡ 0: the mean
/// follows (1 + (A + A1) dt)^i and each leaf path is rolled forward separately.
double enumerate_instance1_zero_control(int N) {
  const double A = 0.1, A1 = 0.05, C = 0.2, C1 = 0.1, Q = 1.0, Q1 = 0.5, G = 1.0;
  const double dt = 1.0 / N;
  const double h = std::sqrt(dt);
  std::vector<double> mean(N + 1);
  for (int i = 0; i <= N; ++i) mean[i] = std::pow(1.0 + (A + A1) * dt, i);
  double J = 0.0;
  const int leaves = 1 << N;
  for (int leaf = 0; leaf < leaves; ++leaf) {
    double x = 1.0;
    double path = 0.0;
    for (int i = 0; i < N; ++i) {
      path += dt * Q * x * x;
      const double dw = ((leaf >> (N - 1 - i)) & 1) ? -h : h;
      x = x + (A * x + A1 * mean[i]) * dt + (C * x + C1 * mean[i]) * dw;
    }
    path += G * x * x;
    J += path / leaves;
  }
  for (int i = 0; i < N; ++i) J += dt * Q1 * mean[i] * mean[i];
  return J;
}

}  // namespace

TEST_CASE("mean under zero control follows the Euler recursion") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  const StatePath p = propagate_state(f, zero_control(*f.tree, 1), Vector::Ones(1));
  CHECK(p.mean[4](0) == doctest::Approx(std::pow(1.0 + 0.15 * 0.25, 4)).epsilon(1e-14));
}

TEST_CASE("cost under zero control matches leaf enumeration") {
  for (int N : {2, 4, 6}) {
    const CoefficientField f = evaluate_coefficients(instance1(N));
    const OpenLoopControl u = zero_control(*f.tree, 1);
    const double J = evaluate_cost(f, propagate_state(f, u, Vector::Ones(1)), u).total();
    CHECK(J == doctest::Approx(enumerate_instance1_zero_control(N)).epsilon(1e-13));
  }
}

TEST_CASE("feedback and its realization give the same path") {
  const CoefficientField f = evaluate_coefficients(spec(instances::instance1_random(4)));
  const auto& tree = *f.tree;
  FeedbackControl fb{tree.make_map<Matrix>(0, 3, scalar(-0.4)), tree.make_map<Vector>(0, 3, Vector::Constant(1, 0.1))};
  const StatePath p = propagate_state(f, fb, Vector::Ones(1));
  const OpenLoopControl ol = realize_control(fb, p);
  const StatePath q = propagate_state(f, ol, Vector::Ones(1));
  for (int i = 0; i <= 4; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) CHECK(p.X[i][j](0) == q.X[i][j](0));
  }
  CHECK(evaluate_cost(f, p, fb).total() == evaluate_cost(f, q, ol).total());
}

TEST_CASE("frozen-mean cost with a unit multiplier") {
  const CoefficientField f = evaluate_coefficients(instance1(4));
  const OpenLoopControl u = zero_control(*f.tree, 1);
  const GridVector alpha = GridVector::zeros(1, 4, 0.25);
  const GridVector lambda = GridVector::constant(Vector::Ones(1), 4, 0.25);
  const StatePath p = propagate_state_frozen_mean(f, u, Vector::Ones(1), alpha);
  const CostBreakdown c1 = evaluate_cost_problem1(f, p, u, alpha, lambda);
  const CostBreakdown c = evaluate_cost(f, p, u);
  double mean_integral = 0.0;
  for (int i = 0; i < 4; ++i) mean_integral += 0.25 * p.mean[i](0);
  CHECK(c1.total() == doctest::Approx(c.total() - c.running_mean + 2.0 * mean_integral).epsilon(1e-14));
}

TEST_CASE("particles stay at zero without initial state or control") {
  ProblemSpec s = instance1(4);
  s.xi = Vector::Zero(1);
  ParticleOptions o;
  o.particles = 100;
  const ParticleSummary r = simulate_mfsde_particles(s, ParticleFeedback::zero(s.dims), o);
  CHECK(r.sup_second_moment == 0.0);
  for (const auto& m : r.mean) CHECK(m(0) == 0.0);
}

TEST_CASE("particle mean agrees with the mean recursion") {
  const ProblemSpec s = instance1(4);
  ParticleOptions o;
  o.particles = 100000;
  const ParticleSummary r = simulate_mfsde_particles(s, ParticleFeedback::zero(s.dims), o);
  const double exact = std::pow(1.0 + 0.15 * 0.25, 4);
  CHECK(std::abs(r.mean.back()(0) - exact) <= 3.0 * r.mean_stderr.back()(0));
}

TEST_CASE("particle simulation is reproducible and seed dependent") {
  const ProblemSpec s = instance1(4);
  ParticleOptions o;
  o.particles = 500;
  o.record_paths = 2;
  const auto a = simulate_mfsde_particles(s, ParticleFeedback::zero(s.dims), o);
  const auto b = simulate_mfsde_particles(s, ParticleFeedback::zero(s.dims), o);
  o.seed += 1;
  const auto c = simulate_mfsde_particles(s, ParticleFeedback::zero(s.dims), o);
  CHECK(a.mean.back()(0) == b.mean.back()(0));
  CHECK(a.recorded[1].back()(0) == b.recorded[1].back()(0));
  CHECK(a.mean.back()(0) != c.mean.back()(0));
  CHECK(counter_normal(7, 3, 2) == counter_normal(7, 3, 2));
}

TEST_CASE("particle simulation rejects a single particle") {
  ParticleOptions o;
  o.particles = 1;
  CHECK_THROWS_AS(simulate_mfsde_particles(instance1(), ParticleFeedback::zero({1, 1}), o), ShapeError);
}

TEST_CASE("counter normals have unit variance") {
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = counter_normal(1, static_cast<std::uint64_t>(k), 0);
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("state estimate constant is stable under perturbation") {
  std::mt19937_64 rng(11);
  auto ratio = [&](const ProblemSpec& s) {
    const CoefficientField f = evaluate_coefficients(s);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const OpenLoopControl u = random_control(*f.tree, s.dims.m, rng, 2.0);
      const StatePath p = propagate_state(f, u, s.xi);
      double sup = 0.0;
      for (const auto& level : p.X) {
        double m2 = 0.0;
        for (const auto& x : level) m2 += x.squaredNorm();
        sup = std::max(sup, m2 / static_cast<double>(level.size()));
      }
      worst = std::max(worst, sup / (s.xi.squaredNorm() + control_energy(*f.tree, u)));
    }
    return worst;
  };
  const double K = ratio(instance1(6));
  CHECK(std::isfinite(K));
  for (int k = 0; k < 10; ++k) {
    io::Json doc = instances::instance1(6);
    for (const char* key : {"A", "A1", "B", "C", "C1", "D"}) {
      doc["coefficients"][key] = doc["coefficients"][key].get<double>() * (0.8 + 0.4 * instances::uniform01(rng()));
    }
    CHECK(ratio(spec(doc)) <= 10.0 * K);
  }
}
