#include "mfslq/tree_sde.hpp"

#include "mfslq/bsde.hpp"
#include "mfslq/operators.hpp"

#include <cmath>
#include <numbers>

namespace mfslq {

OpenLoopControl zero_control(const ScenarioTree& tree, int m) {
  return {tree.make_map<Vector>(0, tree.steps() - 1, Vector::Zero(m))};
}

OpenLoopControl constant_control(const ScenarioTree& tree, const Vector& value) {
  return {tree.make_map<Vector>(0, tree.steps() - 1, value)};
}

Vector level_mean(const std::vector<Vector>& level) {
  Vector s = Vector::Zero(level.front().size());
  for (const auto& v : level) s += v;
  return s / static_cast<double>(level.size());
}

namespace {

Vector control_at(const ControlProcess& u, int level, std::size_t j, const Vector& x) {
  if (const auto* ol = std::get_if<OpenLoopControl>(&u)) return ol->u[level][j];
  const auto& fb = std::get<FeedbackControl>(u);
  return fb.gain[level][j] * x + fb.offset[level][j];
}

void check_control(const CoefficientField& field, const ControlProcess& u) {
  const int N = field.steps();
  const auto check_level = [&](std::size_t size, int level) {
    if (size != field.tree->width(level)) {
      throw ShapeError("control is not defined on every node of level " + std::to_string(level));
    }
  };
  if (const auto* ol = std::get_if<OpenLoopControl>(&u)) {
    if (static_cast<int>(ol->u.size()) < N) throw ShapeError("control has too few levels");
    for (int i = 0; i < N; ++i) {
      check_level(ol->u[i].size(), i);
      for (const auto& v : ol->u[i]) {
        if (v.size() != field.dims.m) throw ShapeError("control vector has wrong length");
      }
    }
  } else {
    const auto& fb = std::get<FeedbackControl>(u);
    if (static_cast<int>(fb.gain.size()) < N || static_cast<int>(fb.offset.size()) < N) {
      throw ShapeError("feedback law has too few levels");
    }
    for (int i = 0; i < N; ++i) {
      check_level(fb.gain[i].size(), i);
      check_level(fb.offset[i].size(), i);
    }
  }
}

StatePath propagate(const CoefficientField& field, const ControlProcess& u, const Vector& xi,
                    const GridVector* frozen) {
  if (xi.size() != field.dims.n) throw ShapeError("initial state has wrong length");
  check_control(field, u);
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  const double h = tree.sqrt_dt();

  StatePath path;
  path.X.resize(static_cast<std::size_t>(N) + 1);
  path.X[0] = {xi};
  path.mean.resize(static_cast<std::size_t>(N) + 1);
  path.mean[0] = xi;
  for (int i = 0; i < N; ++i) {
    const Vector ex = frozen ? Vector(frozen->cell(i)) : path.mean[i];
    const auto& cur = path.X[i];
    auto& next = path.X[i + 1];
    next.resize(2 * cur.size());
    for (std::size_t j = 0; j < cur.size(); ++j) {
      const Vector uj = control_at(u, i, j, cur[j]);
      const Vector drift = field.A[i][j] * cur[j] + field.A1[i][j] * ex + field.B[i][j] * uj;
      const Vector diff = field.C[i][j] * cur[j] + field.C1[i][j] * ex + field.D[i][j] * uj;
      next[2 * j] = cur[j] + dt * drift + h * diff;
      next[2 * j + 1] = cur[j] + dt * drift - h * diff;
    }
    path.mean[i + 1] = level_mean(next);
  }
  return path;
}

double weighted_quadratic(const std::vector<Vector>& x, const std::vector<Matrix>& q) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j].dot(q[j] * x[j]);
  return s / static_cast<double>(x.size());
}

}  // namespace

StatePath propagate_state(const CoefficientField& field, const ControlProcess& u, const Vector& xi) {
  return propagate(field, u, xi, nullptr);
}

StatePath propagate_state_frozen_mean(const CoefficientField& field, const ControlProcess& u,
                                      const Vector& xi, const GridVector& alpha) {
  if (alpha.dim != field.dims.n || alpha.steps != field.steps()) {
    throw ShapeError("frozen mean trajectory does not match the grid");
  }
  return propagate(field, u, xi, &alpha);
}

OpenLoopControl realize_control(const ControlProcess& u, const StatePath& path) {
  if (const auto* ol = std::get_if<OpenLoopControl>(&u)) return *ol;
  const auto& fb = std::get<FeedbackControl>(u);
  OpenLoopControl out;
  out.u.resize(fb.gain.size());
  for (std::size_t i = 0; i < fb.gain.size(); ++i) {
    out.u[i].resize(fb.gain[i].size());
    for (std::size_t j = 0; j < fb.gain[i].size(); ++j) {
      out.u[i][j] = fb.gain[i][j] * path.X[i][j] + fb.offset[i][j];
    }
  }
  return out;
}

CostBreakdown evaluate_cost(const CoefficientField& field, const StatePath& path,
                            const ControlProcess& u) {
  const int N = field.steps();
  const double dt = field.dt();
  const OpenLoopControl ol = realize_control(u, path);
  CostBreakdown c;
  for (int i = 0; i < N; ++i) {
    c.running_state += dt * weighted_quadratic(path.X[i], field.Q[i]);
    c.running_mean += dt * path.mean[i].dot(field.mean_Q1[i] * path.mean[i]);
    c.running_control += dt * weighted_quadratic(ol.u[i], field.R[i]);
  }
  c.terminal = weighted_quadratic(path.X[N], field.G);
  return c;
}

CostBreakdown evaluate_cost_problem1(const CoefficientField& field, const StatePath& path,
                                     const ControlProcess& u, const GridVector& alpha,
                                     const GridVector& lambda) {
  const int N = field.steps();
  const double dt = field.dt();
  if (alpha.steps != N || lambda.steps != N || alpha.dim != field.dims.n ||
      lambda.dim != field.dims.n) {
    throw ShapeError("alpha and lambda must be grid vectors of length n*N");
  }
  const OpenLoopControl ol = realize_control(u, path);
  CostBreakdown c;
  for (int i = 0; i < N; ++i) {
    const Vector a = alpha.cell(i);
    c.running_state += dt * weighted_quadratic(path.X[i], field.Q[i]);
    c.running_mean += dt * a.dot(field.mean_Q1[i] * a);
    c.running_control += dt * weighted_quadratic(ol.u[i], field.R[i]);
    c.multiplier += 2.0 * dt * lambda.cell(i).dot(path.mean[i] - a);
  }
  c.terminal = weighted_quadratic(path.X[N], field.G);
  return c;
}

CostBreakdown evaluate_cost_problem2(const CoefficientField& field, const FbsdeSolution& tilde,
                                     const GridVector& alpha, const GridVector& lambda,
                                     const GridVector& beta, const OperatorBundle& ops) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  for (const GridVector* g : {&alpha, &lambda, &beta, &ops.p_xi}) {
    if (g->steps != N || g->dim != field.dims.n) throw ShapeError("grid vector does not match the tree");
  }
  for (const DiscreteOperator* op : {&ops.L1, &ops.L2}) {
    if (op->steps != N || op->dim != field.dims.n) throw ShapeError("operator does not match the tree");
  }
  CostBreakdown c;
  for (int i = 0; i < N; ++i) {
    const Vector a = alpha.cell(i);
    c.running_state += dt * weighted_quadratic(tilde.X.X[i], field.Q[i]);
    c.running_mean += dt * a.dot(field.mean_Q1[i] * a);
    double ctrl = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector y = conditional_mean(tilde.YZ.Y[i + 1], j);
      const Vector& z = tilde.YZ.Z[i][j];
      const auto rinv = field.R[i][j].llt();
      const Vector bty = field.B[i][j].transpose() * y;
      const Vector dtz = field.D[i][j].transpose() * z;
      ctrl += bty.dot(rinv.solve(bty)) + 2.0 * bty.dot(rinv.solve(dtz)) + dtz.dot(rinv.solve(dtz));
    }
    c.running_control += dt * ctrl / static_cast<double>(tree.width(i));
  }
  c.terminal = weighted_quadratic(tilde.X.X[N], field.G);
  const GridVector constraint{alpha.dim, N, dt,
                              ops.p_xi.values + ops.L1.matrix * lambda.values +
                                  ops.L2.matrix * alpha.values - alpha.values};
  c.multiplier = 2.0 * beta.inner(constraint);
  return c;
}

double control_energy(const ScenarioTree& tree, const OpenLoopControl& u) {
  double s = 0.0;
  for (int i = 0; i < tree.steps(); ++i) {
    double lvl = 0.0;
    for (const auto& v : u.u[i]) lvl += v.squaredNorm();
    s += tree.dt() * lvl / static_cast<double>(tree.width(i));
  }
  return s;
}

OpenLoopControl combine(const OpenLoopControl& u1, double a, const OpenLoopControl& u2, double b) {
  OpenLoopControl out = u1;
  for (std::size_t i = 0; i < out.u.size(); ++i) {
    for (std::size_t j = 0; j < out.u[i].size(); ++j) out.u[i][j] = a * u1.u[i][j] + b * u2.u[i][j];
  }
  return out;
}

// ---------------------------------------------------------------------------

ParticleFeedback ParticleFeedback::zero(const Dimensions& dims) {
  return {[dims](const PathView&) { return Matrix::Zero(dims.m, dims.n); },
          [dims](const PathView&) { return Vector::Zero(dims.m); }};
}

ParticleFeedback ParticleFeedback::time_indexed(std::vector<Matrix> gains, std::vector<Vector> offsets) {
  return {[g = std::move(gains)](const PathView& v) { return g.at(v.level); },
          [o = std::move(offsets)](const PathView& v) { return o.at(v.level); }};
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t particle, std::uint64_t step) {
  const std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(particle * 0x632BE59BD9B4E019ULL + step));
  const double u1 = to_unit(splitmix64(key));
  const double u2 = to_unit(splitmix64(key ^ 0xD1B54A32D192ED03ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

ParticleSummary simulate_mfsde_particles(const ProblemSpec& spec, const ParticleFeedback& u,
                                         const ParticleOptions& options) {
  spec.validate();
  if (options.particles < 2) throw ShapeError("the particle simulation needs at least 2 particles");
  const int steps = options.steps > 0 ? options.steps : spec.grid.steps();
  const TimeGrid grid(spec.grid.horizon(), steps);
  const double dt = grid.dt();
  const double h = std::sqrt(dt);
  const int n = spec.dims.n;
  const std::size_t P = options.particles;
  const auto& c = spec.coefficients;
  const CoefficientRule zero = CoefficientRule::constant(Matrix::Zero(n, n));
  const CoefficientRule& A1 = c.A1.empty() ? zero : c.A1;
  const CoefficientRule& C1 = c.C1.empty() ? zero : c.C1;

  std::vector<Vector> x(P, spec.xi);
  std::vector<double> w(P, 0.0);
  std::vector<std::vector<double>> incs(P);
  for (auto& v : incs) v.reserve(static_cast<std::size_t>(steps));

  ParticleSummary out;
  const std::size_t record = std::min(options.record_paths, P);
  out.recorded.assign(record, {});

  auto summarize = [&](int i) {
    Vector mean = Vector::Zero(n);
    double second = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      mean += x[p];
      second += x[p].squaredNorm();
    }
    mean /= static_cast<double>(P);
    second /= static_cast<double>(P);
    Vector var = Vector::Zero(n);
    for (std::size_t p = 0; p < P; ++p) var += (x[p] - mean).cwiseAbs2();
    var /= static_cast<double>(P - 1);
    if (!mean.allFinite() || !std::isfinite(second)) {
      throw NumericalOverflowError(i, "particle state became non-finite at step " + std::to_string(i));
    }
    out.times.push_back(grid.time(i));
    out.mean.push_back(mean);
    out.mean_stderr.push_back((var / static_cast<double>(P)).cwiseSqrt());
    out.second_moment.push_back(second);
    out.sup_second_moment = std::max(out.sup_second_moment, second);
    for (std::size_t p = 0; p < record; ++p) out.recorded[p].push_back(x[p]);
    return mean;
  };

  Vector mean = summarize(0);
  for (int i = 0; i < steps; ++i) {
    const double t = grid.time(i);
    const bool frozen_rules = spec.deterministic();
    Matrix mA, mA1, mB, mC, mC1, mD;
    if (frozen_rules) {
      mA = c.A.at_time(t), mA1 = A1.at_time(t), mB = c.B.at_time(t);
      mC = c.C.at_time(t), mC1 = C1.at_time(t), mD = c.D.at_time(t);
    }
    std::vector<Vector> next(P);
    for (std::size_t p = 0; p < P; ++p) {
      const PathView view{i, p, t, w[p], incs[p]};
      if (!frozen_rules) {
        mA = c.A(view), mA1 = A1(view), mB = c.B(view);
        mC = c.C(view), mC1 = C1(view), mD = c.D(view);
      }
      const Vector up = u.gain(view) * x[p] + u.offset(view);
      const Vector drift = mA * x[p] + mA1 * mean + mB * up;
      const Vector diff = mC * x[p] + mC1 * mean + mD * up;
      const double dw = h * counter_normal(options.seed, p, static_cast<std::uint64_t>(i));
      next[p] = x[p] + dt * drift + dw * diff;
      w[p] += dw;
      incs[p].push_back(dw);
    }
    x.swap(next);
    mean = summarize(i + 1);
  }
  return out;
}

}  // namespace mfslq
