#include "mfslq/verification.hpp"

#include <cmath>
#include <sstream>

namespace mfslq {

bool VerificationReport::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

const Check* VerificationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

OpenLoopControl random_control(const ScenarioTree& tree, int m, std::mt19937_64& rng, double amplitude) {
  OpenLoopControl u = zero_control(tree, m);
  for (auto& level : u.u) {
    for (auto& v : level) {
      for (int k = 0; k < m; ++k) v(k) = amplitude * (2.0 * instances::uniform01(rng()) - 1.0);
    }
  }
  return u;
}

double max_control_gap(const OpenLoopControl& a, const OpenLoopControl& b) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    for (std::size_t j = 0; j < a.u[i].size(); ++j) g = std::max(g, (a.u[i][j] - b.u[i][j]).cwiseAbs().maxCoeff());
  }
  return g;
}

double max_abs(const OpenLoopControl& u) {
  double g = 0.0;
  for (const auto& level : u.u) {
    for (const auto& v : level) g = std::max(g, v.cwiseAbs().maxCoeff());
  }
  return g;
}

PicardComparison compare_meanfield_bsde(const CoefficientField& field) {
  const auto& tree = *field.tree;
  const int N = tree.steps();
  const int n = field.dims.n;
  const NodeMap<Vector> source = tree.make_map<Vector>(0, N - 1, Vector::Ones(n));
  const std::vector<Vector> terminal(tree.width(N), Vector::Ones(n));
  const MeanFieldBsdeResult picard = solve_meanfield_bsde(field, source, terminal);

  auto transposed = [&](const NodeMap<Matrix>& m) {
    NodeMap<Matrix> t = m;
    for (auto& level : t) {
      for (auto& x : level) x.transposeInPlace();
    }
    return t;
  };
  FbsdeCoefficients c;
  c.tree = field.tree;
  c.dim = n;
  c.driver.linear = {{Operand::Adjoint, transposed(field.A)}, {Operand::Martingale, transposed(field.C)}};
  c.driver.mean_field = {{Operand::Adjoint, {}, transposed(field.A1)},
                         {Operand::Martingale, {}, transposed(field.C1)}};
  FbsdeData d;
  d.x0 = Vector::Zero(n);
  d.driver_source = source;
  d.terminal_offset = terminal;
  const FbsdeSolution global = solve_coupled_fbsde(c, d);

  PicardComparison out;
  for (int i = 0; i <= N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      out.gap = std::max(out.gap, (picard.path.Y[i][j] - global.YZ.Y[i][j]).cwiseAbs().maxCoeff());
      if (i < N) out.gap = std::max(out.gap, (picard.path.Z[i][j] - global.YZ.Z[i][j]).cwiseAbs().maxCoeff());
    }
  }
  out.iterations = picard.iterations;
  out.ratios = picard.contraction_ratios;
  for (double r : out.ratios) out.max_ratio = std::max(out.max_ratio, r);
  return out;
}

namespace {

class CheckList {
 public:
  /// value ≤ threshold
  void below(std::string name, double value, double threshold, std::string detail = {}) {
    checks.push_back({std::move(name), value, threshold, std::isfinite(value) && value <= threshold, std::move(detail)});
  }
  std::vector<Check> checks;
};

bool mean_field_free(const CoefficientField& f) {
  for (const auto* m : {&f.A1, &f.C1, &f.Q1}) {
    for (const auto& level : *m) {
      for (const auto& x : level) {
        if (!x.isZero(0.0)) return false;
      }
    }
  }
  return true;
}

GridVector random_grid(int dim, int steps, double dt, std::mt19937_64& rng) {
  GridVector g = GridVector::zeros(dim, steps, dt);
  for (Eigen::Index k = 0; k < g.values.size(); ++k) g.values(k) = 2.0 * instances::uniform01(rng()) - 1.0;
  return g;
}

}  // namespace

VerificationReport verify_instance(const ProblemSpec& spec, const VerifyOptions& options) {
  VerificationReport rep;
  rep.instance = spec.name;
  CheckList out;
  std::mt19937_64 rng(options.seed);

  const SolveReport sol = solve_mfslq(spec);
  const CoefficientField field = evaluate_coefficients(spec);
  const auto& tree = *field.tree;
  const double dt = tree.dt();
  const int m = spec.dims.m;

  // Oracle equivalence.
  const OracleResult oracle = brute_force_optimal(field, spec.xi);
  const double J = sol.J_star.total();
  const double u_scale = max_abs(oracle.u);
  out.below("oracle_cost_gap", std::abs(J - oracle.J), options.tol * (1.0 + std::abs(oracle.J)));
  out.below("oracle_control_gap", max_control_gap(sol.u_realized, oracle.u), 1e-6 * (1.0 + u_scale));
  out.below("oracle_gradient_norm", oracle.gradient_norm, 1e-8 * (1.0 + std::abs(oracle.J)));

  // Stationarity system and consistency of the closed-loop mean.
  for (const char* key : {"kkt_alpha_line", "kkt_lambda_line", "kkt_consistency_line"}) {
    out.below(key, sol.residuals.at(key), options.tol);
  }
  out.below("mean_consistency", sol.residuals.at("mean_consistency"), options.tol);
  out.below("closed_loop_vs_state_equation", sol.residuals.at("closed_loop_vs_state_equation"), options.tol);
  out.below("assumptions_h2", sol.assumptions.h2_ok ? 0.0 : 1.0, 0.0);
  out.below("riccati_gap_deficit", std::max(0.0, spec.delta - sol.min_gap), 1e-10);

  // Maximum principle at the oracle optimum.
  const SmpReport smp = check_smp(field, spec.xi, oracle.u);
  const double smp_budget = kSmpConstant * dt * (1.0 + u_scale);
  out.below("smp_residual", smp.max_residual, smp_budget, "budget C*dt*(1+max|u|)");
  out.below("smp_discrete_residual", smp.discrete_max_residual, 1e-8 * (1.0 + u_scale));

  // Gateaux derivative: three computations agree, and it vanishes at u*.
  double gateaux_gap = 0.0;
  for (int k = 0; k < options.gateaux_pairs; ++k) {
    const OpenLoopControl u = random_control(tree, m, rng);
    const OpenLoopControl v = random_control(tree, m, rng);
    gateaux_gap = std::max(gateaux_gap, gateaux_derivative(field, spec.xi, u, v).max_relative_gap());
  }
  out.below("gateaux_pairwise_gap", gateaux_gap, 1e-8);
  double stationary = 0.0;
  for (int k = 0; k < options.gateaux_pairs; ++k) {
    const OpenLoopControl v = random_control(tree, m, rng);
    const double d = gateaux_derivative(field, spec.xi, sol.u_realized, v).formula;
    stationary = std::max(stationary, std::abs(d) / std::sqrt(control_energy(tree, v)));
  }
  out.below("gateaux_at_optimum", stationary, kSmpConstant * dt, "|dJ(u*)[v]| / |v| against C*dt");

  // Strict convexity with the instance's delta.
  double convexity = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < options.convexity_pairs; ++k) {
    const OpenLoopControl u1 = random_control(tree, m, rng, 2.0);
    const OpenLoopControl u2 = random_control(tree, m, rng, 2.0);
    convexity = std::max(convexity, check_convexity(field, spec.xi, u1, u2));
  }
  out.below("convexity_gap", convexity, 1e-10);

  // Operator algebra.
  const RiccatiSolution ric = solve_riccati_tree(field);
  const HatCoefficients hat = hat_coefficients(field, ric);
  const OperatorBundle ops = assemble_operators(hat, spec.xi);
  const int n = spec.dims.n;
  const int N = tree.steps();
  double adjoint_gap = 0.0;
  for (const DiscreteOperator* op : {&ops.L1, &ops.L2}) {
    const DiscreteOperator star = adjoint(*op);
    for (int k = 0; k < options.operator_pairs; ++k) {
      const GridVector f = random_grid(n, N, dt, rng);
      const GridVector g = random_grid(n, N, dt, rng);
      const double a = op->apply(f).inner(g);
      const double b = f.inner(star.apply(g));
      adjoint_gap = std::max(adjoint_gap, std::abs(a - b) / (1.0 + std::abs(a)));
    }
  }
  out.below("operator_adjoint_identity", adjoint_gap, 1e-10);
  double superposition = 0.0;
  for (int k = 0; k < 10; ++k) {
    const GridVector alpha = random_grid(n, N, dt, rng);
    const GridVector lambda = random_grid(n, N, dt, rng);
    const Vector direct = solve_hat_system(hat, spec.xi, alpha, lambda).mean.values;
    const Vector composed = ops.p_xi.values + ops.L1.matrix * lambda.values + ops.L2.matrix * alpha.values;
    superposition = std::max(superposition, (direct - composed).cwiseAbs().maxCoeff() /
                                                (1.0 + direct.cwiseAbs().maxCoeff()));
  }
  out.below("operator_superposition", superposition, 1e-10);

  // Mean-field BSDE: Picard fixed point against the global solve.
  const PicardComparison picard = compare_meanfield_bsde(field);
  out.below("meanfield_bsde_picard_gap", picard.gap, 1e-9);
  out.below("meanfield_bsde_contraction", picard.max_ratio, 1.0 - 1e-12);

  if (mean_field_free(field)) {
    const DegenerationReport deg = degeneration_check(spec);
    out.below("degeneration_control_gap", deg.max_control_gap, 1e-8);
    out.below("degeneration_value_gap", deg.value_gap, 2.0 * dt * (1.0 + std::abs(deg.J_star)));
  }

  io::Json particle = nullptr;
  if (options.particles > 0 && spec.deterministic()) {
    std::vector<Matrix> gains;
    std::vector<Vector> offsets;
    for (int i = 0; i < N; ++i) {
      gains.push_back(sol.u_star.gain[i][0]);
      offsets.push_back(sol.u_star.offset[i][0]);
    }
    ParticleOptions po;
    po.particles = options.particles;
    po.seed = options.seed;
    const ParticleSummary ps =
        simulate_mfsde_particles(spec, ParticleFeedback::time_indexed(gains, offsets), po);
    const Vector gap = (ps.mean.back() - sol.X_star.mean.back()).cwiseAbs();
    const Vector band = 3.0 * ps.mean_stderr.back().array() + 1e-12;
    out.below("particle_mean_within_3se", (gap.array() / band.array()).maxCoeff(), 1.0);
    particle = io::Json{{"particles", options.particles},
                        {"mean_T", io::to_json(ps.mean.back())},
                        {"stderr_T", io::to_json(ps.mean_stderr.back())},
                        {"sup_second_moment", ps.sup_second_moment}};
  }

  rep.checks = std::move(out.checks);
  rep.data = io::Json{{"solve", io::to_json(sol)},
                      {"oracle", {{"J", oracle.J},
                                  {"method", oracle.method},
                                  {"iterations", oracle.iterations},
                                  {"gradient_norm", oracle.gradient_norm},
                                  {"hessian_eigenvalues", {oracle.min_eig_estimate, oracle.max_eig_estimate}}}},
                      {"smp", {{"max_residual", smp.max_residual},
                               {"rms_residual", smp.rms_residual},
                               {"discrete_max_residual", smp.discrete_max_residual},
                               {"fbsde_residual", smp.fbsde.residual}}},
                      {"picard", {{"iterations", picard.iterations}, {"contraction_ratios", picard.ratios}}},
                      {"particles", particle}};
  return rep;
}

io::Json to_json(const VerificationReport& report) {
  io::Json checks = io::Json::array();
  for (const auto& c : report.checks) {
    io::Json j{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}};
    if (!c.detail.empty()) j["detail"] = c.detail;
    checks.push_back(std::move(j));
  }
  return io::Json{{"instance", report.instance},
                  {"generated_at", io::timestamp()},
                  {"passed", report.passed()},
                  {"checks", std::move(checks)},
                  {"data", report.data}};
}

}  // namespace mfslq
