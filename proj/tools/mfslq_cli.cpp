// Command-line entry point: solve, verify, simulate, operators, corpus.
#include "mfslq/acceptance.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace mfslq;

struct RunConfig {
  std::string instance;
  std::string out = "out";
  std::uint64_t seed = instances::kDefaultSeed;
  int steps = 0;
  std::size_t particles = 20000;
  double tol = 1e-8;
};

ProblemSpec load(const RunConfig& cfg) {
  if (cfg.instance.empty()) throw ConfigError("--instance", "an instance file is required");
  io::Json doc = io::read_json(cfg.instance);
  if (cfg.steps > 0) doc = instances::with_steps(std::move(doc), cfg.steps);
  if (!doc.contains("name")) doc["name"] = std::filesystem::path(cfg.instance).stem().string();
  return io::parse_instance(doc);
}

std::filesystem::path output(const RunConfig& cfg, const std::string& file) {
  return std::filesystem::path(cfg.out) / file;
}

void print_nested(const std::exception& e, int depth = 0) {
  std::cerr << std::string(static_cast<std::size_t>(2 * depth), ' ') << (depth ? "caused by: " : "error: ")
            << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_nested(inner, depth + 1);
  }
}

int cmd_solve(const RunConfig& cfg) {
  const ProblemSpec spec = load(cfg);
  SolveOptions opts;
  opts.stationarity.tol = cfg.tol;
  const SolveReport rep = solve_mfslq(spec, opts);
  io::Json doc = io::to_json(rep);
  doc["generated_at"] = io::timestamp();
  io::write_text(output(cfg, spec.name + "_solve.json"), io::dump(doc));
  io::write_text(output(cfg, spec.name + "_summary.csv"), io::summary_csv(rep));
  io::write_text(output(cfg, spec.name + "_cost.csv"), io::cost_csv(rep.J_star));
  std::printf("%s: J* = %.15g, KKT rank %zu of %zu%s\n", spec.name.c_str(), rep.J_star.total(), rep.kkt_rank.rank,
              rep.kkt_rank.cols, rep.nonunique ? " (multipliers not unique)" : "");
  return 0;
}

int cmd_verify(const RunConfig& cfg) {
  const ProblemSpec spec = load(cfg);
  VerifyOptions opts;
  opts.seed = cfg.seed;
  opts.tol = cfg.tol;
  opts.particles = cfg.particles;
  const VerificationReport rep = verify_instance(spec, opts);
  io::write_text(output(cfg, spec.name + "_verify.json"), io::dump(to_json(rep)));
  for (const auto& c : rep.checks) {
    std::printf("[%s] %-32s %12.4e <= %.4e\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.value, c.threshold);
  }
  std::printf("%s: %s\n", spec.name.c_str(), rep.passed() ? "all invariants hold" : "invariant violated");
  return rep.passed() ? 0 : 1;
}

int cmd_simulate(const RunConfig& cfg) {
  const ProblemSpec spec = load(cfg);
  ParticleFeedback feedback = ParticleFeedback::zero(spec.dims);
  std::string law = "zero";
  if (spec.deterministic()) {
    // With deterministic data the optimal law is the same on every node of a level.
    const SolveReport rep = solve_mfslq(spec);
    std::vector<Matrix> gains;
    std::vector<Vector> offsets;
    for (int i = 0; i < spec.grid.steps(); ++i) {
      gains.push_back(rep.u_star.gain[i][0]);
      offsets.push_back(rep.u_star.offset[i][0]);
    }
    feedback = ParticleFeedback::time_indexed(std::move(gains), std::move(offsets));
    law = "optimal";
  }
  ParticleOptions po;
  po.particles = cfg.particles;
  po.seed = cfg.seed;
  po.record_paths = 10;
  const ParticleSummary s = simulate_mfsde_particles(spec, feedback, po);

  const int n = spec.dims.n;
  std::ostringstream csv;
  csv.precision(17);
  csv << "t";
  for (int k = 0; k < n; ++k) csv << ",mean_" << k << ",stderr_" << k;
  csv << ",second_moment\n";
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    csv << s.times[i];
    for (int k = 0; k < n; ++k) csv << ',' << s.mean[i](k) << ',' << s.mean_stderr[i](k);
    csv << ',' << s.second_moment[i] << '\n';
  }
  io::write_text(output(cfg, spec.name + "_particles.csv"), csv.str());

  std::ostringstream paths;
  paths.precision(17);
  paths << "path,t";
  for (int k = 0; k < n; ++k) paths << ",x_" << k;
  paths << '\n';
  for (std::size_t p = 0; p < s.recorded.size(); ++p) {
    for (std::size_t i = 0; i < s.recorded[p].size(); ++i) {
      paths << p << ',' << s.times[i];
      for (int k = 0; k < n; ++k) paths << ',' << s.recorded[p][i](k);
      paths << '\n';
    }
  }
  io::write_text(output(cfg, spec.name + "_paths.csv"), paths.str());

  io::Json doc{{"instance", spec.name},
               {"generated_at", io::timestamp()},
               {"control", law},
               {"particles", cfg.particles},
               {"seed", cfg.seed},
               {"sup_second_moment", s.sup_second_moment},
               {"mean_T", io::to_json(s.mean.back())},
               {"stderr_T", io::to_json(s.mean_stderr.back())}};
  io::write_text(output(cfg, spec.name + "_particles.json"), io::dump(doc));
  std::printf("%s: %zu particles, %s control, sup E|X|^2 = %.6g\n", spec.name.c_str(), cfg.particles, law.c_str(),
              s.sup_second_moment);
  return 0;
}

int cmd_operators(const RunConfig& cfg) {
  const ProblemSpec spec = load(cfg);
  const CoefficientField field = evaluate_coefficients(spec);
  const RiccatiSolution ric = solve_riccati_tree(field);
  const HatCoefficients hat = hat_coefficients(field, ric);
  const OperatorBundle ops = assemble_operators(hat, spec.xi);
  io::Json doc{{"instance", spec.name},
               {"generated_at", io::timestamp()},
               {"dim", ops.L1.dim},
               {"steps", ops.L1.steps},
               {"dt", ops.L1.dt},
               {"P_xi", io::to_json(ops.p_xi.values)},
               {"L1", io::to_json(ops.L1.matrix)},
               {"L2", io::to_json(ops.L2.matrix)}};
  io::write_text(output(cfg, spec.name + "_operators.json"), io::dump(doc));
  auto csv = [](const Matrix& m) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
      os << '\n';
    }
    return os.str();
  };
  io::write_text(output(cfg, spec.name + "_L1.csv"), csv(ops.L1.matrix));
  io::write_text(output(cfg, spec.name + "_L2.csv"), csv(ops.L2.matrix));
  io::write_text(output(cfg, spec.name + "_P.csv"), csv(ops.p_xi.values));
  std::printf("%s: operators of size %ldx%ld written\n", spec.name.c_str(), static_cast<long>(ops.L1.matrix.rows()),
              static_cast<long>(ops.L1.matrix.cols()));
  return 0;
}

int cmd_corpus(const RunConfig& cfg) {
  AcceptanceOptions opts;
  opts.seed = cfg.seed;
  opts.on_result = [](const CriterionResult& r) {
    std::printf("[%s] criterion %2d  %-45s %s\n", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  };
  const AcceptanceRun run = run_acceptance(opts);
  io::write_text(output(cfg, "acceptance.json"), io::dump(to_json(run)));
  io::write_text(output(cfg, "corpus_summary.csv"), acceptance_csv(run));
  return run.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field stochastic LQ solver on scenario trees"};
  app.require_subcommand(1);
  RunConfig cfg;
  auto add_common = [&](CLI::App* sub, bool needs_instance) {
    auto* opt = sub->add_option("--instance", cfg.instance, "instance JSON file");
    if (needs_instance) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    sub->add_option("--steps", cfg.steps, "override the number of time steps")->check(CLI::Range(1, 16));
    sub->add_option("--particles", cfg.particles, "particle count")->capture_default_str();
    sub->add_option("--tol", cfg.tol, "residual tolerance")->capture_default_str();
  };
  auto* solve = app.add_subcommand("solve", "solve an instance and write the report");
  auto* verify = app.add_subcommand("verify", "run every invariant on an instance");
  auto* simulate = app.add_subcommand("simulate", "particle simulation of the optimal closed loop");
  auto* operators = app.add_subcommand("operators", "dump the P, L1 and L2 operators");
  auto* corpus = app.add_subcommand("corpus", "run the acceptance suite over the test corpus");
  for (auto* sub : {solve, verify, simulate, operators}) add_common(sub, true);
  add_common(corpus, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*solve) return cmd_solve(cfg);
    if (*verify) return cmd_verify(cfg);
    if (*simulate) return cmd_simulate(cfg);
    if (*operators) return cmd_operators(cfg);
    if (*corpus) return cmd_corpus(cfg);
  } catch (const std::exception& e) {
    print_nested(e);
    return 2;
  }
  return 0;
}
