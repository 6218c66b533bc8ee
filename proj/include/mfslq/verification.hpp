#pragma once

#include "mfslq/instances.hpp"
#include "mfslq/verify.hpp"

#include <random>

namespace mfslq {

/// SMP budget constant: the stationary residual at the oracle optimum must stay
/// below kSmpConstant * dt * (1 + max|u_oracle|). Calibrated once on INSTANCE-1
/// over N ∈ {4, 8, 16} and frozen with a safety margin.
inline constexpr double kSmpConstant = 4.0;

struct VerifyOptions {
  std::uint64_t seed = instances::kDefaultSeed;
  double tol = 1e-8;  ///< KKT, consistency and oracle cost tolerance
  int gateaux_pairs = 10;
  int convexity_pairs = 100;
  int operator_pairs = 100;
  std::size_t particles = 20000;  ///< 0 disables the particle cross-check
};

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  std::string instance;
  std::vector<Check> checks;
  io::Json data;  ///< solve report and auxiliary numbers

  bool passed() const;
  const Check* find(const std::string& name) const;
};

/// Runs every invariant that applies to one instance.
VerificationReport verify_instance(const ProblemSpec& spec, const VerifyOptions& options = {});

io::Json to_json(const VerificationReport& report);

/// Uniform random open-loop control with entries in [-amplitude, amplitude].
OpenLoopControl random_control(const ScenarioTree& tree, int m, std::mt19937_64& rng, double amplitude = 1.0);

/// Largest node-wise max-norm difference of two open-loop controls.
double max_control_gap(const OpenLoopControl& a, const OpenLoopControl& b);
double max_abs(const OpenLoopControl& u);

/// Mean-field BSDE with a unit source and unit terminal value, solved by Picard
/// iteration and by the global linear system.
struct PicardComparison {
  double gap = 0.0;
  int iterations = 0;
  double max_ratio = 0.0;
  std::vector<double> ratios;
};

PicardComparison compare_meanfield_bsde(const CoefficientField& field);

}  // namespace mfslq
