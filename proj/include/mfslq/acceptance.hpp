#pragma once

#include "mfslq/verification.hpp"

namespace mfslq {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = instances::kDefaultSeed;
  /// Called after each criterion, e.g. to print progress.
  std::function<void(const CriterionResult&)> on_result;
};

struct AcceptanceRun {
  std::vector<CriterionResult> criteria;
  std::vector<VerificationReport> corpus;

  bool passed() const;
};

/// Runs the full acceptance suite: oracle equivalence, stationarity, consistency,
/// SMP order, Riccati convergence, convexity, Gateaux consistency, degeneration,
/// operator algebra, mean-field BSDE and reproducibility.
AcceptanceRun run_acceptance(const AcceptanceOptions& options = {});

/// Residual constants of the maximum principle on INSTANCE-1.
struct SmpOrderStudy {
  std::vector<int> steps;
  std::vector<double> residuals;
  std::vector<double> ratios;
  double calibrated_constant = 0.0;  ///< max residual / (dt (1 + max|u|))
};

SmpOrderStudy smp_order_study(const std::vector<int>& steps = {4, 8, 16});

/// |Σ_tree(0) − Σ_ode(0)| for a deterministic instance over doubling N.
struct RiccatiStudy {
  std::string name;
  std::vector<int> steps;
  std::vector<double> errors;
  std::vector<double> ratios;
};

RiccatiStudy riccati_study(const ProblemSpec& spec, const std::vector<int>& steps,
                           RiccatiScheme scheme = RiccatiScheme::DiscreteDynamicProgramming);

io::Json to_json(const AcceptanceRun& run);
std::string acceptance_csv(const AcceptanceRun& run);

}  // namespace mfslq
