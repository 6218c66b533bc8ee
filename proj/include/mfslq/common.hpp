#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfslq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Values attached to tree nodes, addressed as `map[level][index]`.
template <typename T>
using NodeMap = std::vector<std::vector<T>>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ResourceLimitError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Gap matrix of the Riccati feedback is not invertible at a node.
class DefinitenessError : public Error {
 public:
  DefinitenessError(int level, std::size_t index, double eigenvalue, const std::string& what)
      : Error(what), level_(level), index_(index), eigenvalue_(eigenvalue) {}
  int level() const { return level_; }
  std::size_t index() const { return index_; }
  double eigenvalue() const { return eigenvalue_; }

 private:
  int level_;
  std::size_t index_;
  double eigenvalue_;
};

class StepSizeError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(int iterations, double last_ratio, const std::string& what)
      : Error(what), iterations_(iterations), last_ratio_(last_ratio) {}
  int iterations() const { return iterations_; }
  double last_ratio() const { return last_ratio_; }

 private:
  int iterations_;
  double last_ratio_;
};

struct RankReport {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t rank = 0;
  std::size_t nullity() const { return cols > rank ? cols - rank : 0; }
};

class SingularSystemError : public Error {
 public:
  SingularSystemError(RankReport report, const std::string& what) : Error(what), report_(report) {}
  const RankReport& report() const { return report_; }

 private:
  RankReport report_;
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(std::array<double, 3> residuals, const std::string& what)
      : Error(what), residuals_(residuals) {}
  const std::array<double, 3>& residuals() const { return residuals_; }

 private:
  std::array<double, 3> residuals_;
};

class NumericalOverflowError : public Error {
 public:
  NumericalOverflowError(int step, const std::string& what) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class UnsupportedGridError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  ConditioningError(double min_eig, double max_eig, const std::string& what)
      : Error(what), min_eig_(min_eig), max_eig_(max_eig) {}
  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }

 private:
  double min_eig_;
  double max_eig_;
};

/// Wraps a failure of one pipeline stage; the original exception is nested.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

namespace linalg {

double min_symmetric_eigenvalue(const Matrix& m);
double max_symmetric_eigenvalue(const Matrix& m);
bool all_finite(const Matrix& m);
double spectral_norm(const Matrix& m);
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace linalg

}  // namespace mfslq
