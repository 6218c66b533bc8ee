#include "mfslq/model.hpp"

#include <sstream>

namespace mfslq {

namespace linalg {

double min_symmetric_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_symmetric_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace linalg

void Dimensions::validate() const {
  if (n < 1 || m < 1) {
    throw ShapeError("dimensions must be positive, got n=" + std::to_string(n) +
                     " m=" + std::to_string(m));
  }
}

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ShapeError("horizon T must be positive");
  if (steps < 1) throw ShapeError("number of steps N must be at least 1");
  dt_ = horizon / steps;
}

GridVector GridVector::zeros(int dim, int steps, double dt) {
  return GridVector{dim, steps, dt, Vector::Zero(static_cast<Eigen::Index>(dim) * steps)};
}

GridVector GridVector::constant(const Vector& value, int steps, double dt) {
  GridVector g = zeros(static_cast<int>(value.size()), steps, dt);
  for (int i = 0; i < steps; ++i) g.cell(i) = value;
  return g;
}

double GridVector::inner(const GridVector& other) const {
  check_compatible(other, "inner product");
  return dt * values.dot(other.values);
}

void GridVector::check_compatible(const GridVector& other, const char* what) const {
  if (dim != other.dim || steps != other.steps || dt != other.dt) {
    std::ostringstream os;
    os << what << ": grid vectors differ (dim " << dim << " vs " << other.dim << ", steps " << steps
       << " vs " << other.steps << ")";
    throw ShapeError(os.str());
  }
}

CoefficientRule CoefficientRule::constant(Matrix value) {
  return of_time([v = std::move(value)](double) { return v; });
}

CoefficientRule CoefficientRule::of_time(TimeFunction f) {
  CoefficientRule r;
  r.time_ = std::move(f);
  return r;
}

CoefficientRule CoefficientRule::of_path(PathFunction f) {
  CoefficientRule r;
  r.path_ = std::move(f);
  return r;
}

Matrix CoefficientRule::operator()(const PathView& view) const {
  if (time_) return time_(view.t);
  if (path_) return path_(view);
  throw Error("coefficient rule is empty");
}

Matrix CoefficientRule::at_time(double t) const {
  if (!time_) throw Error("coefficient rule depends on the path, not only on time");
  return time_(t);
}

bool ProblemSpec::deterministic() const {
  const auto& c = coefficients;
  for (const CoefficientRule* r : {&c.A, &c.A1, &c.B, &c.C, &c.C1, &c.D, &c.Q, &c.Q1, &c.R, &c.G}) {
    if (!r->empty() && !r->deterministic()) return false;
  }
  return true;
}

void ProblemSpec::validate() const {
  dims.validate();
  if (xi.size() != dims.n) {
    throw ShapeError("initial state has length " + std::to_string(xi.size()) + ", expected " +
                     std::to_string(dims.n));
  }
  if (!(delta > 0.0)) throw ShapeError("delta must be positive");
  const auto& c = coefficients;
  const std::pair<const char*, const CoefficientRule*> required[] = {
      {"A", &c.A}, {"B", &c.B}, {"C", &c.C}, {"D", &c.D}, {"Q", &c.Q}, {"R", &c.R}, {"G", &c.G}};
  for (const auto& [name, rule] : required) {
    if (rule->empty()) throw ShapeError(std::string("coefficient ") + name + " is missing");
  }
}

ScenarioTree::ScenarioTree(TimeGrid grid, int max_steps) : grid_(grid) {
  if (grid.steps() > max_steps) {
    throw ResourceLimitError("tree with N=" + std::to_string(grid.steps()) +
                             " steps exceeds the cap of " + std::to_string(max_steps));
  }
  h_ = std::sqrt(grid.dt());
  w_.resize(static_cast<std::size_t>(grid.steps()) + 1);
  w_[0] = {0.0};
  for (int i = 0; i < grid.steps(); ++i) {
    const auto& prev = w_[i];
    auto& next = w_[i + 1];
    next.resize(2 * prev.size());
    for (std::size_t j = 0; j < prev.size(); ++j) {
      next[2 * j] = prev[j] + h_;
      next[2 * j + 1] = prev[j] - h_;
    }
  }
}

std::vector<double> ScenarioTree::path_increments(int level, std::size_t index) const {
  std::vector<double> out(static_cast<std::size_t>(level));
  for (int k = level; k >= 1; --k) {
    out[k - 1] = increment_into(index);
    index >>= 1U;
  }
  return out;
}

std::shared_ptr<const ScenarioTree> build_tree(const TimeGrid& grid, int max_steps) {
  return std::make_shared<const ScenarioTree>(grid, max_steps);
}

namespace {

struct Expected {
  const char* name;
  const CoefficientRule* rule;
  NodeMap<Matrix>* target;
  int rows;
  int cols;
};

Matrix checked(const CoefficientRule& rule, const PathView& view, const char* name, int rows,
               int cols) {
  Matrix v = rule(view);
  if (v.rows() != rows || v.cols() != cols) {
    std::ostringstream os;
    os << "coefficient " << name << " at level " << view.level << " node " << view.index
       << ": expected " << rows << "x" << cols << ", got " << v.rows() << "x" << v.cols();
    throw ShapeError(os.str());
  }
  return v;
}

}  // namespace

CoefficientField evaluate_coefficients(const ProblemSpec& spec,
                                       std::shared_ptr<const ScenarioTree> tree) {
  spec.validate();
  if (tree->steps() != spec.grid.steps() || tree->grid().horizon() != spec.grid.horizon()) {
    throw ShapeError("tree grid does not match the problem grid");
  }
  const int n = spec.dims.n;
  const int m = spec.dims.m;
  const int N = tree->steps();
  const auto& c = spec.coefficients;
  const CoefficientRule zero_nn = CoefficientRule::constant(Matrix::Zero(n, n));

  CoefficientField f;
  f.tree = tree;
  f.dims = spec.dims;
  f.delta = spec.delta;

  const Expected running[] = {
      {"A", &c.A, &f.A, n, n},
      {"A1", c.A1.empty() ? &zero_nn : &c.A1, &f.A1, n, n},
      {"B", &c.B, &f.B, n, m},
      {"C", &c.C, &f.C, n, n},
      {"C1", c.C1.empty() ? &zero_nn : &c.C1, &f.C1, n, n},
      {"D", &c.D, &f.D, n, m},
      {"Q", &c.Q, &f.Q, n, n},
      {"Q1", c.Q1.empty() ? &zero_nn : &c.Q1, &f.Q1, n, n},
      {"R", &c.R, &f.R, m, m},
  };

  for (const auto& e : running) e.target->resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const double t = tree->grid().time(i);
    for (const auto& e : running) (*e.target)[i].resize(tree->width(i));
    for (std::size_t j = 0; j < tree->width(i); ++j) {
      const std::vector<double> incs = tree->path_increments(i, j);
      const PathView view{i, j, t, tree->brownian(i, j), incs};
      for (const auto& e : running) {
        if (e.rule->deterministic() && j > 0) {
          (*e.target)[i][j] = (*e.target)[i][0];
        } else {
          (*e.target)[i][j] = checked(*e.rule, view, e.name, e.rows, e.cols);
        }
      }
    }
  }

  f.G.resize(tree->width(N));
  for (std::size_t j = 0; j < tree->width(N); ++j) {
    if (c.G.deterministic() && j > 0) {
      f.G[j] = f.G[0];
      continue;
    }
    const std::vector<double> incs = tree->path_increments(N, j);
    const PathView view{N, j, tree->grid().horizon(), tree->brownian(N, j), incs};
    f.G[j] = checked(c.G, view, "G", n, n);
  }

  f.mean_Q1.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    Matrix s = Matrix::Zero(n, n);
    for (const auto& q : f.Q1[i]) s += q;
    f.mean_Q1[i] = s * tree->probability(i);
  }
  return f;
}

CoefficientField evaluate_coefficients(const ProblemSpec& spec) {
  return evaluate_coefficients(spec, build_tree(spec.grid));
}

AssumptionReport validate_assumptions(const CoefficientField& field, double tol) {
  AssumptionReport report;
  auto violate = [&](bool& flag, const char* which, int level, std::size_t index, std::string d) {
    flag = false;
    report.violations.push_back({which, level, index, std::move(d)});
  };
  auto check_psd = [&](const Matrix& m, const char* name, int level, std::size_t index) {
    if (!m.allFinite()) {
      violate(report.h1_ok, "H1", level, index, std::string(name) + " has non-finite entries");
      return;
    }
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * (1.0 + m.cwiseAbs().maxCoeff())) {
      violate(report.h2_ok, "H2", level, index, std::string(name) + " is not symmetric");
      return;
    }
    const double e = linalg::min_symmetric_eigenvalue(m);
    if (e < -tol) {
      violate(report.h2_ok, "H2", level, index,
              std::string(name) + " has negative eigenvalue " + std::to_string(e));
    }
  };

  const int N = field.steps();
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < field.tree->width(i); ++j) {
      for (const auto* m : {&field.A, &field.A1, &field.B, &field.C, &field.C1, &field.D}) {
        if (!(*m)[i][j].allFinite()) {
          violate(report.h1_ok, "H1", i, j, "dynamics coefficient has non-finite entries");
        }
      }
      check_psd(field.Q[i][j], "Q", i, j);
      check_psd(field.Q1[i][j], "Q1", i, j);
      const Matrix& R = field.R[i][j];
      if (!R.allFinite()) {
        violate(report.h1_ok, "H1", i, j, "R has non-finite entries");
        continue;
      }
      if ((R - R.transpose()).cwiseAbs().maxCoeff() > tol * (1.0 + R.cwiseAbs().maxCoeff())) {
        violate(report.h2_ok, "H2", i, j, "R is not symmetric");
      }
      const double e = linalg::min_symmetric_eigenvalue(R);
      report.min_eig_R = std::min(report.min_eig_R, e);
      if (e < field.delta - tol) {
        violate(report.h2_ok, "H2", i, j,
                "smallest eigenvalue of R is " + std::to_string(e) + " < delta");
      }
    }
  }
  for (std::size_t j = 0; j < field.G.size(); ++j) check_psd(field.G[j], "G", N, j);
  return report;
}

}  // namespace mfslq
