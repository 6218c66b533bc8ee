#include "mfslq/bsde.hpp"

#include <Eigen/LU>
#include <Eigen/SparseQR>

#include <cmath>
#include <sstream>

namespace mfslq {

Vector conditional_mean(const std::vector<Vector>& next, std::size_t j) {
  return 0.5 * (next[2 * j] + next[2 * j + 1]);
}

Vector conditional_martingale(const std::vector<Vector>& next, std::size_t j, const ScenarioTree& tree) {
  return (next[2 * j] - next[2 * j + 1]) * (0.5 * tree.sqrt_dt() / tree.dt());
}

Matrix conditional_mean(const std::vector<Matrix>& next, std::size_t j) {
  return 0.5 * (next[2 * j] + next[2 * j + 1]);
}

Matrix conditional_martingale(const std::vector<Matrix>& next, std::size_t j, const ScenarioTree& tree) {
  return (next[2 * j] - next[2 * j + 1]) * (0.5 * tree.sqrt_dt() / tree.dt());
}

NodeMap<Vector> broadcast(const ScenarioTree& tree, const GridVector& g) {
  if (g.steps != tree.steps()) throw ShapeError("grid vector does not match the tree");
  NodeMap<Vector> out(static_cast<std::size_t>(tree.steps()));
  for (int i = 0; i < tree.steps(); ++i) out[i].assign(tree.width(i), g.cell(i));
  return out;
}

namespace {

void check_terminal(const ScenarioTree& tree, const std::vector<Vector>& terminal) {
  if (terminal.size() != tree.width(tree.steps())) {
    throw ShapeError("terminal values must be given on every leaf");
  }
}

bool has(const NodeMap<Matrix>& m) { return !m.empty(); }
bool has(const NodeMap<Vector>& m) { return !m.empty(); }

}  // namespace

BsdePath solve_linear_bsde(const ScenarioTree& tree, const NodeMap<Matrix>& M, const NodeMap<Matrix>& N,
                           const NodeMap<Vector>& source, const std::vector<Vector>& terminal,
                           BsdeScheme scheme) {
  check_terminal(tree, terminal);
  const int steps = tree.steps();
  const double dt = tree.dt();
  const Eigen::Index n = terminal.front().size();
  BsdePath p;
  p.Y.resize(static_cast<std::size_t>(steps) + 1);
  p.Z.resize(static_cast<std::size_t>(steps));
  p.Y[steps] = terminal;
  for (int i = steps - 1; i >= 0; --i) {
    const std::size_t w = tree.width(i);
    p.Y[i].resize(w);
    p.Z[i].resize(w);
    for (std::size_t j = 0; j < w; ++j) {
      const Vector ybar = conditional_mean(p.Y[i + 1], j);
      const Vector z = conditional_martingale(p.Y[i + 1], j, tree);
      Vector rhs = ybar;
      if (has(N)) rhs += dt * (N[i][j] * z);
      if (has(source)) rhs += dt * source[i][j];
      if (!has(M)) {
        p.Y[i][j] = rhs;
      } else if (scheme == BsdeScheme::Explicit) {
        p.Y[i][j] = rhs + dt * (M[i][j] * ybar);
      } else {
        const Eigen::FullPivLU<Matrix> lu(Matrix::Identity(n, n) - dt * M[i][j]);
        if (!lu.isInvertible()) {
          throw StepSizeError("I - dt*M is singular at level " + std::to_string(i) + " node " +
                              std::to_string(j) + "; use more time steps");
        }
        p.Y[i][j] = lu.solve(rhs);
      }
      p.Z[i][j] = z;
    }
  }
  return p;
}

double bsde_residual(const ScenarioTree& tree, const BsdePath& path, const NodeMap<Matrix>& M,
                     const NodeMap<Matrix>& N, const NodeMap<Vector>& source,
                     const std::vector<Vector>& terminal, BsdeScheme scheme) {
  const int steps = tree.steps();
  const double dt = tree.dt();
  double r = 0.0;
  for (std::size_t j = 0; j < terminal.size(); ++j) {
    r = std::max(r, (path.Y[steps][j] - terminal[j]).cwiseAbs().maxCoeff());
  }
  for (int i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      const Vector ybar = conditional_mean(path.Y[i + 1], j);
      const Vector zrep = conditional_martingale(path.Y[i + 1], j, tree);
      Vector f = Vector::Zero(ybar.size());
      if (has(M)) f += M[i][j] * (scheme == BsdeScheme::Implicit ? path.Y[i][j] : ybar);
      if (has(N)) f += N[i][j] * path.Z[i][j];
      if (has(source)) f += source[i][j];
      r = std::max(r, (path.Y[i][j] - ybar - dt * f).cwiseAbs().maxCoeff());
      r = std::max(r, (path.Z[i][j] - zrep).cwiseAbs().maxCoeff());
    }
  }
  return r;
}

namespace {

NodeMap<Matrix> transposed(const NodeMap<Matrix>& m) {
  NodeMap<Matrix> out = m;
  for (auto& level : out) {
    for (auto& x : level) x.transposeInPlace();
  }
  return out;
}

bool all_zero(const NodeMap<Matrix>& m) {
  for (const auto& level : m) {
    for (const auto& x : level) {
      if (!x.isZero(0.0)) return false;
    }
  }
  return true;
}

/// sqrt(sum_i dt e^{σ(t_i - T)} E(|Δy_i|² + |Δz_i|²)); the factor e^{-σT} keeps the
/// weights bounded and does not change ratios.
double sigma_distance(const ScenarioTree& tree, const BsdePath& a, const BsdePath& b, double sigma) {
  double s = 0.0;
  const double T = tree.grid().horizon();
  for (int i = 0; i < tree.steps(); ++i) {
    double lvl = 0.0;
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      lvl += (a.Y[i][j] - b.Y[i][j]).squaredNorm() + (a.Z[i][j] - b.Z[i][j]).squaredNorm();
    }
    s += tree.dt() * std::exp(sigma * (tree.grid().time(i) - T)) * lvl * tree.probability(i);
  }
  return std::sqrt(s);
}

}  // namespace

MeanFieldBsdeResult solve_meanfield_bsde(const CoefficientField& field, const NodeMap<Vector>& source,
                                         const std::vector<Vector>& terminal,
                                         const MeanFieldBsdeOptions& options) {
  const auto& tree = *field.tree;
  check_terminal(tree, terminal);
  const int steps = tree.steps();
  const int n = field.dims.n;

  double K = 0.0;
  for (int i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      for (const auto* m : {&field.A, &field.C, &field.A1, &field.C1}) {
        K = std::max(K, linalg::spectral_norm((*m)[i][j]));
      }
    }
  }
  MeanFieldBsdeResult res;
  res.sigma = options.sigma >= 0.0 ? options.sigma : 32.0 * K * K + 4.0 * K + 2.0;

  const NodeMap<Matrix> M = transposed(field.A);
  const NodeMap<Matrix> Nm = transposed(field.C);
  const NodeMap<Matrix> A1t = transposed(field.A1);
  const NodeMap<Matrix> C1t = transposed(field.C1);
  const bool coupled = !(all_zero(field.A1) && all_zero(field.C1));

  BsdePath prev;
  prev.Y = tree.make_map<Vector>(0, steps, Vector::Zero(n));
  prev.Z = tree.make_map<Vector>(0, steps - 1, Vector::Zero(n));
  for (int k = 1; k <= options.max_iter; ++k) {
    NodeMap<Vector> src = tree.make_map<Vector>(0, steps - 1, Vector::Zero(n));
    for (int i = 0; i < steps; ++i) {
      Vector e = Vector::Zero(n);
      if (coupled) {
        for (std::size_t j = 0; j < tree.width(i); ++j) {
          const Vector y = options.scheme == BsdeScheme::Implicit
                               ? prev.Y[i][j]
                               : conditional_mean(prev.Y[i + 1], j);
          e += A1t[i][j] * y + C1t[i][j] * prev.Z[i][j];
        }
        e *= tree.probability(i);
      }
      for (std::size_t j = 0; j < tree.width(i); ++j) {
        src[i][j] = e;
        if (!source.empty()) src[i][j] += source[i][j];
      }
    }
    BsdePath next = solve_linear_bsde(tree, M, Nm, src, terminal, options.scheme);
    res.iterations = k;
    if (!coupled) {
      res.differences.push_back(0.0);
      res.path = std::move(next);
      return res;
    }
    const double diff = sigma_distance(tree, next, prev, res.sigma);
    if (!res.differences.empty() && res.differences.back() > 0.0) {
      res.contraction_ratios.push_back(diff / res.differences.back());
    }
    res.differences.push_back(diff);
    prev = std::move(next);
    if (diff <= options.tol) {
      res.path = std::move(prev);
      return res;
    }
  }
  const double last = res.contraction_ratios.empty() ? std::nan("") : res.contraction_ratios.back();
  throw ConvergenceError(options.max_iter, last,
                         "mean-field BSDE Picard iteration did not converge in " +
                             std::to_string(options.max_iter) + " iterations (last ratio " +
                             std::to_string(last) + ")");
}

// ---------------------------------------------------------------------------

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_block(Triplets& t, std::size_t row, std::size_t col, const Matrix& m, double scale) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double v = scale * m(r, c);
      if (v != 0.0) t.emplace_back(static_cast<int>(row + r), static_cast<int>(col + c), v);
    }
  }
}

void add_identity(Triplets& t, std::size_t row, std::size_t col, int n, double scale) {
  if (scale == 0.0) return;
  for (int k = 0; k < n; ++k) t.emplace_back(static_cast<int>(row + k), static_cast<int>(col + k), scale);
}

const Matrix* block_or_null(const NodeMap<Matrix>& m, int i, std::size_t j) {
  return m.empty() ? nullptr : &m[i][j];
}

}  // namespace

CoupledFbsdeSolver::CoupledFbsdeSolver(FbsdeCoefficients coefficients) : c_(std::move(coefficients)) {
  const auto& tree = *c_.tree;
  const int N = tree.steps();
  const int n = c_.dim;
  const double dt = tree.dt();
  const double h = tree.sqrt_dt();
  n_nodes_ = tree.node_count();
  n_internal_ = tree.width(N) - 1;
  aux_offset_ = (2 * n_nodes_ + n_internal_) * static_cast<std::size_t>(n);
  const std::size_t n_blocks =
      c_.drift.mean_field.size() + c_.diffusion.mean_field.size() + c_.driver.mean_field.size();
  const std::size_t total = aux_offset_ + n_blocks * static_cast<std::size_t>(N) * n;

  auto aux_index = [&](std::size_t block, int level) {
    return aux_offset_ + (block * static_cast<std::size_t>(N) + level) * n;
  };
  // Columns and weights realizing an operand at node (i, j).
  auto operand_terms = [&](Operand op, int i, std::size_t j) {
    std::vector<std::pair<std::size_t, double>> out;
    switch (op) {
      case Operand::State: out.emplace_back(x_index(i, j), 1.0); break;
      case Operand::Adjoint: out.emplace_back(y_index(i, j), 1.0); break;
      case Operand::AdjointNext:
        out.emplace_back(y_index(i + 1, 2 * j), 0.5);
        out.emplace_back(y_index(i + 1, 2 * j + 1), 0.5);
        break;
      case Operand::Martingale: out.emplace_back(z_index(i, j), 1.0); break;
    }
    return out;
  };
  auto add_linear = [&](Triplets& t, std::size_t row, const FbsdeEquation& eq, std::size_t block0,
                        int i, std::size_t j, double scale) {
    for (const auto& lb : eq.linear) {
      for (const auto& [col, w] : operand_terms(lb.operand, i, j)) {
        add_block(t, row, col, lb.coeff[i][j], -scale * w);
      }
    }
    for (std::size_t b = 0; b < eq.mean_field.size(); ++b) {
      const Matrix* outer = block_or_null(eq.mean_field[b].outer, i, j);
      if (outer) {
        add_block(t, row, aux_index(block0 + b, i), *outer, -scale);
      } else {
        add_identity(t, row, aux_index(block0 + b, i), n, -scale);
      }
    }
  };

  Triplets t;
  t.reserve(total * 6);
  const std::size_t drift0 = 0;
  const std::size_t diff0 = c_.drift.mean_field.size();
  const std::size_t driver0 = diff0 + c_.diffusion.mean_field.size();

  add_identity(t, x_index(0, 0), x_index(0, 0), n, 1.0);
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      for (int b = 0; b < 2; ++b) {
        const double dw = b == 0 ? h : -h;
        const std::size_t row = x_index(i + 1, 2 * j + b);
        add_identity(t, row, x_index(i + 1, 2 * j + b), n, 1.0);
        add_identity(t, row, x_index(i, j), n, -1.0);
        add_linear(t, row, c_.drift, drift0, i, j, dt);
        add_linear(t, row, c_.diffusion, diff0, i, j, dw);
      }
      const std::size_t yrow = y_index(i, j);
      add_identity(t, yrow, y_index(i, j), n, 1.0);
      add_identity(t, yrow, y_index(i + 1, 2 * j), n, -0.5);
      add_identity(t, yrow, y_index(i + 1, 2 * j + 1), n, -0.5);
      add_linear(t, yrow, c_.driver, driver0, i, j, dt);

      const std::size_t zrow = z_index(i, j);
      add_identity(t, zrow, z_index(i, j), n, dt);
      add_identity(t, zrow, y_index(i + 1, 2 * j), n, -0.5 * h);
      add_identity(t, zrow, y_index(i + 1, 2 * j + 1), n, 0.5 * h);
    }
  }
  for (std::size_t j = 0; j < tree.width(N); ++j) {
    add_identity(t, y_index(N, j), y_index(N, j), n, 1.0);
    if (!c_.terminal_gain.empty()) add_block(t, y_index(N, j), x_index(N, j), c_.terminal_gain[j], -1.0);
  }
  std::size_t block = 0;
  for (const FbsdeEquation* eq : {&c_.drift, &c_.diffusion, &c_.driver}) {
    for (const auto& mf : eq->mean_field) {
      for (int i = 0; i < N; ++i) {
        const std::size_t row = aux_index(block, i);
        add_identity(t, row, row, n, 1.0);
        const double p = tree.probability(i);
        for (std::size_t j = 0; j < tree.width(i); ++j) {
          const Matrix* inner = block_or_null(mf.inner, i, j);
          for (const auto& [col, w] : operand_terms(mf.operand, i, j)) {
            if (inner) {
              add_block(t, row, col, *inner, -p * w);
            } else {
              add_identity(t, row, col, n, -p * w);
            }
          }
        }
      }
      ++block;
    }
  }

  matrix_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  matrix_.setFromTriplets(t.begin(), t.end());
  matrix_.makeCompressed();
  rank_ = {total, total, total};

  // The mean rows are dense over a whole level, which ruins the fill-in of a
  // direct factorization. Eliminate them through a Schur complement instead.
  const auto core = static_cast<Eigen::Index>(aux_offset_);
  const auto naux = static_cast<Eigen::Index>(total) - core;
  if (naux > 0) {
    const Eigen::SparseMatrix<double> node_block = matrix_.block(0, 0, core, core);
    lu_.analyzePattern(node_block);
    lu_.factorize(node_block);
    if (lu_.info() == Eigen::Success) {
      coupling_ = matrix_.block(0, core, core, naux);
      aux_rows_ = matrix_.block(core, 0, naux, core);
      Matrix S = Matrix(matrix_.block(core, core, naux, naux));
      for (Eigen::Index k = 0; k < naux; ++k) {
        const Vector w = lu_.solve(Vector(coupling_.col(k)));
        S.col(k) -= aux_rows_ * w;
      }
      schur_.compute(S);
      schur_.setThreshold(1e-13);
      if (schur_.rank() < naux) {
        rank_.rank = static_cast<std::size_t>(core + schur_.rank());
        std::ostringstream os;
        os << "coupled FBSDE system is singular: " << total << "x" << total << ", rank " << rank_.rank
           << ", nullity " << rank_.nullity();
        throw SingularSystemError(rank_, os.str());
      }
      bordered_ = true;
      return;
    }
  }
  lu_.analyzePattern(matrix_);
  lu_.factorize(matrix_);
  if (lu_.info() != Eigen::Success) {
    Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr(matrix_);
    rank_.rank = static_cast<std::size_t>(qr.rank());
    std::ostringstream os;
    os << "coupled FBSDE system is singular: " << total << "x" << total << ", rank " << rank_.rank
       << ", nullity " << rank_.nullity();
    throw SingularSystemError(rank_, os.str());
  }
}

Vector CoupledFbsdeSolver::solve_raw(const Vector& b) const {
  if (!bordered_) return lu_.solve(b);
  const auto core = static_cast<Eigen::Index>(aux_offset_);
  const Eigen::Index naux = b.size() - core;
  const Vector y0 = lu_.solve(Vector(b.head(core)));
  const Vector aux = schur_.solve(Vector(b.tail(naux) - aux_rows_ * y0));
  Vector x(b.size());
  x.head(core) = lu_.solve(Vector(b.head(core) - coupling_ * aux));
  x.tail(naux) = aux;
  return x;
}

std::size_t CoupledFbsdeSolver::x_index(int level, std::size_t j) const {
  return c_.tree->flat_index(level, j) * c_.dim;
}
std::size_t CoupledFbsdeSolver::y_index(int level, std::size_t j) const {
  return (n_nodes_ + c_.tree->flat_index(level, j)) * c_.dim;
}
std::size_t CoupledFbsdeSolver::z_index(int level, std::size_t j) const {
  return (2 * n_nodes_ + c_.tree->flat_index(level, j)) * c_.dim;
}

Vector CoupledFbsdeSolver::rhs(const FbsdeData& data) const {
  const auto& tree = *c_.tree;
  const int N = tree.steps();
  const double dt = tree.dt();
  const double h = tree.sqrt_dt();
  Vector b = Vector::Zero(matrix_.rows());
  if (data.x0.size() != 0) {
    if (data.x0.size() != c_.dim) throw ShapeError("initial state has wrong length");
    b.segment(static_cast<Eigen::Index>(x_index(0, 0)), c_.dim) = data.x0;
  }
  for (int i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < tree.width(i); ++j) {
      for (int k = 0; k < 2; ++k) {
        const double dw = k == 0 ? h : -h;
        auto seg = b.segment(static_cast<Eigen::Index>(x_index(i + 1, 2 * j + k)), c_.dim);
        if (has(data.drift_source)) seg += dt * data.drift_source[i][j];
        if (has(data.diffusion_source)) seg += dw * data.diffusion_source[i][j];
      }
      if (has(data.driver_source)) {
        b.segment(static_cast<Eigen::Index>(y_index(i, j)), c_.dim) = dt * data.driver_source[i][j];
      }
    }
  }
  if (!data.terminal_offset.empty()) {
    if (data.terminal_offset.size() != tree.width(N)) throw ShapeError("terminal offset must cover every leaf");
    for (std::size_t j = 0; j < tree.width(N); ++j) {
      b.segment(static_cast<Eigen::Index>(y_index(N, j)), c_.dim) = data.terminal_offset[j];
    }
  }
  return b;
}

FbsdeSolution CoupledFbsdeSolver::solve(const FbsdeData& data) const {
  const auto& tree = *c_.tree;
  const int N = tree.steps();
  const Vector b = rhs(data);
  const Vector x = solve_raw(b);
  FbsdeSolution s;
  s.residual = (matrix_ * x - b).cwiseAbs().maxCoeff();
  if (!x.allFinite() || s.residual > 1e-8 * (1.0 + b.cwiseAbs().maxCoeff())) {
    Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr(matrix_);
    RankReport r{rank_.rows, rank_.cols, static_cast<std::size_t>(qr.rank())};
    std::ostringstream os;
    os << "coupled FBSDE solve is inaccurate (residual " << s.residual << "), rank " << r.rank
       << " of " << r.cols;
    throw SingularSystemError(r, os.str());
  }
  const Eigen::Index n = c_.dim;
  s.X.X.resize(static_cast<std::size_t>(N) + 1);
  s.X.mean.resize(static_cast<std::size_t>(N) + 1);
  s.YZ.Y.resize(static_cast<std::size_t>(N) + 1);
  s.YZ.Z.resize(static_cast<std::size_t>(N));
  for (int i = 0; i <= N; ++i) {
    const std::size_t w = tree.width(i);
    s.X.X[i].resize(w);
    s.YZ.Y[i].resize(w);
    if (i < N) s.YZ.Z[i].resize(w);
    for (std::size_t j = 0; j < w; ++j) {
      s.X.X[i][j] = x.segment(static_cast<Eigen::Index>(x_index(i, j)), n);
      s.YZ.Y[i][j] = x.segment(static_cast<Eigen::Index>(y_index(i, j)), n);
      if (i < N) s.YZ.Z[i][j] = x.segment(static_cast<Eigen::Index>(z_index(i, j)), n);
    }
    s.X.mean[i] = level_mean(s.X.X[i]);
  }
  return s;
}

FbsdeSolution solve_coupled_fbsde(const FbsdeCoefficients& coefficients, const FbsdeData& data) {
  const CoupledFbsdeSolver solver(coefficients);
  return solver.solve(data);
}

}  // namespace mfslq
