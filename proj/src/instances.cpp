#include "mfslq/instances.hpp"

#include <algorithm>
#include <random>

namespace mfslq::instances {

using io::Json;

double uniform01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

namespace {

Json scalar_doc(const std::string& name, int steps) {
  return Json{{"name", name},
              {"dimensions", {{"n", 1}, {"m", 1}}},
              {"grid", {{"T", 1.0}, {"N", steps}}},
              {"xi", Json::array({1.0})},
              {"delta", 1.0}};
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(rng_()); }

  Matrix matrix(int rows, int cols, double amplitude) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = uniform(-amplitude, amplitude);
    }
    return m;
  }

  /// s M Mᵀ + shift I, exactly symmetric.
  Matrix psd(int dim, double s, double shift) {
    const Matrix M = matrix(dim, dim, 1.0);
    Matrix P = s * M * M.transpose();
    P = 0.5 * (P + P.transpose());
    P.diagonal().array() += shift;
    return P;
  }

  std::size_t pick(std::size_t count) { return static_cast<std::size_t>(uniform01(rng_()) * count) % count; }

 private:
  std::mt19937_64 rng_;
};

Json rule(const char* name, const Matrix& base, const Matrix& scale) {
  return Json{{"rule", name}, {"base", io::to_json(base)}, {"scale", io::to_json(scale)}};
}

Json generated(Generator& g, int index, int n, int m, int steps, bool random) {
  const double delta = 0.5;
  const Matrix A = g.matrix(n, n, 0.3);
  const Matrix A1 = g.matrix(n, n, 0.2);
  Matrix B = g.matrix(n, m, 1.0);
  for (int k = 0; k < std::min(n, m); ++k) B(k, k) += 1.0;
  const Matrix C = g.matrix(n, n, 0.3);
  const Matrix C1 = g.matrix(n, n, 0.2);
  const Matrix D = g.matrix(n, m, 0.5);
  const Matrix Q = g.psd(n, 0.5, 0.1);
  const Matrix Q1 = g.psd(n, 0.3, 0.0);
  const Matrix R = g.psd(m, 0.3, delta + 0.2);
  const Matrix G = g.psd(n, 0.5, 0.0);
  Vector xi(n);
  for (int k = 0; k < n; ++k) xi(k) = g.uniform(0.5, 1.5) * (k % 2 == 0 ? 1.0 : -1.0);

  Json c;
  if (random) {
    const char* shapes[] = {"sign_w", "indicator_w_positive", "cos_w", "linear_w"};
    // Draws are sequenced one statement at a time so the corpus does not
    // depend on argument evaluation order.
    const char* a_shape = shapes[g.pick(4)];
    const Matrix a_scale = g.matrix(n, n, 0.2);
    const char* a1_shape = shapes[g.pick(4)];
    const Matrix a1_scale = g.matrix(n, n, 0.1);
    const char* b_shape = shapes[g.pick(3)];
    const Matrix b_scale = g.matrix(n, m, 0.3);
    const Matrix c1_scale = g.matrix(n, n, 0.1);
    const Matrix d_scale = g.matrix(n, m, 0.2);
    c["A"] = rule(a_shape, A, a_scale);
    c["A1"] = rule(a1_shape, A1, a1_scale);
    c["B"] = rule(b_shape, B, b_scale);
    c["C"] = io::to_json(C);
    c["C1"] = rule("indicator_w_positive", C1, c1_scale);
    c["D"] = rule("cos_w", D, d_scale);
    // Bounded nonnegative perturbations keep the weights within their cones.
    c["Q"] = rule("indicator_w_positive", Q, 0.2 * Matrix::Identity(n, n));
    c["Q1"] = io::to_json(Q1);
    c["R"] = rule("cos_w", R, 0.1 * Matrix::Identity(m, m));
    c["G"] = io::to_json(G);
  } else {
    const Matrix slope = g.matrix(n, n, 0.2);
    c["A"] = Json{{"poly", Json::array({io::to_json(A), io::to_json(slope)})}};
    c["A1"] = io::to_json(A1);
    c["B"] = io::to_json(B);
    c["C"] = io::to_json(C);
    c["C1"] = io::to_json(C1);
    c["D"] = io::to_json(D);
    c["Q"] = io::to_json(Q);
    c["Q1"] = io::to_json(Q1);
    c["R"] = Json{{"poly", Json::array({io::to_json(R), io::to_json(Matrix(0.2 * Matrix::Identity(m, m)))})}};
    c["G"] = io::to_json(G);
  }
  const std::string name = "gen" + std::to_string(index) + (random ? "_random" : "_det") + "_n" +
                           std::to_string(n) + "m" + std::to_string(m) + "N" + std::to_string(steps);
  return Json{{"name", name},
              {"dimensions", {{"n", n}, {"m", m}}},
              {"grid", {{"T", 1.0}, {"N", steps}}},
              {"xi", io::to_json(xi)},
              {"delta", delta},
              {"coefficients", c}};
}

}  // namespace

Json instance1(int steps) {
  Json doc = scalar_doc("instance1", steps);
  doc["coefficients"] = Json{{"A", 0.1}, {"A1", 0.05}, {"B", 1.0}, {"C", 0.2}, {"C1", 0.1},
                             {"D", 0.5}, {"Q", 1.0},   {"Q1", 0.5}, {"R", 1.0}, {"G", 1.0}};
  return doc;
}

Json instance1_random(int steps) {
  Json doc = instance1(steps);
  doc["name"] = "instance1_random";
  doc["coefficients"]["A"] = Json{{"rule", "sign_w"}, {"base", 0.1}, {"scale", 0.2}};
  doc["coefficients"]["C1"] = Json{{"rule", "indicator_w_positive"}, {"base", 0.0}, {"scale", 0.1}};
  return doc;
}

Json zero_cost(int steps) {
  Json doc = instance1(steps);
  doc["name"] = "zero_cost";
  doc["coefficients"]["Q"] = 0.0;
  doc["coefficients"]["Q1"] = 0.0;
  doc["coefficients"]["G"] = 0.0;
  return doc;
}

Json scalar_closed_form(int steps) {
  Json doc = scalar_doc("scalar_closed_form", steps);
  doc["coefficients"] = Json{{"A", 0.0}, {"B", 1.0}, {"C", 0.0}, {"D", Json::array({0.0})},
                             {"Q", 0.0}, {"R", 1.0}, {"G", 1.0}};
  return doc;
}

Json without_mean_field(Json doc) {
  auto& c = doc.at("coefficients");
  c.erase("A1");
  c.erase("C1");
  c.erase("Q1");
  doc["name"] = doc.value("name", std::string("instance")) + "_no_mean_field";
  return doc;
}

Json with_steps(Json doc, int steps) {
  doc["grid"]["N"] = steps;
  return doc;
}

std::vector<Json> corpus(std::uint64_t seed) {
  std::vector<Json> out{instance1(4), instance1_random(4)};
  Generator g(seed);
  const int dims[4][2] = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
  const int steps[3] = {4, 6, 8};
  for (int k = 0; k < 12; ++k) {
    const bool random = (k + k / 4) % 2 == 1;
    out.push_back(generated(g, k, dims[k % 4][0], dims[k % 4][1], steps[k % 3], random));
  }
  return out;
}

}  // namespace mfslq::instances
