// Python bindings: instances and reports cross the boundary as JSON text,
// dense operators as NumPy arrays.
#include "mfslq/acceptance.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mfslq;

namespace {

ProblemSpec parse(const std::string& text) {
  io::Json doc;
  try {
    doc = io::Json::parse(text);
  } catch (const io::Json::parse_error& e) {
    throw ConfigError("instance", std::string("JSON syntax error: ") + e.what());
  }
  return io::parse_instance(doc);
}

std::string solve(const std::string& text, double tol) {
  SolveOptions opts;
  opts.stationarity.tol = tol;
  return io::dump(io::to_json(solve_mfslq(parse(text), opts)));
}

std::string verify(const std::string& text, std::uint64_t seed, std::size_t particles) {
  VerifyOptions opts;
  opts.seed = seed;
  opts.particles = particles;
  return io::dump(to_json(verify_instance(parse(text), opts)));
}

py::dict operators(const std::string& text) {
  const ProblemSpec spec = parse(text);
  const CoefficientField field = evaluate_coefficients(spec);
  const HatCoefficients hat = hat_coefficients(field, solve_riccati_tree(field));
  const OperatorBundle ops = assemble_operators(hat, spec.xi);
  py::dict out;
  out["dt"] = ops.L1.dt;
  out["P_xi"] = Vector(ops.p_xi.values);
  out["L1"] = Matrix(ops.L1.matrix);
  out["L2"] = Matrix(ops.L2.matrix);
  return out;
}

py::dict oracle(const std::string& text) {
  const ProblemSpec spec = parse(text);
  const OracleResult r = brute_force_optimal(evaluate_coefficients(spec), spec.xi);
  py::dict out;
  out["J"] = r.J;
  out["method"] = r.method;
  out["iterations"] = r.iterations;
  out["gradient_norm"] = r.gradient_norm;
  return out;
}

std::vector<Matrix> riccati(const std::string& text, bool euler) {
  const CoefficientField field = evaluate_coefficients(parse(text));
  const RiccatiSolution r =
      solve_riccati_tree(field, euler ? RiccatiScheme::ExplicitEuler : RiccatiScheme::DiscreteDynamicProgramming);
  std::vector<Matrix> root;
  for (const auto& level : r.Sigma) root.push_back(level.front());
  return root;
}

std::vector<std::string> corpus(std::uint64_t seed) {
  std::vector<std::string> out;
  for (const auto& doc : instances::corpus(seed)) out.push_back(io::dump(doc));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mfslq, m) {
  m.doc() = "Mean-field stochastic LQ control on scenario trees";

  static py::exception<Error> base(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ResourceLimitError>(m, "ResourceLimitError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.attr("default_seed") = instances::kDefaultSeed;
  m.def("solve", &solve, py::arg("instance"), py::arg("tol") = 1e-8);
  m.def("verify", &verify, py::arg("instance"), py::arg("seed") = instances::kDefaultSeed,
        py::arg("particles") = 20000);
  m.def("operators", &operators, py::arg("instance"));
  m.def("oracle", &oracle, py::arg("instance"));
  m.def("riccati_root", &riccati, py::arg("instance"), py::arg("euler") = false,
        "Sigma at the root node for every level of the tree.");
  m.def("corpus", &corpus, py::arg("seed") = instances::kDefaultSeed);
  m.def("instance1", [](int steps) { return io::dump(instances::instance1(steps)); }, py::arg("steps") = 4);
  m.def("instance1_random", [](int steps) { return io::dump(instances::instance1_random(steps)); },
        py::arg("steps") = 4);
}
