#include "test_support.hpp"

#include <cmath>
#include <set>

using namespace mfslq;
using namespace mfslq::test;

namespace {

std::string parse_error(const io::Json& doc) {
  try {
    io::parse_instance(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

Matrix eval(const CoefficientRule& r, double t, double w) {
  const PathView v{1, 0, t, w, {}};
  return r(v);
}

}  // namespace

TEST_CASE("INSTANCE-1 round trip") {
  const ProblemSpec s = io::load_instance(std::string(MFSLQ_SOURCE_DIR) + "/instances/instance1.json");
  CHECK(s.name == "instance1");
  CHECK(s.grid.steps() == 4);
  CHECK(s.deterministic());
  CHECK(s.coefficients.A1.at_time(0.3)(0, 0) == 0.05);
  CHECK(s.xi(0) == 1.0);
}

TEST_CASE("configuration errors name the field") {
  const io::Json base = instances::instance1(4);
  SUBCASE("missing R") {
    io::Json doc = base;
    doc["coefficients"].erase("R");
    CHECK(contains(parse_error(doc), "coefficients.R"));
    CHECK(contains(parse_error(doc), "missing"));
  }
  SUBCASE("bad shape") {
    io::Json doc = base;
    doc["coefficients"]["B"] = io::Json::array({1.0, 2.0});
    CHECK(contains(parse_error(doc), "coefficients.B"));
  }
  SUBCASE("unknown rule") {
    io::Json doc = base;
    doc["coefficients"]["A"] = {{"rule", "tan_w"}, {"base", 0.1}, {"scale", 0.1}};
    CHECK(contains(parse_error(doc), "coefficients.A.rule"));
  }
  SUBCASE("unknown coefficient") {
    io::Json doc = base;
    doc["coefficients"]["E"] = 1.0;
    CHECK(contains(parse_error(doc), "coefficients.E"));
  }
  SUBCASE("non-positive horizon") {
    io::Json doc = base;
    doc["grid"]["T"] = 0.0;
    CHECK(contains(parse_error(doc), "grid.T"));
  }
  SUBCASE("bare number for a rectangular shape") {
    io::Json doc = base;
    doc["dimensions"]["m"] = 2;
    doc["coefficients"]["R"] = 1.0;
    CHECK(contains(parse_error(doc), "coefficients.B"));
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(io::load_instance("/nonexistent/instance.json"), ConfigError); }
}

TEST_CASE("data files") {
  const std::string dir = std::string(MFSLQ_SOURCE_DIR) + "/tests/data/";
  try {
    io::load_instance(dir + "missing_R.json");
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "coefficients.R"));
  }
  try {
    io::load_instance(dir + "syntax_error.json");
    FAIL("expected a syntax error");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "line 4"));
  }
}

TEST_CASE("coefficient formats") {
  io::Json doc = instances::instance1(4);
  auto& c = doc["coefficients"];
  c["A"] = {{"poly", {0.1, 0.2, 0.3}}};
  c["C"] = {{"rule", "sign_w"}, {"base", 0.1}, {"scale", 0.2}};
  c["C1"] = {{"rule", "indicator_w_positive"}, {"base", 0.0}, {"scale", 0.1}};
  c["D"] = {{"rule", "linear_w"}, {"base", 0.5}, {"scale", 0.1}};
  c["Q"] = {{"rule", "cos_w"}, {"base", 1.0}, {"scale", 0.5}};
  c["B"] = io::Json::array({io::Json::array({2.0})});
  const ProblemSpec s = spec(doc);
  CHECK_FALSE(s.deterministic());
  CHECK(s.coefficients.A.at_time(0.5)(0, 0) == doctest::Approx(0.1 + 0.1 + 0.075));
  CHECK(eval(s.coefficients.C, 0.5, 0.3)(0, 0) == doctest::Approx(0.3));
  CHECK(eval(s.coefficients.C, 0.5, -0.3)(0, 0) == doctest::Approx(-0.1));
  CHECK(eval(s.coefficients.C, 0.5, 0.0)(0, 0) == doctest::Approx(0.1));
  CHECK(eval(s.coefficients.C1, 0.5, 0.3)(0, 0) == doctest::Approx(0.1));
  CHECK(eval(s.coefficients.C1, 0.5, -0.3)(0, 0) == doctest::Approx(0.0));
  CHECK(eval(s.coefficients.D, 0.5, -2.0)(0, 0) == doctest::Approx(0.3));
  CHECK(eval(s.coefficients.Q, 0.5, 0.0)(0, 0) == doctest::Approx(1.5));
  CHECK(s.coefficients.B.at_time(0.0)(0, 0) == 2.0);
}

TEST_CASE("rectangular coefficients accept flat arrays") {
  io::Json doc = instances::instance1(4);
  doc["dimensions"]["m"] = 2;
  doc["coefficients"]["B"] = {1.0, 0.5};
  doc["coefficients"]["D"] = {0.5, 0.0};
  doc["coefficients"]["R"] = 1.0;
  CHECK(parse_error(doc).empty());
  doc["coefficients"]["R"] = {{1.0, 0.0}, {0.0, 2.0}};
  const ProblemSpec s = spec(doc);
  CHECK(s.coefficients.B.at_time(0.0).rows() == 1);
  CHECK(s.coefficients.B.at_time(0.0).cols() == 2);
  CHECK(s.coefficients.R.at_time(0.0)(1, 1) == 2.0);
}

TEST_CASE("dump strips timestamps and keeps key order") {
  io::Json doc{{"z", 1}, {"generated_at", io::timestamp()}, {"a", {{"generated_at", "x"}, {"b", 2}}}};
  const std::string plain = io::dump(doc, true);
  CHECK_FALSE(contains(plain, "generated_at"));
  CHECK(plain.find("\"z\"") < plain.find("\"a\""));
  CHECK(contains(io::dump(doc), "generated_at"));
  CHECK(io::timestamp().back() == 'Z');
}

TEST_CASE("solve report serialization") {
  const SolveReport rep = solve_mfslq(instance1(4));
  const io::Json j = io::to_json(rep);
  CHECK(j["J_star"]["total"].get<double>() == doctest::Approx(kInstance1Cost).epsilon(1e-12));
  const std::string csv = io::summary_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(contains(io::cost_csv(rep.J_star), "total"));
}

TEST_CASE("corpus coverage and reproducibility") {
  const std::vector<io::Json> a = instances::corpus();
  const std::vector<io::Json> b = instances::corpus();
  REQUIRE(a.size() >= 12);
  std::set<std::string> names;
  std::set<int> n_seen, m_seen, N_seen;
  int det = 0, random = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(io::dump(a[k]) == io::dump(b[k]));
    const ProblemSpec s = spec(a[k]);
    names.insert(s.name);
    n_seen.insert(s.dims.n);
    m_seen.insert(s.dims.m);
    N_seen.insert(s.grid.steps());
    (s.deterministic() ? det : random)++;
  }
  CHECK(names.size() == a.size());
  CHECK(n_seen == std::set<int>{1, 2});
  CHECK(m_seen == std::set<int>{1, 2});
  CHECK(N_seen.count(4) + N_seen.count(6) + N_seen.count(8) == 3);
  CHECK(det >= 3);
  CHECK(random >= 3);
  CHECK(io::dump(instances::corpus(1)) != io::dump(instances::corpus()));
}

TEST_CASE("uniform draw uses the top 53 bits") {
  CHECK(instances::uniform01(0) == 0.0);
  CHECK(instances::uniform01(~std::uint64_t{0}) < 1.0);
  CHECK(instances::uniform01(std::uint64_t{1} << 63) == 0.5);
}
