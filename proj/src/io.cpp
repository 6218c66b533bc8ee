#include "mfslq/io.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mfslq::io {

namespace {

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

const Json& require(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(where, key), "missing required field");
  return *it;
}

double number(const Json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  return x;
}

int integer(const Json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  return v.get<int>();
}

Matrix parse_matrix(const Json& v, int rows, int cols, const std::string& field) {
  const auto shape = "expected a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix";
  if (v.is_number()) {
    const double x = number(v, field);
    if (rows == cols) return x * Matrix::Identity(rows, cols);
    throw ConfigError(field, shape + " (a bare number is only accepted for square shapes)");
  }
  if (!v.is_array()) throw ConfigError(field, shape);
  Matrix m(rows, cols);
  const bool flat = !v.empty() && !v.front().is_array();
  if (flat) {
    if (rows != 1 && cols != 1) throw ConfigError(field, shape + ", got a flat array");
    if (static_cast<int>(v.size()) != rows * cols) throw ConfigError(field, shape);
    for (int k = 0; k < rows * cols; ++k) m(k) = number(v[k], field + "[" + std::to_string(k) + "]");
    return m;
  }
  if (static_cast<int>(v.size()) != rows) throw ConfigError(field, shape);
  for (int r = 0; r < rows; ++r) {
    const auto row_field = field + "[" + std::to_string(r) + "]";
    if (!v[r].is_array() || static_cast<int>(v[r].size()) != cols) throw ConfigError(row_field, shape);
    for (int c = 0; c < cols; ++c) m(r, c) = number(v[r][c], row_field + "[" + std::to_string(c) + "]");
  }
  return m;
}

double sign_with_tolerance(double w) {
  constexpr double eps = 1e-12;
  return w > eps ? 1.0 : (w < -eps ? -1.0 : 0.0);
}

CoefficientRule parse_rule(const Json& v, int rows, int cols, const std::string& field) {
  if (!v.is_object()) return CoefficientRule::constant(parse_matrix(v, rows, cols, field));
  if (v.contains("poly")) {
    for (const auto& [key, _] : v.items()) {
      if (key != "poly") throw ConfigError(join(field, key), "unexpected key next to poly");
    }
    const Json& p = v["poly"];
    if (!p.is_array() || p.empty()) throw ConfigError(join(field, "poly"), "expected a non-empty array");
    std::vector<Matrix> c;
    for (std::size_t k = 0; k < p.size(); ++k) {
      c.push_back(parse_matrix(p[k], rows, cols, join(field, "poly") + "[" + std::to_string(k) + "]"));
    }
    return CoefficientRule::of_time([c](double t) {
      Matrix out = c.back();
      for (std::size_t k = c.size() - 1; k-- > 0;) out = out * t + c[k];
      return out;
    });
  }
  if (v.contains("rule")) {
    for (const auto& [key, _] : v.items()) {
      if (key != "rule" && key != "base" && key != "scale") throw ConfigError(join(field, key), "unknown key");
    }
    const Json& r = v["rule"];
    if (!r.is_string()) throw ConfigError(join(field, "rule"), "expected a string");
    const std::string name = r.get<std::string>();
    const Matrix base = v.contains("base") ? parse_matrix(v["base"], rows, cols, join(field, "base"))
                                           : Matrix::Zero(rows, cols);
    const Matrix scale = parse_matrix(require(v, "scale", field), rows, cols, join(field, "scale"));
    std::function<double(double)> f;
    if (name == "sign_w") {
      f = sign_with_tolerance;
    } else if (name == "indicator_w_positive") {
      f = [](double w) { return sign_with_tolerance(w) > 0.0 ? 1.0 : 0.0; };
    } else if (name == "linear_w") {
      f = [](double w) { return w; };
    } else if (name == "cos_w") {
      f = [](double w) { return std::cos(w); };
    } else {
      throw ConfigError(join(field, "rule"),
                        "unknown rule '" + name + "' (sign_w, indicator_w_positive, linear_w, cos_w)");
    }
    return CoefficientRule::of_path(
        [base, scale, f](const PathView& view) -> Matrix { return base + f(view.w) * scale; });
  }
  throw ConfigError(field, "object coefficients need a 'poly' or 'rule' key");
}

}  // namespace

ProblemSpec parse_instance(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("", "instance must be a JSON object");
  ProblemSpec spec;
  spec.name = doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "instance";

  const Json& dims = require(doc, "dimensions", "");
  spec.dims.n = integer(require(dims, "n", "dimensions"), "dimensions.n");
  spec.dims.m = integer(require(dims, "m", "dimensions"), "dimensions.m");
  if (spec.dims.n < 1) throw ConfigError("dimensions.n", "must be at least 1");
  if (spec.dims.m < 1) throw ConfigError("dimensions.m", "must be at least 1");
  const int n = spec.dims.n;
  const int m = spec.dims.m;

  const Json& grid = require(doc, "grid", "");
  const double T = number(require(grid, "T", "grid"), "grid.T");
  const int N = integer(require(grid, "N", "grid"), "grid.N");
  if (!(T > 0.0)) throw ConfigError("grid.T", "must be positive");
  if (N < 1) throw ConfigError("grid.N", "must be at least 1");
  spec.grid = TimeGrid(T, N);

  spec.xi = parse_matrix(require(doc, "xi", ""), n, 1, "xi").col(0);
  spec.delta = number(require(doc, "delta", ""), "delta");
  if (!(spec.delta > 0.0)) throw ConfigError("delta", "must be positive");

  const Json& c = require(doc, "coefficients", "");
  if (!c.is_object()) throw ConfigError("coefficients", "expected an object");
  struct Entry {
    const char* key;
    CoefficientRule CoefficientRules::*slot;
    int rows, cols;
    bool required;
  };
  const Entry entries[] = {
      {"A", &CoefficientRules::A, n, n, true},   {"A1", &CoefficientRules::A1, n, n, false},
      {"B", &CoefficientRules::B, n, m, true},   {"C", &CoefficientRules::C, n, n, true},
      {"C1", &CoefficientRules::C1, n, n, false}, {"D", &CoefficientRules::D, n, m, true},
      {"Q", &CoefficientRules::Q, n, n, true},   {"Q1", &CoefficientRules::Q1, n, n, false},
      {"R", &CoefficientRules::R, m, m, true},   {"G", &CoefficientRules::G, n, n, true},
  };
  for (const auto& [key, _] : c.items()) {
    bool known = false;
    for (const auto& e : entries) known = known || key == e.key;
    if (!known) throw ConfigError("coefficients." + key, "unknown coefficient");
  }
  for (const auto& e : entries) {
    const std::string field = std::string("coefficients.") + e.key;
    if (!c.contains(e.key)) {
      if (e.required) throw ConfigError(field, "missing required field");
      continue;
    }
    spec.coefficients.*e.slot = parse_rule(c[e.key], e.rows, e.cols, field);
  }
  return spec;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // The parser message carries the line and column.
    throw ConfigError(path.string(), std::string("JSON syntax error: ") + e.what());
  }
}

ProblemSpec load_instance(const std::filesystem::path& path) {
  const Json doc = read_json(path);
  ProblemSpec spec = parse_instance(doc);
  if (!doc.contains("name")) spec.name = path.stem().string();
  return spec;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

Json to_json(const GridVector& g) {
  Json a = Json::array();
  for (int i = 0; i < g.steps; ++i) a.push_back(to_json(Vector(g.cell(i))));
  return a;
}

Json to_json(const RankReport& r) {
  return Json{{"rows", r.rows}, {"cols", r.cols}, {"rank", r.rank}, {"nullity", r.nullity()}};
}

Json to_json(const CostBreakdown& c) {
  return Json{{"running_state", c.running_state}, {"running_mean", c.running_mean},
              {"running_control", c.running_control}, {"terminal", c.terminal},
              {"multiplier", c.multiplier}, {"total", c.total()}};
}

Json to_json(const AssumptionReport& a) {
  Json v = Json::array();
  for (const auto& x : a.violations) {
    v.push_back(Json{{"assumption", x.assumption}, {"level", x.level}, {"index", x.index}, {"detail", x.detail}});
  }
  Json out{{"h1_ok", a.h1_ok}, {"h2_ok", a.h2_ok}, {"h3_ok", a.h3_ok}, {"h3_provisional", a.h3_provisional},
           {"min_eig_R", a.min_eig_R}};
  out["max_norm_Psi"] = std::isfinite(a.max_norm_Psi) ? Json(a.max_norm_Psi) : Json(nullptr);
  out["violations"] = std::move(v);
  return out;
}

Json to_json(const SolveReport& r) {
  const auto& tree = *r.tree;
  Json out;
  out["name"] = r.name;
  out["dimensions"] = Json{{"n", r.dims.n}, {"m", r.dims.m}};
  out["grid"] = Json{{"T", tree.grid().horizon()}, {"N", tree.steps()}, {"dt", tree.dt()}};
  out["J_star"] = to_json(r.J_star);
  out["multipliers"] = Json{{"alpha", to_json(r.multipliers.alpha)},
                            {"lambda", to_json(r.multipliers.lambda)},
                            {"beta", to_json(r.multipliers.beta)}};
  Json mean = Json::array();
  for (const auto& x : r.X_star.mean) mean.push_back(to_json(x));
  out["mean_state"] = std::move(mean);
  out["kkt_rank"] = to_json(r.kkt_rank);
  out["nonunique"] = r.nonunique;
  Json res = Json::object();
  for (const auto& [k, v] : r.residuals) res[k] = v;
  out["residuals"] = std::move(res);
  out["sigma0"] = to_json(r.sigma0);
  out["min_gap"] = r.min_gap;
  out["assumptions"] = to_json(r.assumptions);
  if (tree.steps() <= 8) {
    Json levels = Json::array();
    for (int i = 0; i < tree.steps(); ++i) {
      Json nodes = Json::array();
      for (std::size_t j = 0; j < tree.width(i); ++j) {
        nodes.push_back(Json{{"gain", to_json(r.u_star.gain[i][j])}, {"offset", to_json(r.u_star.offset[i][j])}});
      }
      levels.push_back(std::move(nodes));
    }
    out["feedback"] = std::move(levels);
  }
  return out;
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

std::string summary_csv(const SolveReport& r) {
  const auto& tree = *r.tree;
  const int n = r.dims.n;
  std::ostringstream os;
  os << "t";
  for (const char* name : {"alpha", "lambda", "beta", "EX"}) {
    for (int k = 0; k < n; ++k) os << ',' << name << '_' << k;
  }
  os << '\n';
  for (int i = 0; i <= tree.steps(); ++i) {
    os << fmt(tree.grid().time(i));
    for (const GridVector* g : {&r.multipliers.alpha, &r.multipliers.lambda, &r.multipliers.beta}) {
      for (int k = 0; k < n; ++k) os << ',' << (i < tree.steps() ? fmt(g->cell(i)(k)) : std::string());
    }
    for (int k = 0; k < n; ++k) os << ',' << fmt(r.X_star.mean[i](k));
    os << '\n';
  }
  return os.str();
}

std::string cost_csv(const CostBreakdown& c) {
  std::ostringstream os;
  os << "component,value\n";
  os << "running_state," << fmt(c.running_state) << '\n';
  os << "running_mean," << fmt(c.running_mean) << '\n';
  os << "running_control," << fmt(c.running_control) << '\n';
  os << "terminal," << fmt(c.terminal) << '\n';
  os << "multiplier," << fmt(c.multiplier) << '\n';
  os << "total," << fmt(c.total()) << '\n';
  return os.str();
}

namespace {

void strip(Json& j) {
  if (j.is_object()) {
    j.erase("generated_at");
    for (auto& el : j.items()) strip(el.value());
  } else if (j.is_array()) {
    for (auto& v : j) strip(v);
  }
}

}  // namespace

std::string dump(const Json& doc, bool strip_timestamp) {
  if (!strip_timestamp) return doc.dump(2) + "\n";
  Json copy = doc;
  strip(copy);
  return copy.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace mfslq::io
