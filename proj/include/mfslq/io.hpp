#pragma once

#include "mfslq/stationarity.hpp"

#include <json.hpp>

#include <filesystem>

namespace mfslq::io {

using Json = nlohmann::ordered_json;

/// Builds a problem from its JSON description. Errors name the offending field.
///
/// Coefficient entries accept a number (scaled identity for square shapes), a
/// nested array (row-major), {"poly": [c0, c1, ...]} for c0 + c1 t + ..., or
/// {"rule": sign_w | indicator_w_positive | linear_w | cos_w, "base": M, "scale": M}
/// for base + scale * f(W(t)).
ProblemSpec parse_instance(const Json& doc);

/// Reads and parses an instance file; syntax errors report line and column.
ProblemSpec load_instance(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Json to_json(const GridVector& g);
Json to_json(const RankReport& r);
Json to_json(const CostBreakdown& c);
Json to_json(const AssumptionReport& a);

/// SolveReport as JSON; per-node gains are included for N ≤ 8.
Json to_json(const SolveReport& report);

/// Time-indexed table: t, α*, λ*, β*, EX*.
std::string summary_csv(const SolveReport& report);
/// One row per cost component.
std::string cost_csv(const CostBreakdown& cost);

/// Serializes with a fixed layout. Keys named "generated_at" are dropped when
/// `strip_timestamp` is set, which is how outputs are compared.
std::string dump(const Json& doc, bool strip_timestamp = false);

void write_text(const std::filesystem::path& path, const std::string& content);

/// ISO-8601 UTC wall-clock time.
std::string timestamp();

}  // namespace mfslq::io
