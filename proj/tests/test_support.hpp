#pragma once

#include "mfslq/acceptance.hpp"

#include <doctest.h>

namespace mfslq::test {

inline ProblemSpec spec(const io::Json& doc) { return io::parse_instance(doc); }

inline ProblemSpec instance1(int steps = 4) { return spec(instances::instance1(steps)); }

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// Exact value of the INSTANCE-1 discrete problem at N=4.
inline constexpr double kInstance1Cost = 1.570384231944568;
/// Same with A = 0.1 + 0.2 sign(W) and C1 = 0.1 1{W > 0}.
inline constexpr double kInstance1RandomCost = 1.5511866335758886;

}  // namespace mfslq::test
