#pragma once

#include "mfslq/io.hpp"

#include <cstdint>

namespace mfslq::instances {

inline constexpr std::uint64_t kDefaultSeed = 20240601;

/// Scalar reference problem: T=1, A=0.1, A1=0.05, B=1, C=0.2, C1=0.1, D=0.5,
/// Q=1, Q1=0.5, R=1, G=1, ξ=1.
io::Json instance1(int steps = 4);

/// Same with A = 0.1 + 0.2 sign(W) and C1 = 0.1 1{W > 0}.
io::Json instance1_random(int steps = 4);

/// Q = Q1 = G = 0, so the optimal control is zero with zero cost.
io::Json zero_cost(int steps = 4);

/// A = C = D = Q = 0, B = R = G = 1: Riccati solution G / (1 + G (T - t)).
io::Json scalar_closed_form(int steps);

/// Removes A1, C1 and Q1.
io::Json without_mean_field(io::Json doc);

io::Json with_steps(io::Json doc, int steps);

/// Reproducible test corpus: INSTANCE-1, its random variant, and generated
/// problems covering n, m ∈ {1, 2}, N ∈ {4, 6, 8}, deterministic and
/// node-dependent coefficients.
std::vector<io::Json> corpus(std::uint64_t seed = kDefaultSeed);

/// Uniform draw on [0, 1) from the top 53 bits, identical on every platform.
double uniform01(std::uint64_t bits);

}  // namespace mfslq::instances
