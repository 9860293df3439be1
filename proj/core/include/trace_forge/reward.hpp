// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace trace_forge {

struct RewardInputs {
    int r_v = 0;         // verifier outcome, 0 or 1
    double r_t = 0.0;    // thinking reward, unbounded
    double alpha = 0.2;  // blend weight in [0,1]
    double gamma = 1.0;  // (0,1]
    std::size_t steps = 0;  // T, partitioned reasoning steps
};

/// Logistic function, saturated outside [-60, 60].
double sigmoid(double x);

/// r_v * (1 - alpha + alpha * sigmoid(r_t)).
double gated_reward(const RewardInputs& in);

/// (1 - alpha) * r_v + alpha * gamma^T * [r_v = 1] * sigmoid(r_t).
/// Equal to gated_reward when gamma = 1.
double potential_shaped_reward(const RewardInputs& in);

inline constexpr double kAdvantageEpsilon = 1e-6;

/// (r_i - mean) / (std + eps), population std. A group with zero spread maps
/// to all zeros. Throws GroupTooSmall for fewer than two rewards.
std::vector<double> group_advantage(std::span<const double> rewards, double eps = kAdvantageEpsilon);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_objective_term(double ratio, double advantage, double epsilon);

struct Candidate {
    std::string trace;
    std::string response;
};

/// Index of the best-scoring candidate among the first n; ties go to the
/// lower index. The scorer only ever sees the reasoning trace.
std::size_t best_of_n(std::span<const Candidate> candidates, const std::function<double(const std::string&)>& scorer,
                      std::size_t n);

}  // namespace trace_forge
