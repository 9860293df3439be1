// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/reward.hpp"

#include "trace_forge/error.hpp"

#include <algorithm>
#include <cmath>

namespace trace_forge {

namespace {

void check_inputs(const RewardInputs& in) {
    if (in.r_v != 0 && in.r_v != 1) throw Error(ErrorCode::InvalidArgument, "r_v must be 0 or 1");
    if (!std::isfinite(in.r_t)) throw Error(ErrorCode::NonFinite, "thinking reward is not finite");
    if (!(in.alpha >= 0.0 && in.alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0,1]");
    if (!(in.gamma > 0.0 && in.gamma <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0,1]");
}

}  // namespace

double sigmoid(double x) {
    if (x > 60.0) return 1.0;
    if (x < -60.0) return std::exp(x);
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double gated_reward(const RewardInputs& in) {
    check_inputs(in);
    if (in.r_v == 0) return 0.0;
    return 1.0 - in.alpha + in.alpha * sigmoid(in.r_t);
}

double potential_shaped_reward(const RewardInputs& in) {
    check_inputs(in);
    if (in.r_v == 0) return 0.0;
    const double discount = in.gamma == 1.0 ? 1.0 : std::pow(in.gamma, static_cast<double>(in.steps));
    return (1.0 - in.alpha) + in.alpha * discount * sigmoid(in.r_t);
}

std::vector<double> group_advantage(std::span<const double> rewards, double eps) {
    if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "group advantage needs at least two rewards");
    for (double r : rewards)
        if (!std::isfinite(r)) throw Error(ErrorCode::NonFinite, "group reward is not finite");
    const auto n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd == 0.0) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + eps);
    return out;
}

double clipped_objective_term(double ratio, double advantage, double epsilon) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw Error(ErrorCode::InvalidArgument, "ratio must be finite and positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0,1)");
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

std::size_t best_of_n(std::span<const Candidate> candidates, const std::function<double(const std::string&)>& scorer,
                      std::size_t n) {
    if (candidates.empty() || n == 0) throw Error(ErrorCode::EmptyPool, "best-of-n needs at least one candidate");
    if (n > candidates.size())
        throw Error(ErrorCode::InvalidArgument, "n exceeds the candidate count (" + std::to_string(candidates.size()) + ")");
    std::size_t best = 0;
    double best_score = scorer(candidates[0].trace);
    for (std::size_t i = 1; i < n; ++i) {
        const double s = scorer(candidates[i].trace);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

}  // namespace trace_forge
