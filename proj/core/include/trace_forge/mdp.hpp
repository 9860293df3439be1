// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trace_forge {

/// Finite discounted MDP. Transitions are stored one row per (s,a) pair,
/// row index s * A + a, columns over next states.
struct TabularMdp {
    std::size_t S = 0;
    std::size_t A = 0;
    Eigen::MatrixXd P;  // (S*A) x S
    Eigen::MatrixXd R;  // S x A, expected reward
    double gamma = 0.9;
    Eigen::VectorXd rho;
    bool shaped = false;  // shaped rewards may leave [0,1]

    std::size_t row(std::size_t s, std::size_t a) const { return s * A + a; }
    /// Throws Error{InvalidArgument} describing the first broken invariant.
    void validate() const;
};

struct SoftmaxPolicy {
    Eigen::MatrixXd theta;  // S x A

    /// Row-stochastic S x A matrix of action probabilities.
    Eigen::MatrixXd probs() const;
    static SoftmaxPolicy uniform(std::size_t S, std::size_t A);
};

/// Seeded random instance: Dirichlet(1) transition rows and start
/// distribution, Uniform[0,1] rewards.
TabularMdp random_mdp(std::uint64_t seed, std::size_t S, std::size_t A, double gamma);
Eigen::VectorXd random_potential(std::uint64_t seed, std::size_t S, double scale = 1.0);
SoftmaxPolicy random_policy(std::uint64_t seed, std::size_t S, std::size_t A, double scale = 1.0);

struct ValueIterationResult {
    Eigen::VectorXd V;
    Eigen::MatrixXd Q;
    std::vector<std::vector<std::size_t>> optimal_actions;
    std::size_t iterations = 0;
    double residual = 0.0;  // sup-norm Bellman residual of V
};

inline constexpr double kBellmanTolerance = 1e-10;

/// Throws Error{NonConvergence} if the residual is still >= kBellmanTolerance
/// after max_iterations sweeps.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tie_tol = 1e-9,
                                     std::size_t max_iterations = 100000);

/// R'(s,a) = R(s,a) + alpha * (gamma * E[phi(s')] - phi(s)).
TabularMdp apply_shaping(const TabularMdp& mdp, const Eigen::VectorXd& phi, double alpha);

/// Distribution over next states under `pi` (S x S) and expected reward (S).
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Eigen::MatrixXd& pi);
Eigen::VectorXd policy_reward(const TabularMdp& mdp, const Eigen::MatrixXd& pi);

/// V^pi by direct linear solve. Throws Error{SingularSystem} when the solve
/// residual is not small.
Eigen::VectorXd policy_evaluation(const TabularMdp& mdp, const Eigen::MatrixXd& pi);
/// Q^pi - V^pi.
Eigen::MatrixXd exact_advantage(const TabularMdp& mdp, const Eigen::MatrixXd& pi);

/// theta' = theta + beta * (advantage + alpha * a_trm) / (1 - gamma).
SoftmaxPolicy npg_update(const SoftmaxPolicy& policy, const Eigen::MatrixXd& advantage, const Eigen::MatrixXd& a_trm,
                         double alpha, double beta, double gamma);
/// npg_update with the exact advantage of `policy` in `mdp`.
SoftmaxPolicy npg_step(const TabularMdp& mdp, const SoftmaxPolicy& policy, const Eigen::MatrixXd& a_trm, double alpha,
                       double beta);

/// d_rho^pi = (1 - gamma) * (I - gamma * P_pi^T)^-1 rho.
Eigen::VectorXd discounted_visitation(const TabularMdp& mdp, const Eigen::MatrixXd& pi);

struct ImprovementProbe {
    double delta_v = 0.0;  // E_rho[V^pi' - V^pi]
    double d_trm = 0.0;    // E_rho Var_pi[alpha * a_trm]
    double a_align = 0.0;  // E_rho E_pi[alpha * a_trm * A^pi]
    SoftmaxPolicy updated;
};

ImprovementProbe improvement_probe(const TabularMdp& mdp, const SoftmaxPolicy& policy, const Eigen::MatrixXd& a_trm,
                                   double alpha, double beta);

/// One randomized instance for the simulate-mdp report.
struct MdpTrial {
    std::uint64_t seed = 0;
    std::size_t S = 0;
    std::size_t A = 0;
    double gamma = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double delta_v = 0.0;
    double d_trm = 0.0;
    double a_align = 0.0;
    bool invariance_ok = false;
};

/// S in [2,8], A in [2,4], gamma in {0.5,0.9}, all drawn from `seed`. Checks
/// optimal-action invariance under a random potential and probes one NPG step
/// with a_trm = A^pi from a random policy.
MdpTrial run_mdp_trial(std::uint64_t seed, double alpha, double beta, double tie_tol = 1e-9);

std::string mdp_trials_csv(const std::vector<MdpTrial>& trials);

}  // namespace trace_forge
