// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/mdp.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/util.hpp"

#include <cmath>
#include <random>

namespace trace_forge {

void TabularMdp::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "invalid MDP: " + what); };
    if (S == 0 || A == 0) fail("empty state or action space");
    if (static_cast<std::size_t>(P.rows()) != S * A || static_cast<std::size_t>(P.cols()) != S) fail("P has wrong shape");
    if (static_cast<std::size_t>(R.rows()) != S || static_cast<std::size_t>(R.cols()) != A) fail("R has wrong shape");
    if (static_cast<std::size_t>(rho.size()) != S) fail("rho has wrong size");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0,1)");
    if (!P.allFinite() || !R.allFinite() || !rho.allFinite()) fail("non-finite entry");
    if ((P.array() < 0.0).any()) fail("negative transition probability");
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        if (std::abs(P.row(i).sum() - 1.0) > 1e-12) fail("transition row " + std::to_string(i) + " does not sum to 1");
    if ((rho.array() < 0.0).any() || std::abs(rho.sum() - 1.0) > 1e-12) fail("rho is not a distribution");
    if (!shaped && ((R.array() < 0.0).any() || (R.array() > 1.0).any())) fail("reward outside [0,1]");
}

Eigen::MatrixXd SoftmaxPolicy::probs() const {
    Eigen::MatrixXd pi(theta.rows(), theta.cols());
    for (Eigen::Index s = 0; s < theta.rows(); ++s) {
        const double top = theta.row(s).maxCoeff();
        Eigen::RowVectorXd e = (theta.row(s).array() - top).exp();
        pi.row(s) = e / e.sum();
    }
    return pi;
}

SoftmaxPolicy SoftmaxPolicy::uniform(std::size_t S, std::size_t A) {
    return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A))};
}

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

Eigen::RowVectorXd dirichlet_one(std::mt19937_64& rng, std::size_t n) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::RowVectorXd v(idx(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = expo(rng);
    return v / v.sum();
}

// Greedy backup: Q = R + gamma * P V, reshaped S x A.
Eigen::MatrixXd backup(const TabularMdp& mdp, const Eigen::VectorXd& V) {
    const Eigen::VectorXd next = mdp.P * V;
    Eigen::MatrixXd Q(idx(mdp.S), idx(mdp.A));
    for (std::size_t s = 0; s < mdp.S; ++s)
        for (std::size_t a = 0; a < mdp.A; ++a)
            Q(idx(s), idx(a)) = mdp.R(idx(s), idx(a)) + mdp.gamma * next(idx(mdp.row(s, a)));
    return Q;
}

void check_policy_shape(const TabularMdp& mdp, const Eigen::MatrixXd& m, const char* what) {
    if (static_cast<std::size_t>(m.rows()) != mdp.S || static_cast<std::size_t>(m.cols()) != mdp.A)
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be S x A");
}

}  // namespace

TabularMdp random_mdp(std::uint64_t seed, std::size_t S, std::size_t A, double gamma) {
    std::mt19937_64 rng(mix_seed(seed, 0x6d6470));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TabularMdp m;
    m.S = S;
    m.A = A;
    m.gamma = gamma;
    m.P.resize(idx(S * A), idx(S));
    for (std::size_t r = 0; r < S * A; ++r) m.P.row(idx(r)) = dirichlet_one(rng, S);
    m.R.resize(idx(S), idx(A));
    for (Eigen::Index s = 0; s < m.R.rows(); ++s)
        for (Eigen::Index a = 0; a < m.R.cols(); ++a) m.R(s, a) = unit(rng);
    m.rho = dirichlet_one(rng, S).transpose();
    m.validate();
    return m;
}

Eigen::VectorXd random_potential(std::uint64_t seed, std::size_t S, double scale) {
    std::mt19937_64 rng(mix_seed(seed, 0x706869));
    std::uniform_real_distribution<double> dist(-scale, scale);
    Eigen::VectorXd phi(idx(S));
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi(i) = dist(rng);
    return phi;
}

SoftmaxPolicy random_policy(std::uint64_t seed, std::size_t S, std::size_t A, double scale) {
    std::mt19937_64 rng(mix_seed(seed, 0x706f6c));
    std::normal_distribution<double> dist(0.0, scale);
    SoftmaxPolicy p{Eigen::MatrixXd(idx(S), idx(A))};
    for (Eigen::Index s = 0; s < p.theta.rows(); ++s)
        for (Eigen::Index a = 0; a < p.theta.cols(); ++a) p.theta(s, a) = dist(rng);
    return p;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tie_tol, std::size_t max_iterations) {
    mdp.validate();
    ValueIterationResult out;
    Eigen::VectorXd V = Eigen::VectorXd::Zero(idx(mdp.S));
    double residual = 0.0;
    std::size_t it = 0;
    for (; it < max_iterations; ++it) {
        const Eigen::VectorXd next = backup(mdp, V).rowwise().maxCoeff();
        residual = (next - V).cwiseAbs().maxCoeff();
        V = next;
        if (residual < kBellmanTolerance * 1e-2) break;
    }

    // Polish with an exact evaluation of the greedy policy; keep whichever
    // value has the smaller Bellman residual.
    Eigen::MatrixXd greedy = Eigen::MatrixXd::Zero(idx(mdp.S), idx(mdp.A));
    const Eigen::MatrixXd Q0 = backup(mdp, V);
    for (Eigen::Index s = 0; s < Q0.rows(); ++s) {
        Eigen::Index best = 0;
        Q0.row(s).maxCoeff(&best);
        greedy(s, best) = 1.0;
    }
    auto bellman_residual = [&](const Eigen::VectorXd& v) {
        return (backup(mdp, v).rowwise().maxCoeff() - v).cwiseAbs().maxCoeff();
    };
    residual = bellman_residual(V);
    try {
        const Eigen::VectorXd polished = policy_evaluation(mdp, greedy);
        const double r = bellman_residual(polished);
        if (r < residual) {
            V = polished;
            residual = r;
        }
    } catch (const Error&) {
    }
    if (residual >= kBellmanTolerance)
        throw Error(ErrorCode::NonConvergence, "value iteration stopped at residual " + format_double(residual) +
                                                   " after " + std::to_string(it) + " sweeps");

    out.V = V;
    out.Q = backup(mdp, V);
    out.iterations = it;
    out.residual = residual;
    out.optimal_actions.resize(mdp.S);
    for (std::size_t s = 0; s < mdp.S; ++s) {
        const double top = out.Q.row(idx(s)).maxCoeff();
        for (std::size_t a = 0; a < mdp.A; ++a)
            if (out.Q(idx(s), idx(a)) >= top - tie_tol) out.optimal_actions[s].push_back(a);
    }
    return out;
}

TabularMdp apply_shaping(const TabularMdp& mdp, const Eigen::VectorXd& phi, double alpha) {
    if (static_cast<std::size_t>(phi.size()) != mdp.S || !phi.allFinite())
        throw Error(ErrorCode::InvalidArgument, "potential must be finite with one entry per state");
    TabularMdp out = mdp;
    const Eigen::VectorXd expected = mdp.P * phi;
    for (std::size_t s = 0; s < mdp.S; ++s)
        for (std::size_t a = 0; a < mdp.A; ++a)
            out.R(idx(s), idx(a)) += alpha * (mdp.gamma * expected(idx(mdp.row(s, a))) - phi(idx(s)));
    out.shaped = true;
    return out;
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Eigen::MatrixXd& pi) {
    check_policy_shape(mdp, pi, "policy");
    Eigen::MatrixXd Ppi = Eigen::MatrixXd::Zero(idx(mdp.S), idx(mdp.S));
    for (std::size_t s = 0; s < mdp.S; ++s)
        for (std::size_t a = 0; a < mdp.A; ++a) Ppi.row(idx(s)) += pi(idx(s), idx(a)) * mdp.P.row(idx(mdp.row(s, a)));
    return Ppi;
}

Eigen::VectorXd policy_reward(const TabularMdp& mdp, const Eigen::MatrixXd& pi) {
    check_policy_shape(mdp, pi, "policy");
    return (mdp.R.array() * pi.array()).rowwise().sum();
}

Eigen::VectorXd policy_evaluation(const TabularMdp& mdp, const Eigen::MatrixXd& pi) {
    if (!(mdp.gamma < 1.0)) throw Error(ErrorCode::SingularSystem, "policy evaluation needs gamma < 1");
    const Eigen::MatrixXd M =
        Eigen::MatrixXd::Identity(idx(mdp.S), idx(mdp.S)) - mdp.gamma * policy_transition(mdp, pi);
    const Eigen::VectorXd r = policy_reward(mdp, pi);
    const Eigen::VectorXd V = M.partialPivLu().solve(r);
    const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
    if (!V.allFinite() || (M * V - r).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw Error(ErrorCode::SingularSystem, "policy evaluation system is singular");
    return V;
}

Eigen::MatrixXd exact_advantage(const TabularMdp& mdp, const Eigen::MatrixXd& pi) {
    const Eigen::VectorXd V = policy_evaluation(mdp, pi);
    return backup(mdp, V).colwise() - V;
}

SoftmaxPolicy npg_update(const SoftmaxPolicy& policy, const Eigen::MatrixXd& advantage, const Eigen::MatrixXd& a_trm,
                         double alpha, double beta, double gamma) {
    if (!(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0,1)");
    if (advantage.rows() != policy.theta.rows() || advantage.cols() != policy.theta.cols() ||
        a_trm.rows() != policy.theta.rows() || a_trm.cols() != policy.theta.cols())
        throw Error(ErrorCode::InvalidArgument, "advantage tables must match the policy shape");
    return {policy.theta + beta * (advantage + alpha * a_trm) / (1.0 - gamma)};
}

SoftmaxPolicy npg_step(const TabularMdp& mdp, const SoftmaxPolicy& policy, const Eigen::MatrixXd& a_trm, double alpha,
                       double beta) {
    return npg_update(policy, exact_advantage(mdp, policy.probs()), a_trm, alpha, beta, mdp.gamma);
}

Eigen::VectorXd discounted_visitation(const TabularMdp& mdp, const Eigen::MatrixXd& pi) {
    const Eigen::MatrixXd M =
        Eigen::MatrixXd::Identity(idx(mdp.S), idx(mdp.S)) - mdp.gamma * policy_transition(mdp, pi).transpose();
    return (1.0 - mdp.gamma) * M.partialPivLu().solve(mdp.rho);
}

ImprovementProbe improvement_probe(const TabularMdp& mdp, const SoftmaxPolicy& policy, const Eigen::MatrixXd& a_trm,
                                   double alpha, double beta) {
    mdp.validate();
    check_policy_shape(mdp, a_trm, "a_trm");
    const Eigen::MatrixXd pi = policy.probs();
    const Eigen::MatrixXd adv = exact_advantage(mdp, pi);

    ImprovementProbe out;
    out.updated = npg_update(policy, adv, a_trm, alpha, beta, mdp.gamma);
    const Eigen::VectorXd v_old = policy_evaluation(mdp, pi);
    const Eigen::VectorXd v_new = policy_evaluation(mdp, out.updated.probs());
    out.delta_v = mdp.rho.dot(v_new - v_old);

    const Eigen::MatrixXd shaped = alpha * a_trm;
    for (std::size_t s = 0; s < mdp.S; ++s) {
        const auto row = idx(s);
        const double mean = pi.row(row).dot(shaped.row(row));
        const double second = pi.row(row).dot(shaped.row(row).cwiseProduct(shaped.row(row)));
        out.d_trm += mdp.rho(row) * std::max(0.0, second - mean * mean);
        out.a_align += mdp.rho(row) * pi.row(row).dot(shaped.row(row).cwiseProduct(adv.row(row)));
    }
    return out;
}

MdpTrial run_mdp_trial(std::uint64_t seed, double alpha, double beta, double tie_tol) {
    std::mt19937_64 rng(mix_seed(seed, 0x747269));
    MdpTrial t;
    t.seed = seed;
    t.S = 2 + rng() % 7;
    t.A = 2 + rng() % 3;
    t.gamma = rng() % 2 == 0 ? 0.5 : 0.9;
    t.alpha = alpha;
    t.beta = beta;

    const TabularMdp mdp = random_mdp(seed, t.S, t.A, t.gamma);
    const TabularMdp shaped = apply_shaping(mdp, random_potential(seed, t.S, 5.0), alpha);
    t.invariance_ok =
        value_iteration(mdp, tie_tol).optimal_actions == value_iteration(shaped, tie_tol).optimal_actions;

    const SoftmaxPolicy policy = random_policy(seed, t.S, t.A);
    const Eigen::MatrixXd a_trm = exact_advantage(mdp, policy.probs());
    const ImprovementProbe probe = improvement_probe(mdp, policy, a_trm, alpha, beta);
    t.delta_v = probe.delta_v;
    t.d_trm = probe.d_trm;
    t.a_align = probe.a_align;
    return t;
}

std::string mdp_trials_csv(const std::vector<MdpTrial>& trials) {
    std::string out = "seed,S,A,gamma,alpha,beta,delta_v,d_trm,a_align,invariance_ok\n";
    for (const auto& t : trials) {
        out += std::to_string(t.seed) + "," + std::to_string(t.S) + "," + std::to_string(t.A) + "," +
               format_double(t.gamma) + "," + format_double(t.alpha) + "," + format_double(t.beta) + "," +
               format_double(t.delta_v) + "," + format_double(t.d_trm) + "," + format_double(t.a_align) + "," +
               (t.invariance_ok ? "true" : "false") + "\n";
    }
    return out;
}

}  // namespace trace_forge
