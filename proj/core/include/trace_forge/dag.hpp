// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "trace_forge/trace.hpp"

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace trace_forge {

/// Before collapse a node id equals its step index. A super-node keeps the id
/// of its first member, so ids stay stable across collapse.
using NodeId = std::size_t;
using Edge = std::pair<NodeId, NodeId>;

enum RoleFlag : unsigned {
    kRoleRoot = 1u << 0,
    kRoleBranching = 1u << 1,
    kRoleMerging = 1u << 2,
    kRoleTerminal = 1u << 3,
};

/// "root branching merging terminal" subset in that fixed order, space separated.
std::string role_string(unsigned flags);
std::vector<std::string> role_names(unsigned flags);

struct DagNode {
    NodeId id = 0;
    std::vector<std::size_t> step_indices;
    std::string text;
    std::optional<std::string> summary;
    unsigned roles = 0;
};

struct ReasoningDag {
    std::string trace_id;
    std::vector<DagNode> nodes;  // sorted by id
    std::set<Edge> edges;
    std::set<Edge> raw_edges;  // step-level edges as selected, before collapse

    const DagNode& node(NodeId id) const;
    DagNode& node(NodeId id);
    bool has_node(NodeId id) const;

    std::vector<NodeId> parents(NodeId id) const;
    std::vector<NodeId> children(NodeId id) const;
    std::size_t in_degree(NodeId id) const;
    std::size_t out_degree(NodeId id) const;
    std::vector<NodeId> node_ids() const;

    /// Recompute every node's role flags from the current degrees.
    void refresh_roles();
};

/// Checks every structural invariant (ordering, acyclicity via emission order,
/// single root, parents for non-roots, role/degree consistency, step index
/// ordering). Returns a description of the first violation, if any.
std::optional<std::string> find_violation(const ReasoningDag& dag);

struct AttachmentPool {
    std::vector<NodeId> main_branch_ids;  // root -> most recent node
    std::vector<NodeId> endpoint_ids;     // off-branch leaves, most recent first

    bool contains(NodeId id) const;
    std::vector<NodeId> all_ids() const;  // main branch then endpoints
};

inline constexpr std::size_t kDefaultPoolCap = 8;

/// Candidate parents for the node about to be created. The main branch is the
/// path from the root to the most recent node, following the largest-id parent
/// at merge points; endpoints are the remaining leaves, newest first, capped.
AttachmentPool attachment_pool(const ReasoningDag& partial, NodeId next_index, std::size_t cap = kDefaultPoolCap);

struct PoolEntry {
    NodeId id = 0;
    std::string text;
    bool on_main_branch = false;
};

/// Parent-selection side of the judge contract.
class ParentSelector {
public:
    virtual ~ParentSelector() = default;

    /// Return a non-empty subset of the pool ids. May throw
    /// Error{ParseFailure|OutOfPool} (treated as an invalid answer) or
    /// Error{JudgeUnavailable} (aborts construction).
    virtual std::vector<NodeId> select_parents(const Step& step, std::span<const PoolEntry> pool) = 0;
};

struct ParentDecision {
    NodeId node = 0;
    AttachmentPool pool;
    std::vector<NodeId> parents;
    std::size_t queries = 0;
    bool fallback = false;
};

struct DagBuildResult {
    ReasoningDag dag;  // chain-collapsed
    std::vector<ParentDecision> decisions;
};

struct DagBuildOptions {
    std::size_t pool_cap = kDefaultPoolCap;
};

DagBuildResult build_dag_logged(std::string trace_id, std::span<const Step> steps, ParentSelector& selector,
                                const DagBuildOptions& options = {});

ReasoningDag build_dag(std::string trace_id, std::span<const Step> steps, ParentSelector& selector,
                       const DagBuildOptions& options = {});

/// Merge every edge (u,v) with out-degree(u) = 1 and in-degree(v) = 1 until
/// none remain. Idempotent; raw_edges pass through untouched.
ReasoningDag collapse_chains(const ReasoningDag& dag);

/// Deterministic DOT rendering, nodes and edges in id order.
std::string export_dot(const ReasoningDag& dag, std::size_t label_chars = 48);

nlohmann::json dag_to_json(const ReasoningDag& dag);
/// Parses and validates; throws Error{InvalidArgument} on malformed input.
ReasoningDag dag_from_json(const nlohmann::json& j);

}  // namespace trace_forge
