// Copyright (C) 2026 The trace-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "trace_forge/dag.hpp"

#include "trace_forge/error.hpp"
#include "trace_forge/log.hpp"
#include "trace_forge/util.hpp"

#include <algorithm>
#include <map>

namespace trace_forge {

std::vector<std::string> role_names(unsigned flags) {
    std::vector<std::string> names;
    if (flags & kRoleRoot) names.emplace_back("root");
    if (flags & kRoleBranching) names.emplace_back("branching");
    if (flags & kRoleMerging) names.emplace_back("merging");
    if (flags & kRoleTerminal) names.emplace_back("terminal");
    return names;
}

std::string role_string(unsigned flags) {
    std::string out;
    for (const auto& name : role_names(flags)) {
        if (!out.empty()) out += ' ';
        out += name;
    }
    return out;
}

namespace {

auto find_node(const std::vector<DagNode>& nodes, NodeId id) {
    return std::lower_bound(nodes.begin(), nodes.end(), id, [](const DagNode& n, NodeId v) { return n.id < v; });
}

unsigned roles_for(std::size_t in, std::size_t out) {
    unsigned r = 0;
    if (in == 0) r |= kRoleRoot;
    if (out >= 2) r |= kRoleBranching;
    if (in >= 2) r |= kRoleMerging;
    if (out == 0) r |= kRoleTerminal;
    return r;
}

}  // namespace

const DagNode& ReasoningDag::node(NodeId id) const {
    auto it = find_node(nodes, id);
    if (it == nodes.end() || it->id != id) throw Error(ErrorCode::InvalidArgument, "no node " + std::to_string(id));
    return *it;
}

DagNode& ReasoningDag::node(NodeId id) {
    return const_cast<DagNode&>(std::as_const(*this).node(id));
}

bool ReasoningDag::has_node(NodeId id) const {
    auto it = find_node(nodes, id);
    return it != nodes.end() && it->id == id;
}

std::vector<NodeId> ReasoningDag::parents(NodeId id) const {
    std::vector<NodeId> out;
    for (const auto& [from, to] : edges)
        if (to == id) out.push_back(from);
    return out;
}

std::vector<NodeId> ReasoningDag::children(NodeId id) const {
    std::vector<NodeId> out;
    for (auto it = edges.lower_bound({id, 0}); it != edges.end() && it->first == id; ++it) out.push_back(it->second);
    return out;
}

std::size_t ReasoningDag::in_degree(NodeId id) const {
    return static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [id](const Edge& e) { return e.second == id; }));
}

std::size_t ReasoningDag::out_degree(NodeId id) const { return children(id).size(); }

std::vector<NodeId> ReasoningDag::node_ids() const {
    std::vector<NodeId> ids;
    ids.reserve(nodes.size());
    for (const auto& n : nodes) ids.push_back(n.id);
    return ids;
}

void ReasoningDag::refresh_roles() {
    std::map<NodeId, std::size_t> in, out;
    for (const auto& [from, to] : edges) {
        ++out[from];
        ++in[to];
    }
    for (auto& n : nodes) n.roles = roles_for(in[n.id], out[n.id]);
}

std::optional<std::string> find_violation(const ReasoningDag& dag) {
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
        const DagNode& n = dag.nodes[i];
        if (i > 0 && dag.nodes[i - 1].id >= n.id) return "nodes not sorted by id";
        if (n.step_indices.empty()) return "node " + std::to_string(n.id) + " has no steps";
        if (n.step_indices.front() != n.id) return "node " + std::to_string(n.id) + " id differs from first step";
        if (!std::is_sorted(n.step_indices.begin(), n.step_indices.end(), std::less_equal<>{}) ||
            std::adjacent_find(n.step_indices.begin(), n.step_indices.end()) != n.step_indices.end())
            return "node " + std::to_string(n.id) + " step indices not strictly increasing";
    }
    std::map<NodeId, std::size_t> in, out;
    for (const auto& [from, to] : dag.edges) {
        if (!dag.has_node(from) || !dag.has_node(to))
            return "edge references unknown node " + std::to_string(from) + "->" + std::to_string(to);
        if (from >= to) return "edge " + std::to_string(from) + "->" + std::to_string(to) + " violates emission order";
        ++out[from];
        ++in[to];
    }
    std::size_t roots = 0;
    for (const auto& n : dag.nodes) {
        if (in[n.id] == 0) ++roots;
        if (n.roles != roles_for(in[n.id], out[n.id]))
            return "node " + std::to_string(n.id) + " role flags disagree with degrees";
    }
    if (!dag.nodes.empty() && roots != 1) return "expected exactly one root, found " + std::to_string(roots);
    return std::nullopt;
}

bool AttachmentPool::contains(NodeId id) const {
    return std::find(main_branch_ids.begin(), main_branch_ids.end(), id) != main_branch_ids.end() ||
           std::find(endpoint_ids.begin(), endpoint_ids.end(), id) != endpoint_ids.end();
}

std::vector<NodeId> AttachmentPool::all_ids() const {
    std::vector<NodeId> ids = main_branch_ids;
    ids.insert(ids.end(), endpoint_ids.begin(), endpoint_ids.end());
    return ids;
}

AttachmentPool attachment_pool(const ReasoningDag& partial, NodeId next_index, std::size_t cap) {
    if (partial.nodes.empty()) throw Error(ErrorCode::InvalidArgument, "attachment pool needs at least one node");
    if (next_index <= partial.nodes.back().id)
        throw Error(ErrorCode::InvalidArgument, "next index must follow every existing node");

    std::map<NodeId, NodeId> largest_parent;
    std::set<NodeId> has_child;
    for (const auto& [from, to] : partial.edges) {
        auto [it, inserted] = largest_parent.emplace(to, from);
        if (!inserted) it->second = std::max(it->second, from);
        has_child.insert(from);
    }

    AttachmentPool pool;
    for (NodeId cur = partial.nodes.back().id;;) {
        pool.main_branch_ids.push_back(cur);
        auto it = largest_parent.find(cur);
        if (it == largest_parent.end()) break;
        cur = it->second;
    }
    std::reverse(pool.main_branch_ids.begin(), pool.main_branch_ids.end());

    const std::set<NodeId> on_branch(pool.main_branch_ids.begin(), pool.main_branch_ids.end());
    for (auto it = partial.nodes.rbegin(); it != partial.nodes.rend() && pool.endpoint_ids.size() < cap; ++it) {
        if (!has_child.count(it->id) && !on_branch.count(it->id)) pool.endpoint_ids.push_back(it->id);
    }
    return pool;
}

namespace {

bool valid_selection(const std::vector<NodeId>& parents, const AttachmentPool& pool) {
    return !parents.empty() &&
           std::all_of(parents.begin(), parents.end(), [&](NodeId id) { return pool.contains(id); });
}

std::vector<NodeId> query_selector(ParentSelector& selector, const Step& step, std::span<const PoolEntry> entries) {
    try {
        auto parents = selector.select_parents(step, entries);
        std::sort(parents.begin(), parents.end());
        parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
        return parents;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseFailure || e.code() == ErrorCode::OutOfPool ||
            e.code() == ErrorCode::InvalidParent) {
            log::warn("parent_selection_invalid", {{"step", step.index}, {"error", e.what()}});
            return {};
        }
        throw;
    }
}

}  // namespace

DagBuildResult build_dag_logged(std::string trace_id, std::span<const Step> steps, ParentSelector& selector,
                                const DagBuildOptions& options) {
    if (steps.empty()) throw Error(ErrorCode::InvalidArgument, "cannot build a DAG from zero steps");
    if (options.pool_cap < 1) throw Error(ErrorCode::InvalidArgument, "pool cap must be at least 1");

    DagBuildResult result;
    ReasoningDag& dag = result.dag;
    dag.trace_id = std::move(trace_id);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const Step& step = steps[i];
        if (step.index != i) throw Error(ErrorCode::InvalidArgument, "step indices must be 0..n-1 in order");
        if (i > 0) {
            ParentDecision decision;
            decision.node = i;
            decision.pool = attachment_pool(dag, i, options.pool_cap);

            std::vector<PoolEntry> entries;
            for (NodeId id : decision.pool.main_branch_ids) entries.push_back({id, dag.node(id).text, true});
            for (NodeId id : decision.pool.endpoint_ids) entries.push_back({id, dag.node(id).text, false});

            std::vector<NodeId> parents;
            for (int attempt = 0; attempt < 2; ++attempt) {
                ++decision.queries;
                parents = query_selector(selector, step, entries);
                if (valid_selection(parents, decision.pool)) break;
                parents.clear();
            }
            if (parents.empty()) {
                decision.fallback = true;
                parents = {i - 1};
                log::warn("parent_selection_fallback", {{"trace_id", dag.trace_id}, {"step", i}});
            }
            decision.parents = parents;
            for (NodeId p : parents) {
                dag.edges.insert({p, i});
                dag.raw_edges.insert({p, i});
            }
            result.decisions.push_back(std::move(decision));
        }
        dag.nodes.push_back({i, {i}, step.text, std::nullopt, 0});
    }
    dag.refresh_roles();
    dag = collapse_chains(dag);
    return result;
}

ReasoningDag build_dag(std::string trace_id, std::span<const Step> steps, ParentSelector& selector,
                       const DagBuildOptions& options) {
    return build_dag_logged(std::move(trace_id), steps, selector, options).dag;
}

ReasoningDag collapse_chains(const ReasoningDag& dag) {
    std::map<NodeId, std::size_t> in, out;
    std::map<NodeId, NodeId> only_child;
    for (const auto& [from, to] : dag.edges) {
        ++out[from];
        ++in[to];
        only_child[from] = to;
    }
    auto absorbs_next = [&](NodeId u) { return out[u] == 1 && in[only_child[u]] == 1; };

    std::map<NodeId, NodeId> owner;  // member -> super-node id
    std::set<NodeId> absorbed;
    for (const auto& n : dag.nodes)
        if (absorbs_next(n.id)) absorbed.insert(only_child[n.id]);

    ReasoningDag result;
    result.trace_id = dag.trace_id;
    result.raw_edges = dag.raw_edges;
    for (const auto& n : dag.nodes) {
        if (absorbed.count(n.id)) continue;
        DagNode merged = n;
        owner[n.id] = n.id;
        std::size_t members = 1;
        for (NodeId cur = n.id; absorbs_next(cur);) {
            cur = only_child[cur];
            const DagNode& next = dag.node(cur);
            merged.step_indices.insert(merged.step_indices.end(), next.step_indices.begin(), next.step_indices.end());
            merged.text += kBlockJoiner;
            merged.text += next.text;
            owner[cur] = n.id;
            ++members;
        }
        if (members > 1) merged.summary.reset();
        result.nodes.push_back(std::move(merged));
    }
    for (const auto& [from, to] : dag.edges) {
        const NodeId a = owner.at(from);
        const NodeId b = owner.at(to);
        if (a != b) result.edges.insert({a, b});
    }
    result.refresh_roles();
    return result;
}

namespace {

std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n' || c == '\r' || c == '\t') {
            out.push_back(' ');
            continue;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string export_dot(const ReasoningDag& dag, std::size_t label_chars) {
    std::string out = "digraph \"" + dot_escape(dag.trace_id) + "\" {\n";
    out += "  node [shape=box];\n";
    for (const auto& n : dag.nodes) {
        std::string_view gist = n.summary ? std::string_view(*n.summary) : std::string_view(n.text);
        std::string label = std::to_string(n.id) + " [" + role_string(n.roles) + "]";
        if (!gist.empty()) {
            std::string cut = truncate_utf8(gist, label_chars);
            if (cut.size() < gist.size()) cut += "...";
            label += "\\n" + dot_escape(cut);
        }
        out += "  n" + std::to_string(n.id) + " [label=\"" + label + "\"];\n";
    }
    for (const auto& [from, to] : dag.edges) out += "  n" + std::to_string(from) + " -> n" + std::to_string(to) + ";\n";
    out += "}\n";
    return out;
}

nlohmann::json dag_to_json(const ReasoningDag& dag) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : dag.nodes) {
        nodes.push_back({{"id", n.id},
                         {"step_indices", n.step_indices},
                         {"text", n.text},
                         {"summary", n.summary ? nlohmann::json(*n.summary) : nlohmann::json(nullptr)},
                         {"roles", role_names(n.roles)}});
    }
    auto edge_list = [](const std::set<Edge>& edges) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [a, b] : edges) arr.push_back({a, b});
        return arr;
    };
    return {{"trace_id", dag.trace_id}, {"nodes", nodes}, {"edges", edge_list(dag.edges)}, {"raw_edges", edge_list(dag.raw_edges)}};
}

ReasoningDag dag_from_json(const nlohmann::json& j) {
    ReasoningDag dag;
    try {
        dag.trace_id = j.at("trace_id").get<std::string>();
        for (const auto& jn : j.at("nodes")) {
            DagNode n;
            n.id = jn.at("id").get<NodeId>();
            n.step_indices = jn.at("step_indices").get<std::vector<std::size_t>>();
            n.text = jn.value("text", std::string{});
            if (jn.contains("summary") && jn["summary"].is_string()) n.summary = jn["summary"].get<std::string>();
            dag.nodes.push_back(std::move(n));
        }
        for (const auto& e : j.at("edges")) dag.edges.insert({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
        if (j.contains("raw_edges"))
            for (const auto& e : j.at("raw_edges")) dag.raw_edges.insert({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed DAG JSON: ") + e.what());
    }
    std::sort(dag.nodes.begin(), dag.nodes.end(), [](const DagNode& a, const DagNode& b) { return a.id < b.id; });
    dag.refresh_roles();
    if (auto problem = find_violation(dag)) throw Error(ErrorCode::InvalidArgument, "invalid DAG: " + *problem);
    return dag;
}

}  // namespace trace_forge
