#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/error.hpp"

namespace aries {

using NodeId = std::uint64_t;
using Edge = std::pair<NodeId, NodeId>;

enum class TransformKind { Decompose, Solve, Refine, Reduce, Aggregate };

inline constexpr std::array<TransformKind, 5> kAllTransformKinds = {
    TransformKind::Decompose, TransformKind::Solve, TransformKind::Refine,
    TransformKind::Reduce, TransformKind::Aggregate};

inline std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Decompose: return "decompose";
    case TransformKind::Solve: return "solve";
    case TransformKind::Refine: return "refine";
    case TransformKind::Reduce: return "reduce";
    case TransformKind::Aggregate: return "aggregate";
  }
  return "?";
}

inline std::optional<TransformKind> parse_transform_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : kAllTransformKinds) {
    if (to_string(kind) == lower) return kind;
  }
  return std::nullopt;
}

// Which transformation created a node. Reduce never creates nodes.
enum class NodeOrigin { Root, Decompose, Solve, Refine, Aggregate };

inline std::string_view to_string(NodeOrigin origin) {
  switch (origin) {
    case NodeOrigin::Root: return "root";
    case NodeOrigin::Decompose: return "decompose";
    case NodeOrigin::Solve: return "solve";
    case NodeOrigin::Refine: return "refine";
    case NodeOrigin::Aggregate: return "aggregate";
  }
  return "?";
}

inline NodeOrigin parse_node_origin(std::string_view text) {
  for (auto origin : {NodeOrigin::Root, NodeOrigin::Decompose, NodeOrigin::Solve,
                      NodeOrigin::Refine, NodeOrigin::Aggregate}) {
    if (to_string(origin) == text) return origin;
  }
  throw Error(Errc::InvalidRequest, "unknown node origin '" + std::string(text) + "'");
}

/// Problem nodes hold a (sub)problem statement; every other node is a
/// candidate solution to exactly one problem node.
inline bool is_problem_origin(NodeOrigin origin) {
  return origin == NodeOrigin::Root || origin == NodeOrigin::Decompose;
}

struct ThoughtNode {
  NodeId id = 0;
  std::string content;
  double value = 0.0;  // in [0,1]; 1 means verified correct
  NodeOrigin origin = NodeOrigin::Root;
  std::vector<NodeId> parents;
  std::uint64_t created_at = 0;
  /// The problem node this thought answers. Equals `id` for problem nodes.
  /// Kept on the node because edges to a candidate's parent may be reduced away.
  NodeId problem = 0;

  bool is_problem() const { return is_problem_origin(origin); }

  friend bool operator==(const ThoughtNode&, const ThoughtNode&) = default;
};

/// V+, V-, E+, E- of a single transformation.
struct GraphDelta {
  std::vector<ThoughtNode> add_nodes;
  std::vector<NodeId> remove_nodes;
  std::vector<Edge> add_edges;
  std::vector<Edge> remove_edges;

  bool empty() const {
    return add_nodes.empty() && remove_nodes.empty() && add_edges.empty() && remove_edges.empty();
  }
};

class ThoughtGraph;
ThoughtGraph apply_delta(const ThoughtGraph& graph, const GraphDelta& delta);

/// Immutable-by-convention snapshot of a thought graph. Transformations
/// produce new graphs through apply_delta.
class ThoughtGraph {
 public:
  ThoughtGraph() = default;

  static ThoughtGraph with_root(std::string content, double value = 0.0) {
    ThoughtGraph g;
    ThoughtNode root;
    root.id = 0;
    root.content = std::move(content);
    root.value = value;
    root.origin = NodeOrigin::Root;
    root.problem = 0;
    g.nodes_.emplace(0, std::move(root));
    g.next_id_ = 1;
    return g;
  }

  const std::map<NodeId, ThoughtNode>& nodes() const { return nodes_; }
  const std::set<Edge>& edges() const { return edges_; }
  std::uint64_t step() const { return step_; }
  NodeId next_id() const { return next_id_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }

  const ThoughtNode& node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, "node " + std::to_string(id));
    return it->second;
  }

  std::vector<NodeId> children(NodeId id) const {
    std::vector<NodeId> out;
    for (auto it = edges_.lower_bound({id, 0}); it != edges_.end() && it->first == id; ++it) {
      out.push_back(it->second);
    }
    return out;
  }

  /// Candidate nodes currently answering `problem`, ordered by id.
  std::vector<NodeId> candidates_of(NodeId problem) const {
    std::vector<NodeId> out;
    for (const auto& [id, n] : nodes_) {
      if (!n.is_problem() && n.problem == problem) out.push_back(id);
    }
    return out;
  }

  /// Problem nodes produced by decomposing `problem`, ordered by id.
  std::vector<NodeId> subproblems_of(NodeId problem) const {
    std::vector<NodeId> out;
    for (const auto& [id, n] : nodes_) {
      if (n.origin == NodeOrigin::Decompose &&
          std::find(n.parents.begin(), n.parents.end(), problem) != n.parents.end()) {
        out.push_back(id);
      }
    }
    return out;
  }

  /// Highest-valued candidate of `problem`; ties go to the oldest node.
  std::optional<NodeId> best_candidate(NodeId problem) const {
    std::optional<NodeId> best;
    for (NodeId id : candidates_of(problem)) {
      if (!best || node(id).value > node(*best).value) best = id;
    }
    return best;
  }

  friend bool operator==(const ThoughtGraph&, const ThoughtGraph&) = default;

 private:
  friend ThoughtGraph apply_delta(const ThoughtGraph& graph, const GraphDelta& delta);
  friend ThoughtGraph graph_from_json(const nlohmann::json& j);

  std::map<NodeId, ThoughtNode> nodes_;
  std::set<Edge> edges_;
  std::uint64_t step_ = 0;
  NodeId next_id_ = 0;
};

/// Returns (V ∪ V+ \ V-, E ∪ E+ \ E-) with every edge incident to a removed
/// node dropped, and step advanced by one. The input is left untouched.
inline ThoughtGraph apply_delta(const ThoughtGraph& graph, const GraphDelta& delta) {
  ThoughtGraph out = graph;

  std::set<NodeId> fresh;
  for (const auto& n : delta.add_nodes) {
    if (n.id < graph.next_id_ || graph.contains(n.id) || !fresh.insert(n.id).second) {
      throw Error(Errc::IdCollision, "node id " + std::to_string(n.id) + " is not fresh");
    }
  }
  for (NodeId id : delta.remove_nodes) {
    if (!graph.contains(id)) throw Error(Errc::UnknownNode, "cannot remove node " + std::to_string(id));
  }

  for (const auto& n : delta.add_nodes) {
    out.nodes_.emplace(n.id, n);
    out.next_id_ = std::max(out.next_id_, n.id + 1);
  }
  for (const auto& e : delta.add_edges) {
    if (!out.contains(e.first) || !out.contains(e.second)) {
      throw Error(Errc::UnknownNode, "edge endpoint missing for " + std::to_string(e.first) + " -> " +
                                         std::to_string(e.second));
    }
    out.edges_.insert(e);
  }
  for (const auto& e : delta.remove_edges) out.edges_.erase(e);
  for (NodeId id : delta.remove_nodes) {
    out.nodes_.erase(id);
    std::erase_if(out.edges_, [id](const Edge& e) { return e.first == id || e.second == id; });
  }
  ++out.step_;
  return out;
}

/// Delta that undoes `delta` when applied to the graph it produced. Only
/// add-only deltas invert cleanly: re-adding a removed id is an IdCollision.
inline GraphDelta invert_delta(const ThoughtGraph& before, const GraphDelta& delta) {
  GraphDelta inv;
  for (const auto& n : delta.add_nodes) inv.remove_nodes.push_back(n.id);
  inv.remove_edges = delta.add_edges;
  for (NodeId id : delta.remove_nodes) inv.add_nodes.push_back(before.node(id));
  std::set<Edge> restored(delta.remove_edges.begin(), delta.remove_edges.end());
  for (const auto& e : before.edges()) {
    for (NodeId id : delta.remove_nodes) {
      if (e.first == id || e.second == id) restored.insert(e);
    }
  }
  for (const auto& e : restored) {
    if (before.edges().count(e)) inv.add_edges.push_back(e);
  }
  return inv;
}

/// Δ(a, b): ids of nodes present in `a` but not in `b`.
inline std::set<NodeId> graph_delta(const ThoughtGraph& a, const ThoughtGraph& b) {
  std::set<NodeId> out;
  for (const auto& [id, n] : a.nodes()) {
    if (!b.contains(id)) out.insert(id);
  }
  return out;
}

inline bool is_acyclic(const ThoughtGraph& graph) {
  std::map<NodeId, std::size_t> indegree;
  for (const auto& [id, n] : graph.nodes()) indegree[id] = 0;
  for (const auto& e : graph.edges()) ++indegree[e.second];
  std::vector<NodeId> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push_back(id);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    NodeId id = ready.back();
    ready.pop_back();
    ++visited;
    for (NodeId child : graph.children(id)) {
      if (--indegree[child] == 0) ready.push_back(child);
    }
  }
  return visited == indegree.size();
}

inline constexpr std::size_t kSerializedContentLimit = 200;

inline std::string format_value(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

/// One line per node (by id) then one line per edge (lexicographic). Content is
/// truncated to 200 characters and newlines are escaped so each node stays on one line.
inline std::string serialize_state(const ThoughtGraph& graph) {
  std::string out;
  auto newline = [&out] {
    if (!out.empty()) out += '\n';
  };
  for (const auto& [id, n] : graph.nodes()) {
    newline();
    out += "node " + std::to_string(id) + " [origin=" + std::string(to_string(n.origin)) +
           ", value=" + format_value(n.value) + "]: ";
    std::string_view content(n.content);
    content = content.substr(0, kSerializedContentLimit);
    for (char c : content) {
      if (c == '\n') {
        out += "\\n";
      } else if (c == '\r') {
        out += "\\r";
      } else {
        out += c;
      }
    }
  }
  for (const auto& [from, to] : graph.edges()) {
    newline();
    out += "edge " + std::to_string(from) + " -> " + std::to_string(to);
  }
  return out;
}

// JSON snapshot: {"nodes":[...],"edges":[[p,c]],"step":n}

// Marks a candidate imported without a "problem" key; resolved from parents.
inline constexpr NodeId kUnresolvedProblem = ~NodeId{0};

inline void to_json(nlohmann::json& j, const ThoughtNode& n) {
  j = nlohmann::json{{"id", n.id},
                     {"content", n.content},
                     {"value", n.value},
                     {"origin", std::string(to_string(n.origin))},
                     {"parents", n.parents},
                     {"problem", n.problem}};
}

inline void from_json(const nlohmann::json& j, ThoughtNode& n) {
  n.id = j.at("id").get<NodeId>();
  n.content = j.at("content").get<std::string>();
  n.value = j.at("value").get<double>();
  n.origin = parse_node_origin(j.at("origin").get<std::string>());
  n.parents = j.at("parents").get<std::vector<NodeId>>();
  n.created_at = j.value("created_at", std::uint64_t{0});
  if (j.contains("problem")) {
    n.problem = j.at("problem").get<NodeId>();
  } else {
    n.problem = n.is_problem() ? n.id : kUnresolvedProblem;
  }
}

inline nlohmann::json graph_to_json(const ThoughtGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : graph.nodes()) {
    nlohmann::json jn = n;
    jn["created_at"] = n.created_at;
    nodes.push_back(std::move(jn));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [from, to] : graph.edges()) edges.push_back({from, to});
  return {{"nodes", nodes}, {"edges", edges}, {"step", graph.step()}};
}

inline ThoughtGraph graph_from_json(const nlohmann::json& j) {
  ThoughtGraph g;
  for (const auto& jn : j.at("nodes")) {
    auto n = jn.get<ThoughtNode>();
    g.next_id_ = std::max(g.next_id_, n.id + 1);
    if (!g.nodes_.emplace(n.id, std::move(n)).second) {
      throw Error(Errc::IdCollision, "duplicate node id in snapshot");
    }
  }
  // Snapshots written by other tools may omit "problem"; recover it from
  // provenance. Solve/refine answer their parent's problem, aggregates answer
  // the problem their inputs' problems were decomposed from.
  for (auto& [id, n] : g.nodes_) {
    if (n.problem != kUnresolvedProblem) continue;
    if (n.parents.empty() || !g.contains(n.parents.front())) {
      throw Error(Errc::InvalidRequest, "cannot resolve problem of node " + std::to_string(id));
    }
    const ThoughtNode& parent = g.nodes_.at(n.parents.front());
    if (n.origin == NodeOrigin::Aggregate) {
      const ThoughtNode& sub = g.nodes_.at(parent.problem);
      n.problem = sub.parents.empty() ? sub.id : sub.parents.front();
    } else {
      n.problem = parent.problem;
    }
  }
  for (const auto& je : j.at("edges")) {
    Edge e{je.at(0).get<NodeId>(), je.at(1).get<NodeId>()};
    if (!g.contains(e.first) || !g.contains(e.second)) {
      throw Error(Errc::UnknownNode, "edge endpoint missing in snapshot");
    }
    g.edges_.insert(e);
  }
  g.step_ = j.at("step").get<std::uint64_t>();
  return g;
}

}  // namespace aries
