#pragma once

#include <random>
#include <vector>

#include "aries/graph.hpp"

namespace aries::testing {

inline ThoughtNode plain_node(NodeId id, std::vector<NodeId> parents = {}, double value = 0.0,
                              NodeOrigin origin = NodeOrigin::Solve) {
  ThoughtNode n;
  n.id = id;
  n.content = "n" + std::to_string(id);
  n.value = value;
  n.origin = origin;
  n.parents = std::move(parents);
  n.problem = origin == NodeOrigin::Root ? id : 0;
  return n;
}

/// Random DAG built through apply_delta: every new node gets up to three
/// parents among the existing ones.
inline ThoughtGraph random_graph(std::mt19937_64& rng, std::size_t nodes) {
  ThoughtGraph g = ThoughtGraph::with_root("root");
  for (std::size_t i = 1; i < nodes; ++i) {
    GraphDelta d;
    NodeId id = g.next_id();
    std::vector<NodeId> existing;
    for (const auto& [nid, n] : g.nodes()) existing.push_back(nid);
    std::uniform_int_distribution<std::size_t> pick(0, existing.size() - 1);
    std::vector<NodeId> parents;
    std::size_t fan = 1 + rng() % 3;
    for (std::size_t k = 0; k < fan; ++k) {
      NodeId p = existing[pick(rng)];
      if (std::find(parents.begin(), parents.end(), p) == parents.end()) parents.push_back(p);
    }
    std::uniform_real_distribution<double> value(0.0, 1.0);
    d.add_nodes.push_back(plain_node(id, parents, value(rng)));
    for (NodeId p : parents) d.add_edges.emplace_back(p, id);
    g = apply_delta(g, d);
  }
  return g;
}

}  // namespace aries::testing
