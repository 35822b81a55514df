#pragma once

#include <algorithm>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aries/backend.hpp"
#include "aries/graph.hpp"
#include "aries/task.hpp"

namespace aries {

/// φ(G, m, S): which transformation, how many attempts, on which nodes.
struct TransformRequest {
  TransformKind kind = TransformKind::Solve;
  int multiplicity = 1;
  std::vector<NodeId> targets;
};

namespace detail {

inline void check_request(const ThoughtGraph& graph, const TransformRequest& request, TransformKind expected,
                          bool allow_empty) {
  if (request.kind != expected) {
    throw Error(Errc::InvalidRequest, "expected a " + std::string(to_string(expected)) + " request");
  }
  if (request.multiplicity < 1) throw Error(Errc::InvalidRequest, "multiplicity must be >= 1");
  if (request.targets.empty() && !allow_empty) {
    throw Error(Errc::InvalidRequest, std::string(to_string(expected)) + " needs at least one target");
  }
  std::set<NodeId> seen;
  for (NodeId id : request.targets) {
    if (!graph.contains(id)) throw Error(Errc::UnknownNode, "target " + std::to_string(id));
    if (!seen.insert(id).second) throw Error(Errc::InvalidRequest, "duplicate target " + std::to_string(id));
  }
}

inline const ThoughtNode& require_problem_node(const ThoughtGraph& graph, NodeId id) {
  const auto& n = graph.node(id);
  if (!n.is_problem()) throw Error(Errc::InvalidRequest, "node " + std::to_string(id) + " is not a problem");
  return n;
}

inline const ThoughtNode& require_candidate_node(const ThoughtGraph& graph, NodeId id) {
  const auto& n = graph.node(id);
  if (n.is_problem()) throw Error(Errc::InvalidRequest, "node " + std::to_string(id) + " is not a candidate");
  return n;
}

/// Runs the queries in order, concurrently when the generator allows it.
/// Replies keep the query order. Transport failures surface as
/// GeneratorFailure; budget exhaustion is passed through unchanged.
inline std::vector<std::string> run_queries(Generator& generator, const std::vector<GeneratorQuery>& queries) {
  auto call = [&generator](const GeneratorQuery& q) {
    try {
      return generator.complete(q);
    } catch (const Error& e) {
      if (e.code() == Errc::BudgetExceeded || e.code() == Errc::GeneratorFailure) throw;
      throw Error(Errc::GeneratorFailure, e.what());
    }
  };
  std::vector<std::string> replies;
  replies.reserve(queries.size());
  if (!generator.concurrent() || queries.size() < 2) {
    for (const auto& q : queries) replies.push_back(call(q));
    return replies;
  }
  std::vector<std::future<std::string>> pending;
  pending.reserve(queries.size());
  for (const auto& q : queries) pending.push_back(std::async(std::launch::async, call, std::cref(q)));
  std::exception_ptr first_error;
  for (auto& f : pending) {
    try {
      replies.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return replies;
}

/// Normalised node content: the parsed answer when there is one, else the raw reply.
inline std::string candidate_content(const Subproblem& problem, const std::string& reply) {
  if (auto parsed = parse_candidate(problem, reply)) return format_answer(kind_of(problem), *parsed);
  return reply;
}

inline ThoughtNode make_node(const ThoughtGraph& graph, NodeId id, std::string content, double value,
                             NodeOrigin origin, std::vector<NodeId> parents, NodeId problem) {
  ThoughtNode n;
  n.id = id;
  n.content = std::move(content);
  n.value = value;
  n.origin = origin;
  n.parents = std::move(parents);
  n.created_at = graph.step() + 1;
  n.problem = origin == NodeOrigin::Decompose ? id : problem;
  return n;
}

inline GeneratorQuery reasoning_query(std::string user, QueryTag tag) {
  GeneratorQuery q;
  q.role_system = std::string(kReasoningSystemPrompt);
  q.role_user = std::move(user);
  q.tag = tag;
  return q;
}

}  // namespace detail

inline Subproblem problem_of(const ThoughtGraph& graph, NodeId id) {
  return parse_problem(graph.node(graph.node(id).problem).content);
}

/// Decompose: for each target, one child problem per entry of the task's
/// decomposition plan. Purely syntactic, so no generator calls.
inline GraphDelta decompose(const ThoughtGraph& graph, const TransformRequest& request) {
  detail::check_request(graph, request, TransformKind::Decompose, false);
  GraphDelta delta;
  NodeId next = graph.next_id();
  for (NodeId target : request.targets) {
    const auto& parent = detail::require_problem_node(graph, target);
    auto plan = decomposition_plan(parse_problem(parent.content));
    if (!plan) throw Error(Errc::NotDecomposable, "node " + std::to_string(target) + " is atomic");
    for (const auto& sub : *plan) {
      NodeId id = next++;
      delta.add_nodes.push_back(
          detail::make_node(graph, id, problem_text(sub), 0.0, NodeOrigin::Decompose, {target}, id));
      delta.add_edges.emplace_back(target, id);
    }
  }
  return delta;
}

/// Solve: m candidate children per target problem; m·|S| queries.
inline GraphDelta solve(const ThoughtGraph& graph, const TransformRequest& request, Generator& generator) {
  detail::check_request(graph, request, TransformKind::Solve, false);
  std::vector<Subproblem> problems;
  std::vector<GeneratorQuery> queries;
  for (NodeId target : request.targets) {
    problems.push_back(parse_problem(detail::require_problem_node(graph, target).content));
    for (int k = 0; k < request.multiplicity; ++k) {
      queries.push_back(detail::reasoning_query(render_solve_prompt(problems.back()), QueryTag::Solve));
    }
  }
  auto replies = detail::run_queries(generator, queries);
  GraphDelta delta;
  NodeId next = graph.next_id();
  std::size_t r = 0;
  for (std::size_t t = 0; t < request.targets.size(); ++t) {
    for (int k = 0; k < request.multiplicity; ++k, ++r) {
      NodeId id = next++;
      delta.add_nodes.push_back(detail::make_node(graph, id, detail::candidate_content(problems[t], replies[r]),
                                                  valuate(problems[t], replies[r]), NodeOrigin::Solve,
                                                  {request.targets[t]}, request.targets[t]));
      delta.add_edges.emplace_back(request.targets[t], id);
    }
  }
  return delta;
}

/// Refine: m corrected children per imperfect candidate; each query carries
/// the error breakdown of the target as feedback. An empty target set is a no-op.
inline GraphDelta refine(const ThoughtGraph& graph, const TransformRequest& request, Generator& generator) {
  detail::check_request(graph, request, TransformKind::Refine, true);
  std::vector<Subproblem> problems;
  std::vector<GeneratorQuery> queries;
  for (NodeId target : request.targets) {
    const auto& node = detail::require_candidate_node(graph, target);
    if (node.value >= 1.0) throw Error(Errc::RefinePerfectNode, "node " + std::to_string(target));
    problems.push_back(problem_of(graph, target));
    auto feedback = score_candidate(problems.back(), node.content);
    for (int k = 0; k < request.multiplicity; ++k) {
      queries.push_back(detail::reasoning_query(render_refine_prompt(problems.back(), node.content, feedback),
                                                QueryTag::Refine));
    }
  }
  auto replies = detail::run_queries(generator, queries);
  GraphDelta delta;
  NodeId next = graph.next_id();
  std::size_t r = 0;
  for (std::size_t t = 0; t < request.targets.size(); ++t) {
    NodeId target = request.targets[t];
    for (int k = 0; k < request.multiplicity; ++k, ++r) {
      NodeId id = next++;
      delta.add_nodes.push_back(detail::make_node(graph, id, detail::candidate_content(problems[t], replies[r]),
                                                  valuate(problems[t], replies[r]), NodeOrigin::Refine, {target},
                                                  graph.node(target).problem));
      delta.add_edges.emplace_back(target, id);
    }
  }
  return delta;
}

/// Reduce: V- = S and E- = every edge touching S. Refuses to strip a
/// problem of its last candidate.
inline GraphDelta reduce(const ThoughtGraph& graph, const TransformRequest& request) {
  detail::check_request(graph, request, TransformKind::Reduce, true);
  std::set<NodeId> removing(request.targets.begin(), request.targets.end());
  std::set<NodeId> problems;
  for (NodeId target : request.targets) problems.insert(detail::require_candidate_node(graph, target).problem);
  for (NodeId p : problems) {
    auto cands = graph.candidates_of(p);
    if (std::all_of(cands.begin(), cands.end(), [&](NodeId c) { return removing.count(c) != 0; })) {
      throw Error(Errc::WouldOrphanProblem, "reduce would remove every candidate of node " + std::to_string(p));
    }
  }
  GraphDelta delta;
  delta.remove_nodes = request.targets;
  for (const auto& e : graph.edges()) {
    if (removing.count(e.first) || removing.count(e.second)) delta.remove_edges.push_back(e);
  }
  return delta;
}

/// Problem node that a set of sibling solutions jointly answers, with the
/// targets reordered to follow their subproblems. Throws IncompatibleTargets
/// unless there is exactly one target per subproblem of that parent.
inline std::pair<NodeId, std::vector<NodeId>> aggregation_group(const ThoughtGraph& graph,
                                                                const std::vector<NodeId>& targets) {
  std::map<NodeId, NodeId> by_problem;
  std::optional<NodeId> parent;
  for (NodeId t : targets) {
    const auto& node = graph.node(t);
    if (node.is_problem()) throw Error(Errc::IncompatibleTargets, "node " + std::to_string(t) + " is a problem");
    const auto& sub = graph.node(node.problem);
    if (sub.origin != NodeOrigin::Decompose || sub.parents.empty()) {
      throw Error(Errc::IncompatibleTargets, "node " + std::to_string(t) + " does not answer a subproblem");
    }
    if (parent && *parent != sub.parents.front()) {
      throw Error(Errc::IncompatibleTargets, "targets answer subproblems of different problems");
    }
    parent = sub.parents.front();
    if (!by_problem.emplace(sub.id, t).second) {
      throw Error(Errc::IncompatibleTargets, "two targets answer subproblem " + std::to_string(sub.id));
    }
  }
  if (!parent) throw Error(Errc::IncompatibleTargets, "no targets");
  auto siblings = graph.subproblems_of(*parent);
  if (siblings.size() != by_problem.size()) {
    throw Error(Errc::IncompatibleTargets, "targets do not cover every subproblem of node " + std::to_string(*parent));
  }
  std::vector<NodeId> ordered;
  for (NodeId s : siblings) {
    auto it = by_problem.find(s);
    if (it == by_problem.end()) throw Error(Errc::IncompatibleTargets, "subproblem " + std::to_string(s) + " missing");
    ordered.push_back(it->second);
  }
  return {*parent, ordered};
}

/// Aggregate: m merge attempts of one candidate per sibling subproblem. Tasks
/// with deterministic aggregation make no queries.
inline GraphDelta aggregate(const ThoughtGraph& graph, const TransformRequest& request, Generator& generator) {
  detail::check_request(graph, request, TransformKind::Aggregate, false);
  auto [parent, ordered] = aggregation_group(graph, request.targets);
  Subproblem problem = parse_problem(graph.node(parent).content);
  TaskKind kind = kind_of(problem);
  std::vector<std::string> parts;
  for (NodeId t : ordered) parts.push_back(graph.node(t).content);

  std::vector<std::string> replies;
  if (aggregation_uses_generator(kind)) {
    std::vector<GeneratorQuery> queries(static_cast<std::size_t>(request.multiplicity),
                                        detail::reasoning_query(render_aggregate_prompt(kind, parts),
                                                                QueryTag::Aggregate));
    replies = detail::run_queries(generator, queries);
  } else {
    replies.assign(static_cast<std::size_t>(request.multiplicity), aggregate_deterministic(parts));
  }

  GraphDelta delta;
  NodeId next = graph.next_id();
  for (const auto& reply : replies) {
    NodeId id = next++;
    delta.add_nodes.push_back(detail::make_node(graph, id, detail::candidate_content(problem, reply),
                                                valuate(problem, reply), NodeOrigin::Aggregate, ordered, parent));
    for (NodeId t : ordered) delta.add_edges.emplace_back(t, id);
  }
  return delta;
}

inline GraphDelta transform_delta(const ThoughtGraph& graph, const TransformRequest& request, Generator& generator) {
  switch (request.kind) {
    case TransformKind::Decompose: return decompose(graph, request);
    case TransformKind::Solve: return solve(graph, request, generator);
    case TransformKind::Refine: return refine(graph, request, generator);
    case TransformKind::Reduce: return reduce(graph, request);
    case TransformKind::Aggregate: return aggregate(graph, request, generator);
  }
  throw Error(Errc::InvalidRequest, "unknown transformation");
}

/// Queries a request costs under the per-transformation contracts.
inline std::uint64_t contract_queries(TaskKind task, TransformKind kind, int multiplicity, std::size_t targets) {
  auto m = static_cast<std::uint64_t>(multiplicity);
  switch (kind) {
    case TransformKind::Solve:
    case TransformKind::Refine: return m * targets;
    case TransformKind::Aggregate: return aggregation_uses_generator(task) ? m : 0;
    case TransformKind::Decompose:
    case TransformKind::Reduce: return 0;
  }
  return 0;
}

struct AppliedTransform {
  ThoughtGraph graph;
  GraphDelta delta;
};

/// Builds the delta, applies it and checks the result is still a DAG.
inline AppliedTransform apply_transform(const ThoughtGraph& graph, const TransformRequest& request,
                                        Generator& generator) {
  auto delta = transform_delta(graph, request, generator);
  auto next = apply_delta(graph, delta);
  if (!is_acyclic(next)) throw Error(Errc::InvalidRequest, "transformation introduced a cycle");
  return {std::move(next), std::move(delta)};
}

/// Removal set that keeps only the best of `candidates` (max value, oldest on ties).
inline std::vector<NodeId> keep_best_removals(const ThoughtGraph& graph, const std::vector<NodeId>& candidates) {
  if (candidates.empty()) return {};
  NodeId best = candidates.front();
  for (NodeId c : candidates) {
    const auto& n = graph.node(c);
    const auto& b = graph.node(best);
    if (n.value > b.value || (n.value == b.value && c < best)) best = c;
  }
  std::vector<NodeId> out;
  for (NodeId c : candidates) {
    if (c != best) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace aries
