#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/backend.hpp"
#include "aries/graph.hpp"
#include "aries/task.hpp"
#include "aries/transforms.hpp"

namespace aries {

inline constexpr std::array<int, 5> kMultiplicityGrid = {1, 5, 10, 15, 20};

/// (R_ed, R_ef, S^m, A^m, R_ef^m) of the static divide-and-conquer schedule.
struct ScheduleParams {
  bool allow_reduce = false;
  bool allow_refine = false;
  int solve_multiplicity = 1;
  int aggregate_multiplicity = 1;
  int refine_multiplicity = 1;

  void validate() const {
    for (int m : {solve_multiplicity, aggregate_multiplicity, refine_multiplicity}) {
      if (std::find(kMultiplicityGrid.begin(), kMultiplicityGrid.end(), m) == kMultiplicityGrid.end()) {
        throw Error(Errc::ConfigError, "multiplicity " + std::to_string(m) + " not in {1,5,10,15,20}");
      }
    }
  }

  std::string to_string() const {
    return std::to_string(int(allow_reduce)) + "," + std::to_string(int(allow_refine)) + "," +
           std::to_string(solve_multiplicity) + "," + std::to_string(aggregate_multiplicity) + "," +
           std::to_string(refine_multiplicity);
  }

  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
  friend auto operator<=>(const ScheduleParams&, const ScheduleParams&) = default;
};

/// Parses "R_ed,R_ef,S^m,A^m,R_ef^m", e.g. "1,1,5,5,5". A refine multiplicity
/// of "-" is accepted (as 1) when refinement is off.
inline ScheduleParams parse_schedule_params(const std::string& text) {
  std::vector<std::string> fields;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 5) throw Error(Errc::ConfigError, "schedule params need 5 fields: '" + text + "'");
  auto as_int = [&](const std::string& f) {
    try {
      std::size_t used = 0;
      int v = std::stoi(f, &used);
      if (used != f.size()) throw std::invalid_argument(f);
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::ConfigError, "bad schedule field '" + f + "'");
    }
  };
  auto as_flag = [&](const std::string& f) {
    int v = as_int(f);
    if (v != 0 && v != 1) throw Error(Errc::ConfigError, "flag must be 0 or 1: '" + f + "'");
    return v == 1;
  };
  ScheduleParams p;
  p.allow_reduce = as_flag(fields[0]);
  p.allow_refine = as_flag(fields[1]);
  p.solve_multiplicity = as_int(fields[2]);
  p.aggregate_multiplicity = as_int(fields[3]);
  p.refine_multiplicity = (fields[4] == "-" && !p.allow_refine) ? 1 : as_int(fields[4]);
  p.validate();
  return p;
}

/// Every point of the 2·2·5·5·5 search grid, in lexicographic order.
inline std::vector<ScheduleParams> all_schedule_params() {
  std::vector<ScheduleParams> out;
  for (bool red : {false, true}) {
    for (bool ref : {false, true}) {
      for (int s : kMultiplicityGrid) {
        for (int a : kMultiplicityGrid) {
          for (int r : kMultiplicityGrid) out.push_back({red, ref, s, a, r});
        }
      }
    }
  }
  return out;
}

inline void to_json(nlohmann::json& j, const ScheduleParams& p) {
  j = nlohmann::json::array({int(p.allow_reduce), int(p.allow_refine), p.solve_multiplicity,
                             p.aggregate_multiplicity, p.refine_multiplicity});
}

inline void from_json(const nlohmann::json& j, ScheduleParams& p) {
  p.allow_reduce = j.at(0).get<int>() != 0;
  p.allow_refine = j.at(1).get<int>() != 0;
  p.solve_multiplicity = j.at(2).get<int>();
  p.aggregate_multiplicity = j.at(3).get<int>();
  p.refine_multiplicity = j.at(4).get<int>();
}

// ---------------------------------------------------------------------------
// Plan shape, independent of instance contents

/// Number of problem nodes per decomposition level for a task of size n.
inline std::vector<std::size_t> level_widths(TaskKind kind, int n) {
  Subproblem shape;
  if (kind == TaskKind::Sorting) {
    shape = SortingProblem{std::vector<int>(static_cast<std::size_t>(n), 0)};
  } else {
    std::vector<int> a(static_cast<std::size_t>(n));
    std::iota(a.begin(), a.end(), 0);
    shape = IntersectionProblem{a, a};
  }
  std::vector<std::size_t> widths;
  std::vector<Subproblem> level{shape};
  while (!level.empty()) {
    widths.push_back(level.size());
    std::vector<Subproblem> next;
    for (const auto& p : level) {
      if (auto plan = decomposition_plan(p)) next.insert(next.end(), plan->begin(), plan->end());
    }
    level = std::move(next);
  }
  return widths;
}

/// Transformation sequence the static schedule emits, without running it.
/// Decompose once per level, solve all leaves, then per level bottom-up:
/// one aggregate per group followed by the optional reduce / refine+reduce block.
inline std::vector<TransformKind> expected_trace(const ScheduleParams& params, TaskKind kind, int n) {
  auto widths = level_widths(kind, n);
  std::vector<TransformKind> trace;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) trace.push_back(TransformKind::Decompose);
  trace.push_back(TransformKind::Solve);
  for (std::size_t l = widths.size() - 1; l-- > 0;) {
    trace.insert(trace.end(), widths[l], TransformKind::Aggregate);
    if (params.allow_reduce) trace.push_back(TransformKind::Reduce);
    if (params.allow_refine) {
      trace.push_back(TransformKind::Refine);
      trace.push_back(TransformKind::Reduce);
    }
  }
  return trace;
}

/// |Φ(ω)|: planned transformation attempts of a schedule. Each decomposed
/// node, solve/refine attempt per target, aggregate attempt per group and
/// reduce application counts once. Depends only on (params, task, n).
inline std::uint64_t schedule_cost(const ScheduleParams& params, TaskKind kind, int n) {
  auto widths = level_widths(kind, n);
  std::uint64_t cost = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) cost += widths[l];
  cost += widths.back() * static_cast<std::uint64_t>(params.solve_multiplicity);
  for (std::size_t l = widths.size() - 1; l-- > 0;) {
    std::uint64_t groups = widths[l];
    cost += groups * static_cast<std::uint64_t>(params.aggregate_multiplicity);
    if (params.allow_reduce) cost += 1;
    if (params.allow_refine) {
      std::uint64_t survivors = groups * (params.allow_reduce ? 1 : params.aggregate_multiplicity);
      cost += survivors * static_cast<std::uint64_t>(params.refine_multiplicity) + 1;
    }
  }
  return cost;
}

// ---------------------------------------------------------------------------
// Execution

struct TraceStep {
  TransformKind kind = TransformKind::Solve;
  int multiplicity = 1;
  std::vector<NodeId> targets;
  std::vector<std::int64_t> target_errors;  // only for candidate targets
  std::vector<NodeId> created;
  std::vector<std::int64_t> created_errors;  // only for created candidates
  std::vector<NodeId> removed;
  std::uint64_t queries = 0;
};

inline void to_json(nlohmann::json& j, const TraceStep& s) {
  j = nlohmann::json{{"kind", std::string(to_string(s.kind))},
                     {"multiplicity", s.multiplicity},
                     {"targets", s.targets},
                     {"target_errors", s.target_errors},
                     {"created", s.created},
                     {"created_errors", s.created_errors},
                     {"removed", s.removed},
                     {"queries", s.queries}};
}

inline void from_json(const nlohmann::json& j, TraceStep& s) {
  auto kind = parse_transform_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(Errc::InvalidRequest, "unknown transformation in trace");
  s.kind = *kind;
  s.multiplicity = j.at("multiplicity").get<int>();
  s.targets = j.at("targets").get<std::vector<NodeId>>();
  s.target_errors = j.at("target_errors").get<std::vector<std::int64_t>>();
  s.created = j.at("created").get<std::vector<NodeId>>();
  s.created_errors = j.at("created_errors").get<std::vector<std::int64_t>>();
  s.removed = j.at("removed").get<std::vector<NodeId>>();
  s.queries = j.at("queries").get<std::uint64_t>();
}

struct RunRecord {
  std::string task;
  std::string method = "static";
  std::uint64_t instance_seed = 0;
  ScheduleParams params;
  std::vector<TraceStep> trace;
  std::int64_t final_error = 0;
  std::string final_answer;
  LedgerSnapshot queries;  // queries made by this run only
  std::uint64_t search_cost = 0;
  double wall_time = 0.0;  // seconds

  std::vector<TransformKind> trace_kinds() const {
    std::vector<TransformKind> out;
    for (const auto& s : trace) out.push_back(s.kind);
    return out;
  }
};

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"task", r.task},
                     {"method", r.method},
                     {"instance_seed", r.instance_seed},
                     {"params", r.params},
                     {"trace", r.trace},
                     {"final_error", r.final_error},
                     {"final_answer", r.final_answer},
                     {"queries", r.queries},
                     {"search_cost", r.search_cost},
                     {"wall_time", r.wall_time}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  r.task = j.at("task").get<std::string>();
  r.method = j.value("method", std::string("static"));
  r.instance_seed = j.at("instance_seed").get<std::uint64_t>();
  r.params = j.at("params").get<ScheduleParams>();
  r.trace = j.at("trace").get<std::vector<TraceStep>>();
  r.final_error = j.at("final_error").get<std::int64_t>();
  r.final_answer = j.value("final_answer", std::string());
  r.queries = j.at("queries").get<LedgerSnapshot>();
  r.search_cost = j.value("search_cost", std::uint64_t{0});
  r.wall_time = j.value("wall_time", 0.0);
}

inline LedgerSnapshot ledger_difference(const LedgerSnapshot& after, const LedgerSnapshot& before) {
  LedgerSnapshot out;
  out.phase = after.phase;
  out.total = after.total - before.total;
  for (const auto& [tag, n] : after.counts) {
    auto it = before.counts.find(tag);
    auto delta = n - (it == before.counts.end() ? 0 : it->second);
    if (delta) out.counts[tag] = delta;
  }
  return out;
}

/// Error of the best root candidate, or of an empty answer if there is none.
inline std::pair<std::int64_t, std::string> final_answer(const ThoughtGraph& graph) {
  Subproblem root = parse_problem(graph.node(0).content);
  auto best = graph.best_candidate(0);
  std::string content = best ? graph.node(*best).content : std::string();
  return {score_candidate(root, content).total, content};
}

namespace detail {

class TracedGraph {
 public:
  TracedGraph(ThoughtGraph graph, Generator& generator, TaskKind kind)
      : graph_(std::move(graph)), generator_(generator), kind_(kind) {}

  const ThoughtGraph& graph() const { return graph_; }
  std::vector<TraceStep>& trace() { return trace_; }

  const TraceStep& apply(TransformKind kind, int multiplicity, std::vector<NodeId> targets) {
    TraceStep step;
    step.kind = kind;
    step.multiplicity = multiplicity;
    step.targets = targets;
    for (NodeId t : targets) {
      const auto& n = graph_.node(t);
      if (!n.is_problem()) step.target_errors.push_back(error_of(graph_, t));
    }
    auto applied = apply_transform(graph_, {kind, multiplicity, std::move(targets)}, generator_);
    for (const auto& n : applied.delta.add_nodes) {
      step.created.push_back(n.id);
      if (!n.is_problem()) step.created_errors.push_back(error_of(applied.graph, n.id));
    }
    step.removed = applied.delta.remove_nodes;
    step.queries = contract_queries(kind_, kind, multiplicity, step.targets.size());
    graph_ = std::move(applied.graph);
    trace_.push_back(std::move(step));
    return trace_.back();
  }

  static std::int64_t error_of(const ThoughtGraph& g, NodeId id) {
    return score_candidate(problem_of(g, id), g.node(id).content).total;
  }

 private:
  ThoughtGraph graph_;
  Generator& generator_;
  TaskKind kind_;
  std::vector<TraceStep> trace_;
};

}  // namespace detail

/// Runs the static schedule on one instance and records every transformation.
inline RunRecord run_schedule(const TaskInstance& instance, const ScheduleParams& params, Generator& generator) {
  params.validate();
  auto started = std::chrono::steady_clock::now();
  auto ledger_before = generator.ledger().snapshot();
  detail::TracedGraph tg(ThoughtGraph::with_root(problem_text(instance.payload)), generator, instance.kind);

  try {
    std::vector<std::vector<NodeId>> levels{{0}};
    while (true) {
      std::vector<NodeId> splittable;
      for (NodeId id : levels.back()) {
        if (decomposition_plan(parse_problem(tg.graph().node(id).content))) splittable.push_back(id);
      }
      if (splittable.empty()) break;
      const auto& step = tg.apply(TransformKind::Decompose, 1, splittable);
      levels.push_back(step.created);
    }

    std::vector<NodeId> leaves;
    for (const auto& level : levels) {
      for (NodeId id : level) {
        if (tg.graph().subproblems_of(id).empty()) leaves.push_back(id);
      }
    }
    tg.apply(TransformKind::Solve, params.solve_multiplicity, leaves);

    for (std::size_t l = levels.size() - 1; l-- > 0;) {
      std::map<NodeId, std::vector<NodeId>> attempts;  // problem -> its aggregates
      for (NodeId p : levels[l]) {
        auto subs = tg.graph().subproblems_of(p);
        if (subs.empty()) continue;
        std::vector<NodeId> inputs;
        for (NodeId s : subs) {
          auto best = tg.graph().best_candidate(s);
          if (!best) throw Error(Errc::ScheduleAborted, "subproblem " + std::to_string(s) + " has no candidate");
          inputs.push_back(*best);
        }
        attempts[p] = tg.apply(TransformKind::Aggregate, params.aggregate_multiplicity, inputs).created;
      }

      auto keep_best_everywhere = [&](const std::map<NodeId, std::vector<NodeId>>& groups) {
        std::vector<NodeId> removal;
        for (const auto& [p, cands] : groups) {
          auto r = keep_best_removals(tg.graph(), cands);
          removal.insert(removal.end(), r.begin(), r.end());
        }
        std::sort(removal.begin(), removal.end());
        return removal;
      };
      auto drop_removed = [&](std::map<NodeId, std::vector<NodeId>>& groups) {
        for (auto& [p, cands] : groups) {
          std::erase_if(cands, [&](NodeId c) { return !tg.graph().contains(c); });
        }
      };

      if (params.allow_reduce) {
        tg.apply(TransformKind::Reduce, 1, keep_best_everywhere(attempts));
        drop_removed(attempts);
      }
      if (params.allow_refine) {
        std::vector<NodeId> imperfect;
        for (const auto& [p, cands] : attempts) {
          for (NodeId c : cands) {
            if (tg.graph().node(c).value < 1.0) imperfect.push_back(c);
          }
        }
        std::sort(imperfect.begin(), imperfect.end());
        const auto& step = tg.apply(TransformKind::Refine, params.refine_multiplicity, imperfect);
        for (NodeId id : step.created) attempts[tg.graph().node(id).problem].push_back(id);
        tg.apply(TransformKind::Reduce, 1, keep_best_everywhere(attempts));
        drop_removed(attempts);
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::GeneratorFailure) throw Error(Errc::ScheduleAborted, e.what());
    throw;
  }

  RunRecord record;
  record.task = instance.spec().name();
  record.instance_seed = instance.seed;
  record.params = params;
  record.trace = std::move(tg.trace());
  std::tie(record.final_error, record.final_answer) = final_answer(tg.graph());
  record.queries = ledger_difference(generator.ledger().snapshot(), ledger_before);
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

/// Direct prompting baseline: one solve query on the undecomposed problem.
inline RunRecord run_direct(const TaskInstance& instance, Generator& generator) {
  auto started = std::chrono::steady_clock::now();
  auto ledger_before = generator.ledger().snapshot();
  detail::TracedGraph tg(ThoughtGraph::with_root(problem_text(instance.payload)), generator, instance.kind);
  try {
    tg.apply(TransformKind::Solve, 1, {0});
  } catch (const Error& e) {
    if (e.code() == Errc::GeneratorFailure) throw Error(Errc::ScheduleAborted, e.what());
    throw;
  }
  RunRecord record;
  record.task = instance.spec().name();
  record.method = "IO";
  record.instance_seed = instance.seed;
  record.trace = std::move(tg.trace());
  std::tie(record.final_error, record.final_answer) = final_answer(tg.graph());
  record.queries = ledger_difference(generator.ledger().snapshot(), ledger_before);
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

/// Queries implied by a recorded trace under the per-transformation contracts.
inline std::uint64_t replay_queries(const std::vector<TraceStep>& trace, TaskKind kind) {
  std::uint64_t total = 0;
  for (const auto& s : trace) total += contract_queries(kind, s.kind, s.multiplicity, s.targets.size());
  return total;
}

}  // namespace aries
