#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <tuple>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/backend.hpp"
#include "aries/graph.hpp"
#include "aries/prompts.hpp"
#include "aries/schedule.hpp"
#include "aries/task.hpp"
#include "aries/transforms.hpp"

namespace aries {

/// One transformation on a set of nodes. Targets are kept sorted so that two
/// proposals naming the same nodes in a different order compare equal.
struct Action {
  TransformKind kind = TransformKind::Solve;
  std::vector<NodeId> targets;

  Action() = default;
  Action(TransformKind k, std::vector<NodeId> t) : kind(k), targets(std::move(t)) {
    std::sort(targets.begin(), targets.end());
  }

  /// "solve:3", "aggregate:1,2"
  std::string encode() const {
    std::string out(to_string(kind));
    out += ':';
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(targets[i]);
    }
    return out;
  }

  friend bool operator==(const Action&, const Action&) = default;
};

inline void to_json(nlohmann::json& j, const Action& a) {
  j = nlohmann::json{{"action", std::string(to_string(a.kind))}, {"nodes", a.targets}};
}

inline void from_json(const nlohmann::json& j, Action& a) {
  auto kind = parse_transform_kind(j.at("action").get<std::string>());
  if (!kind) throw Error(Errc::ParseFailure, "unknown action '" + j.at("action").get<std::string>() + "'");
  a = Action(*kind, j.at("nodes").get<std::vector<NodeId>>());
}

struct HistoryEntry {
  Action action;
  std::string outcome;
};

struct EnvState {
  TaskKind task = TaskKind::Sorting;
  ThoughtGraph graph;
  std::vector<HistoryEntry> history;

  std::size_t steps_taken() const { return history.size(); }
};

inline EnvState initial_state(const TaskInstance& instance) {
  return {instance.kind, ThoughtGraph::with_root(problem_text(instance.payload)), {}};
}

/// A problem counts as solved once it has a candidate of value 1.
inline bool problem_solved(const ThoughtGraph& graph, NodeId problem) {
  for (NodeId c : graph.candidates_of(problem)) {
    if (graph.node(c).value >= 1.0) return true;
  }
  return false;
}

/// The solution state: a candidate of the original problem with zero error.
inline bool is_solved(const EnvState& state) {
  Subproblem root = parse_problem(state.graph.node(0).content);
  for (NodeId c : state.graph.candidates_of(0)) {
    if (score_candidate(root, state.graph.node(c).content).total == 0) return true;
  }
  return false;
}

/// Valid actions in a fixed order: decompose, solve, refine, reduce, aggregate,
/// each by ascending node id.
inline std::vector<Action> enumerate_actions(const EnvState& state) {
  const auto& g = state.graph;
  std::vector<Action> decomposes, solves, refines, reduces, aggregates;
  for (const auto& [id, n] : g.nodes()) {
    if (n.is_problem()) {
      bool solved = problem_solved(g, id);
      auto subs = g.subproblems_of(id);
      if (!solved && subs.empty() && decomposition_plan(parse_problem(n.content))) {
        decomposes.emplace_back(TransformKind::Decompose, std::vector<NodeId>{id});
      }
      if (!solved) solves.emplace_back(TransformKind::Solve, std::vector<NodeId>{id});
      auto cands = g.candidates_of(id);
      if (cands.size() >= 2) {
        reduces.emplace_back(TransformKind::Reduce, keep_best_removals(g, cands));
      }
      if (!solved && !subs.empty()) {
        std::vector<NodeId> inputs;
        for (NodeId s : subs) {
          auto best = g.best_candidate(s);
          if (!best) break;
          inputs.push_back(*best);
        }
        if (inputs.size() == subs.size()) aggregates.emplace_back(TransformKind::Aggregate, inputs);
      }
    } else if (n.value < 1.0) {
      refines.emplace_back(TransformKind::Refine, std::vector<NodeId>{id});
    }
  }
  std::vector<Action> out;
  for (auto* group : {&decomposes, &solves, &refines, &reduces, &aggregates}) {
    out.insert(out.end(), group->begin(), group->end());
  }
  return out;
}

inline bool is_valid_action(const EnvState& state, const Action& action) {
  auto valid = enumerate_actions(state);
  return std::find(valid.begin(), valid.end(), action) != valid.end();
}

inline std::string describe_ids(const std::vector<NodeId>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out + "]";
}

/// Applies a valid action with the given multiplicity. The input state is untouched.
inline EnvState step(const EnvState& state, const Action& action, Generator& generator, int multiplicity = 1) {
  if (!is_valid_action(state, action)) {
    throw Error(Errc::InvalidAction, action.encode() + " is not available in this state");
  }
  int m = (action.kind == TransformKind::Solve || action.kind == TransformKind::Refine ||
           action.kind == TransformKind::Aggregate)
              ? multiplicity
              : 1;
  auto applied = apply_transform(state.graph, {action.kind, m, action.targets}, generator);

  std::string outcome;
  if (!applied.delta.add_nodes.empty()) {
    outcome += "created ";
    for (std::size_t i = 0; i < applied.delta.add_nodes.size(); ++i) {
      const auto& n = applied.delta.add_nodes[i];
      if (i) outcome += ", ";
      outcome += std::to_string(n.id);
      if (!n.is_problem()) outcome += " (value " + format_value(n.value) + ")";
    }
  }
  if (!applied.delta.remove_nodes.empty()) {
    if (!outcome.empty()) outcome += "; ";
    outcome += "removed " + describe_ids(applied.delta.remove_nodes);
  }
  if (outcome.empty()) outcome = "no change";

  EnvState next{state.task, std::move(applied.graph), state.history};
  next.history.push_back({action, outcome});
  return next;
}

/// 64-bit FNV-1a of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string state_digest(const EnvState& state) { return fnv1a_hex(graph_to_json(state.graph).dump()); }

// ---------------------------------------------------------------------------
// Policy prompt and reply parsing

inline std::string history_text(const EnvState& state, const PromptTemplates& templates) {
  if (state.history.empty()) return templates.empty_history;
  std::string out;
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    if (i) out += '\n';
    out += "step " + std::to_string(i + 1) + ": " + std::string(to_string(h.action.kind)) + " " +
           describe_ids(h.action.targets) + " -> " + h.outcome;
  }
  return out;
}

inline const std::string& action_descriptions(TaskKind task, const PromptTemplates& templates) {
  return task == TaskKind::Sorting ? templates.actions_sorting : templates.actions_set_intersection;
}

inline GeneratorQuery build_policy_prompt(const EnvState& state, const std::string& actions, bool cot,
                                          const PromptTemplates& templates = {}) {
  GeneratorQuery q;
  q.role_system = templates.system;
  q.role_user = render_template(templates.user, {{"actions", actions},
                                                 {"state", serialize_state(state.graph)},
                                                 {"history", history_text(state, templates)},
                                                 {"analysis", cot ? templates.analysis + "\n\n" : ""},
                                                 {"reply_format", templates.reply_format}});
  q.max_tokens = kPolicyMaxTokens;
  q.tag = QueryTag::Policy;
  return q;
}

inline GeneratorQuery build_policy_prompt(const EnvState& state, bool cot, const PromptTemplates& templates = {}) {
  return build_policy_prompt(state, action_descriptions(state.task, templates), cot, templates);
}

/// Contents of every ``` fenced block, in order. A language tag on the
/// opening line is dropped.
inline std::vector<std::string> fenced_blocks(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string::npos) break;
    auto close = text.find("```", open + 3);
    if (close == std::string::npos) break;
    std::string body = text.substr(open + 3, close - open - 3);
    auto nl = body.find('\n');
    if (nl != std::string::npos) {
      auto tag = body.substr(0, nl);
      bool word = !tag.empty() && std::all_of(tag.begin(), tag.end(), [](unsigned char c) { return std::isalpha(c); });
      if (word) body = body.substr(nl + 1);
    }
    out.push_back(std::move(body));
    pos = close + 3;
  }
  return out;
}

/// Reads the last fenced {"action": ..., "nodes": [...]} object of a reply
/// and checks it against the valid actions of `state`.
inline Action parse_action(const std::string& reply, const EnvState& state) {
  auto blocks = fenced_blocks(reply);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    auto j = nlohmann::json::parse(*it, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("action") || !j.contains("nodes")) continue;
    if (!j["action"].is_string() || !j["nodes"].is_array()) continue;
    auto kind = parse_transform_kind(j["action"].get<std::string>());
    if (!kind) continue;
    std::vector<NodeId> ids;
    bool ok = true;
    for (const auto& v : j["nodes"]) {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        ok = false;
        break;
      }
      ids.push_back(v.get<NodeId>());
    }
    if (!ok) continue;
    Action action(*kind, std::move(ids));
    if (!is_valid_action(state, action)) {
      throw Error(Errc::InvalidAction, action.encode() + " is not available in this state");
    }
    return action;
  }
  throw Error(Errc::ParseFailure, "no fenced action object in reply");
}

inline std::optional<Action> try_parse_action(const std::string& reply, const EnvState& state) {
  try {
    return parse_action(reply, state);
  } catch (const Error& e) {
    if (e.code() == Errc::ParseFailure || e.code() == Errc::InvalidAction) return std::nullopt;
    throw;
  }
}

// ---------------------------------------------------------------------------
// Voting

/// Most frequent proposal; ties go to the lexicographically smallest
/// encoding. Empty optionals (invalid replies) are ignored.
inline std::optional<Action> plurality(const std::vector<std::optional<Action>>& proposals) {
  std::map<std::string, std::pair<std::size_t, Action>> tally;
  for (const auto& p : proposals) {
    if (!p) continue;
    auto [it, inserted] = tally.try_emplace(p->encode(), 0, *p);
    ++it->second.first;
  }
  std::optional<Action> best;
  std::size_t best_count = 0;
  for (const auto& [code, entry] : tally) {  // map order = encoding order
    if (entry.first > best_count) {
      best_count = entry.first;
      best = entry.second;
    }
  }
  return best;
}

struct VoteContext {
  std::uint64_t episode_seed = 0;
  std::uint64_t round = 0;
  int attempt = 0;
  int voter = 0;
};

/// Produces one policy reply. Must be safe to call concurrently when
/// concurrent() is true.
class Voter {
 public:
  virtual ~Voter() = default;
  virtual std::string propose(const EnvState& state, const GeneratorQuery& query, const VoteContext& context) = 0;
  virtual bool concurrent() const { return false; }
};

/// Asks the language model behind `generator`.
class LlmVoter : public Voter {
 public:
  explicit LlmVoter(Generator& generator) : generator_(generator) {}
  std::string propose(const EnvState&, const GeneratorQuery& query, const VoteContext&) override {
    return generator_.complete(query);
  }
  bool concurrent() const override { return generator_.concurrent(); }

 private:
  Generator& generator_;
};

/// Lowest-numbered action of the divide-and-conquer plan: split what can be
/// split, solve leaves, merge, then fall back to repairs.
inline std::optional<Action> scripted_action(const EnvState& state) {
  auto valid = enumerate_actions(state);
  auto first_of = [&](TransformKind kind) -> std::optional<Action> {
    for (const auto& a : valid) {
      if (a.kind == kind) return a;
    }
    return std::nullopt;
  };
  if (auto a = first_of(TransformKind::Decompose)) return a;
  for (const auto& a : valid) {
    if (a.kind != TransformKind::Solve) continue;
    NodeId p = a.targets.front();
    if (!decomposition_plan(parse_problem(state.graph.node(p).content))) return a;
  }
  if (auto a = first_of(TransformKind::Aggregate)) return a;
  if (auto a = first_of(TransformKind::Refine)) return a;
  if (auto a = first_of(TransformKind::Reduce)) return a;
  if (!valid.empty()) return valid.front();
  return std::nullopt;
}

inline std::string action_reply(const Action& action) {
  return "Following the plan.\n```json\n" + nlohmann::json(action).dump() + "\n```";
}

/// Test double for an LLM voter: proposes the scripted action, except that
/// with probability error_rate it proposes a different valid action (or an
/// unparseable reply when there is none). Each reply is charged as a policy
/// query to `ledger`.
class SimulatedVoter : public Voter {
 public:
  SimulatedVoter(double error_rate, std::uint64_t seed, QueryLedger& ledger)
      : error_rate_(error_rate), seed_(seed), ledger_(ledger) {
    if (error_rate < 0 || error_rate > 1) throw Error(Errc::ConfigError, "voter error rate must be in [0, 1]");
  }

  std::string propose(const EnvState& state, const GeneratorQuery&, const VoteContext& ctx) override {
    ledger_.charge(QueryTag::Policy);
    std::uint64_t s = mix_seed(mix_seed(mix_seed(mix_seed(seed_, ctx.episode_seed), ctx.round),
                                        static_cast<std::uint64_t>(ctx.attempt)),
                               static_cast<std::uint64_t>(ctx.voter));
    std::mt19937_64 rng(s);
    auto scripted = scripted_action(state);
    if (!scripted) return "No action seems possible.";
    if (unit_draw(rng) >= error_rate_) return action_reply(*scripted);
    std::vector<Action> others;
    for (auto& a : enumerate_actions(state)) {
      if (!(a == *scripted)) others.push_back(std::move(a));
    }
    if (others.empty()) return "I cannot decide.";
    return action_reply(others[index_draw(rng, others.size())]);
  }

  bool concurrent() const override { return true; }
  double error_rate() const { return error_rate_; }

 private:
  double error_rate_;
  std::uint64_t seed_;
  QueryLedger& ledger_;
};

struct VoteResult {
  Action action;
  std::vector<std::string> replies;  // every reply, across attempts
  std::size_t valid = 0;             // valid replies in the deciding attempt
  int attempts = 1;
};

/// Collects k proposals (concurrently when the voter allows it) and returns
/// their plurality. If no reply is valid the round is repeated once.
inline VoteResult ensemble_vote(const EnvState& state, int k, Voter& voter, const GeneratorQuery& query,
                                std::uint64_t episode_seed = 0) {
  if (k < 1) throw Error(Errc::ConfigError, "ensemble size must be >= 1");
  VoteResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<std::string> replies(static_cast<std::size_t>(k));
    auto ask = [&](int i) {
      return voter.propose(state, query, {episode_seed, state.steps_taken(), attempt, i});
    };
    if (voter.concurrent() && k > 1) {
      std::vector<std::future<std::string>> futures;
      for (int i = 0; i < k; ++i) futures.push_back(std::async(std::launch::async, ask, i));
      for (int i = 0; i < k; ++i) replies[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i)].get();
    } else {
      for (int i = 0; i < k; ++i) replies[static_cast<std::size_t>(i)] = ask(i);
    }
    std::vector<std::optional<Action>> proposals;
    for (const auto& r : replies) proposals.push_back(try_parse_action(r, state));
    result.replies.insert(result.replies.end(), replies.begin(), replies.end());
    result.attempts = attempt + 1;
    if (auto winner = plurality(proposals)) {
      result.action = *winner;
      result.valid = static_cast<std::size_t>(std::count_if(proposals.begin(), proposals.end(),
                                                            [](const auto& p) { return p.has_value(); }));
      return result;
    }
  }
  throw Error(Errc::AllProposalsInvalid, "no valid proposal in " + std::to_string(2 * k) + " replies");
}

// ---------------------------------------------------------------------------
// Policies and episodes

struct Choice {
  Action action;
  std::uint64_t policy_queries = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Choice choose(const EnvState& state, std::uint64_t episode_seed) = 0;
  virtual std::string name() const = 0;
  virtual int ensemble_size() const { return 0; }
  virtual bool cot() const { return false; }
};

class ScriptedPolicy : public Policy {
 public:
  Choice choose(const EnvState& state, std::uint64_t) override {
    auto a = scripted_action(state);
    if (!a) throw Error(Errc::AllProposalsInvalid, "no action available");
    return {*a, 0};
  }
  std::string name() const override { return "scripted"; }
};

/// k voters answering the same policy prompt, combined by plurality vote.
class EnsemblePolicy : public Policy {
 public:
  EnsemblePolicy(Voter& voter, int k, bool cot, PromptTemplates templates = {})
      : voter_(voter), k_(k), cot_(cot), templates_(std::move(templates)) {}

  Choice choose(const EnvState& state, std::uint64_t episode_seed) override {
    auto query = build_policy_prompt(state, cot_, templates_);
    auto vote = ensemble_vote(state, k_, voter_, query, episode_seed);
    return {vote.action, static_cast<std::uint64_t>(vote.replies.size())};
  }
  std::string name() const override { return "ensemble"; }
  int ensemble_size() const override { return k_; }
  bool cot() const override { return cot_; }

 private:
  Voter& voter_;
  int k_;
  bool cot_;
  PromptTemplates templates_;
};

enum class Terminal { Solved, StepCapReached, Aborted };

inline std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::Solved: return "solved";
    case Terminal::StepCapReached: return "step_cap_reached";
    case Terminal::Aborted: return "aborted";
  }
  return "?";
}

inline Terminal parse_terminal(std::string_view s) {
  if (s == "solved") return Terminal::Solved;
  if (s == "step_cap_reached") return Terminal::StepCapReached;
  if (s == "aborted") return Terminal::Aborted;
  throw Error(Errc::ConfigError, "unknown terminal flag '" + std::string(s) + "'");
}

/// Default step cap: three times the planned cost of the cheapest static schedule.
inline std::size_t default_epsilon(TaskKind kind, int n) {
  return 3 * static_cast<std::size_t>(schedule_cost(ScheduleParams{}, kind, n));
}

struct EpisodeConfig {
  std::size_t epsilon = 0;  // 0 selects default_epsilon
  int multiplicity = 1;
};

struct EpisodeStep {
  Action action;
  std::string outcome;
  std::string digest;  // state after the action
  std::uint64_t policy_queries = 0;
  std::uint64_t reasoning_queries = 0;
};

struct EpisodeRecord {
  std::string task;
  std::uint64_t instance_seed = 0;
  std::string policy;
  int ensemble_size = 0;
  bool cot = false;
  std::size_t epsilon = 0;
  int multiplicity = 1;
  std::string initial_digest;
  std::vector<EpisodeStep> steps;
  Terminal terminal = Terminal::Aborted;
  std::string abort_code;  // error name when aborted by an exception
  std::string abort_reason;
  std::int64_t final_error = 0;
  std::string final_answer;
  LedgerSnapshot queries;
  double wall_time = 0.0;

  std::vector<Action> actions() const {
    std::vector<Action> out;
    for (const auto& s : steps) out.push_back(s.action);
    return out;
  }
};

inline void to_json(nlohmann::json& j, const EpisodeStep& s) {
  j = nlohmann::json{{"action", s.action},
                     {"outcome", s.outcome},
                     {"digest", s.digest},
                     {"policy_queries", s.policy_queries},
                     {"reasoning_queries", s.reasoning_queries}};
}

inline void from_json(const nlohmann::json& j, EpisodeStep& s) {
  s.action = j.at("action").get<Action>();
  s.outcome = j.at("outcome").get<std::string>();
  s.digest = j.at("digest").get<std::string>();
  s.policy_queries = j.at("policy_queries").get<std::uint64_t>();
  s.reasoning_queries = j.at("reasoning_queries").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const EpisodeRecord& r) {
  j = nlohmann::json{{"task", r.task},
                     {"instance_seed", r.instance_seed},
                     {"policy", r.policy},
                     {"ensemble_size", r.ensemble_size},
                     {"cot", r.cot},
                     {"epsilon", r.epsilon},
                     {"multiplicity", r.multiplicity},
                     {"initial_digest", r.initial_digest},
                     {"steps", r.steps},
                     {"terminal", std::string(to_string(r.terminal))},
                     {"abort_code", r.abort_code},
                     {"abort_reason", r.abort_reason},
                     {"final_error", r.final_error},
                     {"final_answer", r.final_answer},
                     {"queries", r.queries},
                     {"wall_time", r.wall_time}};
}

inline void from_json(const nlohmann::json& j, EpisodeRecord& r) {
  r.task = j.at("task").get<std::string>();
  r.instance_seed = j.at("instance_seed").get<std::uint64_t>();
  r.policy = j.at("policy").get<std::string>();
  r.ensemble_size = j.at("ensemble_size").get<int>();
  r.cot = j.at("cot").get<bool>();
  r.epsilon = j.at("epsilon").get<std::size_t>();
  r.multiplicity = j.value("multiplicity", 1);
  r.initial_digest = j.at("initial_digest").get<std::string>();
  r.steps = j.at("steps").get<std::vector<EpisodeStep>>();
  r.terminal = parse_terminal(j.at("terminal").get<std::string>());
  r.abort_code = j.value("abort_code", std::string());
  r.abort_reason = j.value("abort_reason", std::string());
  r.final_error = j.at("final_error").get<std::int64_t>();
  r.final_answer = j.value("final_answer", std::string());
  r.queries = j.at("queries").get<LedgerSnapshot>();
  r.wall_time = j.value("wall_time", 0.0);
}

/// Queries implied by a recorded episode: policy replies plus the reasoning
/// contract of every applied action.
inline std::uint64_t replay_queries(const EpisodeRecord& record) {
  auto kind = parse_task_spec(record.task).kind;
  std::uint64_t total = 0;
  for (const auto& s : record.steps) {
    int m = (s.action.kind == TransformKind::Solve || s.action.kind == TransformKind::Refine ||
             s.action.kind == TransformKind::Aggregate)
                ? record.multiplicity
                : 1;
    total += s.policy_queries + contract_queries(kind, s.action.kind, m, s.action.targets.size());
  }
  return total;
}

/// Vote, step, repeat until solved, out of steps or stuck. Every vote round
/// counts as one step. Policy queries are expected on the same ledger as
/// the generator's so that the recorded counts cover both.
inline EpisodeRecord run_episode(const TaskInstance& instance, Policy& policy, Generator& generator,
                                 const EpisodeConfig& config = {}) {
  auto started = std::chrono::steady_clock::now();
  auto ledger_before = generator.ledger().snapshot();
  EpisodeRecord record;
  record.task = instance.spec().name();
  record.instance_seed = instance.seed;
  record.policy = policy.name();
  record.ensemble_size = policy.ensemble_size();
  record.cot = policy.cot();
  record.epsilon = config.epsilon ? config.epsilon : default_epsilon(instance.kind, instance.n);
  record.multiplicity = config.multiplicity;

  EnvState state = initial_state(instance);
  record.initial_digest = state_digest(state);
  try {
    while (!is_solved(state) && state.steps_taken() < record.epsilon) {
      if (enumerate_actions(state).empty()) {
        record.terminal = Terminal::Aborted;
        record.abort_reason = "no valid action";
        break;
      }
      auto choice = policy.choose(state, instance.seed);
      auto mid = generator.ledger().total();
      state = step(state, choice.action, generator, config.multiplicity);
      EpisodeStep s;
      s.action = choice.action;
      s.outcome = state.history.back().outcome;
      s.digest = state_digest(state);
      s.policy_queries = choice.policy_queries;
      s.reasoning_queries = generator.ledger().total() - mid;
      record.steps.push_back(std::move(s));
    }
    if (is_solved(state)) {
      record.terminal = Terminal::Solved;
    } else if (record.abort_reason.empty()) {
      record.terminal = Terminal::StepCapReached;
    }
  } catch (const Error& e) {
    record.terminal = Terminal::Aborted;
    record.abort_code = errc_name(e.code());
    record.abort_reason = e.what();
  }
  std::tie(record.final_error, record.final_answer) = final_answer(state.graph);
  record.queries = ledger_difference(generator.ledger().snapshot(), ledger_before);
  record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

/// Re-applies recorded actions from the initial state, checking each was
/// valid at its step. Returns the digest after every action.
inline std::vector<std::string> replay_episode(const TaskInstance& instance, const std::vector<Action>& actions,
                                               Generator& generator, int multiplicity = 1) {
  EnvState state = initial_state(instance);
  std::vector<std::string> digests;
  for (const auto& a : actions) {
    state = step(state, a, generator, multiplicity);
    digests.push_back(state_digest(state));
  }
  return digests;
}

}  // namespace aries
