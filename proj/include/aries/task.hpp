#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/error.hpp"

namespace aries {

enum class TaskKind { Sorting, SetIntersection };

inline std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::Sorting ? "sorting" : "set-intersection";
}

inline TaskKind parse_task_kind(std::string_view text) {
  if (text == "sorting") return TaskKind::Sorting;
  if (text == "set-intersection" || text == "set") return TaskKind::SetIntersection;
  throw Error(Errc::ConfigError, "unknown task kind '" + std::string(text) + "'");
}

inline constexpr std::array<int, 3> kDifficulties = {32, 64, 128};

/// Lists (or A-chunks) at or below this size are solved directly.
inline constexpr std::size_t kAtomicSize = 16;

/// A benchmark name such as "sorting32" or "set-intersection64".
struct TaskSpec {
  TaskKind kind = TaskKind::Sorting;
  int n = 32;

  std::string name() const { return std::string(to_string(kind)) + std::to_string(n); }
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

inline void check_difficulty(int n) {
  if (std::find(kDifficulties.begin(), kDifficulties.end(), n) == kDifficulties.end()) {
    throw Error(Errc::UnsupportedDifficulty, "difficulty " + std::to_string(n) + " not in {32, 64, 128}");
  }
}

inline TaskSpec parse_task_spec(std::string_view name) {
  auto digits = name.find_first_of("0123456789");
  if (digits == std::string_view::npos || digits == 0) {
    throw Error(Errc::ConfigError, "unknown task '" + std::string(name) + "'");
  }
  TaskSpec spec;
  spec.kind = parse_task_kind(name.substr(0, digits));
  try {
    spec.n = std::stoi(std::string(name.substr(digits)));
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, "unknown task '" + std::string(name) + "'");
  }
  check_difficulty(spec.n);
  return spec;
}

struct SortingProblem {
  std::vector<int> digits;
  friend bool operator==(const SortingProblem&, const SortingProblem&) = default;
};

/// Intersect `a` with `b`. Decomposition chunks `a` and keeps `b` whole.
struct IntersectionProblem {
  std::vector<int> a;
  std::vector<int> b;
  friend bool operator==(const IntersectionProblem&, const IntersectionProblem&) = default;
};

using Subproblem = std::variant<SortingProblem, IntersectionProblem>;

inline TaskKind kind_of(const Subproblem& p) {
  return std::holds_alternative<SortingProblem>(p) ? TaskKind::Sorting : TaskKind::SetIntersection;
}

struct TaskInstance {
  TaskKind kind = TaskKind::Sorting;
  int n = 32;
  std::uint64_t seed = 0;
  Subproblem payload;

  TaskSpec spec() const { return {kind, n}; }
  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

// ---------------------------------------------------------------------------
// Text forms

inline std::string format_list(const std::vector<int>& xs, char open = '[', char close = ']') {
  std::string out(1, open);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  out += close;
  return out;
}

inline std::string format_set(const std::vector<int>& xs) { return format_list(xs, '{', '}'); }

/// Parses "[1, 2,3]" or "{1,2}". Returns nullopt on anything else.
inline std::optional<std::vector<int>> parse_int_list(std::string_view text) {
  if (text.size() < 2) return std::nullopt;
  char open = text.front();
  char close = text.back();
  if (!((open == '[' && close == ']') || (open == '{' && close == '}'))) return std::nullopt;
  std::vector<int> out;
  std::string_view body = text.substr(1, text.size() - 2);
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  };
  skip_ws();
  if (i == body.size()) return out;
  while (true) {
    skip_ws();
    bool negative = false;
    if (i < body.size() && body[i] == '-') {
      negative = true;
      ++i;
    }
    std::size_t start = i;
    long value = 0;
    while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      value = value * 10 + (body[i] - '0');
      if (value > 1'000'000'000) return std::nullopt;
      ++i;
    }
    if (i == start) return std::nullopt;
    out.push_back(static_cast<int>(negative ? -value : value));
    skip_ws();
    if (i == body.size()) break;
    if (body[i] != ',') return std::nullopt;
    ++i;
  }
  return out;
}

/// Extracts the last bracketed list ("[...]" or "{...}") in a free-text reply.
inline std::optional<std::vector<int>> extract_last_list(std::string_view reply) {
  for (std::size_t end = reply.size(); end-- > 0;) {
    char close = reply[end];
    if (close != ']' && close != '}') continue;
    char open = close == ']' ? '[' : '{';
    auto start = reply.rfind(open, end);
    if (start == std::string_view::npos) continue;
    if (auto parsed = parse_int_list(reply.substr(start, end - start + 1))) return parsed;
  }
  return std::nullopt;
}

inline std::string problem_text(const Subproblem& p) {
  if (const auto* s = std::get_if<SortingProblem>(&p)) return "sort " + format_list(s->digits);
  const auto& q = std::get<IntersectionProblem>(p);
  return "intersect " + format_set(q.a) + " with " + format_set(q.b);
}

inline Subproblem parse_problem(std::string_view text) {
  auto fail = [&]() -> Error {
    return Error(Errc::InvalidRequest, "not a problem statement: '" + std::string(text.substr(0, 60)) + "'");
  };
  if (text.rfind("sort ", 0) == 0) {
    auto digits = parse_int_list(text.substr(5));
    if (!digits) throw fail();
    return SortingProblem{*digits};
  }
  if (text.rfind("intersect ", 0) == 0) {
    auto rest = text.substr(10);
    auto sep = rest.find(" with ");
    if (sep == std::string_view::npos) throw fail();
    auto a = parse_int_list(rest.substr(0, sep));
    auto b = parse_int_list(rest.substr(sep + 6));
    if (!a || !b) throw fail();
    return IntersectionProblem{*a, *b};
  }
  throw fail();
}

// ---------------------------------------------------------------------------
// Instance generation

inline TaskInstance gen_instance(TaskKind kind, int n, std::uint64_t seed) {
  check_difficulty(n);
  std::mt19937_64 rng(seed);
  TaskInstance inst;
  inst.kind = kind;
  inst.n = n;
  inst.seed = seed;
  if (kind == TaskKind::Sorting) {
    std::uniform_int_distribution<int> digit(0, 9);
    SortingProblem p;
    p.digits.resize(static_cast<std::size_t>(n));
    for (auto& d : p.digits) d = digit(rng);
    inst.payload = std::move(p);
    return inst;
  }
  // Without replacement from 0..4n; force a nonempty intersection.
  std::vector<int> pool(static_cast<std::size_t>(4 * n + 1));
  std::iota(pool.begin(), pool.end(), 0);
  auto draw = [&] {
    std::shuffle(pool.begin(), pool.end(), rng);
    return std::vector<int>(pool.begin(), pool.begin() + n);
  };
  IntersectionProblem p;
  p.a = draw();
  p.b = draw();
  std::set<int> sa(p.a.begin(), p.a.end());
  bool overlap = std::any_of(p.b.begin(), p.b.end(), [&](int x) { return sa.count(x) != 0; });
  if (!overlap) p.b.front() = p.a.front();
  inst.payload = std::move(p);
  return inst;
}

inline void to_json(nlohmann::json& j, const TaskInstance& inst) {
  j = nlohmann::json{{"kind", std::string(to_string(inst.kind))}, {"n", inst.n}, {"seed", inst.seed}};
  if (const auto* s = std::get_if<SortingProblem>(&inst.payload)) {
    j["payload"] = s->digits;
  } else {
    const auto& q = std::get<IntersectionProblem>(inst.payload);
    j["payload"] = {{"a", q.a}, {"b", q.b}};
  }
}

inline void from_json(const nlohmann::json& j, TaskInstance& inst) {
  inst.kind = parse_task_kind(j.at("kind").get<std::string>());
  inst.n = j.at("n").get<int>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  if (inst.kind == TaskKind::Sorting) {
    inst.payload = SortingProblem{j.at("payload").get<std::vector<int>>()};
  } else {
    inst.payload = IntersectionProblem{j.at("payload").at("a").get<std::vector<int>>(),
                                       j.at("payload").at("b").get<std::vector<int>>()};
  }
}

// ---------------------------------------------------------------------------
// Error functions

struct ErrorComponent {
  std::string name;
  std::int64_t count = 0;
  friend bool operator==(const ErrorComponent&, const ErrorComponent&) = default;
};

struct ErrorScore {
  std::int64_t total = 0;
  std::vector<ErrorComponent> components;
  bool parsed = true;

  std::int64_t component(std::string_view name) const {
    for (const auto& c : components) {
      if (c.name == name) return c.count;
    }
    return 0;
  }

  bool correct() const { return parsed && total == 0; }

  /// Human-readable breakdown used as refinement feedback.
  std::string describe() const {
    std::string out;
    for (const auto& c : components) {
      if (!out.empty()) out += ", ";
      out += std::to_string(c.count) + " " + c.name;
    }
    return out.empty() ? "no errors" : out;
  }
};

/// X counts adjacent descents in the candidate, Y the per-digit frequency
/// difference against the input.
inline ErrorScore score_sorting(const std::vector<int>& input, const std::vector<int>& candidate) {
  std::int64_t unsorted = 0;
  for (std::size_t i = 0; i + 1 < candidate.size(); ++i) {
    if (candidate[i] > candidate[i + 1]) ++unsorted;
  }
  std::array<std::int64_t, 10> histogram{};
  for (int d : input) {
    if (d >= 0 && d <= 9) ++histogram[static_cast<std::size_t>(d)];
  }
  for (int d : candidate) {
    if (d >= 0 && d <= 9) --histogram[static_cast<std::size_t>(d)];
  }
  std::int64_t mismatch = 0;
  for (auto h : histogram) mismatch += h < 0 ? -h : h;
  return {unsorted + mismatch, {{"unsorted pairs", unsorted}, {"frequency mismatch", mismatch}}, true};
}

inline std::vector<int> sorted_unique(std::vector<int> xs) {
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

inline std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  auto sa = sorted_unique(a);
  auto sb = sorted_unique(b);
  std::vector<int> out;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

/// |(A ∩ B) \ C| + |C \ (A ∩ B)|.
inline ErrorScore score_set_intersection(const std::vector<int>& a, const std::vector<int>& b,
                                         const std::vector<int>& candidate) {
  auto truth = intersect(a, b);
  auto c = sorted_unique(candidate);
  std::vector<int> missing;
  std::vector<int> extra;
  std::set_difference(truth.begin(), truth.end(), c.begin(), c.end(), std::back_inserter(missing));
  std::set_difference(c.begin(), c.end(), truth.begin(), truth.end(), std::back_inserter(extra));
  auto m = static_cast<std::int64_t>(missing.size());
  auto e = static_cast<std::int64_t>(extra.size());
  return {m + e, {{"missing elements", m}, {"extra elements", e}}, true};
}

/// Parses the candidate out of free text. Sorting candidates must be digit lists.
inline std::optional<std::vector<int>> parse_candidate(const Subproblem& problem, std::string_view reply) {
  auto list = extract_last_list(reply);
  if (!list) return std::nullopt;
  if (kind_of(problem) == TaskKind::Sorting &&
      std::any_of(list->begin(), list->end(), [](int d) { return d < 0 || d > 9; })) {
    return std::nullopt;
  }
  return list;
}

/// Scores free text against a subproblem. An unparseable reply scores as the
/// empty answer plus one "parse failure", so it is never mistaken for correct.
inline ErrorScore score_candidate(const Subproblem& problem, std::string_view reply) {
  auto parsed = parse_candidate(problem, reply);
  const std::vector<int> empty;
  const auto& answer = parsed ? *parsed : empty;
  ErrorScore score = std::visit(
      [&](const auto& p) -> ErrorScore {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SortingProblem>) {
          return score_sorting(p.digits, answer);
        } else {
          return score_set_intersection(p.a, p.b, answer);
        }
      },
      problem);
  if (!parsed) {
    score.parsed = false;
    score.components.push_back({"parse failure", 1});
    score.total += 1;
  }
  return score;
}

/// λ = 1/(1+ℰ); unparseable replies get 0.
inline double valuation_from_score(const ErrorScore& score) {
  if (!score.parsed) return 0.0;
  return 1.0 / (1.0 + static_cast<double>(score.total));
}

inline double valuate(const Subproblem& problem, std::string_view reply) {
  return valuation_from_score(score_candidate(problem, reply));
}

// ---------------------------------------------------------------------------
// Decomposition and reference solutions

/// Subproblems for one decomposition step, or nullopt when `problem` is atomic.
inline std::optional<std::vector<Subproblem>> decomposition_plan(const Subproblem& problem) {
  if (const auto* s = std::get_if<SortingProblem>(&problem)) {
    if (s->digits.size() <= kAtomicSize) return std::nullopt;
    auto mid = s->digits.begin() + static_cast<std::ptrdiff_t>(s->digits.size() / 2);
    return std::vector<Subproblem>{SortingProblem{{s->digits.begin(), mid}},
                                   SortingProblem{{mid, s->digits.end()}}};
  }
  const auto& q = std::get<IntersectionProblem>(problem);
  if (q.a.size() <= kAtomicSize) return std::nullopt;
  std::vector<Subproblem> out;
  for (std::size_t i = 0; i < q.a.size(); i += kAtomicSize) {
    auto end = std::min(q.a.size(), i + kAtomicSize);
    out.push_back(IntersectionProblem{{q.a.begin() + static_cast<std::ptrdiff_t>(i),
                                       q.a.begin() + static_cast<std::ptrdiff_t>(end)},
                                      q.b});
  }
  return out;
}

/// Number of levels in the fully expanded plan, counting the root level.
inline int plan_depth(const Subproblem& problem) {
  auto plan = decomposition_plan(problem);
  if (!plan) return 1;
  int deepest = 0;
  for (const auto& sub : *plan) deepest = std::max(deepest, plan_depth(sub));
  return deepest + 1;
}

inline std::vector<int> reference_answer(const Subproblem& problem) {
  if (const auto* s = std::get_if<SortingProblem>(&problem)) {
    auto out = s->digits;
    std::sort(out.begin(), out.end());
    return out;
  }
  const auto& q = std::get<IntersectionProblem>(problem);
  return intersect(q.a, q.b);
}

inline std::string format_answer(TaskKind kind, const std::vector<int>& answer) {
  return kind == TaskKind::Sorting ? format_list(answer) : format_set(answer);
}

inline std::string reference_solve(const Subproblem& problem) {
  return format_answer(kind_of(problem), reference_answer(problem));
}

/// Two-pointer merge of the given lists in order. Inputs need not be sorted;
/// the result is then whatever a stable merge of them yields.
inline std::vector<int> exact_merge(const std::vector<std::vector<int>>& lists) {
  std::vector<int> acc;
  for (const auto& next : lists) {
    std::vector<int> merged;
    merged.reserve(acc.size() + next.size());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < acc.size() && j < next.size()) {
      if (next[j] < acc[i]) {
        merged.push_back(next[j++]);
      } else {
        merged.push_back(acc[i++]);
      }
    }
    merged.insert(merged.end(), acc.begin() + static_cast<std::ptrdiff_t>(i), acc.end());
    merged.insert(merged.end(), next.begin() + static_cast<std::ptrdiff_t>(j), next.end());
    acc = std::move(merged);
  }
  return acc;
}

inline std::vector<int> union_of(const std::vector<std::vector<int>>& sets) {
  std::vector<int> all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  return sorted_unique(std::move(all));
}

/// Set-intersection partial results combine by plain union; sorting needs a
/// generated merge.
inline bool aggregation_uses_generator(TaskKind kind) { return kind == TaskKind::Sorting; }

/// Deterministic aggregation (set union of partial intersections).
inline std::string aggregate_deterministic(const std::vector<std::string>& candidate_contents) {
  std::vector<std::vector<int>> parts;
  for (const auto& c : candidate_contents) {
    if (auto parsed = extract_last_list(c)) parts.push_back(*parsed);
  }
  return format_set(union_of(parts));
}

// ---------------------------------------------------------------------------
// Reasoning-agent prompts. The payload lines ("Input:", "Set A:", "List 1:",
// ...) are machine-readable so the simulated backend can answer them.

inline constexpr std::string_view kReasoningSystemPrompt =
    "You are a careful reasoning agent working on one step of a larger problem. "
    "Think as needed, then end your reply with the answer in the requested bracket format.";

inline std::string payload_lines(const Subproblem& problem) {
  if (const auto* s = std::get_if<SortingProblem>(&problem)) return "Input: " + format_list(s->digits) + "\n";
  const auto& q = std::get<IntersectionProblem>(problem);
  return "Set A: " + format_set(q.a) + "\nSet B: " + format_set(q.b) + "\n";
}

inline std::string render_solve_prompt(const Subproblem& problem) {
  std::string out = "Task: " + std::string(to_string(kind_of(problem))) + "\n";
  if (kind_of(problem) == TaskKind::Sorting) {
    out += "Sort the following list of digits in ascending order. "
           "Reply with the sorted list in square brackets, e.g. [0,1,1,5].\n";
  } else {
    out += "Find the intersection of the two sets below. "
           "Reply with the intersection in curly braces, e.g. {3,7}.\n";
  }
  return out + payload_lines(problem);
}

inline std::string render_refine_prompt(const Subproblem& problem, std::string_view candidate,
                                        const ErrorScore& feedback) {
  std::string out = "Task: " + std::string(to_string(kind_of(problem))) + "\n";
  out += "The candidate answer below contains errors. Use the feedback to produce a corrected answer "
         "in the same bracket format.\n";
  out += payload_lines(problem);
  out += "Candidate: " + std::string(candidate) + "\n";
  out += "Feedback: " + feedback.describe() + "\n";
  return out;
}

inline std::string render_aggregate_prompt(TaskKind kind, const std::vector<std::string>& parts) {
  std::string out = "Task: " + std::string(to_string(kind)) + "\n";
  if (kind == TaskKind::Sorting) {
    out += "Merge the following sorted lists into one sorted list. "
           "Reply with the merged list in square brackets.\n";
  } else {
    out += "Combine the following partial intersections into one set. "
           "Reply with the union in curly braces.\n";
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto parsed = extract_last_list(parts[i]);
    out += "List " + std::to_string(i + 1) + ": " +
           (parsed ? format_answer(kind, *parsed) : std::string("[]")) + "\n";
  }
  return out;
}

/// Structured view of a reasoning prompt, recovered from its payload lines.
struct ReasoningPayload {
  TaskKind kind = TaskKind::Sorting;
  std::optional<Subproblem> problem;
  std::vector<std::vector<int>> lists;
};

inline std::optional<ReasoningPayload> parse_reasoning_payload(std::string_view prompt) {
  ReasoningPayload out;
  bool have_task = false;
  std::optional<std::vector<int>> input;
  std::optional<std::vector<int>> set_a;
  std::optional<std::vector<int>> set_b;
  std::istringstream lines{std::string(prompt)};
  std::string line;
  auto value_after = [&](std::string_view prefix) -> std::optional<std::vector<int>> {
    if (line.rfind(prefix, 0) != 0) return std::nullopt;
    return parse_int_list(std::string_view(line).substr(prefix.size()));
  };
  while (std::getline(lines, line)) {
    if (line.rfind("Task: ", 0) == 0) {
      try {
        out.kind = parse_task_kind(line.substr(6));
        have_task = true;
      } catch (const Error&) {
        return std::nullopt;
      }
    } else if (auto v = value_after("Input: ")) {
      input = v;
    } else if (auto v = value_after("Set A: ")) {
      set_a = v;
    } else if (auto v = value_after("Set B: ")) {
      set_b = v;
    } else if (line.rfind("List ", 0) == 0) {
      auto colon = line.find(": ");
      if (colon == std::string::npos) return std::nullopt;
      auto v = parse_int_list(std::string_view(line).substr(colon + 2));
      if (!v) return std::nullopt;
      out.lists.push_back(*v);
    }
  }
  if (!have_task) return std::nullopt;
  if (out.kind == TaskKind::Sorting && input) out.problem = SortingProblem{*input};
  if (out.kind == TaskKind::SetIntersection && set_a && set_b) out.problem = IntersectionProblem{*set_a, *set_b};
  if (!out.problem && out.lists.empty()) return std::nullopt;
  return out;
}

}  // namespace aries
