#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/backend.hpp"
#include "aries/mdp.hpp"
#include "aries/schedule.hpp"
#include "aries/search.hpp"
#include "aries/task.hpp"

namespace aries {

// ---------------------------------------------------------------------------
// Transition profiling

struct TransitionCount {
  std::uint64_t successes = 0;
  std::uint64_t attempts = 0;

  double probability() const {
    return attempts ? static_cast<double>(successes) / static_cast<double>(attempts) : 0.0;
  }
};

struct TransitionProfile {
  std::string task;
  std::map<TransformKind, TransitionCount> rows;

  const TransitionCount& row(TransformKind kind) const {
    static const TransitionCount empty;
    auto it = rows.find(kind);
    return it == rows.end() ? empty : it->second;
  }
};

inline void to_json(nlohmann::json& j, const TransitionProfile& p) {
  j = nlohmann::json{{"task", p.task}, {"rows", nlohmann::json::array()}};
  for (const auto& [kind, c] : p.rows) {
    if (c.attempts == 0) continue;
    j["rows"].push_back({{"transformation", std::string(to_string(kind))},
                         {"successes", c.successes},
                         {"attempts", c.attempts},
                         {"probability", c.probability()}});
  }
}

/// Classifies every transformation application in a recorded trace.
/// Solve: each produced candidate, success when its error is 0.
/// Aggregate: each produced candidate, counted only when all inputs were correct.
/// Refine: each produced candidate whose target had errors.
/// Decompose and reduce: one success per application.
inline void add_trace(TransitionProfile& profile, const std::vector<TraceStep>& trace) {
  for (const auto& s : trace) {
    auto& row = profile.rows[s.kind];
    switch (s.kind) {
      case TransformKind::Decompose:
      case TransformKind::Reduce:
        ++row.attempts;
        ++row.successes;
        break;
      case TransformKind::Solve:
        for (auto e : s.created_errors) {
          ++row.attempts;
          row.successes += e == 0;
        }
        break;
      case TransformKind::Aggregate: {
        bool clean = std::all_of(s.target_errors.begin(), s.target_errors.end(), [](auto e) { return e == 0; });
        if (!clean) break;
        for (auto e : s.created_errors) {
          ++row.attempts;
          row.successes += e == 0;
        }
        break;
      }
      case TransformKind::Refine: {
        auto m = static_cast<std::size_t>(std::max(1, s.multiplicity));
        for (std::size_t i = 0; i < s.created_errors.size(); ++i) {
          std::size_t t = i / m;
          if (t >= s.target_errors.size() || s.target_errors[t] == 0) continue;
          ++row.attempts;
          row.successes += s.created_errors[i] == 0;
        }
        break;
      }
    }
  }
}

inline TransitionProfile profile_from_records(const std::string& task, const std::vector<RunRecord>& records) {
  TransitionProfile p;
  p.task = task;
  for (const auto& r : records) add_trace(p, r.trace);
  return p;
}

/// Runs `runs` static schedules on fresh instances and profiles their traces.
inline TransitionProfile profile_transitions(TaskSpec task, const ScheduleParams& params, Generator& generator,
                                             int runs, std::uint64_t seed) {
  if (runs < 1) throw Error(Errc::ConfigError, "profiling needs at least one run");
  TransitionProfile p;
  p.task = task.name();
  for (int i = 0; i < runs; ++i) {
    auto inst = gen_instance(task.kind, task.n, mix_seed(seed, static_cast<std::uint64_t>(i)));
    add_trace(p, run_schedule(inst, params, generator).trace);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Cost accounting

struct Costs {
  std::uint64_t search = 0;     // C_s
  std::uint64_t inference = 0;  // C_i
  std::uint64_t total() const { return search + inference; }
};

inline Costs account_costs(const std::vector<LedgerSnapshot>& ledgers) {
  Costs c;
  for (const auto& l : ledgers) (l.phase == Phase::Search ? c.search : c.inference) += l.total;
  return c;
}

// ---------------------------------------------------------------------------
// Ablation over ensemble size and chain-of-thought

/// Wraps a policy and counts rounds where it departs from the scripted plan.
class TallyingPolicy : public Policy {
 public:
  explicit TallyingPolicy(Policy& inner) : inner_(inner) {}
  Choice choose(const EnvState& state, std::uint64_t episode_seed) override {
    auto plan = scripted_action(state);
    auto c = inner_.choose(state, episode_seed);
    ++rounds_;
    if (!plan || !(c.action == *plan)) ++departures_;
    return c;
  }
  std::string name() const override { return inner_.name(); }
  int ensemble_size() const override { return inner_.ensemble_size(); }
  bool cot() const override { return inner_.cot(); }

  std::uint64_t rounds() const { return rounds_; }
  std::uint64_t departures() const { return departures_; }

 private:
  Policy& inner_;
  std::uint64_t rounds_ = 0;
  std::uint64_t departures_ = 0;
};

struct AblationConfig {
  TaskSpec task{TaskKind::Sorting, 32};
  std::vector<int> sizes{1, 5};
  std::vector<bool> cot_modes{true, false};
  int episodes = 20;
  OracleConfig oracle;               // reasoning agent
  double voter_error_cot = 0.2;      // per-voter error rate with analysis
  double voter_error_direct = 0.4;   // and without
  std::size_t epsilon = 0;
  std::uint64_t seed = 0;
};

struct AblationRow {
  std::string task;
  int ensemble_size = 1;
  bool cot = true;
  int episodes = 0;
  double mean_error = 0.0;
  double solved_rate = 0.0;
  double departure_rate = 0.0;  // vote rounds not matching the scripted plan
  double mean_queries = 0.0;
};

inline void to_json(nlohmann::json& j, const AblationRow& r) {
  j = nlohmann::json{{"task", r.task},
                     {"ensemble_size", r.ensemble_size},
                     {"cot", r.cot},
                     {"episodes", r.episodes},
                     {"mean_error", r.mean_error},
                     {"solved_rate", r.solved_rate},
                     {"departure_rate", r.departure_rate},
                     {"mean_queries", r.mean_queries}};
}

inline bool operator==(const AblationRow& a, const AblationRow& b) {
  return nlohmann::json(a) == nlohmann::json(b);
}

/// One row per (ensemble size, CoT flag). Voters are simulated with the
/// configured error rate; reasoning uses the oracle. Every cell sees the
/// same instances and the same oracle seeds.
inline std::vector<AblationRow> ablation_sweep(const AblationConfig& config) {
  for (int k : config.sizes) {
    if (k < 1 || k > 15) throw Error(Errc::ConfigError, "ensemble sizes must lie in 1..15");
  }
  std::vector<AblationRow> rows;
  for (int k : config.sizes) {
    for (bool cot : config.cot_modes) {
      AblationRow row;
      row.task = config.task.name();
      row.ensemble_size = k;
      row.cot = cot;
      std::uint64_t rounds = 0, departures = 0, queries = 0;
      double error = 0.0;
      int solved = 0;
      for (int e = 0; e < config.episodes; ++e) {
        auto idx = static_cast<std::uint64_t>(e);
        auto inst = gen_instance(config.task.kind, config.task.n, mix_seed(config.seed, idx));
        QueryLedger ledger(Phase::Inference);
        OracleConfig oc = config.oracle;
        oc.seed = mix_seed(config.oracle.seed ^ config.seed, idx);
        OracleGenerator reasoning(oc, ledger);
        SimulatedVoter voter(cot ? config.voter_error_cot : config.voter_error_direct,
                             mix_seed(config.seed, 0x5107), ledger);
        EnsemblePolicy ensemble(voter, k, cot);
        TallyingPolicy policy(ensemble);
        auto rec = run_episode(inst, policy, reasoning, {config.epsilon, 1});
        error += static_cast<double>(rec.final_error);
        solved += rec.terminal == Terminal::Solved;
        queries += rec.queries.total;
        rounds += policy.rounds();
        departures += policy.departures();
      }
      row.episodes = config.episodes;
      double n = std::max(1, config.episodes);
      row.mean_error = error / n;
      row.solved_rate = solved / n;
      row.mean_queries = static_cast<double>(queries) / n;
      row.departure_rate = rounds ? static_cast<double>(departures) / static_cast<double>(rounds) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

struct ExperimentRow {
  std::string task;
  std::string method;  // IO, GoT25, GoT50, GoT100, ARIES, static
  double mean_error = 0.0;
  double accuracy = 0.0;  // fraction of runs with zero error
  std::uint64_t c_s = 0;  // search queries behind this method
  std::uint64_t c_i = 0;  // inference queries over all runs
  std::size_t runs = 0;
  std::size_t seeds = 0;  // distinct instance seeds
  std::string config_digest;

  std::uint64_t c_total() const { return c_s + c_i; }
};

/// One row per (task, method), computed only from the given records.
/// Search cost is taken from the records' search_cost (equal within a
/// method); episodes never carry search cost.
inline std::vector<ExperimentRow> build_report(const std::vector<RunRecord>& runs,
                                               const std::vector<EpisodeRecord>& episodes) {
  struct Acc {
    double error = 0;
    std::size_t correct = 0, n = 0;
    std::uint64_t c_s = 0, c_i = 0;
    std::set<std::uint64_t> seeds;
    std::set<std::string> configs;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : runs) {
    auto& a = groups[{r.task, r.method}];
    a.error += static_cast<double>(r.final_error);
    a.correct += r.final_error == 0;
    ++a.n;
    a.c_s = std::max(a.c_s, r.search_cost);
    a.c_i += r.queries.total;
    a.seeds.insert(r.instance_seed);
    a.configs.insert(r.method == "IO" ? "IO" : r.params.to_string());
  }
  for (const auto& e : episodes) {
    auto& a = groups[{e.task, "ARIES"}];
    a.error += static_cast<double>(e.final_error);
    a.correct += e.final_error == 0;
    ++a.n;
    a.c_i += e.queries.total;
    a.seeds.insert(e.instance_seed);
    a.configs.insert("k=" + std::to_string(e.ensemble_size) + ",cot=" + std::to_string(int(e.cot)) +
                     ",eps=" + std::to_string(e.epsilon) + ",m=" + std::to_string(e.multiplicity));
  }
  std::vector<ExperimentRow> out;
  for (const auto& [key, a] : groups) {
    ExperimentRow row;
    row.task = key.first;
    row.method = key.second;
    row.runs = a.n;
    row.mean_error = a.error / static_cast<double>(a.n);
    row.accuracy = static_cast<double>(a.correct) / static_cast<double>(a.n);
    row.c_s = a.c_s;
    row.c_i = a.c_i;
    row.seeds = a.seeds.size();
    std::string joined;
    for (const auto& c : a.configs) joined += c + ";";
    row.config_digest = fnv1a_hex(joined);
    out.push_back(row);
  }
  return out;
}

inline const char* kReportHeader = "task,method,mean_error,accuracy,c_s,c_i,c_total,runs,seeds,config_digest";
inline const char* kParetoHeader = "task,method,cost,error";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string report_csv(const std::vector<ExperimentRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += r.task + "," + r.method + "," + format_double(r.mean_error) + "," + format_double(r.accuracy) + "," +
           std::to_string(r.c_s) + "," + std::to_string(r.c_i) + "," + std::to_string(r.c_total()) + "," +
           std::to_string(r.runs) + "," + std::to_string(r.seeds) + "," + r.config_digest + "\n";
  }
  return out;
}

/// Nondominated (C_s + C_i, mean error) points of the report rows, per task.
inline std::vector<ExperimentRow> pareto_rows(const std::vector<ExperimentRow>& rows) {
  std::map<std::string, std::vector<ExperimentRow>> by_task;
  for (const auto& r : rows) by_task[r.task].push_back(r);
  std::vector<ExperimentRow> out;
  for (const auto& [task, group] : by_task) {
    auto front = pareto_front(group, [](const ExperimentRow& r) { return static_cast<double>(r.c_total()); },
                              [](const ExperimentRow& r) { return r.mean_error; });
    out.insert(out.end(), front.begin(), front.end());
  }
  return out;
}

inline std::string pareto_csv(const std::vector<ExperimentRow>& rows) {
  std::string out = std::string(kParetoHeader) + "\n";
  for (const auto& r : pareto_rows(rows)) {
    out += r.task + "," + r.method + "," + std::to_string(r.c_total()) + "," + format_double(r.mean_error) + "\n";
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "task,ensemble_size,cot,episodes,mean_error,solved_rate,departure_rate,mean_queries\n";
  for (const auto& r : rows) {
    out += r.task + "," + std::to_string(r.ensemble_size) + "," + (r.cot ? "1" : "0") + "," +
           std::to_string(r.episodes) + "," + format_double(r.mean_error) + "," + format_double(r.solved_rate) +
           "," + format_double(r.departure_rate) + "," + format_double(r.mean_queries) + "\n";
  }
  return out;
}

}  // namespace aries
