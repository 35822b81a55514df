#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aries/backend.hpp"
#include "aries/schedule.hpp"
#include "aries/task.hpp"

namespace aries {

struct Trial {
  ScheduleParams params;
  double mean_error = 0.0;
  double query_cost = 0.0;  // |Φ(ω)|
  double objective = 0.0;
  std::uint64_t queries = 0;             // reasoning queries spent evaluating this trial
  std::uint64_t cumulative_queries = 0;  // search ledger total after this trial
};

inline double objective_value(double alpha, double error, double cost) {
  return alpha * error + (1.0 - alpha) * cost;
}

inline void to_json(nlohmann::json& j, const Trial& t) {
  j = nlohmann::json{{"params", t.params},         {"mean_error", t.mean_error},
                     {"query_cost", t.query_cost}, {"objective", t.objective},
                     {"queries", t.queries},       {"cumulative_queries", t.cumulative_queries}};
}

inline void from_json(const nlohmann::json& j, Trial& t) {
  t.params = j.at("params").get<ScheduleParams>();
  t.mean_error = j.at("mean_error").get<double>();
  t.query_cost = j.at("query_cost").get<double>();
  t.objective = j.at("objective").get<double>();
  t.queries = j.value("queries", std::uint64_t{0});
  t.cumulative_queries = j.value("cumulative_queries", std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// α calibration

inline constexpr double kAlphaFloor = 1e-6;

/// α = E[|Φ|] / (E[ℰ] + E[|Φ|]), clamped into the open unit interval.
inline double alpha_from_samples(const std::vector<double>& errors, const std::vector<double>& costs) {
  if (errors.empty() || costs.empty()) throw Error(Errc::DegenerateTask, "no calibration samples");
  double e = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
  double c = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
  if (e + c <= 0.0) throw Error(Errc::DegenerateTask, "error and cost expectations are both zero");
  return std::clamp(c / (e + c), kAlphaFloor, 1.0 - kAlphaFloor);
}

/// Runs `samples` uniformly drawn schedules, each on a fresh instance.
inline double calibrate_alpha(TaskSpec task, Generator& generator, int samples, std::uint64_t seed) {
  if (samples < 1) throw Error(Errc::ConfigError, "calibration needs at least one sample");
  auto grid = all_schedule_params();
  std::mt19937_64 rng(mix_seed(seed, 0xA1FA));
  std::vector<double> errors, costs;
  for (int i = 0; i < samples; ++i) {
    const auto& p = grid[index_draw(rng, grid.size())];
    auto inst = gen_instance(task.kind, task.n, mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    errors.push_back(static_cast<double>(run_schedule(inst, p, generator).final_error));
    costs.push_back(static_cast<double>(schedule_cost(p, task.kind, task.n)));
  }
  return alpha_from_samples(errors, costs);
}

// ---------------------------------------------------------------------------
// Tree-structured Parzen estimator over the categorical grid

struct TpeConfig {
  double gamma = 0.25;
  int startup_trials = 10;
};

inline void to_json(nlohmann::json& j, const TpeConfig& c) {
  j = nlohmann::json{{"gamma", c.gamma}, {"startup_trials", c.startup_trials}};
}

inline void from_json(const nlohmann::json& j, TpeConfig& c) {
  c.gamma = j.value("gamma", 0.25);
  c.startup_trials = j.value("startup_trials", 10);
}

/// Choices of each of the five parameters, in ScheduleParams field order.
inline std::array<std::vector<int>, 5> search_space() {
  std::vector<int> grid(kMultiplicityGrid.begin(), kMultiplicityGrid.end());
  return {std::vector<int>{0, 1}, std::vector<int>{0, 1}, grid, grid, grid};
}

inline std::array<int, 5> param_values(const ScheduleParams& p) {
  return {int(p.allow_reduce), int(p.allow_refine), p.solve_multiplicity, p.aggregate_multiplicity,
          p.refine_multiplicity};
}

inline ScheduleParams params_from_values(const std::array<int, 5>& v) {
  return {v[0] != 0, v[1] != 0, v[2], v[3], v[4]};
}

/// Laplace-smoothed choice frequencies among the good (lowest γ-quantile)
/// and bad trials. Empty when there is too little history or every
/// objective is equal.
struct TpeDensities {
  std::array<std::vector<double>, 5> good, bad;
  bool empty() const { return good[0].empty(); }
};

inline TpeDensities tpe_densities(const std::vector<Trial>& history, const TpeConfig& config = {}) {
  TpeDensities out;
  if (static_cast<int>(history.size()) < config.startup_trials || history.empty()) return out;
  auto [lo, hi] = std::minmax_element(history.begin(), history.end(),
                                      [](const Trial& a, const Trial& b) { return a.objective < b.objective; });
  if (lo->objective == hi->objective) return out;

  auto space = search_space();
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return history[a].objective < history[b].objective; });
  auto n_good = static_cast<std::size_t>(std::ceil(config.gamma * static_cast<double>(history.size())));
  n_good = std::clamp<std::size_t>(n_good, 1, history.size() - 1);

  for (std::size_t d = 0; d < 5; ++d) {
    std::size_t k = space[d].size();
    std::vector<double> good(k, 0.0), bad(k, 0.0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      int v = param_values(history[order[rank]].params)[d];
      auto idx = static_cast<std::size_t>(std::find(space[d].begin(), space[d].end(), v) - space[d].begin());
      if (idx >= k) continue;
      (rank < n_good ? good : bad)[idx] += 1.0;
    }
    double n_bad = static_cast<double>(history.size() - n_good);
    for (std::size_t c = 0; c < k; ++c) {
      good[c] = (good[c] + 1.0) / (static_cast<double>(n_good) + static_cast<double>(k));
      bad[c] = (bad[c] + 1.0) / (n_bad + static_cast<double>(k));
    }
    out.good[d] = std::move(good);
    out.bad[d] = std::move(bad);
  }
  return out;
}

/// Sampling probabilities per parameter: uniform without usable history,
/// otherwise proportional to l(c)·l(c)/g(c).
inline std::array<std::vector<double>, 5> tpe_weights(const std::vector<Trial>& history, const TpeConfig& config = {}) {
  auto space = search_space();
  std::array<std::vector<double>, 5> out;
  auto dens = tpe_densities(history, config);
  for (std::size_t d = 0; d < 5; ++d) {
    out[d].assign(space[d].size(), 1.0 / static_cast<double>(space[d].size()));
    if (dens.empty()) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < out[d].size(); ++c) {
      out[d][c] = dens.good[d][c] * dens.good[d][c] / dens.bad[d][c];
      total += out[d][c];
    }
    for (auto& w : out[d]) w /= total;
  }
  return out;
}

inline std::size_t categorical_draw(std::mt19937_64& rng, const std::vector<double>& probs) {
  double u = unit_draw(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

inline ScheduleParams tpe_suggest(const std::vector<Trial>& history, std::mt19937_64& rng, const TpeConfig& config = {}) {
  auto space = search_space();
  auto weights = tpe_weights(history, config);
  std::array<int, 5> v{};
  for (std::size_t d = 0; d < 5; ++d) v[d] = space[d][categorical_draw(rng, weights[d])];
  return params_from_values(v);
}

// ---------------------------------------------------------------------------
// Convergence and checkpoints

inline constexpr std::size_t kConvergenceWindow = 20;

/// First 1-based trial k > window whose best-so-far objective equals the
/// best-so-far at k − window, i.e. a full window passed without improvement.
inline std::optional<std::size_t> detect_convergence(const std::vector<double>& objectives,
                                                     std::size_t window = kConvergenceWindow) {
  std::vector<double> best(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    best[i] = i == 0 ? objectives[0] : std::min(best[i - 1], objectives[i]);
  }
  for (std::size_t k = window + 1; k <= objectives.size(); ++k) {
    if (best[k - 1] == best[k - 1 - window]) return k;
  }
  return std::nullopt;
}

inline std::optional<std::size_t> detect_convergence(const std::vector<Trial>& trials,
                                                     std::size_t window = kConvergenceWindow) {
  std::vector<double> obj;
  for (const auto& t : trials) obj.push_back(t.objective);
  return detect_convergence(obj, window);
}

struct Checkpoint {
  int percent = 100;
  std::size_t prefix = 0;       // trials considered
  std::size_t trial_index = 0;  // 0-based index of the chosen trial
  ScheduleParams params;
  double objective = 0.0;
  double mean_error = 0.0;
  std::uint64_t search_queries = 0;  // search ledger total at the end of the prefix
};

inline void to_json(nlohmann::json& j, const Checkpoint& c) {
  j = nlohmann::json{{"percent", c.percent},         {"prefix", c.prefix},       {"trial_index", c.trial_index},
                     {"params", c.params},           {"objective", c.objective}, {"mean_error", c.mean_error},
                     {"search_queries", c.search_queries}};
}

inline void from_json(const nlohmann::json& j, Checkpoint& c) {
  c.percent = j.at("percent").get<int>();
  c.prefix = j.at("prefix").get<std::size_t>();
  c.trial_index = j.at("trial_index").get<std::size_t>();
  c.params = j.at("params").get<ScheduleParams>();
  c.objective = j.at("objective").get<double>();
  c.mean_error = j.at("mean_error").get<double>();
  c.search_queries = j.at("search_queries").get<std::uint64_t>();
}

inline constexpr std::array<int, 3> kCheckpointPercents = {25, 50, 100};

/// Best trial within the first ceil(p% · horizon) trials, for each p.
inline std::vector<Checkpoint> extract_checkpoints(const std::vector<Trial>& trials, std::size_t horizon) {
  std::vector<Checkpoint> out;
  if (trials.empty()) return out;
  horizon = std::clamp<std::size_t>(horizon, 1, trials.size());
  for (int pct : kCheckpointPercents) {
    auto prefix = static_cast<std::size_t>(std::ceil(static_cast<double>(horizon) * pct / 100.0));
    prefix = std::clamp<std::size_t>(prefix, 1, horizon);
    std::size_t best = 0;
    for (std::size_t i = 1; i < prefix; ++i) {
      if (trials[i].objective < trials[best].objective) best = i;
    }
    out.push_back({pct, prefix, best, trials[best].params, trials[best].objective, trials[best].mean_error,
                   trials[prefix - 1].cumulative_queries});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Search driver

struct SearchConfig {
  TaskSpec task{TaskKind::Sorting, 32};
  int max_trials = 300;
  int batch = 20;               // evaluation instances per trial
  int alpha_samples = 30;
  std::optional<double> alpha;  // skips calibration when set
  std::uint64_t seed = 0;
  TpeConfig tpe;
};

struct SearchRun {
  std::string task;
  std::uint64_t seed = 0;
  double alpha = 0.5;
  std::vector<Trial> trials;
  std::optional<std::size_t> convergence_index;  // 1-based
  std::vector<Checkpoint> checkpoints;
  LedgerSnapshot queries;  // everything the search spent, calibration included

  const Checkpoint& checkpoint(int percent) const {
    for (const auto& c : checkpoints) {
      if (c.percent == percent) return c;
    }
    throw Error(Errc::ConfigError, "no checkpoint at " + std::to_string(percent) + "%");
  }
};

inline void to_json(nlohmann::json& j, const SearchRun& r) {
  j = nlohmann::json{{"task", r.task},
                     {"seed", r.seed},
                     {"alpha", r.alpha},
                     {"trials", r.trials},
                     {"convergence_index", r.convergence_index ? nlohmann::json(*r.convergence_index) : nlohmann::json()},
                     {"checkpoints", r.checkpoints},
                     {"queries", r.queries}};
}

inline void from_json(const nlohmann::json& j, SearchRun& r) {
  r.task = j.at("task").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.alpha = j.at("alpha").get<double>();
  r.trials = j.at("trials").get<std::vector<Trial>>();
  const auto& ci = j.at("convergence_index");
  r.convergence_index = ci.is_null() ? std::nullopt : std::optional<std::size_t>(ci.get<std::size_t>());
  r.checkpoints = j.at("checkpoints").get<std::vector<Checkpoint>>();
  r.queries = j.at("queries").get<LedgerSnapshot>();
}

/// Instances shared by every trial of one search.
inline std::vector<TaskInstance> evaluation_batch(TaskSpec task, int batch, std::uint64_t seed) {
  std::vector<TaskInstance> out;
  for (int i = 0; i < batch; ++i) {
    out.push_back(gen_instance(task.kind, task.n, mix_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

inline Trial evaluate_trial(const ScheduleParams& params, const std::vector<TaskInstance>& batch, TaskSpec task,
                            double alpha, Generator& generator) {
  Trial t;
  t.params = params;
  auto before = generator.ledger().total();
  double total_error = 0.0;
  for (const auto& inst : batch) total_error += static_cast<double>(run_schedule(inst, params, generator).final_error);
  t.mean_error = total_error / static_cast<double>(batch.size());
  t.query_cost = static_cast<double>(schedule_cost(params, task.kind, task.n));
  t.objective = objective_value(alpha, t.mean_error, t.query_cost);
  t.cumulative_queries = generator.ledger().total();
  t.queries = t.cumulative_queries - before;
  return t;
}

/// calibrate α, then suggest → evaluate → record until convergence or
/// max_trials. Every query goes through `generator`, whose ledger should be
/// the search-phase ledger.
inline SearchRun run_search(const SearchConfig& config, Generator& generator) {
  if (config.batch < 1) throw Error(Errc::ConfigError, "evaluation batch must be >= 1");
  if (config.max_trials < 1) throw Error(Errc::ConfigError, "search needs at least one trial");
  auto ledger_before = generator.ledger().snapshot();
  SearchRun run;
  run.task = config.task.name();
  run.seed = config.seed;
  run.alpha = config.alpha ? *config.alpha
                           : calibrate_alpha(config.task, generator, config.alpha_samples, mix_seed(config.seed, 1));
  auto batch = evaluation_batch(config.task, config.batch, mix_seed(config.seed, 2));
  std::mt19937_64 rng(mix_seed(config.seed, 3));

  while (static_cast<int>(run.trials.size()) < config.max_trials) {
    auto params = tpe_suggest(run.trials, rng, config.tpe);
    run.trials.push_back(evaluate_trial(params, batch, config.task, run.alpha, generator));
    run.trials.back().cumulative_queries -= ledger_before.total;
    if ((run.convergence_index = detect_convergence(run.trials))) break;
  }
  run.checkpoints = extract_checkpoints(run.trials, run.convergence_index.value_or(run.trials.size()));
  run.queries = ledger_difference(generator.ledger().snapshot(), ledger_before);
  return run;
}

// ---------------------------------------------------------------------------
// Pareto front

/// Items not dominated under (minimize cost, minimize error), ordered by
/// cost then error. Equal points do not dominate each other.
template <class T, class CostFn, class ErrorFn>
std::vector<T> pareto_front(const std::vector<T>& items, CostFn cost, ErrorFn error) {
  std::vector<T> sorted = items;
  std::stable_sort(sorted.begin(), sorted.end(), [&](const T& a, const T& b) {
    return cost(a) != cost(b) ? cost(a) < cost(b) : error(a) < error(b);
  });
  std::vector<T> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // Anything dominating sorted[i] sorts before it; only the front so far can.
    bool dominated = false;
    for (const auto& f : out) {
      if (cost(f) <= cost(sorted[i]) && error(f) <= error(sorted[i]) &&
          (cost(f) < cost(sorted[i]) || error(f) < error(sorted[i]))) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.push_back(sorted[i]);
  }
  return out;
}

inline std::vector<std::pair<double, double>> pareto_front(const std::vector<std::pair<double, double>>& points) {
  return pareto_front(points, [](const auto& p) { return p.first; }, [](const auto& p) { return p.second; });
}

}  // namespace aries
