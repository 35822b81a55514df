#include <gtest/gtest.h>

#include <cmath>

#include "aries/metrics.hpp"

using namespace aries;

namespace {

using K = TransformKind;

TraceStep trace_step(K kind, int m, std::vector<std::int64_t> target_errors, std::vector<std::int64_t> created_errors) {
  TraceStep s;
  s.kind = kind;
  s.multiplicity = m;
  for (std::size_t i = 0; i < target_errors.size(); ++i) s.targets.push_back(static_cast<NodeId>(i + 1));
  s.target_errors = std::move(target_errors);
  s.created_errors = std::move(created_errors);
  for (std::size_t i = 0; i < s.created_errors.size(); ++i) s.created.push_back(static_cast<NodeId>(100 + i));
  return s;
}

RunRecord run_record(const std::string& task, const std::string& method, std::uint64_t seed, std::int64_t error,
                     std::uint64_t queries, std::uint64_t search_cost = 0) {
  RunRecord r;
  r.task = task;
  r.method = method;
  r.instance_seed = seed;
  r.final_error = error;
  r.queries.total = queries;
  r.search_cost = search_cost;
  return r;
}

}  // namespace

TEST(Profile, PerfectOracleAllOnes) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  auto p = profile_transitions({TaskKind::Sorting, 64}, {true, true, 5, 5, 5}, gen, 20, 1);
  for (auto kind : {K::Decompose, K::Solve, K::Aggregate, K::Reduce}) {
    EXPECT_GT(p.row(kind).attempts, 0u) << to_string(kind);
    EXPECT_DOUBLE_EQ(p.row(kind).probability(), 1.0) << to_string(kind);
  }
  EXPECT_EQ(p.row(K::Refine).attempts, 0u);
}

TEST(Profile, ConditioningOnCraftedTrace) {
  std::vector<TraceStep> trace{
      trace_step(K::Decompose, 1, {}, {}),
      trace_step(K::Solve, 3, {}, {0, 2, 0}),
      // Only the first target had errors; its two children count.
      trace_step(K::Refine, 2, {3, 0}, {0, 2, 0, 0}),
      // An input with errors makes the merge attempts uninformative.
      trace_step(K::Aggregate, 2, {0, 1}, {1, 1}),
      trace_step(K::Aggregate, 2, {0, 0}, {0, 4}),
      trace_step(K::Reduce, 1, {0, 2}, {}),
  };
  TransitionProfile p;
  add_trace(p, trace);
  EXPECT_EQ(p.row(K::Solve).attempts, 3u);
  EXPECT_EQ(p.row(K::Solve).successes, 2u);
  EXPECT_EQ(p.row(K::Refine).attempts, 2u);
  EXPECT_EQ(p.row(K::Refine).successes, 1u);
  EXPECT_EQ(p.row(K::Aggregate).attempts, 2u);
  EXPECT_EQ(p.row(K::Aggregate).successes, 1u);
  EXPECT_EQ(p.row(K::Decompose).attempts, 1u);
  EXPECT_EQ(p.row(K::Reduce).successes, 1u);
  auto j = nlohmann::json(p);
  EXPECT_EQ(j["rows"].size(), 5u);
}

TEST(Profile, RecoversMeasuredRates) {
  for (auto kind : {TaskKind::Sorting, TaskKind::SetIntersection}) {
    auto cfg = OracleConfig::measured(kind, 12);
    QueryLedger ledger;
    OracleGenerator gen(cfg, ledger);
    auto p = profile_transitions({kind, 32}, {true, true, 5, 5, 5}, gen, 400, 3);
    for (auto [k, want] : {std::pair{K::Solve, cfg.p_solve}, std::pair{K::Refine, cfg.p_refine},
                           std::pair{K::Aggregate, cfg.p_aggregate}}) {
      const auto& row = p.row(k);
      if (row.attempts == 0) continue;
      double sigma = std::sqrt(want * (1 - want) / static_cast<double>(row.attempts));
      EXPECT_NEAR(row.probability(), want, 3 * sigma + 1e-12) << to_string(kind) << " " << to_string(k);
    }
  }
}

TEST(Costs, SplitByPhase) {
  LedgerSnapshot a, b, s;
  a.total = 40;
  b.total = 22;
  s.phase = Phase::Search;
  s.total = 100;
  auto c = account_costs({a, b});
  EXPECT_EQ(c.inference, 62u);
  EXPECT_EQ(c.search, 0u);
  c = account_costs({s, s, s, a});
  EXPECT_EQ(c.search, 300u);
  EXPECT_EQ(c.total(), 340u);
}

TEST(Costs, LedgerEqualsReplayForStaticRuns) {
  std::mt19937_64 rng(9);
  auto grid = all_schedule_params();
  for (int i = 0; i < 200; ++i) {
    auto kind = i % 2 ? TaskKind::Sorting : TaskKind::SetIntersection;
    QueryLedger ledger;
    OracleGenerator gen(OracleConfig::measured(kind, rng()), ledger);
    auto rec = run_schedule(gen_instance(kind, kDifficulties[rng() % 3], rng()), grid[rng() % grid.size()], gen);
    ASSERT_EQ(rec.queries.total, replay_queries(rec.trace, kind));
    ASSERT_EQ(rec.queries.total, ledger.total());
  }
}

TEST(Report, RowsFromRecordsOnly) {
  std::vector<RunRecord> runs{run_record("sorting32", "IO", 1, 4, 1), run_record("sorting32", "IO", 2, 0, 1),
                              run_record("sorting32", "GoT100", 1, 0, 10, 500),
                              run_record("sorting32", "GoT100", 2, 2, 12, 500)};
  EpisodeRecord e;
  e.task = "sorting32";
  e.instance_seed = 1;
  e.final_error = 0;
  e.queries.total = 30;
  auto rows = build_report(runs, {e, e});
  ASSERT_EQ(rows.size(), 3u);
  const auto& got = rows[1];
  EXPECT_EQ(got.method, "GoT100");
  EXPECT_DOUBLE_EQ(got.mean_error, 1.0);
  EXPECT_DOUBLE_EQ(got.accuracy, 0.5);
  EXPECT_EQ(got.c_s, 500u);
  EXPECT_EQ(got.c_i, 22u);
  EXPECT_EQ(got.c_total(), 522u);
  EXPECT_EQ(got.seeds, 2u);
  const auto& aries = rows[0];
  EXPECT_EQ(aries.method, "ARIES");
  EXPECT_EQ(aries.runs, 2u);
  EXPECT_EQ(aries.seeds, 1u);
  EXPECT_EQ(aries.c_i, 60u);
  auto csv = report_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kReportHeader);
  EXPECT_NE(csv.find("sorting32,GoT100,1,0.5,500,22,522,2,2,"), std::string::npos);
}

TEST(Report, ParetoPerTask) {
  std::vector<ExperimentRow> rows;
  auto row = [](std::string task, std::string method, std::uint64_t cost, double err) {
    ExperimentRow r;
    r.task = std::move(task);
    r.method = std::move(method);
    r.c_i = cost;
    r.mean_error = err;
    return r;
  };
  rows.push_back(row("sorting32", "IO", 100, 5.0));
  rows.push_back(row("sorting32", "GoT25", 300, 1.0));
  rows.push_back(row("sorting32", "GoT100", 400, 1.5));
  rows.push_back(row("set-intersection32", "IO", 1000, 0.5));
  auto front = pareto_rows(rows);
  ASSERT_EQ(front.size(), 3u);
  EXPECT_EQ(front[0].task, "set-intersection32");
  EXPECT_EQ(front[1].method, "IO");
  EXPECT_EQ(front[2].method, "GoT25");
  EXPECT_EQ(pareto_csv(rows), std::string(kParetoHeader) + "\nset-intersection32,IO,1000,0.5\nsorting32,IO,100,5\n"
                                                            "sorting32,GoT25,300,1\n");
}

TEST(Ablation, DeterministicRows) {
  AblationConfig cfg;
  cfg.task = {TaskKind::Sorting, 32};
  cfg.sizes = {1, 5};
  cfg.cot_modes = {true};
  cfg.episodes = 15;
  cfg.oracle = OracleConfig::measured(TaskKind::Sorting);
  cfg.seed = 4;
  auto a = ablation_sweep(cfg), b = ablation_sweep(cfg);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].ensemble_size, 1);
  EXPECT_EQ(a[1].ensemble_size, 5);
  for (const auto& r : a) {
    EXPECT_GE(r.solved_rate, 0.0);
    EXPECT_LE(r.solved_rate, 1.0);
  }
  auto csv = ablation_csv(a);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  cfg.sizes = {0};
  EXPECT_THROW(ablation_sweep(cfg), Error);
}

TEST(Ablation, LargerEnsembleDepartsLess) {
  AblationConfig cfg;
  cfg.task = {TaskKind::Sorting, 64};
  cfg.sizes = {1, 5};
  cfg.cot_modes = {false};
  cfg.episodes = 60;
  cfg.oracle = OracleConfig::measured(TaskKind::Sorting);
  auto rows = ablation_sweep(cfg);
  EXPECT_LT(rows[1].departure_rate, rows[0].departure_rate);
}
