#include <gtest/gtest.h>

#include <cmath>

#include "aries/schedule.hpp"

using namespace aries;

namespace {

using K = TransformKind;

// Level widths written out by hand: sorting halves down to 16 digits, sets
// split once into n/16 chunks.
std::vector<std::size_t> widths_by_hand(TaskKind kind, int n) {
  if (kind == TaskKind::SetIntersection) return {1, static_cast<std::size_t>(n / 16)};
  std::vector<std::size_t> w;
  for (int size = n, width = 1; size >= 16; size /= 2, width *= 2) w.push_back(static_cast<std::size_t>(width));
  return w;
}

std::vector<K> trace_oracle(const ScheduleParams& p, TaskKind kind, int n) {
  auto w = widths_by_hand(kind, n);
  std::vector<K> out(w.size() - 1, K::Decompose);
  out.push_back(K::Solve);
  for (int l = static_cast<int>(w.size()) - 2; l >= 0; --l) {
    for (std::size_t g = 0; g < w[static_cast<std::size_t>(l)]; ++g) out.push_back(K::Aggregate);
    if (p.allow_reduce) out.push_back(K::Reduce);
    if (p.allow_refine) {
      out.push_back(K::Refine);
      out.push_back(K::Reduce);
    }
  }
  return out;
}

// Queries of a run when every generator call succeeds: no refine targets.
std::uint64_t perfect_queries(const ScheduleParams& p, TaskKind kind, int n) {
  auto w = widths_by_hand(kind, n);
  std::uint64_t q = w.back() * static_cast<std::uint64_t>(p.solve_multiplicity);
  if (kind == TaskKind::Sorting) {
    for (std::size_t l = 0; l + 1 < w.size(); ++l) q += w[l] * static_cast<std::uint64_t>(p.aggregate_multiplicity);
  }
  return q;
}

}  // namespace

TEST(Params, ParseAndFormat) {
  auto p = parse_schedule_params("1,1,5,5,5");
  EXPECT_EQ(p, (ScheduleParams{true, true, 5, 5, 5}));
  EXPECT_EQ(p.to_string(), "1,1,5,5,5");
  EXPECT_EQ(parse_schedule_params("0,0,1,1,-"), (ScheduleParams{false, false, 1, 1, 1}));
  EXPECT_THROW(parse_schedule_params("1,1,5,5,-"), Error);
  EXPECT_THROW(parse_schedule_params("1,1,3,5,5"), Error);
  EXPECT_THROW(parse_schedule_params("2,1,5,5,5"), Error);
  EXPECT_THROW(parse_schedule_params("1,1,5,5"), Error);
  EXPECT_EQ(nlohmann::json(p).dump(), "[1,1,5,5,5]");
  EXPECT_EQ(nlohmann::json(p).get<ScheduleParams>(), p);
}

TEST(Params, GridHasFiveHundredDistinctPoints) {
  auto all = all_schedule_params();
  EXPECT_EQ(all.size(), 500u);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
}

TEST(ExpectedTrace, Examples) {
  EXPECT_EQ(expected_trace({false, false, 1, 1, 1}, TaskKind::Sorting, 32),
            (std::vector<K>{K::Decompose, K::Solve, K::Aggregate}));
  EXPECT_EQ(expected_trace({true, true, 5, 5, 5}, TaskKind::Sorting, 32),
            (std::vector<K>{K::Decompose, K::Solve, K::Aggregate, K::Reduce, K::Refine, K::Reduce}));
  EXPECT_EQ(expected_trace({false, false, 1, 1, 1}, TaskKind::SetIntersection, 64),
            (std::vector<K>{K::Decompose, K::Solve, K::Aggregate}));
  auto deep = expected_trace({false, true, 1, 1, 1}, TaskKind::Sorting, 128);
  EXPECT_EQ(std::count(deep.begin(), deep.end(), K::Decompose), 3);
  EXPECT_EQ(std::count(deep.begin(), deep.end(), K::Aggregate), 4 + 2 + 1);
}

TEST(ExpectedTrace, MatchesHandOracleOnWholeGrid) {
  for (const auto& p : all_schedule_params()) {
    for (auto kind : {TaskKind::Sorting, TaskKind::SetIntersection}) {
      for (int n : kDifficulties) ASSERT_EQ(expected_trace(p, kind, n), trace_oracle(p, kind, n));
    }
  }
}

TEST(ScheduleCost, Examples) {
  EXPECT_EQ(schedule_cost({false, false, 1, 1, 1}, TaskKind::Sorting, 32), 4u);
  // 1 decompose + 10 solve + 5 aggregate + 1 reduce + 5 refine + 1 reduce.
  EXPECT_EQ(schedule_cost({true, true, 5, 5, 5}, TaskKind::Sorting, 32), 23u);
  // Without reduce every aggregate attempt is refined: 1 + 2 + 5 + 5·5 + 1.
  EXPECT_EQ(schedule_cost({false, true, 1, 5, 5}, TaskKind::Sorting, 32), 34u);
  auto cheapest = all_schedule_params().front();
  for (const auto& p : all_schedule_params()) {
    EXPECT_GE(schedule_cost(p, TaskKind::Sorting, 64), schedule_cost(cheapest, TaskKind::Sorting, 64));
  }
}

TEST(RunSchedule, RealizedTraceEqualsExpectedUnderNoise) {
  // Every tuple once, cycling through difficulties and tasks.
  std::size_t i = 0;
  for (const auto& p : all_schedule_params()) {
    auto kind = i % 2 ? TaskKind::SetIntersection : TaskKind::Sorting;
    int n = kDifficulties[(i / 2) % 3];
    QueryLedger ledger;
    OracleGenerator gen(OracleConfig::measured(kind, i), ledger);
    auto rec = run_schedule(gen_instance(kind, n, i), p, gen);
    ASSERT_EQ(rec.trace_kinds(), expected_trace(p, kind, n)) << p.to_string() << " n=" << n;
    ASSERT_EQ(rec.queries.total, replay_queries(rec.trace, kind));
    ++i;
  }
}

TEST(RunSchedule, PerfectOracleSolvesWithClosedFormQueries) {
  std::mt19937_64 rng(5);
  auto grid = all_schedule_params();
  for (auto kind : {TaskKind::Sorting, TaskKind::SetIntersection}) {
    for (int n : kDifficulties) {
      for (int t = 0; t < 10; ++t) {
        const auto& p = grid[rng() % grid.size()];
        QueryLedger ledger;
        OracleGenerator gen(OracleConfig::perfect(), ledger);
        auto inst = gen_instance(kind, n, rng());
        auto rec = run_schedule(inst, p, gen);
        ASSERT_EQ(rec.final_error, 0);
        ASSERT_EQ(rec.final_answer, reference_solve(inst.payload));
        ASSERT_EQ(rec.queries.total, perfect_queries(p, kind, n)) << p.to_string();
        ASSERT_EQ(rec.queries.count(QueryTag::Refine), 0u);
      }
    }
  }
}

TEST(RunSchedule, AggregationSuccessFollowsBinomial) {
  // Solves are perfect, so the final answer is right iff one of the A^m
  // merge attempts succeeded: probability 1 - 0.4^{A^m}.
  for (int am : {1, 5}) {
    OracleConfig cfg = OracleConfig::perfect(77 + static_cast<std::uint64_t>(am));
    cfg.p_aggregate = 0.6;
    QueryLedger ledger;
    OracleGenerator gen(cfg, ledger);
    const int runs = 1000;
    int ok = 0;
    for (int r = 0; r < runs; ++r) {
      auto rec = run_schedule(gen_instance(TaskKind::Sorting, 32, static_cast<std::uint64_t>(r)),
                              {true, false, 1, am, 1}, gen);
      ok += rec.final_error == 0;
    }
    double p = 1.0 - std::pow(0.4, am);
    double sigma = std::sqrt(p * (1 - p) / runs);
    EXPECT_NEAR(static_cast<double>(ok) / runs, p, 3 * sigma + 1.0 / runs) << "A^m=" << am;
  }
}

TEST(RunSchedule, RefineOnlyTargetsImperfectSurvivors) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::measured(TaskKind::Sorting, 3), ledger);
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto rec = run_schedule(gen_instance(TaskKind::Sorting, 64, s), {true, true, 1, 5, 5}, gen);
    for (const auto& step : rec.trace) {
      if (step.kind != K::Refine) continue;
      for (auto e : step.target_errors) ASSERT_GT(e, 0);
      ASSERT_LE(step.targets.size(), 2u);
    }
  }
}

TEST(RunSchedule, DeterministicForSeeds) {
  auto once = [] {
    QueryLedger ledger;
    OracleGenerator gen(OracleConfig::measured(TaskKind::Sorting, 11), ledger);
    auto rec = run_schedule(gen_instance(TaskKind::Sorting, 64, 4), {true, true, 5, 5, 5}, gen);
    rec.wall_time = 0;
    return nlohmann::json(rec).dump();
  };
  EXPECT_EQ(once(), once());
}

TEST(RunSchedule, GeneratorFailureAborts) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  struct Broken : Generator {
    using Generator::Generator;
    std::string complete(const GeneratorQuery&) override { throw Error(Errc::HttpError, "down"); }
  } broken(ledger);
  try {
    run_schedule(gen_instance(TaskKind::Sorting, 32, 1), {false, false, 1, 1, 1}, broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScheduleAborted);
  }
}

TEST(RunDirect, SingleSolveOnRoot) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  auto rec = run_direct(gen_instance(TaskKind::SetIntersection, 128, 3), gen);
  EXPECT_EQ(rec.method, "IO");
  ASSERT_EQ(rec.trace.size(), 1u);
  EXPECT_EQ(rec.trace[0].targets, (std::vector<NodeId>{0}));
  EXPECT_EQ(rec.queries.total, 1u);
  EXPECT_EQ(rec.final_error, 0);
}

TEST(RunRecord, JsonRoundTrip) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::measured(TaskKind::SetIntersection, 2), ledger);
  auto rec = run_schedule(gen_instance(TaskKind::SetIntersection, 64, 9), {false, true, 5, 1, 10}, gen);
  auto back = nlohmann::json(rec).get<RunRecord>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(rec));
  EXPECT_EQ(back.task, "set-intersection64");
}
