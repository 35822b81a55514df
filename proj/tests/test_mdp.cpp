#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "aries/mdp.hpp"

using namespace aries;

namespace {

using K = TransformKind;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidRequest;
}

std::size_t count_prefix_lines(const std::string& text, const std::string& prefix) {
  std::size_t n = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0;
  return n;
}

// Replies from a fixed list, in call order.
class ListVoter : public Voter {
 public:
  explicit ListVoter(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string propose(const EnvState&, const GeneratorQuery&, const VoteContext&) override {
    return replies_.at(next_++ % replies_.size());
  }
  std::size_t calls() const { return next_; }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

std::string reply_for(const Action& a) { return action_reply(a); }

}  // namespace

TEST(Actions, InitialSortingState) {
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 1));
  EXPECT_EQ(enumerate_actions(s), (std::vector<Action>{{K::Decompose, {0}}, {K::Solve, {0}}}));
}

TEST(Actions, AfterDecomposeAndSolves) {
  QueryLedger ledger;
  OracleConfig cfg = OracleConfig::perfect();
  cfg.p_solve = 0.0;
  OracleGenerator gen(cfg, ledger);
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 1));
  s = step(s, {K::Decompose, {0}}, gen);
  EXPECT_EQ(enumerate_actions(s), (std::vector<Action>{{K::Solve, {0}}, {K::Solve, {1}}, {K::Solve, {2}}}));
  s = step(s, {K::Solve, {1}}, gen, 2);
  s = step(s, {K::Solve, {2}}, gen);
  // Candidates 3,4 of node 1 and 5 of node 2, all imperfect.
  EXPECT_EQ(enumerate_actions(s), (std::vector<Action>{{K::Solve, {0}},
                                                        {K::Solve, {1}},
                                                        {K::Solve, {2}},
                                                        {K::Refine, {3}},
                                                        {K::Refine, {4}},
                                                        {K::Refine, {5}},
                                                        {K::Reduce, {4}},
                                                        {K::Aggregate, {3, 5}}}));
}

TEST(Step, OutcomesAndHistory) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  OracleConfig failing = OracleConfig::perfect();
  failing.p_solve = 0.0;
  OracleGenerator bad(failing, ledger);
  auto s0 = initial_state(gen_instance(TaskKind::Sorting, 32, 2));
  auto s1 = step(s0, {K::Decompose, {0}}, gen);
  EXPECT_EQ(s0.steps_taken(), 0u);
  EXPECT_EQ(s1.history.back().outcome, "created 1, 2");
  auto s2 = step(s1, {K::Solve, {1}}, gen);
  EXPECT_EQ(s2.history.back().outcome, "created 3 (value 1.00)");
  EXPECT_EQ(history_text(s2, {}), "step 1: decompose [0] -> created 1, 2\nstep 2: solve [1] -> created 3 (value 1.00)");
  EXPECT_EQ(history_text(s0, {}), "no actions yet");
  EXPECT_EQ(code_of([&] { step(s2, {K::Solve, {1}}, gen); }), Errc::InvalidAction);
  EXPECT_EQ(code_of([&] { step(s2, {K::Decompose, {0}}, gen); }), Errc::InvalidAction);

  auto t = step(s1, {K::Solve, {2}}, bad);
  ASSERT_LT(t.graph.node(3).value, 1.0);
  t = step(t, {K::Solve, {2}}, gen);
  t = step(t, {K::Reduce, {3}}, gen);
  EXPECT_EQ(t.history.back().outcome, "removed [3]");
}

TEST(Solved, OnlyZeroErrorRootCandidate) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  auto s = initial_state(gen_instance(TaskKind::SetIntersection, 32, 2));
  EXPECT_FALSE(is_solved(s));
  s = step(s, {K::Solve, {0}}, gen);
  EXPECT_TRUE(is_solved(s));
  EXPECT_TRUE(enumerate_actions(s).empty() || enumerate_actions(s).front().kind != K::Solve);
}

TEST(Prompt, SectionsAndNodeLines) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  auto s = initial_state(gen_instance(TaskKind::Sorting, 64, 2));
  s = step(s, {K::Decompose, {0}}, gen);
  s = step(s, {K::Solve, {1}}, gen);
  auto q = build_policy_prompt(s, true);
  EXPECT_EQ(q.tag, QueryTag::Policy);
  EXPECT_EQ(q.max_tokens, kPolicyMaxTokens);
  EXPECT_EQ(q.role_system, PromptTemplates{}.system);
  for (const char* h : {"## Available actions\n", "## Thought graph\n", "## Action history\n"}) {
    EXPECT_NE(q.role_user.find(h), std::string::npos) << h;
  }
  EXPECT_EQ(count_prefix_lines(q.role_user, "node "), s.graph.size());
  EXPECT_EQ(count_prefix_lines(q.role_user, "edge "), s.graph.edges().size());
  EXPECT_NE(q.role_user.find("step 2: solve [1]"), std::string::npos);
  EXPECT_NE(q.role_user.find("```json"), std::string::npos);
}

TEST(Prompt, CotFlagTogglesAnalysisBlock) {
  auto s = initial_state(gen_instance(TaskKind::SetIntersection, 32, 2));
  PromptTemplates t;
  auto with = build_policy_prompt(s, true, t).role_user;
  auto without = build_policy_prompt(s, false, t).role_user;
  EXPECT_NE(with.find(t.analysis), std::string::npos);
  EXPECT_EQ(without.find(t.analysis), std::string::npos);
  EXPECT_EQ(with.size(), without.size() + t.analysis.size() + 2);
  EXPECT_NE(without.find(t.actions_set_intersection), std::string::npos);
}

TEST(Prompt, TemplatesFromDirectory) {
  auto dir = std::filesystem::temp_directory_path() / "aries_templates_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "system.txt") << "custom system\n";
  std::ofstream(dir / "user.txt") << "A={{actions}} H={{history}}";
  auto t = PromptTemplates::load(dir);
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 2));
  auto q = build_policy_prompt(s, "acts", false, t);
  EXPECT_EQ(q.role_system, "custom system");
  EXPECT_EQ(q.role_user, "A=acts H=no actions yet");
  std::filesystem::remove_all(dir);
  EXPECT_THROW(PromptTemplates::load(dir), Error);
  EXPECT_THROW(render_template("{{nope}}", {}), Error);
}

TEST(ParseAction, LastFencedObjectWins) {
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 1));
  std::string reply =
      "Options:\n```json\n{\"action\": \"solve\", \"nodes\": [0]}\n```\nOn reflection:\n"
      "```json\n{\"action\": \"decompose\", \"nodes\": [0]}\n```";
  EXPECT_EQ(parse_action(reply, s), (Action{K::Decompose, {0}}));
  EXPECT_EQ(parse_action("```\n{\"action\":\"solve\",\"nodes\":[0]}```", s), (Action{K::Solve, {0}}));
  // A trailing non-action block does not hide an earlier action.
  EXPECT_EQ(parse_action("```json\n{\"action\":\"solve\",\"nodes\":[0]}\n```\n```text\nbye\n```", s),
            (Action{K::Solve, {0}}));
}

TEST(ParseAction, Errors) {
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 1));
  EXPECT_EQ(code_of([&] { parse_action("decompose node 0", s); }), Errc::ParseFailure);
  EXPECT_EQ(code_of([&] { parse_action("```json\n{\"action\":\"fly\",\"nodes\":[0]}\n```", s); }),
            Errc::ParseFailure);
  EXPECT_EQ(code_of([&] { parse_action("```json\n{\"action\":\"refine\",\"nodes\":[0]}\n```", s); }),
            Errc::InvalidAction);
  EXPECT_EQ(code_of([&] { parse_action("```json\n{\"action\":\"solve\",\"nodes\":[-1]}\n```", s); }),
            Errc::ParseFailure);
  EXPECT_FALSE(try_parse_action("nothing", s));
}

TEST(Action, JsonAndEncoding) {
  Action a(K::Aggregate, {5, 3});
  EXPECT_EQ(a.encode(), "aggregate:3,5");
  EXPECT_EQ(nlohmann::json(a).dump(), "{\"action\":\"aggregate\",\"nodes\":[3,5]}");
  EXPECT_EQ(nlohmann::json(a).get<Action>(), a);
  EXPECT_EQ(Action(K::Reduce, {2, 1}), Action(K::Reduce, {1, 2}));
}

TEST(Vote, PluralityExamples) {
  Action d{K::Decompose, {0}}, s{K::Solve, {0}}, r{K::Solve, {1}};
  EXPECT_EQ(plurality({d, s, s}), s);
  EXPECT_EQ(plurality({s, d}), d);  // "decompose:0" < "solve:0"
  EXPECT_EQ(plurality({std::nullopt, std::nullopt, r}), r);
  EXPECT_FALSE(plurality({std::nullopt}));
  EXPECT_FALSE(plurality({}));
}

TEST(Vote, PluralityMatchesCountingOracleOnAllSmallMultisets) {
  std::vector<std::optional<Action>> alphabet{std::nullopt, Action{K::Solve, {1}}, Action{K::Decompose, {0}},
                                              Action{K::Refine, {4}}};
  // Every sequence (hence every multiset and order) of up to 5 proposals.
  for (std::size_t len = 0; len <= 5; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= alphabet.size();
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::optional<Action>> props;
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i, c /= alphabet.size()) props.push_back(alphabet[c % alphabet.size()]);
      std::optional<Action> want;
      std::size_t want_n = 0;
      for (std::size_t a = 1; a < alphabet.size(); ++a) {
        auto n = static_cast<std::size_t>(std::count(props.begin(), props.end(), alphabet[a]));
        if (n == 0) continue;
        if (n > want_n || (n == want_n && alphabet[a]->encode() < want->encode())) {
          want = alphabet[a];
          want_n = n;
        }
      }
      ASSERT_EQ(plurality(props), want);
    }
  }
}

TEST(Vote, RetriesOnceWhenAllInvalid) {
  auto s = initial_state(gen_instance(TaskKind::Sorting, 32, 1));
  ListVoter voter({"junk", "junk", "junk", reply_for({K::Solve, {0}}), "junk", "junk"});
  auto vote = ensemble_vote(s, 3, voter, build_policy_prompt(s, false));
  EXPECT_EQ(vote.action, (Action{K::Solve, {0}}));
  EXPECT_EQ(vote.attempts, 2);
  EXPECT_EQ(vote.valid, 1u);
  EXPECT_EQ(vote.replies.size(), 6u);

  ListVoter hopeless({"junk"});
  EXPECT_EQ(code_of([&] { ensemble_vote(s, 3, hopeless, build_policy_prompt(s, false)); }),
            Errc::AllProposalsInvalid);
  EXPECT_EQ(hopeless.calls(), 6u);
}

TEST(Vote, MajorityOfFiveDepartsLessThanSingleVoter) {
  // States along scripted trajectories of several instances.
  std::vector<EnvState> states;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    QueryLedger ledger;
    OracleGenerator gen(OracleConfig::measured(TaskKind::Sorting, seed), ledger);
    auto s = initial_state(gen_instance(TaskKind::Sorting, 64, seed));
    for (int i = 0; i < 12 && !is_solved(s); ++i) {
      states.push_back(s);
      s = step(s, *scripted_action(s), gen);
    }
  }
  QueryLedger policy_ledger;
  SimulatedVoter voter(0.4, 99, policy_ledger);
  std::size_t depart1 = 0, depart5 = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    auto want = *scripted_action(s);
    auto q = build_policy_prompt(s, false);
    depart1 += !(ensemble_vote(s, 1, voter, q, i).action == want);
    depart5 += !(ensemble_vote(s, 5, voter, q, i + 100000).action == want);
  }
  EXPECT_LT(depart5, depart1);
  EXPECT_EQ(policy_ledger.count(QueryTag::Policy), 6 * states.size());
}

TEST(Episode, ScriptedSolvesSorting32InFourSteps) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  ScriptedPolicy policy;
  auto rec = run_episode(gen_instance(TaskKind::Sorting, 32, 3), policy, gen);
  EXPECT_EQ(rec.terminal, Terminal::Solved);
  ASSERT_EQ(rec.steps.size(), 4u);
  EXPECT_EQ(rec.steps[0].action, (Action{K::Decompose, {0}}));
  EXPECT_EQ(rec.steps[3].action, (Action{K::Aggregate, {3, 4}}));
  EXPECT_EQ(rec.final_error, 0);
  EXPECT_EQ(rec.epsilon, 12u);
}

TEST(Episode, DefaultEpsilon) {
  EXPECT_EQ(default_epsilon(TaskKind::Sorting, 32), 12u);
  EXPECT_EQ(default_epsilon(TaskKind::Sorting, 64), 30u);
  EXPECT_EQ(default_epsilon(TaskKind::Sorting, 128), 66u);
  EXPECT_EQ(default_epsilon(TaskKind::SetIntersection, 32), 12u);
  EXPECT_EQ(default_epsilon(TaskKind::SetIntersection, 64), 18u);
  EXPECT_EQ(default_epsilon(TaskKind::SetIntersection, 128), 30u);
}

TEST(Episode, ScriptedPolicySolvesEveryTaskWithPerfectOracle) {
  for (auto kind : {TaskKind::Sorting, TaskKind::SetIntersection}) {
    for (int n : kDifficulties) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        QueryLedger ledger;
        OracleGenerator gen(OracleConfig::perfect(), ledger);
        ScriptedPolicy policy;
        auto rec = run_episode(gen_instance(kind, n, seed), policy, gen);
        ASSERT_EQ(rec.terminal, Terminal::Solved) << rec.task;
        ASSERT_LE(rec.steps.size(), rec.epsilon);
      }
    }
  }
}

TEST(Episode, InvariantsUnderNoisyVoters) {
  std::mt19937_64 rng(41);
  for (int e = 0; e < 150; ++e) {
    auto kind = e % 2 ? TaskKind::Sorting : TaskKind::SetIntersection;
    int n = kDifficulties[rng() % 3];
    auto inst = gen_instance(kind, n, rng());
    std::uint64_t oracle_seed = rng();
    int k = 1 + 2 * static_cast<int>(rng() % 3);
    QueryLedger ledger;
    OracleGenerator gen(OracleConfig::measured(kind, oracle_seed), ledger);
    SimulatedVoter voter(0.3, rng(), ledger);
    EnsemblePolicy policy(voter, k, e % 3 == 0);
    EpisodeConfig cfg;
    cfg.multiplicity = 1 + static_cast<int>(rng() % 2);
    auto rec = run_episode(inst, policy, gen, cfg);

    ASSERT_LE(rec.steps.size(), rec.epsilon);
    ASSERT_NE(rec.terminal, Terminal::Aborted) << rec.abort_reason;
    if (rec.terminal == Terminal::Solved) ASSERT_EQ(rec.final_error, 0);
    ASSERT_EQ(rec.queries.total, replay_queries(rec));
    ASSERT_EQ(rec.queries.count(QueryTag::Policy), [&] {
      std::uint64_t p = 0;
      for (const auto& s : rec.steps) p += s.policy_queries;
      return p;
    }());

    // Re-applying the actions against an identically seeded oracle passes
    // through the same states.
    QueryLedger replay_ledger;
    OracleGenerator replay_gen(OracleConfig::measured(kind, oracle_seed), replay_ledger);
    auto digests = replay_episode(inst, rec.actions(), replay_gen, cfg.multiplicity);
    ASSERT_EQ(digests.size(), rec.steps.size());
    for (std::size_t i = 0; i < digests.size(); ++i) ASSERT_EQ(digests[i], rec.steps[i].digest);
  }
}

TEST(Episode, StepCapAndAbort) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::perfect(), ledger);
  ScriptedPolicy policy;
  EpisodeConfig cfg;
  cfg.epsilon = 2;
  auto capped = run_episode(gen_instance(TaskKind::Sorting, 32, 3), policy, gen, cfg);
  EXPECT_EQ(capped.terminal, Terminal::StepCapReached);
  EXPECT_EQ(capped.steps.size(), 2u);

  ListVoter junk({"junk"});
  EnsemblePolicy bad(junk, 3, false);
  auto aborted = run_episode(gen_instance(TaskKind::Sorting, 32, 3), bad, gen);
  EXPECT_EQ(aborted.terminal, Terminal::Aborted);
  EXPECT_EQ(aborted.abort_code, "AllProposalsInvalid");
}

TEST(Episode, JsonRoundTrip) {
  QueryLedger ledger;
  OracleGenerator gen(OracleConfig::measured(TaskKind::Sorting, 4), ledger);
  SimulatedVoter voter(0.2, 1, ledger);
  EnsemblePolicy policy(voter, 3, true);
  auto rec = run_episode(gen_instance(TaskKind::Sorting, 64, 8), policy, gen);
  auto back = nlohmann::json(rec).get<EpisodeRecord>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(rec));
  EXPECT_EQ(parse_terminal("step_cap_reached"), Terminal::StepCapReached);
}

TEST(Digest, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
