// Runs one static schedule and one scripted episode on the oracle backend.
#include <iostream>

#include "aries/aries.hpp"

int main() {
  using namespace aries;

  auto instance = gen_instance(TaskKind::Sorting, 32, 1);
  QueryLedger ledger(Phase::Inference);
  OracleGenerator oracle(OracleConfig::measured(TaskKind::Sorting, 7), ledger);

  auto params = parse_schedule_params("1,1,5,5,5");
  auto run = run_schedule(instance, params, oracle);
  std::cout << "static " << params.to_string() << ": error " << run.final_error << " with "
            << run.queries.total << " queries\n";
  for (const auto& step : run.trace) {
    std::cout << "  " << to_string(step.kind) << " x" << step.multiplicity << " on " << step.targets.size()
              << " node(s)\n";
  }

  QueryLedger episode_ledger(Phase::Inference);
  OracleGenerator perfect(OracleConfig::perfect(), episode_ledger);
  ScriptedPolicy policy;
  auto episode = run_episode(instance, policy, perfect);
  std::cout << "scripted episode: " << to_string(episode.terminal) << " in " << episode.steps.size() << " steps\n";
  for (const auto& s : episode.steps) std::cout << "  " << s.action.encode() << " -> " << s.outcome << "\n";
  return 0;
}
