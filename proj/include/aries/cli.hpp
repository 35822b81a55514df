#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "aries/backend.hpp"
#include "aries/http_backend.hpp"
#include "aries/mdp.hpp"
#include "aries/metrics.hpp"
#include "aries/schedule.hpp"
#include "aries/search.hpp"
#include "aries/task.hpp"

namespace aries {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitBudget = 3,
  kExitBackend = 4,
  kExitIo = 5,
};

inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::UnsupportedDifficulty:
    case Errc::DegenerateTask: return kExitConfig;
    case Errc::BudgetExceeded: return kExitBudget;
    case Errc::GeneratorFailure:
    case Errc::Timeout:
    case Errc::HttpError:
    case Errc::ScheduleAborted:
    case Errc::AllProposalsInvalid: return kExitBackend;
    default: return kExitUsage;
  }
}

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Settings read from the --config JSON file. Flags given on the command
/// line take precedence.
struct RunConfig {
  std::string backend = "oracle";  // oracle | http
  HttpConfig http;
  std::optional<std::uint64_t> budget;  // query cap per ledger
  int ensemble_size = 5;
  std::size_t epsilon = 0;
  int multiplicity = 1;
  bool cot = true;
  std::vector<std::uint64_t> seeds{0};
  nlohmann::json oracle = "perfect";  // "perfect", "measured" or an object of rates
  std::string templates;              // directory of prompt overrides
  double voter_error_cot = 0.2;
  double voter_error_direct = 0.4;
  int search_batch = 20;
  int alpha_samples = 30;
  TpeConfig tpe;

  OracleConfig oracle_for(TaskKind kind, std::uint64_t seed) const {
    OracleConfig c;
    if (oracle.is_string()) {
      auto name = oracle.get<std::string>();
      if (name == "perfect") {
        c = OracleConfig::perfect();
      } else if (name == "measured") {
        c = OracleConfig::measured(kind);
      } else {
        throw Error(Errc::ConfigError, "unknown oracle preset '" + name + "'");
      }
    } else if (oracle.is_object()) {
      c = oracle.get<OracleConfig>();
    } else {
      throw Error(Errc::ConfigError, "oracle must be a preset name or an object");
    }
    c.seed = mix_seed(c.seed, seed);
    c.validate();
    return c;
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "config must be a JSON object");
  static const std::set<std::string> known = {
      "backend", "endpoint", "model", "api_key", "temperature", "budget", "ensemble_size", "epsilon",
      "multiplicity", "cot", "seeds", "oracle", "templates", "voter", "search", "max_retries", "timeout_ms"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    c.backend = j.value("backend", c.backend);
    c.http.endpoint = j.value("endpoint", c.http.endpoint);
    c.http.model = j.value("model", c.http.model);
    c.http.api_key = j.value("api_key", c.http.api_key);
    c.http.max_retries = j.value("max_retries", c.http.max_retries);
    if (j.contains("timeout_ms")) c.http.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long long>());
    if (j.contains("temperature")) c.http.temperature = j["temperature"].get<double>();
    if (j.contains("budget") && !j["budget"].is_null()) c.budget = j["budget"].get<std::uint64_t>();
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.multiplicity = j.value("multiplicity", c.multiplicity);
    c.cot = j.value("cot", c.cot);
    if (j.contains("seeds")) {
      if (j["seeds"].is_number_integer()) {
        c.seeds.clear();
        for (std::uint64_t s = 0; s < j["seeds"].get<std::uint64_t>(); ++s) c.seeds.push_back(s);
      } else {
        c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      }
    }
    if (j.contains("oracle")) c.oracle = j["oracle"];
    c.templates = j.value("templates", c.templates);
    if (j.contains("voter")) {
      c.voter_error_cot = j["voter"].value("error_rate_cot", c.voter_error_cot);
      c.voter_error_direct = j["voter"].value("error_rate_direct", c.voter_error_direct);
    }
    if (j.contains("search")) {
      c.search_batch = j["search"].value("batch", c.search_batch);
      c.alpha_samples = j["search"].value("alpha_samples", c.alpha_samples);
      c.tpe = j["search"].get<TpeConfig>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad config value: ") + e.what());
  }
  if (c.backend != "oracle" && c.backend != "http") {
    throw Error(Errc::ConfigError, "backend must be 'oracle' or 'http'");
  }
  if (c.ensemble_size < 1) throw Error(Errc::ConfigError, "ensemble_size must be >= 1");
  if (c.multiplicity < 1) throw Error(Errc::ConfigError, "multiplicity must be >= 1");
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError("malformed JSON in " + path.string());
  return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void append_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

inline std::vector<TaskInstance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed instance line in " + path.string());
    try {
      out.push_back(j.get<TaskInstance>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed instance in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

struct Backend {
  std::unique_ptr<QueryLedger> ledger;
  std::unique_ptr<Generator> generator;
};

inline Backend make_backend(const RunConfig& config, TaskKind kind, std::uint64_t seed, Phase phase) {
  Backend b;
  b.ledger = std::make_unique<QueryLedger>(phase, config.budget);
  if (config.backend == "http") {
    b.generator = std::make_unique<HttpGenerator>(config.http, *b.ledger);
  } else {
    b.generator = std::make_unique<OracleGenerator>(config.oracle_for(kind, seed), *b.ledger);
  }
  return b;
}

/// Instances for a command: from --instances, else one per seed.
inline std::vector<TaskInstance> select_instances(TaskSpec task, const std::string& instances_file,
                                                  const std::vector<std::uint64_t>& seeds) {
  if (!instances_file.empty()) {
    auto all = read_instances(instances_file);
    std::vector<TaskInstance> out;
    for (auto& i : all) {
      if (i.kind == task.kind && i.n == task.n) out.push_back(std::move(i));
    }
    if (out.empty()) throw Error(Errc::ConfigError, "no " + task.name() + " instances in " + instances_file);
    return out;
  }
  std::vector<TaskInstance> out;
  for (auto s : seeds) out.push_back(gen_instance(task.kind, task.n, s));
  return out;
}

/// Entry point of the `aries` command-line tool. Returns the process exit code.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Thought-graph reasoning experiments: static schedules, policy agents and schedule search"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  std::string task_name = "sorting32";
  std::vector<std::uint64_t> seeds;
  std::string backend_flag;
  std::string out_path;
  std::string instances_file;
  int count = 0;

  auto add_common = [&](CLI::App* sub, bool with_backend) {
    sub->add_option("--task", task_name, "task name, e.g. sorting32 or set-intersection64");
    sub->add_option("--seed", seeds, "instance seed(s)");
    sub->add_option("--count", count, "use seeds 0..count-1 (or seed..seed+count-1)");
    if (with_backend) sub->add_option("--backend", backend_flag, "oracle or http");
  };

  auto* gen = app.add_subcommand("gen-instances", "Write seeded task instances as JSON lines");
  add_common(gen, false);
  gen->add_option("--out", out_path, "output file (default: stdout)");

  auto* static_cmd = app.add_subcommand("run-static", "Run the static divide-and-conquer schedule");
  add_common(static_cmd, true);
  std::string params_text;
  bool direct = false;
  std::string from_search;
  int checkpoint = 100;
  static_cmd->add_option("--params", params_text, "R_ed,R_ef,S^m,A^m,R_ef^m, e.g. 1,1,5,5,5");
  static_cmd->add_flag("--direct", direct, "single solve on the whole problem (IO baseline)");
  static_cmd->add_option("--from-search", from_search, "take params from a search result");
  static_cmd->add_option("--checkpoint", checkpoint, "25, 50 or 100 (with --from-search)");
  static_cmd->add_option("--instances", instances_file, "JSON-lines instance file");
  static_cmd->add_option("--out", out_path, "results directory (default: results)");

  auto* policy_cmd = app.add_subcommand("run-policy", "Run policy-agent episodes on the MDP environment");
  add_common(policy_cmd, true);
  int k_flag = 0;
  std::size_t epsilon_flag = 0;
  bool no_cot = false;
  std::string policy_kind;
  policy_cmd->add_option("--k", k_flag, "ensemble size (default from config)");
  policy_cmd->add_option("--epsilon", epsilon_flag, "step cap (default from config, 0 = automatic)");
  policy_cmd->add_flag("--no-cot", no_cot, "drop the analysis instructions from policy prompts");
  policy_cmd->add_option("--policy", policy_kind, "llm, simulated or scripted");
  policy_cmd->add_option("--instances", instances_file, "JSON-lines instance file");
  policy_cmd->add_option("--out", out_path, "results directory (default: results)");

  auto* search_cmd = app.add_subcommand("search", "TPE search over static schedule parameters");
  add_common(search_cmd, true);
  int trials = 300;
  search_cmd->add_option("--budget", trials, "maximum number of trials");
  search_cmd->add_option("--out", out_path, "output file (default: search_<task>_<seed>.json)");

  auto* profile_cmd = app.add_subcommand("profile", "Estimate transition probabilities from static runs");
  add_common(profile_cmd, true);
  int runs = 100;
  profile_cmd->add_option("--params", params_text, "schedule to profile (default 0,1,20,20,20)");
  profile_cmd->add_option("--runs", runs, "number of schedule runs");
  profile_cmd->add_option("--out", out_path, "output file (default: stdout)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Ensemble size and CoT sweep with simulated voters");
  add_common(ablate_cmd, false);
  std::vector<int> sizes{1, 3, 5, 7, 9, 11, 13, 15};
  int episodes = 20;
  ablate_cmd->add_option("--sizes", sizes, "ensemble sizes")->delimiter(',');
  ablate_cmd->add_option("--episodes", episodes, "episodes per cell");
  ablate_cmd->add_option("--out", out_path, "CSV output (default: stdout)");

  auto* report_cmd = app.add_subcommand("report", "Summarize persisted records as CSV");
  std::string in_dir = "results";
  bool pareto = false;
  report_cmd->add_option("--in", in_dir, "results directory");
  report_cmd->add_flag("--pareto", pareto, "emit only nondominated (cost, error) points");
  report_cmd->add_option("--out", out_path, "CSV output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : parse_run_config(read_json_file(config_path));
    if (!backend_flag.empty()) {
      if (backend_flag != "oracle" && backend_flag != "http") {
        throw Error(Errc::ConfigError, "backend must be 'oracle' or 'http'");
      }
      config.backend = backend_flag;
    }
    if (!config.templates.empty()) PromptTemplates::load(config.templates);
    auto task = parse_task_spec(task_name);

    std::vector<std::uint64_t> seed_list = config.seeds;
    if (!seeds.empty()) seed_list = seeds;
    if (count > 0) {
      std::uint64_t base = seeds.empty() ? 0 : seeds.front();
      seed_list.clear();
      for (int i = 0; i < count; ++i) seed_list.push_back(base + static_cast<std::uint64_t>(i));
    }

    if (*gen) {
      std::string text;
      for (auto s : seed_list) text += nlohmann::json(gen_instance(task.kind, task.n, s)).dump() + "\n";
      if (out_path.empty()) {
        out << text;
      } else {
        write_text_file(out_path, text);
      }
      return kExitOk;
    }

    if (*static_cmd) {
      std::string dir = out_path.empty() ? "results" : out_path;
      std::string method = "static";
      std::uint64_t search_cost = 0;
      ScheduleParams params;
      if (!from_search.empty()) {
        auto run = read_json_file(from_search).get<SearchRun>();
        const auto& cp = run.checkpoint(checkpoint);
        params = cp.params;
        method = "GoT" + std::to_string(checkpoint);
        search_cost = cp.search_queries;
      } else if (!direct) {
        if (params_text.empty()) throw Error(Errc::ConfigError, "run-static needs --params, --direct or --from-search");
        params = parse_schedule_params(params_text);
      }
      for (const auto& inst : select_instances(task, instances_file, seed_list)) {
        auto backend = make_backend(config, task.kind, inst.seed, Phase::Inference);
        RunRecord rec = direct ? run_direct(inst, *backend.generator) : run_schedule(inst, params, *backend.generator);
        rec.method = direct ? "IO" : method;
        rec.search_cost = search_cost;
        std::string name = rec.task + "_" + rec.method + (direct ? "" : "_" + params.to_string()) + "_seed" +
                           std::to_string(inst.seed) + ".json";
        for (auto& ch : name) {
          if (ch == ',') ch = '-';
        }
        write_text_file(std::filesystem::path(dir) / name, nlohmann::json(rec).dump(2) + "\n");
        out << name << ": error " << rec.final_error << ", queries " << rec.queries.total << "\n";
      }
      return kExitOk;
    }

    if (*policy_cmd) {
      std::string dir = out_path.empty() ? "results" : out_path;
      int k = k_flag > 0 ? k_flag : config.ensemble_size;
      bool cot = config.cot && !no_cot;
      std::size_t epsilon = epsilon_flag > 0 ? epsilon_flag : config.epsilon;
      std::string kind = policy_kind.empty() ? (config.backend == "http" ? "llm" : "simulated") : policy_kind;
      if (kind != "llm" && kind != "simulated" && kind != "scripted") {
        throw Error(Errc::ConfigError, "policy must be llm, simulated or scripted");
      }
      if (kind == "llm" && config.backend != "http") {
        throw Error(Errc::ConfigError, "the llm policy needs the http backend");
      }
      PromptTemplates templates = config.templates.empty() ? PromptTemplates{} : PromptTemplates::load(config.templates);
      int worst = kExitOk;
      for (const auto& inst : select_instances(task, instances_file, seed_list)) {
        auto backend = make_backend(config, task.kind, inst.seed, Phase::Inference);
        std::unique_ptr<Voter> voter;
        std::unique_ptr<Policy> policy;
        if (kind == "scripted") {
          policy = std::make_unique<ScriptedPolicy>();
        } else {
          if (kind == "llm") {
            voter = std::make_unique<LlmVoter>(*backend.generator);
          } else {
            voter = std::make_unique<SimulatedVoter>(cot ? config.voter_error_cot : config.voter_error_direct,
                                                     inst.seed, *backend.ledger);
          }
          policy = std::make_unique<EnsemblePolicy>(*voter, k, cot, templates);
        }
        auto rec = run_episode(inst, *policy, *backend.generator, {epsilon, config.multiplicity});
        append_text_file(std::filesystem::path(dir) / ("episodes_" + rec.task + ".jsonl"),
                         nlohmann::json(rec).dump() + "\n");
        out << rec.task << " seed " << inst.seed << ": " << to_string(rec.terminal) << " after " << rec.steps.size()
            << " steps, error " << rec.final_error << ", queries " << rec.queries.total << "\n";
        if (rec.terminal == Terminal::Aborted && !rec.abort_code.empty()) {
          for (auto code : {Errc::BudgetExceeded, Errc::HttpError, Errc::Timeout, Errc::GeneratorFailure}) {
            if (rec.abort_code == errc_name(code)) {
              err << rec.abort_reason << "\n";
              worst = std::max(worst, exit_code_for(code));
            }
          }
        }
      }
      return worst;
    }

    if (*search_cmd) {
      if (trials < 1) throw Error(Errc::ConfigError, "--budget must be >= 1");
      std::uint64_t seed = seeds.empty() ? 0 : seeds.front();
      auto backend = make_backend(config, task.kind, seed, Phase::Search);
      SearchConfig sc;
      sc.task = task;
      sc.max_trials = trials;
      sc.batch = config.search_batch;
      sc.alpha_samples = config.alpha_samples;
      sc.seed = seed;
      sc.tpe = config.tpe;
      auto run = run_search(sc, *backend.generator);
      std::string path = out_path.empty() ? "search_" + task.name() + "_" + std::to_string(seed) + ".json" : out_path;
      write_text_file(path, nlohmann::json(run).dump(2) + "\n");
      out << "alpha " << run.alpha << ", " << run.trials.size() << " trials, "
          << (run.convergence_index ? "converged at " + std::to_string(*run.convergence_index) : "not converged")
          << ", search queries " << run.queries.total << "\n";
      for (const auto& c : run.checkpoints) {
        out << "GoT" << c.percent << ": " << c.params.to_string() << " objective " << c.objective << "\n";
      }
      return kExitOk;
    }

    if (*profile_cmd) {
      auto params = parse_schedule_params(params_text.empty() ? "0,1,20,20,20" : params_text);
      std::uint64_t seed = seeds.empty() ? 0 : seeds.front();
      auto backend = make_backend(config, task.kind, seed, Phase::Inference);
      auto profile = profile_transitions(task, params, *backend.generator, runs, seed);
      std::string text = nlohmann::json(profile).dump(2) + "\n";
      if (out_path.empty()) {
        out << text;
      } else {
        write_text_file(out_path, text);
      }
      return kExitOk;
    }

    if (*ablate_cmd) {
      AblationConfig ac;
      ac.task = task;
      ac.sizes = sizes;
      ac.episodes = episodes;
      ac.oracle = config.oracle_for(task.kind, 0);
      ac.voter_error_cot = config.voter_error_cot;
      ac.voter_error_direct = config.voter_error_direct;
      ac.epsilon = config.epsilon;
      ac.seed = seeds.empty() ? 0 : seeds.front();
      auto text = ablation_csv(ablation_sweep(ac));
      if (out_path.empty()) {
        out << text;
      } else {
        write_text_file(out_path, text);
      }
      return kExitOk;
    }

    if (*report_cmd) {
      if (!std::filesystem::is_directory(in_dir)) throw IoError("no such directory: " + in_dir);
      std::vector<RunRecord> run_records;
      std::vector<EpisodeRecord> episode_records;
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::recursive_directory_iterator(in_dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          if (f.extension() == ".jsonl") {
            std::ifstream in(f);
            std::string line;
            while (std::getline(in, line)) {
              if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
              episode_records.push_back(nlohmann::json::parse(line).get<EpisodeRecord>());
            }
          } else if (f.extension() == ".json") {
            auto j = read_json_file(f);
            if (j.is_object() && j.contains("trace") && j.contains("final_error")) {
              run_records.push_back(j.get<RunRecord>());
            }
          }
        } catch (const nlohmann::json::exception& e) {
          throw IoError("malformed record " + f.string() + ": " + e.what());
        }
      }
      auto rows = build_report(run_records, episode_records);
      auto text = pareto ? pareto_csv(rows) : report_csv(rows);
      if (out_path.empty()) {
        out << text;
      } else {
        write_text_file(out_path, text);
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitUsage;
}

}  // namespace aries
