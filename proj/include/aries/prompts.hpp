#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "aries/error.hpp"

namespace aries {

/// Replaces every {{name}} with values.at(name). Unknown names are an error.
inline std::string render_template(const std::string& text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("{{", pos);
    if (open == std::string::npos) break;
    auto close = text.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(text, pos, open - pos);
    std::string name = text.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) throw Error(Errc::ConfigError, "unknown template placeholder '" + name + "'");
    out += it->second;
    pos = close + 2;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

/// Policy prompt texts. Each field can be overridden by a file of the same
/// name (plus .txt) in a templates directory.
struct PromptTemplates {
  std::string system =
      "You are the policy agent of a graph-based reasoning system. A problem is solved by "
      "transforming a graph of thoughts: problem statements are split into subproblems, "
      "candidate solutions are generated, refined, pruned and merged back together.\n"
      "Each turn you see the available transformations, the current graph and the actions "
      "taken so far, and you choose exactly one action.\n"
      "Graph lines have the form: node <id> [origin=<origin>, value=<value>]: <content>. "
      "A value of 1.00 marks a correct candidate; lower values mark candidates with errors. "
      "Problem statements have value 0.00.\n"
      "The episode ends when the original problem has a correct candidate.";

  std::string user =
      "## Available actions\n"
      "{{actions}}\n"
      "\n"
      "## Thought graph\n"
      "{{state}}\n"
      "\n"
      "## Action history\n"
      "{{history}}\n"
      "\n"
      "{{analysis}}"
      "{{reply_format}}";

  std::string analysis =
      "Before answering, reason step by step:\n"
      "1. Describe the action history and what each action achieved.\n"
      "2. Describe the thought graph state: which problems are solved, which candidates contain errors.\n"
      "3. Discuss the outlined strategy and whether it still fits the current state.\n"
      "4. Outline a number of options for the next action and choose the most promising one.";

  std::string reply_format =
      "End your reply with the chosen action as a fenced JSON block:\n"
      "```json\n"
      "{\"action\": \"<decompose|solve|refine|reduce|aggregate>\", \"nodes\": [<node ids>]}\n"
      "```";

  std::string actions_sorting =
      "- decompose [p]: split problem p (a list longer than 16 digits) into two halves. "
      "Precondition: p is a problem that has not been split yet. Effect: two new subproblem nodes.\n"
      "- solve [p]: ask for a sorted version of problem p. Precondition: p has no correct candidate. "
      "Effect: one new candidate of p.\n"
      "- refine [c]: ask for a corrected version of candidate c, using feedback about its errors. "
      "Precondition: value of c below 1.00. Effect: one new candidate of the same problem.\n"
      "- reduce [c1, c2, ...]: delete candidates c1, c2, .... Precondition: every listed candidate "
      "answers the same problem and at least one other candidate of it remains. Effect: the nodes disappear.\n"
      "- aggregate [c1, c2]: merge one sorted candidate of each half into a sorted candidate of the "
      "parent problem. Precondition: the candidates answer all subproblems of one parent. "
      "Effect: one new candidate of the parent.";

  std::string actions_set_intersection =
      "- decompose [p]: split problem p (set A larger than 16 elements) into chunks of A, each "
      "intersected with the full set B. Precondition: p is a problem that has not been split yet. "
      "Effect: new subproblem nodes, one per chunk.\n"
      "- solve [p]: ask for the intersection of problem p. Precondition: p has no correct candidate. "
      "Effect: one new candidate of p.\n"
      "- refine [c]: ask for a corrected version of candidate c, using feedback about missing and "
      "extra elements. Precondition: value of c below 1.00. Effect: one new candidate of the same problem.\n"
      "- reduce [c1, c2, ...]: delete candidates c1, c2, .... Precondition: every listed candidate "
      "answers the same problem and at least one other candidate of it remains. Effect: the nodes disappear.\n"
      "- aggregate [c1, c2, ...]: take the union of one candidate per chunk to answer the parent "
      "problem. Precondition: the candidates answer all subproblems of one parent. "
      "Effect: one new candidate of the parent.";

  std::string empty_history = "no actions yet";

  /// Overrides fields from <dir>/<field>.txt where such files exist.
  static PromptTemplates load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
      throw Error(Errc::ConfigError, "templates directory not found: " + dir.string());
    }
    PromptTemplates t;
    auto maybe_read = [&](const char* name, std::string& field) {
      auto file = dir / (std::string(name) + ".txt");
      if (!std::filesystem::exists(file)) return;
      std::ifstream in(file);
      std::stringstream ss;
      ss << in.rdbuf();
      field = ss.str();
      while (!field.empty() && field.back() == '\n') field.pop_back();
    };
    maybe_read("system", t.system);
    maybe_read("user", t.user);
    maybe_read("analysis", t.analysis);
    maybe_read("reply_format", t.reply_format);
    maybe_read("actions_sorting", t.actions_sorting);
    maybe_read("actions_set_intersection", t.actions_set_intersection);
    maybe_read("empty_history", t.empty_history);
    return t;
  }
};

}  // namespace aries
