#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "aries/error.hpp"
#include "aries/graph.hpp"
#include "aries/task.hpp"

namespace aries {

/// What a generator query is for; used for cost accounting.
enum class QueryTag { Decompose, Solve, Refine, Reduce, Aggregate, Policy };

inline constexpr std::array<QueryTag, 6> kAllQueryTags = {QueryTag::Decompose, QueryTag::Solve,
                                                          QueryTag::Refine,    QueryTag::Reduce,
                                                          QueryTag::Aggregate, QueryTag::Policy};

inline QueryTag tag_for(TransformKind kind) {
  switch (kind) {
    case TransformKind::Decompose: return QueryTag::Decompose;
    case TransformKind::Solve: return QueryTag::Solve;
    case TransformKind::Refine: return QueryTag::Refine;
    case TransformKind::Reduce: return QueryTag::Reduce;
    case TransformKind::Aggregate: return QueryTag::Aggregate;
  }
  return QueryTag::Policy;
}

inline std::string_view to_string(QueryTag tag) {
  return tag == QueryTag::Policy ? std::string_view("policy")
                                 : to_string(static_cast<TransformKind>(static_cast<int>(tag)));
}

inline constexpr int kReasoningMaxTokens = 1024;
inline constexpr int kPolicyMaxTokens = 2048;

struct GeneratorQuery {
  std::string role_system;
  std::string role_user;
  double temperature = 1.0;
  int max_tokens = kReasoningMaxTokens;
  QueryTag tag = QueryTag::Solve;
};

enum class Phase { Search, Inference };

inline std::string_view to_string(Phase phase) { return phase == Phase::Search ? "search" : "inference"; }

struct LedgerSnapshot {
  Phase phase = Phase::Inference;
  std::map<std::string, std::uint64_t> counts;  // per tag, only nonzero entries
  std::uint64_t total = 0;

  std::uint64_t count(QueryTag tag) const {
    auto it = counts.find(std::string(to_string(tag)));
    return it == counts.end() ? 0 : it->second;
  }
};

inline void to_json(nlohmann::json& j, const LedgerSnapshot& s) {
  j = nlohmann::json{{"phase", std::string(to_string(s.phase))}, {"counts", s.counts}, {"total", s.total}};
}

inline void from_json(const nlohmann::json& j, LedgerSnapshot& s) {
  s.phase = j.at("phase").get<std::string>() == "search" ? Phase::Search : Phase::Inference;
  s.counts = j.at("counts").get<std::map<std::string, std::uint64_t>>();
  s.total = j.at("total").get<std::uint64_t>();
}

/// Counts logical queries per tag. A query reserves a slot before it is sent
/// (so a full budget rejects it up front) and commits only on success.
class QueryLedger {
 public:
  explicit QueryLedger(Phase phase = Phase::Inference, std::optional<std::uint64_t> cap = std::nullopt)
      : phase_(phase), cap_(cap) {}

  QueryLedger(const QueryLedger&) = delete;
  QueryLedger& operator=(const QueryLedger&) = delete;

  void reserve() {
    std::lock_guard lock(mutex_);
    if (cap_ && total_ + pending_ >= *cap_) {
      throw Error(Errc::BudgetExceeded, "query budget of " + std::to_string(*cap_) + " exhausted");
    }
    ++pending_;
  }

  void commit(QueryTag tag) {
    std::lock_guard lock(mutex_);
    if (pending_ > 0) --pending_;
    ++counts_[static_cast<std::size_t>(tag)];
    ++total_;
  }

  void release() {
    std::lock_guard lock(mutex_);
    if (pending_ > 0) --pending_;
  }

  void charge(QueryTag tag) {
    reserve();
    commit(tag);
  }

  std::uint64_t total() const {
    std::lock_guard lock(mutex_);
    return total_;
  }

  std::uint64_t count(QueryTag tag) const {
    std::lock_guard lock(mutex_);
    return counts_[static_cast<std::size_t>(tag)];
  }

  Phase phase() const { return phase_; }
  std::optional<std::uint64_t> cap() const { return cap_; }

  LedgerSnapshot snapshot() const {
    std::lock_guard lock(mutex_);
    LedgerSnapshot s;
    s.phase = phase_;
    s.total = total_;
    for (auto tag : kAllQueryTags) {
      auto n = counts_[static_cast<std::size_t>(tag)];
      if (n) s.counts[std::string(to_string(tag))] = n;
    }
    return s;
  }

 private:
  mutable std::mutex mutex_;
  Phase phase_;
  std::optional<std::uint64_t> cap_;
  std::array<std::uint64_t, kAllQueryTags.size()> counts_{};
  std::uint64_t total_ = 0;
  std::uint64_t pending_ = 0;
};

/// Anything that turns a query into text: an LLM endpoint or the oracle.
class Generator {
 public:
  explicit Generator(QueryLedger& ledger) : ledger_(&ledger) {}
  virtual ~Generator() = default;

  virtual std::string complete(const GeneratorQuery& query) = 0;

  /// Whether concurrent complete() calls keep results reproducible.
  virtual bool concurrent() const { return false; }

  QueryLedger& ledger() const { return *ledger_; }

 private:
  QueryLedger* ledger_;
};

// ---------------------------------------------------------------------------
// Seeded helpers shared by the simulators.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Uniform double in [0,1) from 53 random bits; identical on every platform.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t index_draw(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(bound));
}

// ---------------------------------------------------------------------------
// Simulated backend

struct OracleConfig {
  double p_solve = 1.0;
  double p_refine = 1.0;
  double p_aggregate = 1.0;
  int swaps = 2;         // sorting failures: adjacent swaps
  int duplications = 1;  // sorting failures: duplicated digits
  int extra = 1;         // set failures: spurious elements
  int missing = 1;       // set failures: dropped elements
  std::uint64_t seed = 0;

  static OracleConfig perfect(std::uint64_t seed = 0) {
    OracleConfig c;
    c.seed = seed;
    return c;
  }

  /// Measured success rates of a 405B-parameter reasoning model.
  static OracleConfig measured(TaskKind kind, std::uint64_t seed = 0) {
    OracleConfig c;
    c.seed = seed;
    if (kind == TaskKind::Sorting) {
      c.p_solve = 0.57;
      c.p_refine = 0.12;
      c.p_aggregate = 0.60;
    } else {
      c.p_solve = 0.75;
      c.p_refine = 0.71;
      c.p_aggregate = 1.0;
    }
    return c;
  }

  void validate() const {
    for (double p : {p_solve, p_refine, p_aggregate}) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::ConfigError, "oracle probability outside [0,1]");
    }
    if (swaps < 0 || duplications < 0 || extra < 0 || missing < 0) {
      throw Error(Errc::ConfigError, "negative corruption count");
    }
  }
};

inline void to_json(nlohmann::json& j, const OracleConfig& c) {
  j = nlohmann::json{{"p_solve", c.p_solve}, {"p_refine", c.p_refine}, {"p_aggregate", c.p_aggregate},
                     {"swaps", c.swaps},     {"duplications", c.duplications},
                     {"extra", c.extra},     {"missing", c.missing},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, OracleConfig& c) {
  OracleConfig d;
  c.p_solve = j.value("p_solve", d.p_solve);
  c.p_refine = j.value("p_refine", d.p_refine);
  c.p_aggregate = j.value("p_aggregate", d.p_aggregate);
  c.swaps = j.value("swaps", d.swaps);
  c.duplications = j.value("duplications", d.duplications);
  c.extra = j.value("extra", d.extra);
  c.missing = j.value("missing", d.missing);
  c.seed = j.value("seed", d.seed);
}

/// Damages a correct answer so that it scores at least one error against it.
inline std::vector<int> corrupt_answer(TaskKind kind, const std::vector<int>& answer,
                                       const std::optional<Subproblem>& problem, const OracleConfig& config,
                                       std::mt19937_64& rng) {
  std::vector<int> out = answer;
  if (kind == TaskKind::Sorting) {
    for (int i = 0; i < config.swaps && out.size() >= 2; ++i) {
      auto at = index_draw(rng, out.size() - 1);
      std::swap(out[at], out[at + 1]);
    }
    auto duplicate = [&] {
      if (out.empty()) {
        out.push_back(static_cast<int>(index_draw(rng, 10)));
        return;
      }
      auto at = index_draw(rng, out.size());
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), out[at]);
    };
    for (int i = 0; i < config.duplications; ++i) duplicate();
    if (out == answer) duplicate();
    return out;
  }

  // Sets: drop some true elements, add some false ones.
  auto truth = sorted_unique(answer);
  for (int i = 0; i < config.missing && !out.empty(); ++i) {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(index_draw(rng, out.size())));
  }
  std::vector<int> pool;
  if (problem) {
    const auto& q = std::get<IntersectionProblem>(*problem);
    std::vector<int> both = q.a;
    both.insert(both.end(), q.b.begin(), q.b.end());
    both = sorted_unique(std::move(both));
    std::set_difference(both.begin(), both.end(), truth.begin(), truth.end(), std::back_inserter(pool));
  }
  auto add_extra = [&] {
    int value = 0;
    if (!pool.empty()) {
      auto at = index_draw(rng, pool.size());
      value = pool[at];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
    } else {
      value = (truth.empty() ? 0 : truth.back()) + 1 + static_cast<int>(index_draw(rng, 16));
      while (std::binary_search(truth.begin(), truth.end(), value) ||
             std::find(out.begin(), out.end(), value) != out.end()) {
        ++value;
      }
    }
    out.push_back(value);
  };
  for (int i = 0; i < config.extra; ++i) add_extra();
  if (sorted_unique(out) == truth) add_extra();
  return sorted_unique(std::move(out));
}

/// Stochastic stand-in for a reasoning LLM. Each query succeeds with the
/// configured per-transformation probability and otherwise returns a
/// corrupted answer. Replies depend only on (seed, call index, query).
class OracleGenerator : public Generator {
 public:
  OracleGenerator(OracleConfig config, QueryLedger& ledger) : Generator(ledger), config_(config) {
    config_.validate();
  }

  const OracleConfig& config() const { return config_; }

  std::uint64_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

  std::string complete(const GeneratorQuery& query) override {
    std::lock_guard lock(mutex_);
    double p = 0.0;
    switch (query.tag) {
      case QueryTag::Solve: p = config_.p_solve; break;
      case QueryTag::Refine: p = config_.p_refine; break;
      case QueryTag::Aggregate: p = config_.p_aggregate; break;
      default:
        throw Error(Errc::GeneratorFailure,
                    "oracle backend cannot answer '" + std::string(to_string(query.tag)) + "' queries");
    }
    auto payload = parse_reasoning_payload(query.role_user);
    if (!payload) throw Error(Errc::GeneratorFailure, "oracle could not parse the query payload");

    ledger().reserve();
    std::mt19937_64 rng(mix_seed(config_.seed, calls_++));
    std::vector<int> answer;
    if (query.tag == QueryTag::Aggregate) {
      answer = payload->kind == TaskKind::Sorting ? exact_merge(payload->lists) : union_of(payload->lists);
    } else if (payload->problem) {
      answer = reference_answer(*payload->problem);
    } else {
      ledger().release();
      throw Error(Errc::GeneratorFailure, "oracle query has no problem statement");
    }
    if (!(unit_draw(rng) < p)) answer = corrupt_answer(payload->kind, answer, payload->problem, config_, rng);
    ledger().commit(query.tag);
    return "Answer: " + format_answer(payload->kind, answer);
  }

 private:
  OracleConfig config_;
  mutable std::mutex mutex_;
  std::uint64_t calls_ = 0;
};

}  // namespace aries
