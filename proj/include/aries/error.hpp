#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aries {

enum class Errc {
  UnknownNode,
  IdCollision,
  InvalidRequest,
  NotDecomposable,
  RefinePerfectNode,
  WouldOrphanProblem,
  IncompatibleTargets,
  GeneratorFailure,
  UnsupportedDifficulty,
  Timeout,
  HttpError,
  BudgetExceeded,
  ScheduleAborted,
  InvalidAction,
  ParseFailure,
  AllProposalsInvalid,
  DegenerateTask,
  ConfigError,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::IdCollision: return "IdCollision";
    case Errc::InvalidRequest: return "InvalidRequest";
    case Errc::NotDecomposable: return "NotDecomposable";
    case Errc::RefinePerfectNode: return "RefinePerfectNode";
    case Errc::WouldOrphanProblem: return "WouldOrphanProblem";
    case Errc::IncompatibleTargets: return "IncompatibleTargets";
    case Errc::GeneratorFailure: return "GeneratorFailure";
    case Errc::UnsupportedDifficulty: return "UnsupportedDifficulty";
    case Errc::Timeout: return "Timeout";
    case Errc::HttpError: return "HttpError";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::ScheduleAborted: return "ScheduleAborted";
    case Errc::InvalidAction: return "InvalidAction";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::AllProposalsInvalid: return "AllProposalsInvalid";
    case Errc::DegenerateTask: return "DegenerateTask";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace aries
