#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scm {

enum class ErrorCode {
  UnknownProduct,
  CyclicBom,
  IllegalTransition,
  UnknownRecipient,
  UnknownAgent,
  NoRouting,
  Infeasible,
  AlreadyNegotiating,
  NoFeasibleScenario,
  AwardRejected,
  NotActive,
  OutOfOrderMilestone,
  DuplicateMilestone,
  NotFinalized,
  EmptyWindow,
  ZeroMean,
  UnknownTarget,
  Validation,
  Parse,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownProduct: return "UnknownProduct";
    case ErrorCode::CyclicBom: return "CyclicBom";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::UnknownRecipient: return "UnknownRecipient";
    case ErrorCode::UnknownAgent: return "UnknownAgent";
    case ErrorCode::NoRouting: return "NoRouting";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::AlreadyNegotiating: return "AlreadyNegotiating";
    case ErrorCode::NoFeasibleScenario: return "NoFeasibleScenario";
    case ErrorCode::AwardRejected: return "AwardRejected";
    case ErrorCode::NotActive: return "NotActive";
    case ErrorCode::OutOfOrderMilestone: return "OutOfOrderMilestone";
    case ErrorCode::DuplicateMilestone: return "DuplicateMilestone";
    case ErrorCode::NotFinalized: return "NotFinalized";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::ZeroMean: return "ZeroMean";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::Validation: return "ValidationError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace scm
