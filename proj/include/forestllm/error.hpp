#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forestllm {

enum class ErrorCode {
    // dataset
    MissingHeader,
    DuplicateHeader,
    RaggedRow,
    TargetColumnAbsent,
    NumericParseFailure,
    InvalidSchema,
    NoObservedValues,
    StratifyInfeasible,
    InsufficientData,
    // distill
    NoCandidateFeatures,
    // gateway
    TransportError,
    CacheMiss,
    NoScriptMatch,
    MalformedResponse,
    UnknownFeature,
    OperatorKindMismatch,
    EmptyCategorySet,
    NonFiniteThreshold,
    MissingToolCall,
    UnrecognizedClass,
    NoNumberFound,
    NetworkForbidden,
    // induction / forest / eval
    EmptyNode,
    TaskMismatch,
    DegenerateTruth,
    ZeroVariance,
    LengthMismatch,
    // persistence / cli
    UnsupportedVersion,
    InvariantViolation,
    IoError,
    InvalidConfig,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure the library reports carries one of the codes above so the CLI
/// can print a stable, machine-parsable line.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
          code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace forestllm
