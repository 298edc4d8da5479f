#include "forestllm/error.hpp"

namespace forestllm {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::DuplicateHeader: return "DuplicateHeader";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::TargetColumnAbsent: return "TargetColumnAbsent";
    case ErrorCode::NumericParseFailure: return "NumericParseFailure";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::NoObservedValues: return "NoObservedValues";
    case ErrorCode::StratifyInfeasible: return "StratifyInfeasible";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoCandidateFeatures: return "NoCandidateFeatures";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::CacheMiss: return "CacheMiss";
    case ErrorCode::NoScriptMatch: return "NoScriptMatch";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::OperatorKindMismatch: return "OperatorKindMismatch";
    case ErrorCode::EmptyCategorySet: return "EmptyCategorySet";
    case ErrorCode::NonFiniteThreshold: return "NonFiniteThreshold";
    case ErrorCode::MissingToolCall: return "MissingToolCall";
    case ErrorCode::UnrecognizedClass: return "UnrecognizedClass";
    case ErrorCode::NoNumberFound: return "NoNumberFound";
    case ErrorCode::NetworkForbidden: return "NetworkForbidden";
    case ErrorCode::EmptyNode: return "EmptyNode";
    case ErrorCode::TaskMismatch: return "TaskMismatch";
    case ErrorCode::DegenerateTruth: return "DegenerateTruth";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

}  // namespace forestllm
