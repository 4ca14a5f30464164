#include "evolvtrip/error.hpp"

namespace evolvtrip {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicatePlotIndex: return "DuplicatePlotIndex";
    case ErrorCode::UnreadableSource: return "UnreadableSource";
    case ErrorCode::NoSpeaker: return "NoSpeaker";
    case ErrorCode::AmbiguousAlias: return "AmbiguousAlias";
    case ErrorCode::AliasConflict: return "AliasConflict";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::RateLimitedExhausted: return "RateLimitedExhausted";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ScriptMiss: return "ScriptMiss";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::CharacterAbsent: return "CharacterAbsent";
    case ErrorCode::UnparseableResponse: return "UnparseableResponse";
    case ErrorCode::UnknownPredicate: return "UnknownPredicate";
    case ErrorCode::ForeignSubject: return "ForeignSubject";
    case ErrorCode::NonMonotoneInsert: return "NonMonotoneInsert";
    case ErrorCode::UnknownCharacter: return "UnknownCharacter";
    case ErrorCode::PlotOutOfRange: return "PlotOutOfRange";
    case ErrorCode::CorruptGraphFile: return "CorruptGraphFile";
    case ErrorCode::MissingDimension: return "MissingDimension";
    case ErrorCode::BadOptionCount: return "BadOptionCount";
    case ErrorCode::AmbiguousCorrect: return "AmbiguousCorrect";
    case ErrorCode::DuplicateOptions: return "DuplicateOptions";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::AttemptsExhausted: return "AttemptsExhausted";
    case ErrorCode::UnknownQuestionId: return "UnknownQuestionId";
    case ErrorCode::MalformedVerdictRow: return "MalformedVerdictRow";
    case ErrorCode::MissingPlot: return "MissingPlot";
    case ErrorCode::MissingKg: return "MissingKg";
    case ErrorCode::UnverifiedQuestion: return "UnverifiedQuestion";
    case ErrorCode::UnknownBook: return "UnknownBook";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingUpstreamArtifact: return "MissingUpstreamArtifact";
    case ErrorCode::TemplateError: return "TemplateError";
  }
  return "Unknown";
}

}  // namespace evolvtrip
