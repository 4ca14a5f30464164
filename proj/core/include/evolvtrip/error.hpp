#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evolvtrip {

// Every failure the library reports carries one of these codes so callers
// (and the CLI's exit-code mapping) can branch without string matching.
enum class ErrorCode {
  // corpus
  MalformedRecord,
  DuplicatePlotIndex,
  UnreadableSource,
  NoSpeaker,
  AmbiguousAlias,
  AliasConflict,
  // llmgate
  AuthMissing,
  RateLimitedExhausted,
  TransportError,
  ScriptMiss,
  InvalidRequest,
  // triples
  CharacterAbsent,
  UnparseableResponse,
  UnknownPredicate,
  ForeignSubject,
  // tkg
  NonMonotoneInsert,
  UnknownCharacter,
  PlotOutOfRange,
  CorruptGraphFile,
  // qagen
  MissingDimension,
  BadOptionCount,
  AmbiguousCorrect,
  DuplicateOptions,
  IllegalTransition,
  AttemptsExhausted,
  UnknownQuestionId,
  MalformedVerdictRow,
  // evalharness / ftemit
  MissingPlot,
  MissingKg,
  UnverifiedQuestion,
  UnknownBook,
  IoError,
  // cli
  ConfigInvalid,
  MissingUpstreamArtifact,
  TemplateError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace evolvtrip
