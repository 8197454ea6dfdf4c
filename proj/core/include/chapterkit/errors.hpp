#pragma once

#include <stdexcept>
#include <string>

namespace chapterkit {

// Reasons a document gets excluded from the corpus, or an API call is
// rejected. Ingestion catches Error and turns the code into an exclusion
// count; everything else treats Error as a hard failure.
enum class ErrorCode {
  MalformedVtt,
  UnfixableTimestamps,
  NoPunctuation,
  EmptyDocument,
  InsufficientData,
  EmptyInput,
  BadConfig,
  ShapeMismatch,
  OddDimension,
  AllMasked,
  EmptySentence,
  NonScalarLoss,
  DoubleBackward,
  BadSchedule,
  SessionClosed,
  MassMismatch,
  DegenerateLength,
  TooFewDocuments,
  DocumentTooLarge,
  NonFiniteLoss,
  EmptySection,
  InputError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedVtt: return "MalformedVtt";
    case ErrorCode::UnfixableTimestamps: return "UnfixableTimestamps";
    case ErrorCode::NoPunctuation: return "NoPunctuation";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::EmptySentence: return "EmptySentence";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::DoubleBackward: return "DoubleBackward";
    case ErrorCode::BadSchedule: return "BadSchedule";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::MassMismatch: return "MassMismatch";
    case ErrorCode::DegenerateLength: return "DegenerateLength";
    case ErrorCode::TooFewDocuments: return "TooFewDocuments";
    case ErrorCode::DocumentTooLarge: return "DocumentTooLarge";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptySection: return "EmptySection";
    case ErrorCode::InputError: return "InputError";
  }
  return "UnknownError";
}

}  // namespace chapterkit
