#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace c3po {

// Stable error taxonomy. The numeric value doubles as the CLI exit code.
enum class ErrorCode : int {
  EmptyLine = 10,
  WrongFieldCount = 11,
  NonNumericField = 12,
  UnsortedHistory = 13,
  EventAfterNow = 14,
  InvalidEvent = 15,
  InvalidSnapshot = 16,
  SchemaMismatch = 17,
  InvalidEncodingSpec = 18,
  InsufficientClass = 20,
  EmptyDataset = 21,
  InvalidParams = 30,
  UnfittedForest = 31,
  InvalidK = 32,
  InvalidDims = 40,
  DimMismatch = 41,
  DivergedLoss = 42,
  CorruptFile = 43,
  VersionMismatch = 44,
  InvalidSpec = 50,
  MissingModel = 51,
  EmptyCohort = 52,
  PeriodMismatch = 53,
  MalformedCandidate = 60,
  UnknownNotiType = 61,
  MissingUserId = 62,
  NoModelLoaded = 63,
  IoError = 70,
  InvalidConfig = 71,
  ChecksumMismatch = 72,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyLine: return "EmptyLine";
    case ErrorCode::WrongFieldCount: return "WrongFieldCount";
    case ErrorCode::NonNumericField: return "NonNumericField";
    case ErrorCode::UnsortedHistory: return "UnsortedHistory";
    case ErrorCode::EventAfterNow: return "EventAfterNow";
    case ErrorCode::InvalidEvent: return "InvalidEvent";
    case ErrorCode::InvalidSnapshot: return "InvalidSnapshot";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvalidEncodingSpec: return "InvalidEncodingSpec";
    case ErrorCode::InsufficientClass: return "InsufficientClass";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::UnfittedForest: return "UnfittedForest";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::PeriodMismatch: return "PeriodMismatch";
    case ErrorCode::MalformedCandidate: return "MalformedCandidate";
    case ErrorCode::UnknownNotiType: return "UnknownNotiType";
    case ErrorCode::MissingUserId: return "MissingUserId";
    case ErrorCode::NoModelLoaded: return "NoModelLoaded";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// Field-indexed parse failure (NonNumericField / WrongFieldCount carry numbers).
class FieldError : public Error {
 public:
  FieldError(ErrorCode code, std::size_t index, std::size_t expected, const std::string& detail)
      : Error(code, detail), index_(index), expected_(expected) {}

  // NonNumericField: offending 0-based field; WrongFieldCount: fields found.
  std::size_t index() const noexcept { return index_; }
  std::size_t expected() const noexcept { return expected_; }

 private:
  std::size_t index_;
  std::size_t expected_;
};

class ClassError : public Error {
 public:
  ClassError(int label, std::size_t have, std::size_t need)
      : Error(ErrorCode::InsufficientClass, "label " + std::to_string(label) + ": have " + std::to_string(have) +
                                                ", need " + std::to_string(need)),
        label_(label), have_(have), need_(need) {}

  int label() const noexcept { return label_; }
  std::size_t have() const noexcept { return have_; }
  std::size_t need() const noexcept { return need_; }

 private:
  int label_;
  std::size_t have_;
  std::size_t need_;
};

}  // namespace c3po
