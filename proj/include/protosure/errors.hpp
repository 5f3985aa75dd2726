#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace protosure {

enum class ErrorCode {
  EmptyInput,
  TokenizerMismatch,
  ParseError,
  DuplicateId,
  BadMagic,
  VersionUnsupported,
  ShapeMismatch,
  CorruptPayload,
  IoError,
  NonFiniteGradient,
  TooFewPoints,
  ZeroVector,
  LabelOutOfRange,
  MissingBundle,
  DivergedLoss,
  InvalidConfig,
  UnknownFormat,
  IndexOutOfRange,
  EmptyDataset,
  UnparseableAnswer,
  HttpFailure,
  MissingPrediction,
  UnknownDatasetKind,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DivergedLoss : public Error {
 public:
  DivergedLoss(std::size_t epoch, std::size_t batch)
      : Error(ErrorCode::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch) +
                                           ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class UnparseableAnswer : public Error {
 public:
  explicit UnparseableAnswer(std::string raw)
      : Error(ErrorCode::UnparseableAnswer, "cannot parse answer '" + raw + "'"), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class HttpFailure : public Error {
 public:
  HttpFailure(int attempts, const std::string& message)
      : Error(ErrorCode::HttpFailure, message + " after " + std::to_string(attempts) + " attempt(s)"),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace protosure
