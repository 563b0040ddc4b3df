#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cotmr {

enum class ErrorKind {
  // loading and data model
  MalformedRecord,
  DanglingReference,
  DuplicateId,
  UnknownBenchmark,
  InvalidSize,
  // reasoning
  BackendUnavailable,
  ParseFailure,
  MissingMarker,
  EmptyCaption,
  PayloadNotArray,
  UnknownQuery,
  // embeddings
  DimensionMismatch,
  MissingEmbedding,
  // scoring and evaluation
  LengthMismatch,
  KOutOfRange,
  SubsetNotInGallery,
  MissingRanking,
  FingerprintMismatch,
  // configuration and I/O
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Every typed failure in the library is an Error; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a model reply cannot be turned into structured output.
// cause() is the grammar-level kind (MissingMarker, EmptyCaption, PayloadNotArray);
// raw_reply() is the last reply seen.
class ParseError : public Error {
 public:
  ParseError(ErrorKind kind, ErrorKind cause, const std::string& message, std::string raw_reply,
             int attempts = 1)
      : Error(kind, message), cause_(cause), raw_reply_(std::move(raw_reply)), attempts_(attempts) {}

  ErrorKind cause() const noexcept { return cause_; }
  const std::string& raw_reply() const noexcept { return raw_reply_; }
  int attempts() const noexcept { return attempts_; }

 private:
  ErrorKind cause_;
  std::string raw_reply_;
  int attempts_;
};

}  // namespace cotmr
