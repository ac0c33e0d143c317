#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace propfield {

enum class ErrorKind {
  InvalidArgument,
  MissingManifest,
  DimensionMismatch,
  NonOrthonormalRotation,
  UnreadableFile,
  DegeneratePose,
  EmptyScene,
  EmptyFusion,
  EmptyInput,
  Provider,
  Parse,
  CountMismatch,
  UnparseableResponse,
  MissingThickness,
  MissingArtifact,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failures keep the raw text so callers can log or retry with it.
class ParseError : public Error {
 public:
  ParseError(ErrorKind kind, const std::string& message, std::string raw)
      : Error(kind, message), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace propfield
