#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace entfact {

enum class ErrorCode {
  MalformedRecord,
  NoEntities,
  EmptyBand,
  SurfaceNotFound,
  GeneratorUnavailable,
  InsufficientCorpus,
  UnreadableFile,
  FormatError,
  ShapeMismatch,
  NoEntityNodes,
  DimensionMismatch,
  EmptyDataset,
  LengthMismatch,
  ConfigError,
};

std::string_view error_code_name(ErrorCode code);

// Every module error carries a stable code so the CLI can emit a single
// machine-parseable line ("<CODE>: <message>").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Ingestion failure pinned to a 1-based line number of the input file.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& reason)
      : Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + reason),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace entfact
