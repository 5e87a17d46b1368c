#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hta {

enum class ErrorCode {
  // audio-io
  MalformedHeader,
  UnsupportedEncoding,
  EmptyAudio,
  InvalidRate,
  // configuration (features, model, cli)
  ConfigError,
  // neuralnet
  ShapeMismatch,
  DegenerateBatch,
  LabelOutOfRange,
  IoError,
  VersionMismatch,
  CorruptCheckpoint,
  // training
  ParseError,
  UnknownClass,
  DuplicateFile,
  InsufficientClassSamples,
  // corpus
  NoAudioFound,
  // detection and scenarios
  ClockRegression,
  SinkError,
  MissingClass,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::DuplicateFile: return "DuplicateFile";
    case ErrorCode::InsufficientClassSamples: return "InsufficientClassSamples";
    case ErrorCode::NoAudioFound: return "NoAudioFound";
    case ErrorCode::ClockRegression: return "ClockRegression";
    case ErrorCode::SinkError: return "SinkError";
    case ErrorCode::MissingClass: return "MissingClass";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Configuration and argument problems, as opposed to runtime failures.
  bool is_validation() const noexcept {
    return code_ == ErrorCode::ConfigError || code_ == ErrorCode::InvalidRate;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace hta
