#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nmpo {

/// Category of a failure. Every kind maps to exactly one CLI exit status.
enum class ErrorKind {
  Usage,               // bad flags or configuration values
  Config,              // invalid hyper-parameters / search space / synth config
  Io,                  // unreadable or dangling file
  Parse,               // malformed record in an input stream
  EmptyInput,          // no parseable records
  Ambiguous,           // duplicate key in an input stream
  MissingStatistic,    // simulator output lacks required fields
  Validation,          // manifest or record violates a type invariant
  Duplicate,           // duplicate (app, level, threads)
  Join,                // spec without matching profile
  Domain,              // argument outside a formula's domain
  Feature,             // feature derivation failed
  Shape,               // length / column mismatch
  DegenerateVariance,  // constant vector in a correlation
  SampleSize,          // too few rows
  Name,                // unknown feature / application name
  Fit,                 // model fitting failed
  Data,                // non-finite or otherwise unusable data
  Corpus,              // not enough labelled applications
  Schema,              // prediction input does not satisfy a model schema
  Version,             // unknown format version
  Integrity,           // corrupted or truncated model file
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// CLI exit status for an error kind: 1 usage/config, 2 data/parse,
/// 3 model/version, 4 internal.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Re-throws `e` with `context` prepended to the message, keeping its kind.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              std::string_view context) {
  throw Error(e.kind(), std::string(context) + ": " + e.what());
}

}  // namespace nmpo
