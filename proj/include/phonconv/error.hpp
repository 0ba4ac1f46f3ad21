/*
 * Copyright 2026 The phonconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace phonconv {

enum class Errc {
  // convergence model
  duplicate_feature,
  invalid_definition,
  unknown_feature,
  dimension_mismatch,
  empty_pool,
  incompatible_snapshot,
  // classifiers
  insufficient_data,
  not_binary,
  // dialogue
  syntax_error,
  schema_error,
  dangling_reference,
  unknown_state,
  terminal_state,
  // speech adapter
  parse_error,
  validation_error,
  // analysis
  no_data,
  out_of_range,
  empty,
  degenerate_marginals,
  no_sessions,
  // sessions / server
  unknown_domain,
  unknown_config,
  unknown_session,
  terminal_session,
  archive_corrupt,
  config_mismatch,
  // experiment harness
  invalid_spec,
  io_error,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::duplicate_feature: return "DuplicateFeature";
    case Errc::invalid_definition: return "InvalidDefinition";
    case Errc::unknown_feature: return "UnknownFeature";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::empty_pool: return "EmptyPool";
    case Errc::incompatible_snapshot: return "IncompatibleSnapshot";
    case Errc::insufficient_data: return "InsufficientData";
    case Errc::not_binary: return "NotBinary";
    case Errc::syntax_error: return "SyntaxError";
    case Errc::schema_error: return "SchemaError";
    case Errc::dangling_reference: return "DanglingReference";
    case Errc::unknown_state: return "UnknownState";
    case Errc::terminal_state: return "TerminalState";
    case Errc::parse_error: return "ParseError";
    case Errc::validation_error: return "ValidationError";
    case Errc::no_data: return "NoData";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::empty: return "Empty";
    case Errc::degenerate_marginals: return "DegenerateMarginals";
    case Errc::no_sessions: return "NoSessions";
    case Errc::unknown_domain: return "UnknownDomain";
    case Errc::unknown_config: return "UnknownConfig";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::terminal_session: return "TerminalSession";
    case Errc::archive_corrupt: return "ArchiveCorrupt";
    case Errc::config_mismatch: return "ConfigMismatch";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `detail()` carries the bare reason
/// (a field name, a state id, ...) so callers can match on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

/// Malformed XML; line and column are 1-based.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t line, std::size_t column, std::string reason)
      : Error(Errc::syntax_error, "line " + std::to_string(line) + ", column " +
                                      std::to_string(column) + ": " + reason),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace phonconv
