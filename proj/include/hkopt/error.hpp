/* Copyright 2026 The hkopt Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef HKOPT_ERROR_HPP_
#define HKOPT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hkopt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A document does not match its schema. The message names the record and
/// field at fault.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A value violates a type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The statement analyzer could not make sense of a source line.
class AnalysisError : public Error {
 public:
  AnalysisError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] int line() const { return line_; }

 private:
  int line_;
};

/// Action text does not match the canonical grammar.
class ActionParseError : public Error {
 public:
  using Error::Error;
};

/// Action text is well-formed but names an action outside the catalog.
class OutOfCatalogError : public Error {
 public:
  using Error::Error;
};

/// Trajectory tree file failed validation; the message names the node.
class TreeLoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Network or process boundary failure (coder endpoint, runner process).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// No fenced code block in a code-generation response.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// A policy backend could not produce scores.
class BackendError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during an update.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hkopt

#endif  // HKOPT_ERROR_HPP_
