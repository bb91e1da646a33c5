#pragma once

#include <stdexcept>
#include <string>

namespace sg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid suite document. `path` is a JSON-pointer-like
/// location such as "items[3].content.wh_gap.np".
class SuiteError : public Error {
 public:
  SuiteError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Syntax or type error in a prediction formula; `column` is 1-based.
class PredictionError : public Error {
 public:
  PredictionError(std::size_t column, const std::string& message)
      : Error("column " + std::to_string(column) + ": " + message), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Raised while evaluating predictions against a surprisal table.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Training, loading or scoring failures of the n-gram model.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Wire-format and model-transport failures (request/record files, adapters).
class InterfaceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sg
