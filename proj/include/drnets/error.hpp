#pragma once

#include <stdexcept>
#include <string>

namespace drnets {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input shape or value does not match what the operation expects.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Every sample weight in a (sub)group is zero.
class EmptySubgroupError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Logistic fit requested on labels that contain a single class.
class SeparationError : public Error {
 public:
  using Error::Error;
};

/// A cross-fitting fold lacks a treatment arm.
class FoldError : public Error {
 public:
  FoldError(const std::string& what, int fold) : Error(what), fold_(fold) {}
  int fold() const noexcept { return fold_; }

 private:
  int fold_;
};

/// A two-way split left a half without one of the treatment arms.
class SplitError : public Error {
 public:
  using Error::Error;
};

/// A stratum required by the sequential estimators is empty.
class StratumError : public Error {
 public:
  using Error::Error;
};

/// A CSV header does not match the expected schema; `column` is the first
/// offending header entry (or the missing one).
class SchemaError : public InputError {
 public:
  SchemaError(const std::string& what, std::string column)
      : InputError(what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace drnets
