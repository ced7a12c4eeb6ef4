#pragma once

#include <stdexcept>
#include <string>

namespace fxeff {

// Base for all library errors so callers can catch one type at the CLI
// boundary and map it to an exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct EstimationError : Error {
  using Error::Error;
};

struct MissingColumn : DataError {
  explicit MissingColumn(const std::string& name)
      : DataError("missing column: " + name), column(name) {}
  std::string column;
};

struct ParseError : DataError {
  ParseError(std::size_t row, const std::string& column, const std::string& what)
      : DataError("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row(row), column(column) {}
  std::size_t row;
  std::string column;
};

struct DuplicateBankQuarter : DataError {
  DuplicateBankQuarter(const std::string& bank, const std::string& quarter)
      : DataError("duplicate (bank, quarter): (" + bank + ", " + quarter + ")") {}
};

struct EmptyPanel : DataError {
  EmptyPanel() : DataError("empty panel") {}
};

struct NonPositiveValue : DataError {
  NonPositiveValue(const std::string& column, std::size_t row)
      : DataError("non-positive value in '" + column + "' at row " + std::to_string(row)) {}
};

struct UnknownColumn : DataError {
  explicit UnknownColumn(const std::string& name)
      : DataError("unknown column: " + name) {}
};

struct DidNotConverge : EstimationError {
  using EstimationError::EstimationError;
};

struct NotConverged : EstimationError {
  NotConverged() : EstimationError("fit did not converge") {}
};

struct RankDeficientDesign : EstimationError {
  explicit RankDeficientDesign(const std::string& cols)
      : EstimationError("rank-deficient design, offending columns: " + cols) {}
};

struct Collinear : EstimationError {
  explicit Collinear(const std::string& cols)
      : EstimationError("collinear regressors: " + cols) {}
};

struct TooFewObservations : EstimationError {
  explicit TooFewObservations(const std::string& what)
      : EstimationError("too few observations: " + what) {}
};

struct InsufficientLags : DataError {
  explicit InsufficientLags(const std::string& what)
      : DataError("series does not cover the requested lags: " + what) {}
};

struct InsufficientHistory : DataError {
  explicit InsufficientHistory(const std::string& what)
      : DataError("insufficient history: " + what) {}
};

struct NonFiniteLikelihood : EstimationError {
  explicit NonFiniteLikelihood(std::size_t row)
      : EstimationError("non-finite likelihood contribution at row " + std::to_string(row)),
        row(row) {}
  std::size_t row;
};

}  // namespace fxeff
