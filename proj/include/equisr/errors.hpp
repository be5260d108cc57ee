#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace equisr {

// Root of every error thrown by the library. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Group-order mismatch between a feature map / filter and a RotationGroup.
struct GroupError : ShapeError {
  using ShapeError::ShapeError;
};

struct IndexError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct InvalidOrderError : DomainError {
  using DomainError::DomainError;
};

struct MatrixError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct CatalogueError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

struct EvaluationError : Error {
  using Error::Error;
};

struct UndefinedMetricError : Error {
  using Error::Error;
};

struct NumericError : Error {
  NumericError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  std::size_t step;
};

struct IoError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};

struct CheckpointError : Error {
  CheckpointError(const std::string& what, std::string field)
      : Error(what + ": " + field), field(std::move(field)) {}
  std::string field;
};

}  // namespace equisr
