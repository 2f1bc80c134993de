#pragma once

#include <stdexcept>
#include <string>

namespace dccm {

/// Base of every error the engine throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to what a primitive or layer expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of a primitive (log/sqrt of a negative).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a precondition (non-scalar loss, tensors from different tapes, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Backward or recording on a tape that has already been consumed.
class StaleGraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (CIFAR binary, checkpoint, raw tensor).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input that makes a quantity undefined, e.g. a zero-norm row in cosine similarity.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A minibatch that cannot supply the pairs a loss needs.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// A loss component went non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dccm
