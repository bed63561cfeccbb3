#ifndef SALERA_ERRORS_HPP
#define SALERA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace salera {

/// Dimension is zero or two operands disagree in size.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A hyperparameter lies outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Normalizing a gradient with zero norm.
class ZeroGradientError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Argument outside the domain of a closed-form expression.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input file. The message names the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API used out of order, e.g. backward() on a stale forward cache.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace salera

#endif  // SALERA_ERRORS_HPP
