#pragma once

#include <stdexcept>
#include <string>

namespace flowsilt {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelEvaluationError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class UnsupportedError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class SimulationDivergedError : public Error { using Error::Error; };
class ExpressionError : public Error { using Error::Error; };
class IntegrationError : public Error { using Error::Error; };
class ResolutionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace flowsilt
