#ifndef SONARSWEEP_ERRORS_HPP
#define SONARSWEEP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sonarsweep {

// Exception hierarchy. The CLI maps each kind onto its exit code
// (validation 2, input data 3, numerical 4).

/// Bad configuration, parameters out of range, missing files.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or inconsistent input data (corrupted images, size mismatches).
class InputDataError : public std::runtime_error {
 public:
  explicit InputDataError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation that cannot produce a meaningful result.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sonarsweep

#endif  // SONARSWEEP_ERRORS_HPP
