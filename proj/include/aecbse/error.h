#ifndef AECBSE_ERROR_H_
#define AECBSE_ERROR_H_

#include <stdexcept>
#include <string>

namespace aecbse {

// Invalid input, shape mismatch or bad configuration. The CLI maps this to
// exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerically degenerate data (dead bins, singular statistics). The CLI maps
// this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace aecbse

#endif  // AECBSE_ERROR_H_
