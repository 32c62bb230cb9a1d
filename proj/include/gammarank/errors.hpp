#pragma once

#include <stdexcept>
#include <string>

namespace gammarank {

// Error taxonomy mirrored by CLI exit codes: input 2, numerical 3, config 4.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gammarank
