#pragma once

#include <stdexcept>

namespace explain {

// Bad run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or unreadable input data (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace explain
