#pragma once

#include <stdexcept>
#include <string>

namespace rgait {

// Error taxonomy mirrors the CLI exit codes: config_error -> 1,
// data_error -> 2, model_error -> 3.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : error {
  using error::error;
};

struct data_error : error {
  using error::error;
};

struct model_error : error {
  using error::error;
};

}  // namespace rgait
