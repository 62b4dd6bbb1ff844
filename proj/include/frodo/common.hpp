#pragma once

#include <stdexcept>
#include <string>

namespace frodo {

inline constexpr const char* kVersion = "0.1.0";

// Thrown for invalid model/sampler configuration (CLI exit code 3).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for malformed or out-of-contract input data (CLI exit code 4).
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a chain cannot make progress (e.g. every warmup transition
// diverged), with enough context to debug the failing chain.
class sampler_error : public std::runtime_error {
 public:
  explicit sampler_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace frodo
