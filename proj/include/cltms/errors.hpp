#pragma once

#include <stdexcept>
#include <string>

namespace cltms {

// Invalid argument or precondition violation.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input has no usable variance / information (e.g. constant AR window).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// AR model with poles outside the unit circle.
struct InstabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Phase engine could not find a target-phase crossing within its horizon.
struct NoTriggerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank-deficient design matrix in the amplitude model.
struct DesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Session could not produce a valid log (e.g. no retained baseline trials).
struct SessionInvalidError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration or manifest text.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, int line = 0, std::string field = {})
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line), field_(std::move(field)) {}
  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

// Persisted session artifacts fail validation on load.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cltms
