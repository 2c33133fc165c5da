#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdrom {

// Every failure raised by the library carries one of these codes so callers
// (the CLI in particular) can map it to a stable exit status.
enum class ErrorCode {
  invalid_argument,
  invalid_window_size,
  invalid_dataset,
  dimension_mismatch,
  malformed_manifest,
  truncated_payload,
  io_error,
  undefined_metric,
  non_finite_gradient,
  non_finite_elbo,
  numerically_singular_kernel,
  diverged_integration,
  rank_deficient,
  ill_conditioned_library,
  degenerate_density,
  unstable_solver,
  unsupported_order,
  schema_violation,
  missing_input,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sdrom
