#include "sdrom/error.hpp"

namespace sdrom {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::invalid_window_size: return "invalid-window-size";
    case ErrorCode::invalid_dataset: return "invalid-dataset";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::malformed_manifest: return "malformed-manifest";
    case ErrorCode::truncated_payload: return "truncated-payload";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::undefined_metric: return "undefined-metric";
    case ErrorCode::non_finite_gradient: return "non-finite-gradient";
    case ErrorCode::non_finite_elbo: return "non-finite-elbo";
    case ErrorCode::numerically_singular_kernel: return "numerically-singular-kernel";
    case ErrorCode::diverged_integration: return "diverged-integration";
    case ErrorCode::rank_deficient: return "rank-deficient";
    case ErrorCode::ill_conditioned_library: return "ill-conditioned-library";
    case ErrorCode::degenerate_density: return "degenerate-density";
    case ErrorCode::unstable_solver: return "unstable-solver";
    case ErrorCode::unsupported_order: return "unsupported-order";
    case ErrorCode::schema_violation: return "schema-violation";
    case ErrorCode::missing_input: return "missing-input";
  }
  return "unknown";
}

}  // namespace sdrom
