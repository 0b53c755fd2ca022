#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fwe {

enum class Errc {
  invalid_argument,
  io_error,
  // volio
  unsupported_datatype,
  malformed_header,
  truncated_data,
  requires_scaling,
  // synth
  kernel_too_wide,
  duration_zero,
  rank_deficient_design,
  // glm
  missing_variances,
  group_too_large,
  too_few_subjects,
  // geometry
  empty_overlap,
  degenerate_residuals,
  dim_mismatch,
  // rft / mc / perm
  cdt_too_low,
  insufficient_iterations,
  cdt_missing,
  // harness
  mismatched_inputs,
};

[[nodiscard]] std::string_view errc_name(Errc code) noexcept;

/// Statistical preconditions (as opposed to bad input or I/O) map to their
/// own CLI exit code.
[[nodiscard]] bool is_statistical_precondition(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fwe
