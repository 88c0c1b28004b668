#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clcs {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  diverged,
  controller_fault,
  sync_impossible,
  not_settled,
  identification_failed,
  no_limit_cycle,
  rule_inapplicable,
  training_diverged,
  training_unstable,
  must_resample,
  rollout_diverged,
  tuning_failed,
  feature_unavailable,
  unrecoverable_fault,
  parse_error,
  schema_error,
  monotonicity_error,
  too_short,
  invalid_spec,
  incomparable,
  config_error,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `index` carries the step, epoch or 1-based line
/// number that the error refers to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  Errc code_;
  std::optional<std::size_t> index_;
};

}  // namespace clcs
