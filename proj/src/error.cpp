#include "clcs/error.hpp"

namespace clcs {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::diverged: return "simulation-diverged";
    case Errc::controller_fault: return "controller-fault";
    case Errc::sync_impossible: return "sync-impossible";
    case Errc::not_settled: return "not-settled";
    case Errc::identification_failed: return "identification-failed";
    case Errc::no_limit_cycle: return "no-limit-cycle";
    case Errc::rule_inapplicable: return "rule-inapplicable";
    case Errc::training_diverged: return "training-diverged";
    case Errc::training_unstable: return "training-unstable";
    case Errc::must_resample: return "must-resample";
    case Errc::rollout_diverged: return "rollout-diverged";
    case Errc::tuning_failed: return "tuning-failed";
    case Errc::feature_unavailable: return "feature-unavailable";
    case Errc::unrecoverable_fault: return "unrecoverable-fault";
    case Errc::parse_error: return "parse-error";
    case Errc::schema_error: return "schema-error";
    case Errc::monotonicity_error: return "monotonicity-error";
    case Errc::too_short: return "too-short";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::incomparable: return "incomparable";
    case Errc::config_error: return "config-error";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what,
             std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(code)) + ": " + what),
      code_(code),
      index_(index) {}

}  // namespace clcs
