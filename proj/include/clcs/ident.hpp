#pragma once

#include "clcs/pid.hpp"
#include "clcs/sim.hpp"

namespace clcs::ident {

struct FopdtModel {
  double K = 1.0;
  double tau = 1.0;
  double L = 0.0;
};

struct UltimateParams {
  double Ku = 0.0;
  double Pu = 0.0;
};

enum class ZnKind { P, PI, PID };

/// Two-point (28.3% / 63.2%) identification from an open-loop step test.
/// Throws not_settled when the tail of the response still moves, and
/// identification_failed for a flat or non-monotone response.
FopdtModel identify_fopdt_step(const sim::Trajectory& traj);

/// Open-loop step experiment: input jumps from 0 to `amplitude` at
/// `step_time` (default 5% of the horizon).
sim::Trajectory step_test(const sim::PlantModel& plant, double amplitude,
                          const sim::SimConfig& cfg, double step_time = -1.0);

struct RelayResult {
  UltimateParams ultimate;
  double amplitude = 0.0;   ///< first-harmonic amplitude of the output
  std::size_t cycles = 0;
  sim::Trajectory trajectory;
};

/// Ideal relay of amplitude h closing the loop around w = 0. After the first
/// 30% of the horizon, Pu comes from upward zero crossings and a from the
/// output's fundamental harmonic; Ku = 4h / (pi a). Throws no_limit_cycle
/// below four resolved cycles.
RelayResult relay_experiment(const sim::PlantModel& plant, double h,
                             const sim::SimConfig& cfg);

control::PidGains tune_ziegler_nichols(const UltimateParams& up, ZnKind kind);
/// Throws rule_inapplicable when L == 0.
control::PidGains tune_cohen_coon(const FopdtModel& m);
/// AMIGO formulas as the Kappa-Tau representative. Throws rule_inapplicable
/// when L == 0.
control::PidGains tune_kappa_tau(const FopdtModel& m);

}  // namespace clcs::ident
