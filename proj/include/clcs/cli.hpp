#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "clcs/dataio.hpp"
#include "clcs/ident.hpp"
#include "clcs/neuro.hpp"
#include "clcs/pid.hpp"
#include "clcs/safety.hpp"
#include "clcs/sim.hpp"
#include "clcs/surrogate.hpp"

namespace clcs::cli {

struct ControllerConfig {
  /// open-loop | relay | constant | pid | cascade | neural | pid+scheduler
  std::string kind = "open-loop";
  control::PidGains pid;
  control::CascadeSpec cascade;
  double relay_h = 1.0;
  double constant = 0.0;
  std::string model_path;
};

struct SafetyConfig {
  std::string kind = "none";  ///< none | switch | blend
  safety::SwitchParams switch_params;
  control::PidGains fallback;
  double delta = 0.1;
  /// Blend correction source: adversarial | constant | neural
  std::string correction = "adversarial";
  double correction_scale = 1.0;
  double correction_constant = 0.0;
  std::uint64_t correction_seed = 0;
  std::string correction_model;
};

struct TuningConfig {
  std::string method = "rule";          ///< rule | ai
  std::string rule = "ziegler-nichols";  ///< ziegler-nichols | cohen-coon | kappa-tau
  std::string zn_kind = "PID";
  std::string experiment = "relay";      ///< relay | step | model
  ident::FopdtModel model;
  double relay_h = 1.0;
  double relay_dt = 0.001;
  double relay_horizon = 40.0;
  double step_amplitude = 1.0;
  double step_horizon = 40.0;
  neuro::StaticTuneOptions ai;
  std::vector<neuro::Episode> episodes;
};

struct TrainingConfig {
  std::string mode = "imitation";  ///< imitation | bptt
  std::string target = "neural";   ///< neural | scheduler
  double lambda = 0.5;
  double beta = 0.0;
  std::size_t horizon = 200;
  std::size_t history = 4;
  std::vector<std::size_t> hidden{32, 16};
  nnet::TrainConfig train;
  double rho = 0.01;
  double clip = 1.0;
  double val_fraction = 0.25;
  std::array<neuro::GainBounds, 3> bounds{{{0.1, 3.0}, {0.05, 3.0}, {0.0, 1.0}}};
  std::size_t window = 10;
  /// Coverage runs (dataset A): random reference levels held for `coverage_dwell`.
  double coverage_level = 1.5;
  double coverage_dwell = 3.0;
  double coverage_horizon = 300.0;
  /// Operational runs (dataset B): reference steps from each start level.
  std::vector<double> step_levels{0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, -0.3, -0.6, -0.9, -1.2};
  std::vector<double> start_levels{0.0, 0.5, -0.5};
  double step_horizon = 15.0;
  double settle = 10.0;  ///< time at the start level before the step
  /// BPTT episodes: reference scaled by each amplitude, with and without
  /// the plant's gain steps.
  std::vector<double> amplitudes{0.5, 1.0, 1.5};
};

struct ExperimentConfig {
  sim::SimConfig sim;
  std::optional<sim::PlantModel> plant;
  sim::SensorSpec sensor;
  sim::DisturbanceSpec disturbance;
  std::optional<dataio::ExcitationSpec> excitation;
  sim::ReferenceSpec reference;
  ControllerConfig controller;
  SafetyConfig safety;
  TuningConfig tuning;
  surrogate::FitOptions surrogate;
  double resample_dt = 0.0;  ///< 0 = median sample spacing
  TrainingConfig training;
  /// Every key with its effective value; parses back to the same config.
  nlohmann::json resolved;
};

/// Validates and fills defaults. Unknown keys and type errors throw
/// config_error with the key path. Relative paths resolve against base_dir.
/// `seed` overrides sim.seed and every seed not given explicitly.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = "",
                              std::optional<std::uint64_t> seed = std::nullopt);
ExperimentConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed = std::nullopt);

/// Gains file: JSON object with kp, ki, kd, structure, u_min, u_max, N,
/// inner_kp.
void save_gains(const std::string& path, const control::PidGains& g);
control::PidGains load_gains(const std::string& path, control::PidGains base = {});

/// Process exit code for an error code: 2 configuration, 3 numerical, 4 I/O.
int exit_code(Errc code);

/// Entry point of the clcs executable.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace clcs::cli
