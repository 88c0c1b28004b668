#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "clcs/sim.hpp"

namespace clcs::dataio {

/// CSV time-series schema: header `t,w,y,u,d` followed by optional known
/// columns (y_meas, y<N>, u<N>, w_inner, mode, u_ai, u_fb, u_conv,
/// correction). Comma separated, LF line endings, '.' decimal point, values
/// in shortest round-trip form.
bool is_known_extra_column(const std::string& name);

void write_timeseries(std::ostream& os, const sim::Trajectory& traj);
void write_timeseries(const std::string& path, const sim::Trajectory& traj);
/// Parse errors carry the 1-based line number. Non-uniform spacing is
/// accepted here (dt is set to 0); callers resample.
sim::Trajectory read_timeseries(std::istream& is);
sim::Trajectory read_timeseries(const std::string& path);

/// True when t has constant spacing within `rel_tol` of the mean step.
bool is_uniform(const std::vector<double>& t, double rel_tol = 1e-6);

/// Linear interpolation of every column onto t0, t0+dt, ... <= t_end.
sim::Trajectory resample_uniform(const sim::Trajectory& series, double dt);

/// First floor(N*fraction) samples train, the rest validation.
std::pair<sim::Trajectory, sim::Trajectory> split_contiguous(const sim::Trajectory& series,
                                                             double train_fraction);
/// Row slice [begin, end) of every column.
sim::Trajectory slice(const sim::Trajectory& series, std::size_t begin, std::size_t end);

struct StepTrain {
  std::vector<double> levels;
  double dwell = 1.0;
};

struct Prbs {
  unsigned order = 7;
  double amplitude = 1.0;
  double bit_period = 0.1;
  std::uint64_t seed = 1;
};

struct Chirp {
  double amplitude = 1.0;
  double f0 = 0.1;
  double f1 = 1.0;
  double duration = 10.0;
};

struct ExcitationSpec {
  std::variant<StepTrain, Prbs, Chirp> variant;
  double offset = 0.0;
};

/// Maximal-length Fibonacci LFSR bit sequence of one full period
/// (2^order - 1 bits). Orders 3..16.
std::vector<int> lfsr_sequence(unsigned order, std::uint64_t seed);
/// Feedback taps (1-based register positions) for the given order.
std::vector<unsigned> lfsr_taps(unsigned order);

/// One value per simulation step. Throws invalid_spec when the amplitude
/// exceeds the actuator limits or a parameter is invalid.
std::vector<double> generate_excitation(const ExcitationSpec& spec, const sim::SimConfig& cfg,
                                        double u_min = -1e300, double u_max = 1e300);

}  // namespace clcs::dataio
