#include "clcs/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "clcs/error.hpp"
#include "clcs/nnet.hpp"

namespace clcs::dataio {
namespace {

const char* const kRequired[] = {"t", "w", "y", "u", "d"};

bool numbered(const std::string& name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return false;
  return std::all_of(name.begin() + 1, name.end(),
                     [](char c) { return c >= '0' && c <= '9'; }) &&
         name[1] != '0' && name != std::string(1, prefix) + "1";
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <class F>
void for_each_column(sim::Trajectory& tr, F&& f) {
  for (auto* v : {&tr.t, &tr.w, &tr.y, &tr.y_meas, &tr.u, &tr.d}) f(*v);
  for (auto& [name, v] : tr.extra) f(v);
}

}  // namespace

bool is_known_extra_column(const std::string& name) {
  static const char* const kExtras[] = {"y_meas", "w_inner", "mode", "u_ai",
                                        "u_fb",   "u_conv",  "correction", "kp", "ki", "kd"};
  for (const char* e : kExtras) {
    if (name == e) return true;
  }
  return numbered(name, 'y') || numbered(name, 'u');
}

void write_timeseries(std::ostream& os, const sim::Trajectory& traj) {
  const std::size_t n = traj.size();
  const bool has_meas = traj.y_meas.size() == n && traj.y_meas != traj.y;
  os << "t,w,y,u,d";
  if (has_meas) os << ",y_meas";
  for (const auto& [name, v] : traj.extra) os << ',' << name;
  os << '\n';
  for (std::size_t k = 0; k < n; ++k) {
    os << nnet::format_double(traj.t[k]) << ',' << nnet::format_double(traj.w[k]) << ','
       << nnet::format_double(traj.y[k]) << ',' << nnet::format_double(traj.u[k]) << ','
       << nnet::format_double(traj.d.size() == n ? traj.d[k] : 0.0);
    if (has_meas) os << ',' << nnet::format_double(traj.y_meas[k]);
    for (const auto& [name, v] : traj.extra) {
      os << ',' << nnet::format_double(k < v.size() ? v[k] : 0.0);
    }
    os << '\n';
  }
}

void write_timeseries(const std::string& path, const sim::Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path + " for writing");
  write_timeseries(os, traj);
  if (!os) throw Error(Errc::io_error, "failed writing " + path);
}

sim::Trajectory read_timeseries(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::schema_error, "empty file: missing header", 1);
  if (!line.empty() && line.back() == '\r') {
    throw Error(Errc::parse_error, "CRLF line endings are not accepted", 1);
  }
  const auto header = split_commas(line);
  for (const auto& h : header) {
    const bool required = std::find(std::begin(kRequired), std::end(kRequired), h) !=
                          std::end(kRequired);
    if (!required && !is_known_extra_column(h)) {
      throw Error(Errc::schema_error, "unknown column '" + h + "'", 1);
    }
    if (std::count(header.begin(), header.end(), h) > 1) {
      throw Error(Errc::schema_error, "duplicate column '" + h + "'", 1);
    }
  }
  for (const char* r : kRequired) {
    if (std::find(header.begin(), header.end(), r) == header.end()) {
      throw Error(Errc::schema_error, std::string("missing column '") + r + "'", 1);
    }
  }

  sim::Trajectory tr;
  std::vector<std::vector<double>*> dest;
  for (const auto& h : header) {
    if (h == "t") dest.push_back(&tr.t);
    else if (h == "w") dest.push_back(&tr.w);
    else if (h == "y") dest.push_back(&tr.y);
    else if (h == "u") dest.push_back(&tr.u);
    else if (h == "d") dest.push_back(&tr.d);
    else if (h == "y_meas") dest.push_back(&tr.y_meas);
    else dest.push_back(nullptr);
  }
  tr.extra.reserve(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!dest[i]) dest[i] = &tr.add_column(header[i]);
  }

  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.back() == '\r') {
      throw Error(Errc::parse_error, "CRLF line endings are not accepted", line_no);
    }
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw Error(Errc::parse_error,
                  "expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()),
                  line_no);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      double v = 0.0;
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || ec != std::errc{} || p != c.data() + c.size() || !std::isfinite(v)) {
        throw Error(Errc::parse_error,
                    "non-numeric cell '" + c + "' in column '" + header[i] + "'", line_no);
      }
      dest[i]->push_back(v);
    }
    const auto& t = tr.t;
    if (t.size() >= 2 && !(t.back() > t[t.size() - 2])) {
      throw Error(Errc::monotonicity_error, "t is not strictly increasing", line_no);
    }
  }
  if (tr.y_meas.empty()) tr.y_meas = tr.y;
  tr.dt = (tr.t.size() >= 2 && is_uniform(tr.t)) ? (tr.t.back() - tr.t.front()) /
                                                       static_cast<double>(tr.t.size() - 1)
                                                 : 0.0;
  return tr;
}

sim::Trajectory read_timeseries(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_error, "cannot open " + path);
  return read_timeseries(is);
}

bool is_uniform(const std::vector<double>& t, double rel_tol) {
  if (t.size() < 3) return t.size() == 2 ? t[1] > t[0] : true;
  const double mean_dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (std::abs((t[k] - t[k - 1]) - mean_dt) > rel_tol * mean_dt) return false;
  }
  return true;
}

sim::Trajectory resample_uniform(const sim::Trajectory& series, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "target dt must be > 0");
  const auto& t = series.t;
  if (t.size() < 2) throw Error(Errc::too_short, "resampling needs at least two samples");
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (!(t[k] > t[k - 1])) {
      throw Error(Errc::monotonicity_error, "t is not strictly increasing", k + 1);
    }
  }
  const double src_dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (is_uniform(t, 1e-9) && std::abs(src_dt - dt) <= 1e-9 * dt) {
    sim::Trajectory copy = series;
    copy.dt = dt;
    return copy;
  }

  const double t0 = t.front();
  const auto n = static_cast<std::size_t>(std::floor((t.back() - t0) / dt * (1.0 + 1e-12))) + 1;
  std::vector<std::size_t> lo(n);
  std::vector<double> frac(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double tk = t0 + static_cast<double>(k) * dt;
    while (j + 2 < t.size() && t[j + 1] <= tk) ++j;
    lo[k] = j;
    frac[k] = std::clamp((tk - t[j]) / (t[j + 1] - t[j]), 0.0, 1.0);
  }
  sim::Trajectory out = series;
  for_each_column(out, [&](std::vector<double>& col) {
    if (col.size() != t.size()) return;
    std::vector<double> src = col;
    col.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = src[lo[k]], b = src[lo[k] + 1];
      col[k] = frac[k] == 0.0 ? a : a + frac[k] * (b - a);
    }
  });
  for (std::size_t k = 0; k < n; ++k) out.t[k] = t0 + static_cast<double>(k) * dt;
  out.dt = dt;
  return out;
}

sim::Trajectory slice(const sim::Trajectory& series, std::size_t begin, std::size_t end) {
  sim::Trajectory out = series;
  const std::size_t n = series.size();
  end = std::min(end, n);
  begin = std::min(begin, end);
  for_each_column(out, [&](std::vector<double>& col) {
    if (col.size() != n) return;
    col = std::vector<double>(col.begin() + static_cast<std::ptrdiff_t>(begin),
                              col.begin() + static_cast<std::ptrdiff_t>(end));
  });
  return out;
}

std::pair<sim::Trajectory, sim::Trajectory> split_contiguous(const sim::Trajectory& series,
                                                             double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(Errc::invalid_argument, "train fraction must lie in (0, 1)");
  }
  const std::size_t n = series.size();
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  if (n_train < 1 || n - n_train < 1) {
    throw Error(Errc::too_short, "split leaves an empty block");
  }
  return {slice(series, 0, n_train), slice(series, n_train, n)};
}

std::vector<unsigned> lfsr_taps(unsigned order) {
  switch (order) {
    case 3: return {3, 2};
    case 4: return {4, 3};
    case 5: return {5, 3};
    case 6: return {6, 5};
    case 7: return {7, 6};
    case 8: return {8, 6, 5, 4};
    case 9: return {9, 5};
    case 10: return {10, 7};
    case 11: return {11, 9};
    case 12: return {12, 11, 10, 4};
    case 13: return {13, 12, 11, 8};
    case 14: return {14, 13, 12, 2};
    case 15: return {15, 14};
    case 16: return {16, 15, 13, 4};
    default: break;
  }
  throw Error(Errc::invalid_spec, "PRBS order must be within 3..16");
}

std::vector<int> lfsr_sequence(unsigned order, std::uint64_t seed) {
  const auto taps = lfsr_taps(order);
  const std::uint64_t period = (std::uint64_t{1} << order) - 1;
  std::uint64_t state = 1 + seed % period;
  std::vector<int> bits(period);
  for (std::uint64_t i = 0; i < period; ++i) {
    bits[i] = static_cast<int>(state & 1U);
    std::uint64_t fb = 0;
    for (unsigned tap : taps) fb ^= (state >> (order - tap)) & 1U;
    state = (state >> 1) | (fb << (order - 1));
  }
  return bits;
}

std::vector<double> generate_excitation(const ExcitationSpec& spec, const sim::SimConfig& cfg,
                                        double u_min, double u_max) {
  const std::size_t n = cfg.steps();
  const double dt = cfg.dt;
  std::vector<double> u(n, spec.offset);
  const auto check_range = [&](double lo, double hi) {
    if (lo < u_min - 1e-12 || hi > u_max + 1e-12) {
      throw Error(Errc::invalid_spec, "excitation amplitude exceeds the actuator limits");
    }
  };

  if (const auto* st = std::get_if<StepTrain>(&spec.variant)) {
    if (st->levels.empty() || !(st->dwell > 0.0)) {
      throw Error(Errc::invalid_spec, "step train needs levels and a positive dwell");
    }
    for (double l : st->levels) check_range(spec.offset + l, spec.offset + l);
    const auto dwell = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(st->dwell / dt)));
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = spec.offset + st->levels[std::min(k / dwell, st->levels.size() - 1)];
    }
  } else if (const auto* pr = std::get_if<Prbs>(&spec.variant)) {
    if (!(pr->amplitude >= 0.0) || !(pr->bit_period > 0.0)) {
      throw Error(Errc::invalid_spec, "PRBS needs amplitude >= 0 and bit period > 0");
    }
    check_range(spec.offset - pr->amplitude, spec.offset + pr->amplitude);
    const auto bits = lfsr_sequence(pr->order, pr->seed);
    const auto per_bit =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::round(pr->bit_period / dt)));
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = spec.offset + (bits[(k / per_bit) % bits.size()] ? pr->amplitude : -pr->amplitude);
    }
  } else if (const auto* ch = std::get_if<Chirp>(&spec.variant)) {
    if (!(ch->amplitude >= 0.0) || !(ch->duration > 0.0) || ch->f0 < 0.0 || ch->f1 < 0.0) {
      throw Error(Errc::invalid_spec, "chirp needs amplitude >= 0, duration > 0, f >= 0");
    }
    if (ch->duration > cfg.horizon + 1e-9) {
      throw Error(Errc::invalid_spec, "chirp duration exceeds the horizon");
    }
    check_range(spec.offset - ch->amplitude, spec.offset + ch->amplitude);
    const double rate = (ch->f1 - ch->f0) / ch->duration;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      if (t > ch->duration) break;
      const double phase = 2.0 * std::numbers::pi * (ch->f0 * t + 0.5 * rate * t * t);
      u[k] = spec.offset + ch->amplitude * std::sin(phase);
    }
  }
  return u;
}

}  // namespace clcs::dataio
