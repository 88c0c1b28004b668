#include "clcs/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "clcs/dataio.hpp"
#include "clcs/error.hpp"

namespace clcs::surrogate {
namespace {

using nlohmann::json;

const std::vector<double>& measured(const sim::Trajectory& traj) {
  return traj.y_meas.size() == traj.size() ? traj.y_meas : traj.y;
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

json norm_to_json(const nnet::Normalizer& n) { return {{"mean", n.mean}, {"std", n.std}}; }

nnet::Normalizer norm_from_json(const json& j) {
  nnet::Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.std = j.at("std").get<std::vector<double>>();
  return n;
}

nnet::SupervisedDataset residual_dataset(const sim::Trajectory& traj, const NarxModel& shape,
                                         const PhysicsFn& physics) {
  auto ds = make_regression_dataset(traj, shape.p, shape.q, shape.input_delay);
  const auto& y = measured(traj);
  const auto& u = traj.u;
  const std::size_t k0 = std::max(shape.p, shape.q + shape.input_delay);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const std::size_t k = k0 + r;
    ds.targets.at(r, 0) -= physics(std::span(y).first(k + 1), std::span(u).first(k + 1));
  }
  return ds;
}

}  // namespace

double NarxModel::predict_features(std::span<const double> features) const {
  std::vector<double> z(features.size());
  input_norm.normalize(features, z);
  const auto out = net.forward(z);
  return out[0] * target_norm.std[0] + target_norm.mean[0];
}

ad::Var NarxModel::predict_features(ad::Tape& tape, std::span<const ad::Var> features) const {
  std::vector<ad::Var> z;
  z.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    z.push_back((features[i] - input_norm.mean[i]) * (1.0 / input_norm.std[i]));
  }
  const auto out = tape.mlp(net, z, {});
  return out[0] * target_norm.std[0] + target_norm.mean[0];
}

nnet::SupervisedDataset make_regression_dataset(const sim::Trajectory& traj, std::size_t p,
                                                std::size_t q, std::size_t input_delay) {
  if (!dataio::is_uniform(traj.t)) {
    throw Error(Errc::must_resample, "trajectory is not uniformly sampled");
  }
  const auto& y = measured(traj);
  const auto& u = traj.u;
  const std::size_t n = traj.size();
  const std::size_t k0 = std::max(p, q + input_delay);
  if (n <= p + q + 1 || n < k0 + 2) {
    throw Error(Errc::too_short, "trajectory too short for the requested lags");
  }
  nnet::SupervisedDataset ds;
  ds.inputs = nnet::Matrix(0, p + q);
  ds.targets = nnet::Matrix(0, 1);
  std::vector<double> row(p + q);
  for (std::size_t k = k0; k + 1 < n; ++k) {
    for (std::size_t i = 0; i < p; ++i) row[i] = y[k - i];
    for (std::size_t i = 0; i < q; ++i) row[p + i] = u[k - input_delay - i];
    ds.inputs.append_row(row);
    const double target = y[k + 1];
    ds.targets.append_row(std::span(&target, 1));
  }
  ds.fit_normalization();
  return ds;
}

std::size_t estimate_input_delay(const sim::Trajectory& traj, std::size_t max_lag) {
  const auto& y = measured(traj);
  const auto& u = traj.u;
  const std::size_t n = traj.size();
  if (n < max_lag + 3) throw Error(Errc::too_short, "trajectory too short for delay estimate");
  double u_mean = 0.0;
  for (double v : u) u_mean += v;
  u_mean /= static_cast<double>(n);
  std::size_t best = 0;
  double best_c = -1.0;
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = max_lag; k + 1 < n; ++k) {
      const double dy = y[k + 1] - y[k];
      const double du = u[k - lag] - u_mean;
      sxy += dy * du;
      sxx += du * du;
      syy += dy * dy;
    }
    const double c = (sxx > 0.0 && syy > 0.0) ? std::abs(sxy) / std::sqrt(sxx * syy) : 0.0;
    if (c > best_c + 1e-12) {
      best_c = c;
      best = lag;
    }
  }
  return best;
}

std::vector<double> narx_rollout(const NarxModel& model, std::span<const double> y_init,
                                 std::span<const double> u_past, std::span<const double> u) {
  if (y_init.size() < std::max<std::size_t>(1, std::max(model.p, model.q))) {
    throw Error(Errc::too_short, "initial window shorter than the model lags");
  }
  std::vector<double> yb(y_init.begin(), y_init.end());
  std::vector<double> ub(u_past.begin(), u_past.end());
  std::vector<double> out;
  out.reserve(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    ub.push_back(u[k]);
    const auto f = model.features<double>(yb, ub);
    const double next = model.predict_features(f);
    if (!std::isfinite(next)) {
      throw Error(Errc::rollout_diverged, "non-finite surrogate prediction", k);
    }
    yb.push_back(next);
    out.push_back(next);
  }
  return out;
}

double rollout_rmse(const NarxModel& model, const sim::Trajectory& traj, std::size_t steps) {
  const auto& y = measured(traj);
  const auto& u = traj.u;
  const std::size_t w = std::max({model.p, model.q + model.input_delay, std::size_t{1}});
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t start = w; start + steps < traj.size(); start += steps) {
    const auto pred = narx_rollout(model, std::span(y).first(start + 1),
                                   std::span(u).first(start), std::span(u).subspan(start, steps));
    for (std::size_t i = 0; i < steps; ++i) {
      const double e = pred[i] - y[start + 1 + i];
      s += e * e;
      ++count;
    }
  }
  return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

FitResult fit_surrogate(const sim::Trajectory& traj, const FitOptions& opts) {
  if (!dataio::is_uniform(traj.t)) {
    throw Error(Errc::must_resample, "trajectory is not uniformly sampled");
  }
  FitResult res;
  NarxModel& m = res.model;
  m.p = opts.p;
  m.q = opts.q;
  m.input_delay = opts.input_delay < 0 ? estimate_input_delay(traj)
                                       : static_cast<std::size_t>(opts.input_delay);
  m.dt = traj.size() >= 2 ? traj.t[1] - traj.t[0] : 0.0;

  auto [train_block, val_block] = dataio::split_contiguous(traj, 1.0 - opts.val_fraction);
  auto train_ds = make_regression_dataset(train_block, m.p, m.q, m.input_delay);
  auto val_ds = make_regression_dataset(val_block, m.p, m.q, m.input_delay);
  m.input_norm = train_ds.input_norm;
  m.target_norm = train_ds.target_norm;
  val_ds.input_norm = train_ds.input_norm;
  val_ds.target_norm = train_ds.target_norm;

  std::vector<std::size_t> sizes{m.p + m.q};
  sizes.insert(sizes.end(), opts.hidden.begin(), opts.hidden.end());
  sizes.push_back(1);
  auto trained = nnet::train(nnet::Mlp::random(sizes, opts.train.seed), train_ds, val_ds,
                             opts.train);
  m.net = std::move(trained.net);

  ValidationReport& r = res.report;
  r.history = std::move(trained.history);
  r.best_epoch = r.history.best_epoch;
  r.input_delay = m.input_delay;
  r.train_rows = train_ds.size();
  r.val_rows = val_ds.size();
  std::vector<double> pred(val_ds.size()), truth(val_ds.size());
  for (std::size_t i = 0; i < val_ds.size(); ++i) {
    pred[i] = m.predict_features(val_ds.inputs.row(i));
    truth[i] = val_ds.targets.at(i, 0);
  }
  r.one_step_rmse = rmse(pred, truth);
  r.rollout_steps = opts.rollout_steps;
  r.rollout_rmse = rollout_rmse(m, val_block, opts.rollout_steps);
  const auto& y = measured(traj);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  r.output_range = *hi - *lo;

  const auto [ulo, uhi] = std::minmax_element(train_block.u.begin(), train_block.u.end());
  r.u_lo = *ulo;
  r.u_hi = *uhi;
  r.input_histogram.assign(10, 0);
  const double span = r.u_hi - r.u_lo;
  for (double v : train_block.u) {
    const auto bin = span > 0.0 ? static_cast<std::size_t>((v - r.u_lo) / span * 10.0) : 0;
    ++r.input_histogram[std::min<std::size_t>(bin, 9)];
  }
  std::size_t outside = 0;
  for (double v : val_block.u) outside += (v < r.u_lo || v > r.u_hi) ? 1 : 0;
  r.val_outside_fraction =
      val_block.u.empty() ? 0.0 : static_cast<double>(outside) / static_cast<double>(val_block.u.size());
  return res;
}

double hybrid_predict(const HybridModel& model, std::span<const double> y_hist,
                      std::span<const double> u_hist) {
  const double phys = model.physics(y_hist, u_hist);
  const auto& r = model.residual;
  const auto f = r.features<double>(y_hist, u_hist);
  std::vector<double> z(f.size());
  r.input_norm.normalize(f, z);
  return phys + r.net.forward(z)[0] * r.target_norm.std[0];
}

HybridFit fit_hybrid(const sim::Trajectory& traj, PhysicsFn physics, const FitOptions& opts) {
  HybridFit out;
  NarxModel& shape = out.model.residual;
  shape.p = opts.p;
  shape.q = opts.q;
  shape.input_delay = opts.input_delay < 0 ? estimate_input_delay(traj)
                                           : static_cast<std::size_t>(opts.input_delay);
  shape.dt = traj.size() >= 2 ? traj.t[1] - traj.t[0] : 0.0;

  auto [train_block, val_block] = dataio::split_contiguous(traj, 1.0 - opts.val_fraction);
  auto train_ds = residual_dataset(train_block, shape, physics);
  auto val_ds = residual_dataset(val_block, shape, physics);
  train_ds.fit_normalization();
  train_ds.target_norm.mean.assign(1, 0.0);
  val_ds.input_norm = train_ds.input_norm;
  val_ds.target_norm = train_ds.target_norm;
  shape.input_norm = train_ds.input_norm;
  shape.target_norm = train_ds.target_norm;

  std::vector<std::size_t> sizes{shape.p + shape.q};
  sizes.insert(sizes.end(), opts.hidden.begin(), opts.hidden.end());
  sizes.push_back(1);
  auto trained = nnet::train(nnet::Mlp::random(sizes, opts.train.seed), train_ds, val_ds,
                             opts.train);
  shape.net = std::move(trained.net);
  out.model.physics = std::move(physics);

  const auto& y = measured(val_block);
  const std::size_t k0 = std::max(shape.p, shape.q + shape.input_delay);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = k0; k + 1 < val_block.size(); ++k) {
    const double e = hybrid_predict(out.model, std::span(y).first(k + 1),
                                    std::span(val_block.u).first(k + 1)) - y[k + 1];
    s += e * e;
    ++n;
  }
  out.val_rmse = n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
  return out;
}

PhysicsFn fopdt_physics(double K, double tau, double dt, std::size_t delay_samples) {
  const double a = std::exp(-dt / tau);
  return [=](std::span<const double> y_hist, std::span<const double> u_hist) {
    const double y = y_hist.empty() ? 0.0 : y_hist.back();
    const double u = delay_samples < u_hist.size() ? u_hist[u_hist.size() - 1 - delay_samples] : 0.0;
    return a * y + K * (1.0 - a) * u;
  };
}

void save_narx(const std::string& path, const NarxModel& model) {
  nnet::save_mlp(path, model.net);
  json j{{"format", "clcs-narx"},
         {"version", 1},
         {"p", model.p},
         {"q", model.q},
         {"input_delay", model.input_delay},
         {"dt", model.dt},
         {"input_norm", norm_to_json(model.input_norm)},
         {"target_norm", norm_to_json(model.target_norm)}};
  std::ofstream os(path + ".json", std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path + ".json for writing");
  os << j.dump(2) << '\n';
}

NarxModel load_narx(const std::string& path) {
  NarxModel m;
  m.net = nnet::load_mlp(path);
  std::ifstream is(path + ".json", std::ios::binary);
  if (!is) throw Error(Errc::io_error, "cannot open " + path + ".json");
  try {
    const json j = json::parse(is);
    if (j.at("format") != "clcs-narx") throw Error(Errc::parse_error, "not a NARX sidecar");
    m.p = j.at("p");
    m.q = j.at("q");
    m.input_delay = j.at("input_delay");
    m.dt = j.at("dt");
    m.input_norm = norm_from_json(j.at("input_norm"));
    m.target_norm = norm_from_json(j.at("target_norm"));
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad NARX sidecar: ") + e.what());
  }
  if (m.net.input_size() != m.p + m.q || m.input_norm.size() != m.p + m.q) {
    throw Error(Errc::dimension_mismatch, "NARX sidecar does not match the weight file");
  }
  return m;
}

void write_report_csv(const std::string& path, const ValidationReport& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path + " for writing");
  os << "one_step_rmse,rollout_rmse,rollout_steps,output_range,one_step_rel,rollout_rel,"
        "input_delay,train_rows,val_rows,best_epoch,resampled,u_lo,u_hi,val_outside_fraction";
  for (std::size_t i = 0; i < r.input_histogram.size(); ++i) os << ",hist" << i;
  os << '\n';
  const double range = r.output_range > 0.0 ? r.output_range : 1.0;
  os << nnet::format_double(r.one_step_rmse) << ',' << nnet::format_double(r.rollout_rmse) << ','
     << r.rollout_steps << ',' << nnet::format_double(r.output_range) << ','
     << nnet::format_double(r.one_step_rmse / range) << ','
     << nnet::format_double(r.rollout_rmse / range) << ',' << r.input_delay << ','
     << r.train_rows << ',' << r.val_rows << ',' << r.best_epoch << ',' << (r.resampled ? 1 : 0)
     << ',' << nnet::format_double(r.u_lo) << ',' << nnet::format_double(r.u_hi) << ','
     << nnet::format_double(r.val_outside_fraction);
  for (auto c : r.input_histogram) os << ',' << c;
  os << '\n';
}

}  // namespace clcs::surrogate
