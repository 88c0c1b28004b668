#include "clcs/neuro.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "clcs/error.hpp"
#include "clcs/metrics.hpp"

namespace clcs::neuro {
namespace {

using nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

template <class S>
std::vector<S> normalized(const nnet::Normalizer& norm, std::span<const S> f) {
  std::vector<S> z(f.begin(), f.end());
  if (norm.size() == 0) return z;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - norm.mean[i]) * (1.0 / norm.std[i]);
  return z;
}

template <class S>
std::vector<S> apply_net(ad::Tape* tape, const nnet::Mlp& net, std::span<const S> z,
                         std::span<double> sink) {
  if constexpr (std::is_same_v<S, double>) {
    return net.forward(z);
  } else {
    return tape->mlp(net, z, sink);
  }
}

template <class S>
S narx_next(ad::Tape* tape, const surrogate::NarxModel& m, std::span<const S> yh,
            std::span<const S> uh) {
  const auto f = m.features<S>(yh, uh);
  if constexpr (std::is_same_v<S, double>) {
    return m.predict_features(f);
  } else {
    return m.predict_features(*tape, f);
  }
}

template <class S>
void push_recent(std::vector<S>& v, const S& x, std::size_t cap) {
  v.insert(v.begin(), x);
  if (v.size() > cap) v.pop_back();
}

double last_hidden_aux(const nnet::Mlp& net, const nnet::Normalizer& norm, const AuxHead& aux,
                       std::span<const double> features) {
  if (net.layer_count() < 2) {
    throw Error(Errc::feature_unavailable, "auxiliary head needs a hidden layer");
  }
  const auto z = normalized<double>(norm, features);
  nnet::ForwardCache cache;
  net.forward(z, cache);
  const auto& h = cache.activations[cache.activations.size() - 2];
  return aux.predict(h) * aux.target_std + aux.target_mean;
}

std::size_t surrogate_window(const surrogate::NarxModel& m) {
  return std::max(m.p, m.q + m.input_delay) + 1;
}

double reference_scale(const std::vector<BpttEpisode>& episodes) {
  double r = 0.0;
  for (const auto& ep : episodes) {
    for (double w : ep.w) r = std::max(r, std::abs(w));
  }
  return r > 1e-3 ? r : 1.0;
}

template <class S>
S nc_rollout(const NeuralController& nc, const surrogate::NarxModel& m, const BpttEpisode& ep,
             double rho, ad::Tape* tape, std::span<double> sink, bool& diverged) {
  using ad::value_of;
  const std::size_t H = ep.w.size();
  diverged = false;
  if (H == 0) return S(0.0);
  const std::size_t W = surrogate_window(m);
  std::vector<S> yh(W, S(0.0)), uh(W, S(0.0));
  std::vector<S> yr, ur;
  S track = 0.0, effort = 0.0, u_prev = 0.0;
  const double bound = 1e6 * std::max(1.0, reference_scale({ep}));
  for (std::size_t k = 0; k < H; ++k) {
    const S y = yh.back();
    push_recent(yr, y, nc.history());
    const auto f = nc.features<S>(S(ep.w[k]), yr, ur);
    const auto z = normalized<S>(nc.feature_norm(), f);
    const auto out = apply_net<S>(tape, nc.net(), z, sink);
    const S u = nc.squash(out[0]);
    if (k > 0) effort = effort + (u - u_prev) * (u - u_prev);
    u_prev = u;
    push_recent(ur, u, nc.history());
    const double gain = ep.gain.empty() ? 1.0 : ep.gain[k];
    const double dd = ep.d_input.empty() ? 0.0 : ep.d_input[k];
    uh.push_back((u + dd) * gain);
    const S next = narx_next<S>(tape, m, yh, uh);
    if (!std::isfinite(value_of(next)) || std::abs(value_of(next)) > bound) {
      diverged = true;
      return S(0.0);
    }
    yh.push_back(next);
    const S e = S(ep.w[std::min(k + 1, H - 1)]) - next;
    track = track + e * e;
  }
  S loss = track * (1.0 / static_cast<double>(H));
  if (H > 1) loss = loss + effort * (rho / static_cast<double>(H - 1));
  return loss;
}

template <class S>
S gs_rollout(const GainScheduler& gs, const control::PidGains& base,
             const surrogate::NarxModel& m, const BpttEpisode& ep, double rho, double dt,
             ad::Tape* tape, std::span<double> sink, bool& diverged) {
  using ad::value_of;
  const std::size_t H = ep.w.size();
  diverged = false;
  if (H == 0) return S(0.0);
  const std::size_t W = surrogate_window(m);
  std::vector<S> yh(W, S(0.0)), uh(W, S(0.0));
  std::vector<S> er;
  control::BasicPidState<S> st;
  S track = 0.0, effort = 0.0, u_prev = 0.0;
  const double bound = 1e6 * std::max(1.0, reference_scale({ep}));
  for (std::size_t k = 0; k < H; ++k) {
    const S y = yh.back();
    const S w(ep.w[k]);
    push_recent(er, w - y, gs.window());
    const auto f = scheduler_features<S>(er, y, u_prev, gs.window());
    const auto z = normalized<S>(gs.feature_norm(), f);
    const auto out = apply_net<S>(tape, gs.net(), z, sink);
    const auto g = gs.scale<S>(out);
    const S u = control::pid_core<S>(g, base, st, w, y, dt);
    if (k > 0) effort = effort + (u - u_prev) * (u - u_prev);
    u_prev = u;
    const double gain = ep.gain.empty() ? 1.0 : ep.gain[k];
    const double dd = ep.d_input.empty() ? 0.0 : ep.d_input[k];
    uh.push_back((u + dd) * gain);
    const S next = narx_next<S>(tape, m, yh, uh);
    if (!std::isfinite(value_of(next)) || std::abs(value_of(next)) > bound) {
      diverged = true;
      return S(0.0);
    }
    yh.push_back(next);
    const S e = S(ep.w[std::min(k + 1, H - 1)]) - next;
    track = track + e * e;
  }
  S loss = track * (1.0 / static_cast<double>(H));
  if (H > 1) loss = loss + effort * (rho / static_cast<double>(H - 1));
  return loss;
}

template <class Rollout>
LossGrad taped_loss(std::size_t n_params, Rollout&& rollout) {
  ad::Tape tape;
  LossGrad lg;
  lg.grad.assign(n_params, 0.0);
  bool diverged = false;
  const ad::Var loss = rollout(&tape, std::span<double>(lg.grad), diverged);
  if (diverged) throw Error(Errc::rollout_diverged, "closed-loop rollout diverged");
  lg.loss = loss.v;
  if (!loss.is_constant()) tape.backward(loss);
  return lg;
}

BpttReport bptt_loop(std::span<double> params, std::size_t n_episodes, const BpttOptions& opts,
                     const std::function<LossGrad(std::size_t)>& loss_grad) {
  opts.train.validate();
  if (!(opts.clip > 0.0)) throw Error(Errc::invalid_argument, "gradient clip must be > 0");
  BpttReport rep;
  if (n_episodes == 0) return rep;
  nnet::Adam adam(params.size(), opts.train.learning_rate, opts.train.beta1, opts.train.beta2);
  Rng rng(Rng::derive(opts.train.seed, 9));
  std::vector<std::size_t> order(n_episodes);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> g(params.size());
  for (std::size_t epoch = 1; epoch <= opts.train.max_epochs; ++epoch) {
    adam.set_learning_rate(opts.train.rate_at(epoch));
    for (std::size_t i = n_episodes; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::size_t skipped = 0, used = 0;
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n_episodes; b0 += opts.train.batch_size) {
      const std::size_t b1 = std::min(n_episodes, b0 + opts.train.batch_size);
      std::fill(g.begin(), g.end(), 0.0);
      std::size_t nb = 0;
      for (std::size_t j = b0; j < b1; ++j) {
        LossGrad lg;
        try {
          lg = loss_grad(order[j]);
        } catch (const Error& e) {
          if (e.code() != Errc::rollout_diverged) throw;
          ++skipped;
          continue;
        }
        const bool finite = std::isfinite(lg.loss) &&
                            std::all_of(lg.grad.begin(), lg.grad.end(),
                                        [](double v) { return std::isfinite(v); });
        if (!finite) {
          ++skipped;
          continue;
        }
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += lg.grad[i];
        loss_sum += lg.loss;
        ++nb;
      }
      if (nb == 0) continue;
      used += nb;
      double norm = 0.0;
      for (double& v : g) {
        v /= static_cast<double>(nb);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm > opts.clip) {
        for (double& v : g) v *= opts.clip / norm;
      }
      adam.step(params, g);
    }
    rep.skipped += skipped;
    if (2 * skipped > n_episodes) {
      throw Error(Errc::training_unstable, "more than half of the episodes diverged", epoch);
    }
    rep.loss_history.push_back(used ? loss_sum / static_cast<double>(used) : 0.0);
  }
  return rep;
}

void check_horizons(const std::vector<BpttEpisode>& episodes, const BpttOptions& opts) {
  for (const auto& ep : episodes) {
    if (ep.w.size() > opts.max_horizon) {
      throw Error(Errc::invalid_argument, "episode horizon exceeds the BPTT limit");
    }
    if ((!ep.gain.empty() && ep.gain.size() != ep.w.size()) ||
        (!ep.d_input.empty() && ep.d_input.size() != ep.w.size())) {
      throw Error(Errc::dimension_mismatch, "episode schedules must match the horizon");
    }
  }
}

json norm_json(const nnet::Normalizer& n) { return {{"mean", n.mean}, {"std", n.std}}; }

nnet::Normalizer norm_from(const json& j) {
  nnet::Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.std = j.at("std").get<std::vector<double>>();
  return n;
}

json aux_json(const std::optional<AuxHead>& a) {
  if (!a) return nullptr;
  return {{"w", a->w}, {"b", a->b}, {"target_mean", a->target_mean}, {"target_std", a->target_std}};
}

std::optional<AuxHead> aux_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  AuxHead a;
  a.w = j.at("w").get<std::vector<double>>();
  a.b = j.at("b");
  a.target_mean = j.at("target_mean");
  a.target_std = j.at("target_std");
  return a;
}

json limit_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double limit_from(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

void write_sidecar(const std::string& path, const json& j) {
  std::ofstream os(path + ".json", std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path + ".json for writing");
  os << j.dump(2) << '\n';
}

json read_sidecar(const std::string& path) {
  std::ifstream is(path + ".json", std::ios::binary);
  if (!is) throw Error(Errc::io_error, "cannot open " + path + ".json");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad sidecar: ") + e.what());
  }
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

// ---------------------------------------------------------------------------

double AuxHead::predict(std::span<const double> h) const {
  if (h.size() != w.size()) throw Error(Errc::dimension_mismatch, "aux head width mismatch");
  double s = b;
  for (std::size_t i = 0; i < h.size(); ++i) s += w[i] * h[i];
  return s;
}

AuxHead make_aux_head(std::size_t width, std::uint64_t seed) {
  AuxHead a;
  Rng rng(seed);
  const double lim = std::sqrt(6.0 / static_cast<double>(width + 1));
  a.w.resize(width);
  for (double& v : a.w) v = rng.uniform(-lim, lim);
  return a;
}

// ---------------------------------------------------------------------------

NeuralController::NeuralController(nnet::Mlp net, std::size_t history, double u_min,
                                   double u_max)
    : net_(std::move(net)), history_(history), u_min_(u_min), u_max_(u_max) {
  if (net_.input_size() != feature_count(history) || net_.output_size() != 1) {
    throw Error(Errc::dimension_mismatch, "controller network shape does not match its features");
  }
  if (!std::isfinite(u_min) || !std::isfinite(u_max) || !(u_min < u_max)) {
    throw Error(Errc::invalid_argument, "controller needs finite limits u_min < u_max");
  }
}

NeuralController NeuralController::make(const std::vector<std::size_t>& hidden,
                                        std::size_t history, double u_min, double u_max,
                                        std::uint64_t seed) {
  std::vector<std::size_t> sizes{feature_count(history)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return NeuralController(nnet::Mlp::random(sizes, seed), history, u_min, u_max);
}

double NeuralController::raw_output(std::span<const double> features) const {
  const auto z = normalized<double>(feature_norm_, features);
  return net_.forward(z)[0];
}

double NeuralController::step(const sim::ControlContext& ctx) {
  push_recent(y_recent_, ctx.y_meas[0], history_);
  const auto f = features<double>(ctx.w, y_recent_, u_recent_);
  const double z = raw_output(f);
  if (!std::isfinite(z)) {
    throw Error(Errc::controller_fault, "neural controller output is not finite", ctx.step);
  }
  const double u = squash(z);
  push_recent(u_recent_, u, history_);
  return u;
}

void NeuralController::reset() {
  y_recent_.clear();
  u_recent_.clear();
}

double NeuralController::predict_disturbance(std::span<const double> features) const {
  if (!aux_) throw Error(Errc::feature_unavailable, "disturbance head is disabled");
  return last_hidden_aux(net_, feature_norm_, *aux_, features);
}

// ---------------------------------------------------------------------------

GainScheduler::GainScheduler(nnet::Mlp net, std::array<GainBounds, 3> bounds, std::size_t window)
    : net_(std::move(net)), bounds_(bounds), window_(window) {
  if (net_.input_size() != kFeatureCount || net_.output_size() != 3) {
    throw Error(Errc::dimension_mismatch, "scheduler network must map 6 features to 3 gains");
  }
  for (const auto& b : bounds_) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi) {
      throw Error(Errc::invalid_argument, "gain bounds must be finite with lo <= hi");
    }
  }
  if (window_ == 0) throw Error(Errc::invalid_argument, "scheduler window must be >= 1");
}

GainScheduler GainScheduler::make(const std::vector<std::size_t>& hidden,
                                  std::array<GainBounds, 3> bounds, std::uint64_t seed,
                                  std::size_t window) {
  std::vector<std::size_t> sizes{kFeatureCount};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(3);
  return GainScheduler(nnet::Mlp::random(sizes, seed), bounds, window);
}

control::GainTriple<double> GainScheduler::gains(std::span<const double> features) const {
  const auto z = normalized<double>(feature_norm_, features);
  auto out = net_.forward(z);
  for (double& v : out) {
    if (std::isnan(v)) v = 0.0;
  }
  return scale<double>(out);
}

double GainScheduler::predict_disturbance(std::span<const double> features) const {
  if (!aux_) throw Error(Errc::feature_unavailable, "disturbance head is disabled");
  return last_hidden_aux(net_, feature_norm_, *aux_, features);
}

control::GainTriple<double> scheduler_step(const GainScheduler& gs,
                                           std::span<const double> features) {
  return gs.gains(features);
}

double ScheduledPidController::step(const sim::ControlContext& ctx) {
  const double y = ctx.y_meas[0];
  push_recent(e_recent_, ctx.w - y, gs_.window());
  const auto f = scheduler_features<double>(e_recent_, y, u_prev_, gs_.window());
  last_ = gs_.gains(f);
  const double u = control::pid_core<double>(last_, base_, state_, ctx.w, y, ctx.dt);
  if (!std::isfinite(u)) {
    throw Error(Errc::controller_fault, "scheduled PID output is not finite", ctx.step);
  }
  u_prev_ = u;
  return u;
}

void ScheduledPidController::reset() {
  state_ = {};
  e_recent_.clear();
  u_prev_ = 0.0;
}

void ScheduledPidController::channel_values(std::vector<double>& out) const {
  out.push_back(last_.kp);
  out.push_back(last_.ki);
  out.push_back(last_.kd);
}

// ---------------------------------------------------------------------------

StaticTuneResult nelder_mead_tune(const GainCost& cost, const StaticTuneOptions& opts) {
  if (opts.budget == 0) throw Error(Errc::invalid_argument, "tuning budget must be >= 1");
  using Point = std::array<double, 3>;
  const Point lo{opts.bounds.kp.lo, opts.bounds.ki.lo, opts.bounds.kd.lo};
  const Point hi{opts.bounds.kp.hi, opts.bounds.ki.hi, opts.bounds.kd.hi};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i]) {
      throw Error(Errc::invalid_argument, "search bounds must be finite with lo <= hi");
    }
  }

  StaticTuneResult res;
  Point best{};
  double best_f = kInf;
  const auto project = [&](Point x) {
    for (std::size_t i = 0; i < 3; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };
  const auto eval = [&](const Point& x, double& f) {
    if (res.evaluations >= opts.budget) return false;
    f = cost(x);
    if (!std::isfinite(f)) f = kInf;
    ++res.evaluations;
    if (f < best_f || res.evaluations == 1) {
      if (f < best_f) best_f = f;
      best = x;
    }
    res.cost_trace.push_back(best_f);
    return true;
  };

  Rng rng(opts.seed);
  Point start;
  if (opts.initial) {
    start = project(*opts.initial);
  } else {
    for (std::size_t i = 0; i < 3; ++i) start[i] = 0.5 * (lo[i] + hi[i]);
  }
  double scale = 0.25;

  for (std::size_t restart = 0; res.evaluations < opts.budget; ++restart) {
    std::array<Point, 4> s;
    std::array<double, 4> f;
    s[0] = start;
    bool ok = eval(s[0], f[0]);
    for (std::size_t i = 0; ok && i < 3; ++i) {
      s[i + 1] = s[0];
      const double step = scale * (hi[i] - lo[i]);
      s[i + 1][i] = s[0][i] + step <= hi[i] ? s[0][i] + step : s[0][i] - step;
      s[i + 1] = project(s[i + 1]);
      ok = eval(s[i + 1], f[i + 1]);
    }
    while (ok) {
      std::array<std::size_t, 4> idx{0, 1, 2, 3};
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
      std::array<Point, 4> s2;
      std::array<double, 4> f2;
      for (std::size_t i = 0; i < 4; ++i) {
        s2[i] = s[idx[i]];
        f2[i] = f[idx[i]];
      }
      s = s2;
      f = f2;

      double size = 0.0;
      for (std::size_t v = 1; v < 4; ++v) {
        for (std::size_t i = 0; i < 3; ++i) {
          const double range = hi[i] - lo[i] > 0.0 ? hi[i] - lo[i] : 1.0;
          size = std::max(size, std::abs(s[v][i] - s[0][i]) / range);
        }
      }
      const bool flat = std::isfinite(f[0]) && std::isfinite(f[3]) &&
                        f[3] - f[0] <= 1e-12 * (1.0 + std::abs(f[0]));
      if (size < 1e-9 || (flat && size < 1e-6)) break;

      Point c{};
      for (std::size_t v = 0; v < 3; ++v) {
        for (std::size_t i = 0; i < 3; ++i) c[i] += s[v][i] / 3.0;
      }
      const auto along = [&](double t) {
        Point x;
        for (std::size_t i = 0; i < 3; ++i) x[i] = c[i] + t * (s[3][i] - c[i]);
        return project(x);
      };
      const Point xr = along(-1.0);
      double fr;
      if (!(ok = eval(xr, fr))) break;
      if (fr < f[0]) {
        const Point xe = along(-2.0);
        double fe;
        if (!(ok = eval(xe, fe))) break;
        if (fe < fr) {
          s[3] = xe;
          f[3] = fe;
        } else {
          s[3] = xr;
          f[3] = fr;
        }
        continue;
      }
      if (fr < f[2]) {
        s[3] = xr;
        f[3] = fr;
        continue;
      }
      const bool outside = fr < f[3];
      const Point xc = along(outside ? -0.5 : 0.5);
      double fc;
      if (!(ok = eval(xc, fc))) break;
      if (fc < (outside ? fr : f[3])) {
        s[3] = xc;
        f[3] = fc;
        continue;
      }
      for (std::size_t v = 1; ok && v < 4; ++v) {
        for (std::size_t i = 0; i < 3; ++i) s[v][i] = s[0][i] + 0.5 * (s[v][i] - s[0][i]);
        ok = eval(s[v], f[v]);
      }
    }

    if (restart % 2 == 0) {
      start = best;
      scale = 0.05;
    } else {
      for (std::size_t i = 0; i < 3; ++i) start[i] = rng.uniform(lo[i], hi[i]);
      scale = 0.25;
    }
  }

  if (!std::isfinite(best_f)) {
    throw Error(Errc::tuning_failed, "every candidate evaluation failed or diverged");
  }
  res.gains.kp = best[0];
  res.gains.ki = best[1];
  res.gains.kd = best[2];
  res.cost = best_f;
  return res;
}

sim::Trajectory simulate_surrogate(const surrogate::NarxModel& model, sim::Controller& controller,
                                   const Episode& episode, double u_min, double u_max,
                                   std::uint64_t seed) {
  const double dt = model.dt;
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "surrogate has no sample period");
  const sim::SimConfig cfg{dt, episode.horizon, seed};
  const std::size_t n = cfg.steps();
  Rng rng(Rng::derive(seed, 1000));
  const std::size_t W = surrogate_window(model);
  std::vector<double> yh(W, 0.0), uh(W, 0.0);

  sim::Trajectory tr;
  tr.dt = dt;
  const auto names = controller.channel_names();
  for (const auto& name : names) tr.add_column(name);
  std::vector<std::vector<double>*> cols;
  for (auto& col : tr.extra) cols.push_back(&col.second);
  std::vector<double> vals;
  double ref_scale = 1.0;
  const bool out_add = episode.disturbance.injection == sim::Injection::output_additive;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w = episode.reference.at(t);
    ref_scale = std::max(ref_scale, std::abs(w));
    const double d = sim::disturbance_at(episode.disturbance, t, rng);
    const double y = yh.back() + (out_add ? d : 0.0);
    if (!std::isfinite(y) || std::abs(y) > 1e9 * ref_scale) {
      throw Error(Errc::diverged, "surrogate response exceeded divergence bound", k);
    }
    const sim::ControlContext ctx{k, t, dt, w, std::span<const double>(&y, 1), u_min, u_max};
    double u = controller.step(ctx);
    if (!std::isfinite(u)) {
      throw Error(Errc::controller_fault, "controller emitted non-finite output", k);
    }
    u = std::clamp(u, u_min, u_max);
    tr.t.push_back(t);
    tr.w.push_back(w);
    tr.y.push_back(y);
    tr.y_meas.push_back(y);
    tr.u.push_back(u);
    tr.d.push_back(d);
    vals.clear();
    controller.channel_values(vals);
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i]->push_back(vals[i]);

    double gain = 1.0;
    for (const auto& g : episode.gain_steps) {
      if (t >= g.time) gain *= g.factor;
    }
    uh.push_back((u + (out_add ? 0.0 : d)) * gain);
    yh.push_back(model.predict_features(model.features<double>(yh, uh)));
  }
  return tr;
}

double episode_cost(const sim::Trajectory& traj, double rho) {
  double tv = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) tv += std::abs(traj.u[k] - traj.u[k - 1]);
  return metrics::iae(traj) + rho * tv;
}

StaticTuneResult tune_static_ai(const surrogate::NarxModel& model,
                                const std::vector<Episode>& episodes,
                                const control::PidGains& base, const StaticTuneOptions& opts) {
  if (episodes.empty()) throw Error(Errc::invalid_argument, "tuning needs at least one episode");
  const GainCost cost = [&](const std::array<double, 3>& x) {
    control::PidGains g = base;
    g.kp = x[0];
    g.ki = x[1];
    g.kd = x[2];
    double total = 0.0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      control::PidController pid(g);
      try {
        const auto tr = simulate_surrogate(model, pid, episodes[i], base.u_min, base.u_max,
                                           Rng::derive(opts.seed, 100 + i));
        total += episode_cost(tr, opts.rho);
      } catch (const Error&) {
        return kInf;
      }
    }
    return total / static_cast<double>(episodes.size());
  };
  auto res = nelder_mead_tune(cost, opts);
  const auto tuned = res.gains;
  res.gains = base;
  res.gains.kp = tuned.kp;
  res.gains.ki = tuned.ki;
  res.gains.kd = tuned.kd;
  return res;
}

StaticTuneResult tune_static_ai(const sim::PlantModel& plant, const std::vector<Episode>& episodes,
                                const control::PidGains& base, const StaticTuneOptions& opts,
                                double dt) {
  if (episodes.empty()) throw Error(Errc::invalid_argument, "tuning needs at least one episode");
  const GainCost cost = [&](const std::array<double, 3>& x) {
    control::PidGains g = base;
    g.kp = x[0];
    g.ki = x[1];
    g.kd = x[2];
    double total = 0.0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      sim::PlantModel p = plant;
      p.gain_steps.insert(p.gain_steps.end(), episodes[i].gain_steps.begin(),
                          episodes[i].gain_steps.end());
      control::PidController pid(g);
      try {
        const auto tr = sim::simulate(p, pid, episodes[i].reference, episodes[i].disturbance, {},
                                      {dt, episodes[i].horizon, Rng::derive(opts.seed, 100 + i)});
        total += episode_cost(tr, opts.rho);
      } catch (const Error&) {
        return kInf;
      }
    }
    return total / static_cast<double>(episodes.size());
  };
  auto res = nelder_mead_tune(cost, opts);
  const auto tuned = res.gains;
  res.gains = base;
  res.gains.kp = tuned.kp;
  res.gains.ki = tuned.ki;
  res.gains.kd = tuned.kd;
  return res;
}

// ---------------------------------------------------------------------------

MixedBatchSampler::MixedBatchSampler(std::size_t n_a, std::size_t n_b, double lambda,
                                     std::size_t batch, std::uint64_t seed)
    : n_a_(n_a), n_b_(n_b), batch_(batch), lambda_(lambda), rng_(seed) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(Errc::invalid_argument, "mix ratio must lie in [0, 1]");
  }
  if (batch == 0) throw Error(Errc::invalid_argument, "batch size must be >= 1");
  if ((lambda > 0.0 && n_a == 0) || (lambda < 1.0 && n_b == 0)) {
    throw Error(Errc::invalid_argument, "mix ratio draws from an empty dataset");
  }
  perm_a_.resize(n_a);
  perm_b_.resize(n_b);
  std::iota(perm_a_.begin(), perm_a_.end(), 0);
  std::iota(perm_b_.begin(), perm_b_.end(), 0);
  shuffle(perm_a_, rng_);
  shuffle(perm_b_, rng_);
}

std::size_t MixedBatchSampler::next_index(bool from_a) {
  auto& perm = from_a ? perm_a_ : perm_b_;
  auto& pos = from_a ? pos_a_ : pos_b_;
  if (pos == perm.size()) {
    shuffle(perm, rng_);
    pos = 0;
  }
  return perm[pos++];
}

std::vector<std::vector<MixedBatchSampler::Pick>> MixedBatchSampler::next_epoch() {
  const std::size_t total = n_a_ + n_b_;
  std::vector<std::vector<Pick>> batches;
  const auto a_upto = [&](std::size_t m) {
    return static_cast<std::size_t>(std::floor(lambda_ * static_cast<double>(m) + 0.5));
  };
  for (std::size_t done = 0; done < total;) {
    const std::size_t bs = std::min(batch_, total - done);
    const std::size_t na = a_upto(done + bs) - a_upto(done);
    std::vector<Pick> b;
    b.reserve(bs);
    for (std::size_t i = 0; i < na; ++i) b.push_back({true, next_index(true)});
    for (std::size_t i = na; i < bs; ++i) b.push_back({false, next_index(false)});
    batches.push_back(std::move(b));
    done += bs;
  }
  return batches;
}

void teacher_rows(const NeuralController& nc, const sim::Trajectory& traj, nnet::Matrix& x,
                  std::vector<double>& u, std::vector<double>& d_next) {
  const auto& y = traj.y_meas.size() == traj.size() ? traj.y_meas : traj.y;
  const std::size_t m = nc.history();
  if (x.cols == 0) x = nnet::Matrix(0, NeuralController::feature_count(m));
  std::vector<double> yr(m), ur(m);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      yr[i] = k >= i ? y[k - i] : 0.0;
      ur[i] = k >= i + 1 ? traj.u[k - i - 1] : 0.0;
    }
    x.append_row(nc.features<double>(traj.w[k], yr, ur));
    u.push_back(traj.u[k]);
    d_next.push_back(k + 1 < traj.size() ? traj.d[k + 1] : traj.d[k]);
  }
}

ImitationReport train_imitation(NeuralController& nc, const DualDatasetMix& mix,
                                const ImitationOptions& opts) {
  const auto& cfg = opts.train;
  cfg.validate();
  if (!(opts.beta >= 0.0)) throw Error(Errc::invalid_argument, "beta must be >= 0");
  if (!(opts.val_fraction >= 0.0 && opts.val_fraction < 1.0)) {
    throw Error(Errc::invalid_argument, "validation fraction must lie in [0, 1)");
  }

  struct Part {
    nnet::Matrix x, xv;
    std::vector<double> u, d, uv, dv;
  };
  const auto build = [&](const std::vector<sim::Trajectory>& runs) {
    Part p;
    p.x = nnet::Matrix(0, NeuralController::feature_count(nc.history()));
    p.xv = p.x;
    for (const auto& tr : runs) {
      nnet::Matrix x;
      std::vector<double> u, d;
      teacher_rows(nc, tr, x, u, d);
      const std::size_t n = x.rows;
      const auto nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * opts.val_fraction));
      for (std::size_t r = 0; r < n; ++r) {
        const bool val = r + nv >= n;
        (val ? p.xv : p.x).append_row(x.row(r));
        (val ? p.uv : p.u).push_back(u[r]);
        (val ? p.dv : p.d).push_back(d[r]);
      }
    }
    return p;
  };
  Part A = build(mix.a), B = build(mix.b);
  if (A.x.rows + B.x.rows == 0) throw Error(Errc::too_short, "no teacher samples");
  MixedBatchSampler sampler(A.x.rows, B.x.rows, mix.lambda, cfg.batch_size,
                            Rng::derive(cfg.seed, 5));

  nnet::Matrix all = A.x;
  for (std::size_t r = 0; r < B.x.rows; ++r) all.append_row(B.x.row(r));
  nc.feature_norm() = nnet::Normalizer::fit(all);
  const auto& norm = nc.feature_norm();
  A.x = norm.normalize(A.x);
  A.xv = norm.normalize(A.xv);
  B.x = norm.normalize(B.x);
  B.xv = norm.normalize(B.xv);

  nnet::Mlp& net = nc.net();
  const std::size_t L = net.layer_count();
  if (opts.beta > 0.0 && !nc.aux()) {
    if (L < 2) throw Error(Errc::invalid_argument, "disturbance head needs a hidden layer");
    nc.aux() = make_aux_head(net.sizes()[L - 1], Rng::derive(cfg.seed, 77));
  }
  const bool use_aux = nc.aux().has_value();
  if (use_aux) {
    if (L < 2) throw Error(Errc::invalid_argument, "disturbance head needs a hidden layer");
    auto& aux = *nc.aux();
    std::vector<double> d_all = A.d;
    d_all.insert(d_all.end(), B.d.begin(), B.d.end());
    double mean = 0.0, var = 0.0;
    for (double v : d_all) mean += v;
    mean /= static_cast<double>(d_all.size());
    for (double v : d_all) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(d_all.size()));
    aux.target_mean = mean;
    aux.target_std = sd > 1e-12 ? sd : 1.0;
  }

  const double half = 0.5 * (nc.u_max() - nc.u_min());
  const auto sample_loss = [&](std::span<const double> x, double t, double d,
                               nnet::ForwardCache& cache, double& main, double& aux_l) {
    net.forward(x, cache);
    const double z = cache.activations.back()[0];
    const double r = (nc.squash(z) - t) / half;
    main = r * r;
    aux_l = 0.0;
    if (use_aux) {
      const auto& a = *nc.aux();
      const double ra = a.predict(cache.activations[L - 1]) - (d - a.target_mean) / a.target_std;
      aux_l = ra * ra;
      return std::pair{r, ra};
    }
    return std::pair{r, 0.0};
  };
  const auto evaluate = [&](const nnet::Matrix& x, const std::vector<double>& u,
                            const std::vector<double>& d, double& main, double& aux_l) {
    main = aux_l = 0.0;
    nnet::ForwardCache cache;
    for (std::size_t i = 0; i < x.rows; ++i) {
      double m, a;
      sample_loss(x.row(i), u[i], d[i], cache, m, a);
      main += m;
      aux_l += a;
    }
    if (x.rows) {
      main /= static_cast<double>(x.rows);
      aux_l /= static_cast<double>(x.rows);
    }
  };
  const auto val_objective = [&]() {
    double ma, aa, mb, ab;
    evaluate(A.xv, A.uv, A.dv, ma, aa);
    evaluate(B.xv, B.uv, B.dv, mb, ab);
    const std::size_t n = A.xv.rows + B.xv.rows;
    if (n == 0) return kInf;
    const double wa = static_cast<double>(A.xv.rows) / static_cast<double>(n);
    return wa * (ma + opts.beta * aa) + (1.0 - wa) * (mb + opts.beta * ab);
  };

  ImitationReport rep;
  nnet::Adam adam(net.parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2);
  const std::size_t aux_n = use_aux ? nc.aux()->w.size() + 1 : 0;
  nnet::Adam adam_aux(aux_n, cfg.learning_rate, cfg.beta1, cfg.beta2);
  std::vector<double> grad(net.parameter_count()), aux_grad(aux_n), aux_params(aux_n);
  std::vector<double> extra(use_aux ? nc.aux()->w.size() : 0);

  nnet::Mlp best_net = net;
  std::optional<AuxHead> best_aux = nc.aux();
  double best_val = val_objective();
  std::size_t since_best = 0;
  rep.history.val_loss.push_back(best_val);
  rep.history.train_loss.push_back(kInf);

  nnet::ForwardCache cache;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    adam.set_learning_rate(cfg.rate_at(epoch));
    adam_aux.set_learning_rate(cfg.rate_at(epoch));
    std::size_t a_count = 0, total = 0;
    double train_sum = 0.0;
    for (const auto& batch : sampler.next_epoch()) {
      std::fill(grad.begin(), grad.end(), 0.0);
      std::fill(aux_grad.begin(), aux_grad.end(), 0.0);
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (const auto& pk : batch) {
        const Part& P = pk.from_a ? A : B;
        a_count += pk.from_a ? 1 : 0;
        double m, a;
        const auto [r, ra] = sample_loss(P.x.row(pk.index), P.u[pk.index], P.d[pk.index], cache, m, a);
        train_sum += m + opts.beta * a;
        const double z = cache.activations.back()[0];
        const double th = std::tanh(z);
        const double gz = 2.0 * r * (1.0 - th * th) * inv;
        if (use_aux) {
          const auto& aux = *nc.aux();
          const auto& h = cache.activations[L - 1];
          const double ga = opts.beta * 2.0 * ra * inv;
          for (std::size_t i = 0; i < h.size(); ++i) {
            aux_grad[i] += ga * h[i];
            extra[i] = ga * aux.w[i];
          }
          aux_grad[h.size()] += ga;
          net.backward(cache, std::span(&gz, 1), grad, {}, extra);
        } else {
          net.backward(cache, std::span(&gz, 1), grad, {});
        }
      }
      total += batch.size();
      adam.step(net.parameters(), grad);
      if (use_aux) {
        auto& aux = *nc.aux();
        std::copy(aux.w.begin(), aux.w.end(), aux_params.begin());
        aux_params.back() = aux.b;
        adam_aux.step(aux_params, aux_grad);
        std::copy(aux_params.begin(), aux_params.end() - 1, aux.w.begin());
        aux.b = aux_params.back();
      }
    }
    rep.a_fraction_per_epoch.push_back(total ? static_cast<double>(a_count) / static_cast<double>(total) : 0.0);
    const double train_loss = total ? train_sum / static_cast<double>(total) : 0.0;
    const double val = val_objective();
    if (!std::isfinite(train_loss) || std::isnan(val)) {
      throw Error(Errc::training_diverged, "imitation loss became non-finite", epoch);
    }
    rep.history.train_loss.push_back(train_loss);
    rep.history.val_loss.push_back(val);
    if (val < best_val || !std::isfinite(best_val)) {
      best_val = val;
      best_net = net;
      best_aux = nc.aux();
      rep.history.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience && ++since_best >= cfg.patience) {
      break;
    }
  }
  net = best_net;
  nc.aux() = best_aux;

  const auto rmse_u = [&](const nnet::Matrix& x, const std::vector<double>& u) {
    if (x.rows == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double e = nc.squash(net.forward(x.row(i))[0]) - u[i];
      s += e * e;
    }
    return std::sqrt(s / static_cast<double>(x.rows));
  };
  rep.val_rmse_a = rmse_u(A.xv, A.uv);
  rep.val_rmse_b = rmse_u(B.xv, B.uv);
  if (use_aux) {
    double s = 0.0;
    std::size_t n = 0;
    for (const Part* P : {&A, &B}) {
      for (std::size_t i = 0; i < P->xv.rows; ++i) {
        net.forward(P->xv.row(i), cache);
        const auto& a = *nc.aux();
        const double e = a.predict(cache.activations[L - 1]) * a.target_std + a.target_mean - P->dv[i];
        s += e * e;
        ++n;
      }
    }
    rep.aux_val_rmse = n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------

LossGrad bptt_loss_grad(const NeuralController& nc, const surrogate::NarxModel& model,
                        const BpttEpisode& ep, double rho) {
  return taped_loss(nc.net().parameter_count(), [&](ad::Tape* t, std::span<double> g, bool& div) {
    return nc_rollout<ad::Var>(nc, model, ep, rho, t, g, div);
  });
}

double bptt_loss(const NeuralController& nc, const surrogate::NarxModel& model,
                 const BpttEpisode& ep, double rho) {
  bool div = false;
  const double l = nc_rollout<double>(nc, model, ep, rho, nullptr, {}, div);
  if (div) throw Error(Errc::rollout_diverged, "closed-loop rollout diverged");
  return l;
}

LossGrad bptt_loss_grad(const GainScheduler& gs, const control::PidGains& base,
                        const surrogate::NarxModel& model, const BpttEpisode& ep, double rho,
                        double dt) {
  const double h = dt > 0.0 ? dt : model.dt;
  return taped_loss(gs.net().parameter_count(), [&](ad::Tape* t, std::span<double> g, bool& div) {
    return gs_rollout<ad::Var>(gs, base, model, ep, rho, h, t, g, div);
  });
}

double bptt_loss(const GainScheduler& gs, const control::PidGains& base,
                 const surrogate::NarxModel& model, const BpttEpisode& ep, double rho, double dt) {
  bool div = false;
  const double l = gs_rollout<double>(gs, base, model, ep, rho, dt > 0.0 ? dt : model.dt, nullptr,
                                      {}, div);
  if (div) throw Error(Errc::rollout_diverged, "closed-loop rollout diverged");
  return l;
}

void default_feature_norm(NeuralController& nc, const std::vector<BpttEpisode>& episodes) {
  if (nc.feature_norm().size() != 0) return;
  const double r = reference_scale(episodes);
  const std::size_t m = nc.history();
  auto& n = nc.feature_norm();
  n.mean.assign(NeuralController::feature_count(m), 0.0);
  n.std.assign(NeuralController::feature_count(m), r);
  for (std::size_t i = 0; i < m; ++i) {
    n.mean[1 + m + i] = 0.5 * (nc.u_min() + nc.u_max());
    n.std[1 + m + i] = 0.5 * (nc.u_max() - nc.u_min());
  }
}

void default_feature_norm(GainScheduler& gs, const std::vector<BpttEpisode>& episodes) {
  if (gs.feature_norm().size() != 0) return;
  const double r = reference_scale(episodes);
  gs.feature_norm().mean.assign(GainScheduler::kFeatureCount, 0.0);
  gs.feature_norm().std.assign(GainScheduler::kFeatureCount, r);
}

BpttReport train_bptt(NeuralController& nc, const surrogate::NarxModel& model,
                      const std::vector<BpttEpisode>& episodes, const BpttOptions& opts) {
  check_horizons(episodes, opts);
  default_feature_norm(nc, episodes);
  return bptt_loop(nc.net().parameters(), episodes.size(), opts, [&](std::size_t i) {
    return bptt_loss_grad(nc, model, episodes[i], opts.rho);
  });
}

BpttReport train_bptt(GainScheduler& gs, const control::PidGains& base,
                      const surrogate::NarxModel& model, const std::vector<BpttEpisode>& episodes,
                      const BpttOptions& opts) {
  check_horizons(episodes, opts);
  default_feature_norm(gs, episodes);
  return bptt_loop(gs.net().parameters(), episodes.size(), opts, [&](std::size_t i) {
    return bptt_loss_grad(gs, base, model, episodes[i], opts.rho, model.dt);
  });
}

double fit_disturbance_head(GainScheduler& gs, const std::vector<sim::Trajectory>& runs,
                            double val_fraction) {
  const nnet::Mlp& net = gs.net();
  const std::size_t L = net.layer_count();
  if (L < 2) throw Error(Errc::invalid_argument, "disturbance head needs a hidden layer");
  const std::size_t h = net.sizes()[L - 1];

  std::vector<std::vector<double>> H, Hv;
  std::vector<double> D, Dv;
  nnet::ForwardCache cache;
  for (const auto& tr : runs) {
    const auto& y = tr.y_meas.size() == tr.size() ? tr.y_meas : tr.y;
    const std::size_t n = tr.size();
    const std::size_t nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
    std::vector<double> er;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      push_recent(er, tr.w[k] - y[k], gs.window());
      const auto f = scheduler_features<double>(er, y[k], k ? tr.u[k - 1] : 0.0, gs.window());
      net.forward(normalized<double>(gs.feature_norm(), f), cache);
      auto act = cache.activations[L - 1];
      act.push_back(1.0);
      if (k + nv < n) {
        H.push_back(std::move(act));
        D.push_back(tr.d[k + 1]);
      } else {
        Hv.push_back(std::move(act));
        Dv.push_back(tr.d[k + 1]);
      }
    }
  }
  if (H.empty()) throw Error(Errc::too_short, "no samples for the disturbance head");

  double mean = 0.0, var = 0.0;
  for (double v : D) mean += v;
  mean /= static_cast<double>(D.size());
  for (double v : D) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(D.size()));
  AuxHead aux;
  aux.target_mean = mean;
  aux.target_std = sd > 1e-12 ? sd : 1.0;

  const std::size_t n = h + 1;
  std::vector<double> A(n * n, 0.0), b(n, 0.0);
  for (std::size_t r = 0; r < H.size(); ++r) {
    const double t = (D[r] - aux.target_mean) / aux.target_std;
    for (std::size_t i = 0; i < n; ++i) {
      b[i] += H[r][i] * t;
      for (std::size_t j = 0; j < n; ++j) A[i * n + j] += H[r][i] * H[r][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) A[i * n + i] += 1e-8 * static_cast<double>(H.size());
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
    }
    for (std::size_t j = 0; j < n; ++j) std::swap(A[c * n + j], A[piv * n + j]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r * n + c] / A[c * n + c];
      for (std::size_t j = c; j < n; ++j) A[r * n + j] -= f * A[c * n + j];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t j = c + 1; j < n; ++j) s -= A[c * n + j] * x[j];
    x[c] = s / A[c * n + c];
  }
  aux.w.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(h));
  aux.b = x[h];
  gs.aux() = aux;

  if (Hv.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t r = 0; r < Hv.size(); ++r) {
    const double pred =
        aux.predict(std::span(Hv[r]).first(h)) * aux.target_std + aux.target_mean;
    s += (pred - Dv[r]) * (pred - Dv[r]);
  }
  return std::sqrt(s / static_cast<double>(Hv.size()));
}

// ---------------------------------------------------------------------------

void save_controller(const std::string& path, const NeuralController& nc,
                     const std::string& extra_json) {
  nnet::save_mlp(path, nc.net());
  json extra;
  try {
    extra = json::parse(extra_json);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad metadata: ") + e.what());
  }
  write_sidecar(path, {{"format", "clcs-neural-controller"},
                       {"version", 1},
                       {"history", nc.history()},
                       {"u_min", nc.u_min()},
                       {"u_max", nc.u_max()},
                       {"feature_norm", norm_json(nc.feature_norm())},
                       {"aux", aux_json(nc.aux())},
                       {"meta", extra}});
}

NeuralController load_controller(const std::string& path) {
  auto net = nnet::load_mlp(path);
  const json j = read_sidecar(path);
  try {
    if (j.at("format") != "clcs-neural-controller") {
      throw Error(Errc::parse_error, path + ".json is not a neural controller sidecar");
    }
    NeuralController nc(std::move(net), j.at("history").get<std::size_t>(), j.at("u_min"),
                        j.at("u_max"));
    nc.feature_norm() = norm_from(j.at("feature_norm"));
    nc.aux() = aux_from(j.at("aux"));
    return nc;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad controller sidecar: ") + e.what());
  }
}

void save_scheduler(const std::string& path, const GainScheduler& gs,
                    const control::PidGains& base) {
  nnet::save_mlp(path, gs.net());
  json bounds = json::array();
  for (const auto& b : gs.bounds()) bounds.push_back({b.lo, b.hi});
  write_sidecar(path, {{"format", "clcs-gain-scheduler"},
                       {"version", 1},
                       {"window", gs.window()},
                       {"bounds", bounds},
                       {"feature_norm", norm_json(gs.feature_norm())},
                       {"aux", aux_json(gs.aux())},
                       {"base",
                        {{"structure", control::to_string(base.structure)},
                         {"u_min", limit_json(base.u_min)},
                         {"u_max", limit_json(base.u_max)},
                         {"N", base.N},
                         {"inner_kp", base.inner_kp}}}});
}

std::pair<GainScheduler, control::PidGains> load_scheduler(const std::string& path) {
  auto net = nnet::load_mlp(path);
  const json j = read_sidecar(path);
  try {
    if (j.at("format") != "clcs-gain-scheduler") {
      throw Error(Errc::parse_error, path + ".json is not a gain scheduler sidecar");
    }
    std::array<GainBounds, 3> bounds;
    for (std::size_t i = 0; i < 3; ++i) {
      bounds[i] = {j.at("bounds").at(i).at(0), j.at("bounds").at(i).at(1)};
    }
    GainScheduler gs(std::move(net), bounds, j.at("window").get<std::size_t>());
    gs.feature_norm() = norm_from(j.at("feature_norm"));
    gs.aux() = aux_from(j.at("aux"));
    control::PidGains base;
    const auto& b = j.at("base");
    base.structure = control::parse_structure(b.at("structure").get<std::string>());
    base.u_min = limit_from(b.at("u_min"), -kInf);
    base.u_max = limit_from(b.at("u_max"), kInf);
    base.N = b.at("N");
    base.inner_kp = b.at("inner_kp");
    return {std::move(gs), base};
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad scheduler sidecar: ") + e.what());
  }
}

}  // namespace clcs::neuro
