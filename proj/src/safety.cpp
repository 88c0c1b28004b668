#include "clcs/safety.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "clcs/error.hpp"
#include "clcs/nnet.hpp"

namespace clcs::safety {

std::string_view to_string(Mode m) noexcept { return m == Mode::ai ? "AI" : "FALLBACK"; }

std::string Transition::direction() const {
  return to == Mode::fallback ? "AI->FALLBACK" : "FALLBACK->AI";
}

void SwitchParams::validate() const {
  if (!(theta_lo >= 0.0) || !(theta_hi > theta_lo)) {
    throw Error(Errc::invalid_argument, "switch thresholds need theta_hi > theta_lo >= 0");
  }
  if (dwell == 0) throw Error(Errc::invalid_argument, "switch dwell must be >= 1");
  if (!(agree_tol >= 0.0)) throw Error(Errc::invalid_argument, "agree_tol must be >= 0");
}

SwitchSupervisor::SwitchSupervisor(SwitchParams params) : params_(params) { params_.validate(); }

void SwitchSupervisor::reset() {
  mode_ = Mode::ai;
  high_run_ = calm_run_ = 0;
  log_.clear();
}

Mode SwitchSupervisor::update(double u_ai, double u_fb, double e, double u_min, double u_max,
                              std::size_t step, double time) {
  if (!std::isfinite(u_fb)) {
    throw Error(Errc::unrecoverable_fault, "fallback controller output is not finite", step);
  }
  const bool finite = std::isfinite(u_ai);
  const bool in_range = finite && u_ai >= u_min && u_ai <= u_max;
  const double ae = std::abs(e);

  if (ae > params_.theta_hi) {
    ++high_run_;
  } else {
    high_run_ = 0;
  }

  if (mode_ == Mode::ai) {
    std::string cause;
    if (!finite) {
      cause = "nonfinite";
    } else if (!in_range) {
      cause = "out-of-range";
    } else if (high_run_ >= params_.dwell) {
      cause = "error-threshold";
    }
    if (!cause.empty()) {
      mode_ = Mode::fallback;
      calm_run_ = 0;
      log_.push_back({step, time, mode_, cause});
    }
    return mode_;
  }

  const bool calm = in_range && ae < params_.theta_lo && std::abs(u_ai - u_fb) <= params_.agree_tol;
  calm_run_ = calm ? calm_run_ + 1 : 0;
  if (calm_run_ >= params_.dwell) {
    mode_ = Mode::ai;
    high_run_ = 0;
    calm_run_ = 0;
    log_.push_back({step, time, mode_, "recovered"});
  }
  return mode_;
}

Supervised supervise_step(SwitchSupervisor& sup, double u_ai, double u_fb, double e,
                          double u_min, double u_max, std::size_t step, double time) {
  const Mode m = sup.update(u_ai, u_fb, e, u_min, u_max, step, time);
  return {m == Mode::ai ? u_ai : u_fb, m};
}

void write_transitions_csv(std::ostream& os, const std::vector<Transition>& log) {
  os << "step,time,direction,cause\n";
  for (const auto& t : log) {
    os << t.step << ',' << nnet::format_double(t.time) << ',' << t.direction() << ',' << t.cause
       << '\n';
  }
}

SupervisedController::SupervisedController(std::unique_ptr<sim::Controller> ai,
                                           std::unique_ptr<control::PidController> fallback,
                                           SwitchParams params)
    : ai_(std::move(ai)), fb_(std::move(fallback)), sup_(params) {
  if (!ai_ || !fb_) throw Error(Errc::invalid_argument, "supervisor needs both controllers");
}

double SupervisedController::step(const sim::ControlContext& ctx) {
  const control::PidState before = fb_->state();
  double u_fb;
  try {
    u_fb = fb_->step(ctx);
  } catch (const Error& e) {
    if (e.code() != Errc::controller_fault) throw;
    throw Error(Errc::unrecoverable_fault, "fallback controller faulted", ctx.step);
  }
  double u_ai;
  try {
    u_ai = ai_->step(ctx);
  } catch (const Error& e) {
    if (e.code() != Errc::controller_fault) throw;
    u_ai = std::numeric_limits<double>::quiet_NaN();
  }

  const Mode prev = sup_.mode();
  const double err = ctx.w - ctx.y_meas[0];
  const Mode mode = sup_.update(u_ai, u_fb, err, ctx.u_min, ctx.u_max, ctx.step, ctx.t);

  if (prev == Mode::ai && mode == Mode::fallback && has_last_) {
    ramp_left_ = 0;
    try {
      fb_->set_state(before);
      fb_->sync(last_u_, ctx);
      u_fb = fb_->step(ctx);
    } catch (const Error& e) {
      if (e.code() != Errc::sync_impossible) throw;
      fb_->set_state(before);
      u_fb = fb_->step(ctx);
      ramp_left_ = sup_.params().dwell;
      ramp_rate_ = std::abs(u_fb - last_u_) / static_cast<double>(ramp_left_);
    }
  }
  last_fb_ = u_fb;

  double u = mode == Mode::ai ? u_ai : u_fb;
  if (mode == Mode::fallback && ramp_left_ > 0) {
    u = last_u_ + std::clamp(u_fb - last_u_, -ramp_rate_, ramp_rate_);
    --ramp_left_;
  } else if (mode == Mode::ai) {
    ramp_left_ = 0;
  }
  if (prev == Mode::ai && mode == Mode::fallback && has_last_) {
    jumps_.push_back(std::abs(u - last_u_));
  }
  last_u_ = u;
  has_last_ = true;
  return u;
}

void SupervisedController::reset() {
  ai_->reset();
  fb_->reset();
  sup_.reset();
  has_last_ = false;
  last_u_ = last_fb_ = 0.0;
  ramp_left_ = 0;
  jumps_.clear();
}

void SupervisedController::channel_values(std::vector<double>& out) const {
  out.push_back(sup_.mode() == Mode::ai ? 0.0 : 1.0);
  out.push_back(last_fb_);
}

// ---------------------------------------------------------------------------

BoundedBlender::BoundedBlender(std::vector<double> delta) : delta_(std::move(delta)) {
  if (delta_.empty()) throw Error(Errc::invalid_argument, "blender needs at least one channel");
  for (double d : delta_) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw Error(Errc::invalid_argument, "blend offset must be finite and >= 0");
    }
  }
}

double BoundedBlender::blend(double u_conv, double correction, double u_min, double u_max,
                             std::size_t channel, std::size_t step, double time) {
  if (channel >= delta_.size()) throw Error(Errc::dimension_mismatch, "blend channel out of range");
  if (!std::isfinite(u_conv)) {
    throw Error(Errc::unrecoverable_fault, "conventional controller output is not finite", step);
  }
  if (!std::isfinite(correction)) {
    absorbed_.push_back({step, time, channel});
    correction = 0.0;
  }
  const double d = delta_[channel];
  const double base = std::clamp(u_conv, u_min, u_max);
  double u = std::clamp(base + std::clamp(correction, -d, d), u_min, u_max);
  while (std::abs(u - base) > d) u = std::nextafter(u, base);
  return u;
}

double blend_step(BoundedBlender& b, double u_conv, double correction, double u_min,
                  double u_max) {
  return b.blend(u_conv, correction, u_min, u_max);
}

BlendedController::BlendedController(std::unique_ptr<sim::Controller> conventional,
                                     std::unique_ptr<sim::Controller> correction, double delta)
    : conv_(std::move(conventional)), corr_(std::move(correction)), blender_({delta}) {
  if (!conv_ || !corr_) throw Error(Errc::invalid_argument, "blender needs both controllers");
}

double BlendedController::step(const sim::ControlContext& ctx) {
  last_conv_ = std::clamp(conv_->step(ctx), ctx.u_min, ctx.u_max);
  double c;
  try {
    c = corr_->step(ctx);
  } catch (const Error& e) {
    if (e.code() != Errc::controller_fault) throw;
    c = std::numeric_limits<double>::quiet_NaN();
  }
  const double u = blender_.blend(last_conv_, c, ctx.u_min, ctx.u_max, 0, ctx.step, ctx.t);
  last_corr_ = u - last_conv_;
  return u;
}

void BlendedController::reset() {
  conv_->reset();
  corr_->reset();
  blender_.reset();
}

void BlendedController::channel_values(std::vector<double>& out) const {
  out.push_back(last_conv_);
  out.push_back(last_corr_);
}

double AdversarialOutput::next() {
  const double r = rng_.uniform();
  if (r < 0.1) return std::numeric_limits<double>::quiet_NaN();
  if (r < 0.15) return std::numeric_limits<double>::infinity();
  if (r < 0.2) return -std::numeric_limits<double>::infinity();
  if (r < 0.3) return rng_.uniform() < 0.5 ? -1e300 : 1e300;
  if (r < 0.35) return rng_.uniform() < 0.5 ? -std::numeric_limits<double>::denorm_min()
                                             : std::numeric_limits<double>::max();
  return rng_.uniform(-scale_, scale_);
}

}  // namespace clcs::safety
