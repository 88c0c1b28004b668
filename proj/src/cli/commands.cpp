#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <sstream>

#include "clcs/cli.hpp"
#include "clcs/error.hpp"
#include "clcs/metrics.hpp"

namespace clcs::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::size_t jobs = 1;
};

struct Paths {
  std::string data;
  std::vector<std::string> coverage;
  std::string surrogate;
  std::string model;
  std::string gains;
  std::vector<std::string> inputs;
  std::string labels;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot write " + p.string());
  return os;
}

void finish_out(std::ofstream& os, const fs::path& p) {
  os.flush();
  if (!os) throw Error(Errc::io_error, "write failed for " + p.string());
}

fs::path prepare_out(const Common& c) {
  fs::path dir(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create output directory " + c.out);
  return dir;
}

ExperimentConfig load(const Common& c) {
  if (c.config.empty()) throw Error(Errc::config_error, "--config is required");
  return load_config(c.config, c.seed);
}

void echo_config(const ExperimentConfig& cfg, const fs::path& dir) {
  const fs::path p = dir / "resolved_config.json";
  auto os = open_out(p);
  os << cfg.resolved.dump(2) << '\n';
  finish_out(os, p);
}

const sim::PlantModel& need_plant(const ExperimentConfig& cfg) {
  if (!cfg.plant) throw Error(Errc::config_error, "plant: section is required");
  return *cfg.plant;
}

std::vector<double> need_excitation(const ExperimentConfig& cfg) {
  if (!cfg.excitation) throw Error(Errc::config_error, "excitation: section is required");
  const auto& p = need_plant(cfg);
  try {
    return dataio::generate_excitation(*cfg.excitation, cfg.sim, p.u_min, p.u_max);
  } catch (const Error& e) {
    throw Error(Errc::config_error, std::string("excitation: ") + e.what());
  }
}

/// Adds a fixed dither sequence to another controller's output.
class Dithered final : public sim::Controller {
 public:
  Dithered(std::unique_ptr<sim::Controller> inner, std::vector<double> dither)
      : inner_(std::move(inner)), dither_(std::move(dither)) {}
  double step(const sim::ControlContext& ctx) override {
    const double d = ctx.step < dither_.size() ? dither_[ctx.step] : 0.0;
    return inner_->step(ctx) + d;
  }
  void reset() override { inner_->reset(); }
  std::vector<std::string> channel_names() const override { return inner_->channel_names(); }
  void channel_values(std::vector<double>& out) const override { inner_->channel_values(out); }

 private:
  std::unique_ptr<sim::Controller> inner_;
  std::vector<double> dither_;
};

std::unique_ptr<sim::Controller> make_controller(const ExperimentConfig& cfg,
                                                 const ControllerConfig& cc) {
  if (cc.kind == "open-loop") return std::make_unique<sim::OpenLoop>(need_excitation(cfg));
  if (cc.kind == "relay") return std::make_unique<sim::Relay>(cc.relay_h);
  if (cc.kind == "constant") return std::make_unique<safety::ConstantOutput>(cc.constant);
  if (cc.kind == "pid") return std::make_unique<control::PidController>(cc.pid);
  if (cc.kind == "cascade") return std::make_unique<control::CascadeController>(cc.cascade);
  if (cc.model_path.empty()) {
    throw Error(Errc::config_error, "controller.model_path: required for kind " + cc.kind);
  }
  if (cc.kind == "neural") {
    return std::make_unique<neuro::NeuralController>(neuro::load_controller(cc.model_path));
  }
  auto [gs, base] = neuro::load_scheduler(cc.model_path);
  return std::make_unique<neuro::ScheduledPidController>(std::move(gs), base);
}

void write_plot(const fs::path& p, const sim::Trajectory& tr) {
  auto os = open_out(p);
  os << "t,w,y,u\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << nnet::format_double(tr.t[k]) << ',' << nnet::format_double(tr.w[k]) << ','
       << nnet::format_double(tr.y[k]) << ',' << nnet::format_double(tr.u[k]) << '\n';
  }
  finish_out(os, p);
}

void write_history(const fs::path& p, const nnet::TrainHistory& h) {
  auto os = open_out(p);
  os << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < h.train_loss.size(); ++i) {
    os << i << ',' << nnet::format_double(h.train_loss[i]) << ','
       << nnet::format_double(i < h.val_loss.size() ? h.val_loss[i] : 0.0) << '\n';
  }
  finish_out(os, p);
}

// ---------------------------------------------------------------------------

int cmd_record(const Common& c, std::ostream& out) {
  ExperimentConfig cfg = load(c);
  const auto& plant = need_plant(cfg);
  const std::vector<double> exc = need_excitation(cfg);
  std::unique_ptr<sim::Controller> ctrl;
  if (cfg.controller.kind == "open-loop") {
    ctrl = std::make_unique<sim::OpenLoop>(exc);
  } else {
    ctrl = std::make_unique<Dithered>(make_controller(cfg, cfg.controller), exc);
  }
  const fs::path dir = prepare_out(c);
  const sim::Trajectory tr =
      sim::simulate(plant, *ctrl, cfg.reference, cfg.disturbance, cfg.sensor, cfg.sim);
  dataio::write_timeseries((dir / "recording.csv").string(), tr);
  echo_config(cfg, dir);
  out << "recorded " << tr.size() << " samples to " << (dir / "recording.csv").string() << '\n';
  return 0;
}

int cmd_fit(const Common& c, const Paths& paths, std::ostream& out) {
  ExperimentConfig cfg = load(c);
  if (paths.data.empty()) throw Error(Errc::config_error, "--data is required");
  sim::Trajectory tr = dataio::read_timeseries(paths.data);
  bool resampled = false;
  if (tr.dt <= 0.0) {
    double step = cfg.resample_dt;
    if (step <= 0.0) {
      std::vector<double> d;
      for (std::size_t i = 1; i < tr.size(); ++i) d.push_back(tr.t[i] - tr.t[i - 1]);
      if (d.empty()) throw Error(Errc::too_short, "data has fewer than two samples");
      std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
      step = d[d.size() / 2];
    }
    tr = dataio::resample_uniform(tr, step);
    resampled = true;
  }
  const fs::path dir = prepare_out(c);
  surrogate::FitResult fit = surrogate::fit_surrogate(tr, cfg.surrogate);
  fit.report.resampled = resampled;
  surrogate::save_narx((dir / "surrogate.narx").string(), fit.model);
  surrogate::write_report_csv((dir / "surrogate_report.csv").string(), fit.report);
  write_history(dir / "training_curve.csv", fit.report.history);
  echo_config(cfg, dir);
  const auto& r = fit.report;
  out << "one_step_rmse " << nnet::format_double(r.one_step_rmse) << '\n'
      << "rollout_rmse " << nnet::format_double(r.rollout_rmse) << " (" << r.rollout_steps
      << " steps)\n"
      << "output_range " << nnet::format_double(r.output_range) << '\n'
      << "input_delay " << r.input_delay << '\n'
      << "resampled " << (resampled ? "yes" : "no") << '\n';
  return 0;
}

control::PidGains base_gains(const ExperimentConfig& cfg) {
  control::PidGains g = cfg.controller.pid;
  return g;
}

int cmd_tune(const Common& c, const Paths& paths, std::ostream& out) {
  ExperimentConfig cfg = load(c);
  const TuningConfig& tc = cfg.tuning;
  const control::PidGains base = base_gains(cfg);
  control::PidGains g = base;
  const fs::path dir = prepare_out(c);
  std::ostringstream report;

  if (tc.method == "ai") {
    if (paths.surrogate.empty()) throw Error(Errc::config_error, "--surrogate is required for ai tuning");
    const surrogate::NarxModel model = surrogate::load_narx(paths.surrogate);
    const neuro::StaticTuneResult res = neuro::tune_static_ai(model, tc.episodes, base, tc.ai);
    g = res.gains;
    auto os = open_out(dir / "tune_trace.csv");
    os << "evaluation,best_cost\n";
    for (std::size_t i = 0; i < res.cost_trace.size(); ++i) {
      os << i + 1 << ',' << nnet::format_double(res.cost_trace[i]) << '\n';
    }
    finish_out(os, dir / "tune_trace.csv");
    report << "method,evaluations,cost\nai," << res.evaluations << ','
           << nnet::format_double(res.cost) << '\n';
  } else if (tc.rule == "ziegler-nichols") {
    if (tc.experiment != "relay") {
      throw Error(Errc::config_error, "tuning.experiment: ziegler-nichols needs a relay experiment");
    }
    const ident::RelayResult rr =
        ident::relay_experiment(need_plant(cfg), tc.relay_h, {tc.relay_dt, tc.relay_horizon, 0});
    const ident::ZnKind kind =
        tc.zn_kind == "P" ? ident::ZnKind::P : tc.zn_kind == "PI" ? ident::ZnKind::PI : ident::ZnKind::PID;
    const control::PidGains r = ident::tune_ziegler_nichols(rr.ultimate, kind);
    g.kp = r.kp;
    g.ki = r.ki;
    g.kd = r.kd;
    report << "method,Ku,Pu,cycles\nziegler-nichols," << nnet::format_double(rr.ultimate.Ku) << ','
           << nnet::format_double(rr.ultimate.Pu) << ',' << rr.cycles << '\n';
  } else {
    ident::FopdtModel m = tc.model;
    if (tc.experiment == "step") {
      const sim::Trajectory st =
          ident::step_test(need_plant(cfg), tc.step_amplitude, {cfg.sim.dt, tc.step_horizon, 0});
      m = ident::identify_fopdt_step(st);
    } else if (tc.experiment == "relay") {
      throw Error(Errc::config_error, "tuning.experiment: " + tc.rule + " needs a step or model");
    }
    const control::PidGains r =
        tc.rule == "cohen-coon" ? ident::tune_cohen_coon(m) : ident::tune_kappa_tau(m);
    g.kp = r.kp;
    g.ki = r.ki;
    g.kd = r.kd;
    report << "method,K,tau,L\n" << tc.rule << ',' << nnet::format_double(m.K) << ','
           << nnet::format_double(m.tau) << ',' << nnet::format_double(m.L) << '\n';
  }

  save_gains((dir / "gains.json").string(), g);
  {
    auto os = open_out(dir / "tune_report.csv");
    os << report.str();
    finish_out(os, dir / "tune_report.csv");
  }
  echo_config(cfg, dir);
  out << "kp " << nnet::format_double(g.kp) << "\nki " << nnet::format_double(g.ki) << "\nkd "
      << nnet::format_double(g.kd) << '\n';
  return 0;
}

std::vector<neuro::BpttEpisode> bptt_episodes(const ExperimentConfig& cfg, double dt) {
  const TrainingConfig& tr = cfg.training;
  std::vector<std::vector<double>> gains{{}};
  if (cfg.plant && !cfg.plant->gain_steps.empty()) {
    std::vector<double> g(tr.horizon);
    for (std::size_t k = 0; k < tr.horizon; ++k) g[k] = cfg.plant->input_gain(k * dt);
    gains.push_back(std::move(g));
  }
  std::vector<neuro::BpttEpisode> eps;
  for (double a : tr.amplitudes) {
    for (const auto& g : gains) {
      neuro::BpttEpisode ep;
      ep.w.resize(tr.horizon);
      for (std::size_t k = 0; k < tr.horizon; ++k) ep.w[k] = a * cfg.reference.at(k * dt);
      ep.gain = g;
      eps.push_back(std::move(ep));
    }
  }
  return eps;
}

int cmd_train(const Common& c, const Paths& paths, std::ostream& out) {
  ExperimentConfig cfg = load(c);
  const TrainingConfig& tr = cfg.training;
  const fs::path dir = prepare_out(c);

  if (tr.mode == "imitation") {
    const auto& plant = need_plant(cfg);
    control::PidGains teacher = cfg.controller.pid;
    if (!paths.gains.empty()) teacher = load_gains(paths.gains, teacher);
    if (cfg.controller.kind != "pid" && paths.gains.empty()) {
      throw Error(Errc::config_error, "controller.kind: imitation needs a pid teacher");
    }
    if (!std::isfinite(teacher.u_min) || !std::isfinite(teacher.u_max)) {
      throw Error(Errc::config_error, "controller: the teacher needs finite u_min and u_max");
    }
    const double dt = cfg.sim.dt;
    neuro::DualDatasetMix mix;
    mix.lambda = tr.lambda;
    const std::uint64_t seed = tr.train.seed;
    if (!paths.coverage.empty()) {
      for (const auto& p : paths.coverage) mix.a.push_back(dataio::read_timeseries(p));
    } else {
      Rng rng(Rng::derive(seed, 1));
      sim::ProfileReference pr;
      const auto levels = static_cast<std::size_t>(tr.coverage_horizon / tr.coverage_dwell);
      for (std::size_t i = 0; i < levels; ++i) {
        pr.t.push_back(static_cast<double>(i) * tr.coverage_dwell);
        pr.w.push_back(rng.uniform(-tr.coverage_level, tr.coverage_level));
      }
      control::PidController pid(teacher);
      mix.a.push_back(sim::simulate(plant, pid, {pr}, cfg.disturbance, cfg.sensor,
                                    {dt, tr.coverage_horizon, Rng::derive(seed, 2)}));
    }
    if (!paths.data.empty()) {
      mix.b.push_back(dataio::read_timeseries(paths.data));
    } else {
      const auto first = static_cast<std::size_t>(std::max(0.0, std::round((tr.settle - 1.0) / dt)));
      std::uint64_t stream = 3;
      for (double s0 : tr.start_levels) {
        for (double a : tr.step_levels) {
          control::PidController pid(teacher);
          sim::ProfileReference pr{{0.0, tr.settle}, {s0, s0 + a}};
          const sim::Trajectory run =
              sim::simulate(plant, pid, {pr}, cfg.disturbance, cfg.sensor,
                            {dt, tr.settle + tr.step_horizon, Rng::derive(seed, stream++)});
          mix.b.push_back(dataio::slice(run, std::min(first, run.size() - 1), run.size()));
        }
      }
    }
    neuro::NeuralController nc =
        neuro::NeuralController::make(tr.hidden, tr.history, teacher.u_min, teacher.u_max, seed);
    neuro::ImitationOptions io;
    io.train = tr.train;
    io.beta = tr.beta;
    io.val_fraction = tr.val_fraction;
    const neuro::ImitationReport rep = neuro::train_imitation(nc, mix, io);
    json meta = {{"mode", "imitation"},
                 {"val_rmse_a", rep.val_rmse_a},
                 {"val_rmse_b", rep.val_rmse_b},
                 {"best_epoch", rep.history.best_epoch}};
    if (nc.aux()) meta["aux_val_rmse"] = rep.aux_val_rmse;
    neuro::save_controller((dir / "controller.mlp").string(), nc, meta.dump());
    write_history(dir / "training_curve.csv", rep.history);
    echo_config(cfg, dir);
    out << "held-out RMSE A " << nnet::format_double(rep.val_rmse_a) << '\n'
        << "held-out RMSE B " << nnet::format_double(rep.val_rmse_b) << '\n';
    if (nc.aux()) out << "disturbance head RMSE " << nnet::format_double(rep.aux_val_rmse) << '\n';
    return 0;
  }

  if (paths.surrogate.empty()) throw Error(Errc::config_error, "--surrogate is required for bptt");
  const surrogate::NarxModel model = surrogate::load_narx(paths.surrogate);
  const std::vector<neuro::BpttEpisode> eps = bptt_episodes(cfg, model.dt);
  neuro::BpttOptions bo;
  bo.train = tr.train;
  bo.rho = tr.rho;
  bo.clip = tr.clip;
  bo.max_horizon = tr.horizon;
  neuro::BpttReport rep;
  if (tr.target == "neural") {
    control::PidGains lim = cfg.controller.pid;
    if (!std::isfinite(lim.u_min) || !std::isfinite(lim.u_max)) {
      throw Error(Errc::config_error, "plant.limits: a neural controller needs finite limits");
    }
    neuro::NeuralController nc =
        neuro::NeuralController::make(tr.hidden, tr.history, lim.u_min, lim.u_max, tr.train.seed);
    neuro::default_feature_norm(nc, eps);
    rep = neuro::train_bptt(nc, model, eps, bo);
    neuro::save_controller((dir / "controller.mlp").string(), nc,
                           json({{"mode", "bptt"}, {"skipped", rep.skipped}}).dump());
  } else {
    control::PidGains base = cfg.controller.pid;
    if (!paths.gains.empty()) base = load_gains(paths.gains, base);
    neuro::GainScheduler gs =
        neuro::GainScheduler::make(tr.hidden, tr.bounds, tr.train.seed, tr.window);
    neuro::default_feature_norm(gs, eps);
    rep = neuro::train_bptt(gs, base, model, eps, bo);
    neuro::save_scheduler((dir / "scheduler.mlp").string(), gs, base);
  }
  {
    const fs::path p = dir / "training_curve.csv";
    auto os = open_out(p);
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < rep.loss_history.size(); ++i) {
      os << i + 1 << ',' << nnet::format_double(rep.loss_history[i]) << '\n';
    }
    finish_out(os, p);
  }
  echo_config(cfg, dir);
  out << "bptt epochs " << rep.loss_history.size() << ", skipped episodes " << rep.skipped << '\n';
  if (!rep.loss_history.empty()) {
    out << "final loss " << nnet::format_double(rep.loss_history.back()) << '\n';
  }
  return 0;
}

int cmd_simulate(const Common& c, const Paths& paths, std::ostream& out) {
  ExperimentConfig cfg = load(c);
  const auto& plant = need_plant(cfg);
  ControllerConfig cc = cfg.controller;
  if (!paths.model.empty()) cc.model_path = paths.model;
  const bool pid_kind = cc.kind == "pid";
  if (!paths.gains.empty() && pid_kind) cc.pid = load_gains(paths.gains, cc.pid);
  control::PidGains fallback = cfg.safety.fallback;
  if (!paths.gains.empty() && !pid_kind) fallback = load_gains(paths.gains, fallback);

  std::unique_ptr<sim::Controller> ctrl = make_controller(cfg, cc);
  safety::SupervisedController* sup = nullptr;
  safety::BlendedController* blend = nullptr;
  if (cfg.safety.kind == "switch") {
    auto s = std::make_unique<safety::SupervisedController>(
        std::move(ctrl), std::make_unique<control::PidController>(fallback),
        cfg.safety.switch_params);
    sup = s.get();
    ctrl = std::move(s);
  } else if (cfg.safety.kind == "blend") {
    std::unique_ptr<sim::Controller> corr;
    if (cfg.safety.correction == "adversarial") {
      corr = std::make_unique<safety::AdversarialOutput>(cfg.safety.correction_scale,
                                                         cfg.safety.correction_seed);
    } else if (cfg.safety.correction == "constant") {
      corr = std::make_unique<safety::ConstantOutput>(cfg.safety.correction_constant);
    } else {
      if (cfg.safety.correction_model.empty()) {
        throw Error(Errc::config_error, "safety.model_path: required for a neural correction");
      }
      corr = std::make_unique<neuro::NeuralController>(
          neuro::load_controller(cfg.safety.correction_model));
    }
    auto b = std::make_unique<safety::BlendedController>(std::move(ctrl), std::move(corr),
                                                         cfg.safety.delta);
    blend = b.get();
    ctrl = std::move(b);
  }

  const fs::path dir = prepare_out(c);
  const sim::Trajectory tr =
      sim::simulate(plant, *ctrl, cfg.reference, cfg.disturbance, cfg.sensor, cfg.sim);
  dataio::write_timeseries((dir / "trajectory.csv").string(), tr);
  const metrics::StepMetrics m = metrics::compute_step_metrics(tr);
  {
    const fs::path p = dir / "metrics.csv";
    auto os = open_out(p);
    metrics::write_metrics_csv(os, m);
    finish_out(os, p);
  }
  if (sup) {
    const fs::path p = dir / "transitions.csv";
    auto os = open_out(p);
    safety::write_transitions_csv(os, sup->supervisor().log());
    finish_out(os, p);
  }
  write_plot(dir / "plot.csv", tr);
  echo_config(cfg, dir);
  out << "samples " << tr.size() << "\nIAE " << nnet::format_double(m.iae) << "\nsettled "
      << (m.settled ? "yes" : "no") << '\n';
  if (sup) out << "transitions " << sup->supervisor().log().size() << '\n';
  if (blend) out << "absorbed corrections " << blend->blender().absorbed().size() << '\n';
  return 0;
}

int cmd_compare(const Common& c, const Paths& paths, std::ostream& out) {
  if (paths.inputs.empty()) throw Error(Errc::config_error, "compare needs trajectory files");
  std::vector<std::string> labels;
  if (!paths.labels.empty()) {
    std::stringstream ss(paths.labels);
    std::string l;
    while (std::getline(ss, l, ',')) labels.push_back(l);
    if (labels.size() != paths.inputs.size()) {
      throw Error(Errc::config_error, "--labels needs one label per trajectory file");
    }
  } else {
    for (const auto& p : paths.inputs) labels.push_back(fs::path(p).stem().string());
  }
  const std::size_t n = paths.inputs.size();
  std::vector<metrics::LabeledTrajectory> entries(n);
  const std::size_t jobs = std::max<std::size_t>(1, std::min(c.jobs, n));
  for (std::size_t start = 0; start < n; start += jobs) {
    std::vector<std::future<sim::Trajectory>> batch;
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&paths, i] { return dataio::read_timeseries(paths.inputs[i]); }));
    }
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i) {
      entries[i] = {labels[i], batch[i - start].get()};
    }
  }
  const auto rows = metrics::compare(entries);
  const fs::path dir = prepare_out(c);
  const fs::path p = dir / "comparison.csv";
  auto os = open_out(p);
  metrics::write_comparison_csv(os, rows);
  finish_out(os, p);
  metrics::write_comparison_table(out, rows);
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
  if (with_config) sub->add_option("--config", c.config, "Experiment config (JSON)")->required();
  sub->add_option("--seed", c.seed, "Overrides sim.seed and every derived seed");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--jobs", c.jobs, "Parallel workers")->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"clcs: closed-loop control workbench"};
  app.require_subcommand(1);
  Common common;
  Paths paths;

  auto* record = app.add_subcommand("record", "Run the plant under excitation and record data");
  add_common(record, common);
  auto* fit = app.add_subcommand("fit-surrogate", "Fit a NARX surrogate to recorded data");
  add_common(fit, common);
  fit->add_option("--data", paths.data, "Recorded time series CSV")->required();
  auto* tune = app.add_subcommand("tune", "Tune PID gains by rule or by surrogate search");
  add_common(tune, common);
  tune->add_option("--surrogate", paths.surrogate, "Surrogate model for ai tuning");
  auto* train = app.add_subcommand("train-controller", "Train a neural controller or scheduler");
  add_common(train, common);
  train->add_option("--data", paths.data, "Operational teacher run (dataset B)");
  train->add_option("--coverage", paths.coverage, "Coverage teacher runs (dataset A)");
  train->add_option("--surrogate", paths.surrogate, "Surrogate model for BPTT");
  train->add_option("--gains", paths.gains, "Gains file for the teacher or scheduler base");
  auto* simulate = app.add_subcommand("simulate", "Closed-loop run with the configured controller");
  add_common(simulate, common);
  simulate->add_option("--model", paths.model, "Neural controller or scheduler model");
  simulate->add_option("--gains", paths.gains, "Gains file for the PID");
  auto* compare = app.add_subcommand("compare", "Compare trajectories by step metrics");
  add_common(compare, common, false);
  compare->add_option("trajectories", paths.inputs, "Trajectory CSV files")->required();
  compare->add_option("--labels", paths.labels, "Comma-separated labels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (record->parsed()) return cmd_record(common, out);
    if (fit->parsed()) return cmd_fit(common, paths, out);
    if (tune->parsed()) return cmd_tune(common, paths, out);
    if (train->parsed()) return cmd_train(common, paths, out);
    if (simulate->parsed()) return cmd_simulate(common, paths, out);
    if (compare->parsed()) return cmd_compare(common, paths, out);
  } catch (const Error& e) {
    err << "error: " << e.what();
    if (e.index() && (e.code() == Errc::parse_error || e.code() == Errc::schema_error ||
                      e.code() == Errc::monotonicity_error)) {
      err << " (line " << *e.index() << ")";
    }
    err << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: io-error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace clcs::cli
