#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "clcs/cli.hpp"
#include "clcs/dataio.hpp"
#include "clcs/error.hpp"
#include "clcs/ident.hpp"
#include "clcs/metrics.hpp"
#include "clcs/neuro.hpp"
#include "clcs/nnet.hpp"
#include "clcs/pid.hpp"
#include "clcs/rng.hpp"
#include "clcs/safety.hpp"
#include "clcs/sim.hpp"
#include "clcs/surrogate.hpp"

namespace fs = std::filesystem;
using namespace clcs;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <class... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Phase crossover of K e^{-Ls}/(tau s + 1) by bisection on the phase.
ident::UltimateParams phase_crossover(double K, double tau, double L) {
  double lo = 1e-6, hi = 100.0 / L;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * L + std::atan(mid * tau) < std::numbers::pi ? lo : hi) = mid;
  }
  const double w = 0.5 * (lo + hi);
  return {std::sqrt(1.0 + w * w * tau * tau) / K, 2.0 * std::numbers::pi / w};
}

control::PidGains zn_gains(double u_min, double u_max) {
  const auto relay =
      ident::relay_experiment(sim::make_fopdt(1, 1, 0.5, u_min, u_max), 1.0, {0.001, 40.0, 0});
  auto g = ident::tune_ziegler_nichols(relay.ultimate, ident::ZnKind::PID);
  g.u_min = u_min;
  g.u_max = u_max;
  return g;
}

sim::Trajectory prbs_record(double limit, double amplitude) {
  const auto plant = sim::make_fopdt(1, 1, 0.5, -limit, limit);
  const sim::SimConfig cfg{0.1, 300.0, 7};
  const dataio::ExcitationSpec ex{dataio::Prbs{9, amplitude, 0.5, 3}, 0.0};
  sim::OpenLoop ol(dataio::generate_excitation(ex, cfg, -limit, limit));
  return sim::simulate(plant, ol, {sim::StepReference{0, 0, 0}}, {}, {}, cfg);
}

surrogate::FitResult fit_fopdt_surrogate(double limit, double amplitude) {
  surrogate::FitOptions fo;
  fo.input_delay = -1;
  fo.train.max_epochs = 100;
  fo.train.learning_rate = 3e-3;
  fo.train.patience = 0;
  return surrogate::fit_surrogate(prbs_record(limit, amplitude), fo);
}

double max_rel_grad_error(std::span<double> params, std::span<const double> analytic,
                          const std::function<double()>& loss) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double lp = loss();
    params[i] = keep - h;
    const double lm = loss();
    params[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  double worst = 0.0;
  const auto check = [&](const control::PidGains& g, double kp, double Ti, double Td) {
    worst = std::max(worst, rel(g.kp, kp));
    if (std::isfinite(Ti)) worst = std::max(worst, rel(g.ki, kp / Ti));
    else worst = std::max(worst, std::abs(g.ki));
    if (Td > 0) worst = std::max(worst, rel(g.kd, kp * Td));
    else worst = std::max(worst, std::abs(g.kd));
  };
  for (double Ku : {0.5, 1.0, 3.81, 12.0}) {
    for (double Pu : {0.3, 1.71, 5.0}) {
      check(ident::tune_ziegler_nichols({Ku, Pu}, ident::ZnKind::P), Ku / 2, INFINITY, 0.0);
      check(ident::tune_ziegler_nichols({Ku, Pu}, ident::ZnKind::PI), 0.45 * Ku, Pu / 1.2, 0.0);
      check(ident::tune_ziegler_nichols({Ku, Pu}, ident::ZnKind::PID), 0.6 * Ku, Pu / 2, Pu / 8);
    }
  }
  for (double K : {0.5, 1.0, 2.0}) {
    for (double tau : {0.5, 1.0, 2.0}) {
      for (double L : {0.1, 0.5, 1.0}) {
        const double a = K * L / tau, T = L / (L + tau);
        check(ident::tune_cohen_coon({K, tau, L}), (1 / a) * (4.0 / 3.0 + T / (4 * (1 - T))),
              L * (32 * tau + 6 * L) / (13 * tau + 8 * L), 4 * L * tau / (11 * tau + 2 * L));
        check(ident::tune_kappa_tau({K, tau, L}), 0.2 / K + 0.45 * tau / (K * L),
              (0.4 * L + 0.8 * tau) / (L + 0.1 * tau) * L, 0.5 * L * tau / (0.3 * L + tau));
      }
    }
  }
  const auto cc = ident::tune_cohen_coon({1, 1, 0.5});
  const bool example = std::abs(cc.kp - 2.916667) < 1e-6 && std::abs(cc.Ti() - 1.029412) < 1e-6 &&
                       std::abs(cc.Td() - 0.166667) < 1e-6;
  return {worst < 1e-9 && example,
          fmt("max rel error %.2e; CC(1,1,0.5) kp %.6f Ti %.6f Td %.6f", worst, cc.kp, cc.Ti(),
              cc.Td())};
}

Outcome ac2() {
  const auto tr = ident::step_test(sim::make_fopdt(1, 2, 1), 1.0, {0.01, 30.0, 0});
  const auto m = ident::identify_fopdt_step(tr);
  const bool id_ok = rel(m.K, 1) < 0.05 && rel(m.tau, 2) < 0.05 && rel(m.L, 1) < 0.05;
  const auto relay = ident::relay_experiment(sim::make_fopdt(1, 1, 0.5), 1.0, {0.001, 40.0, 0});
  const auto oracle = phase_crossover(1, 1, 0.5);
  const double Ku = relay.ultimate.Ku, Pu = relay.ultimate.Pu;
  const bool relay_ok = rel(Ku, 3.81) < 0.10 && rel(Pu, 1.71) < 0.10 && rel(Ku, oracle.Ku) < 0.10 &&
                        rel(Pu, oracle.Pu) < 0.10;
  return {id_ok && relay_ok,
          fmt("K %.4f tau %.4f L %.4f; Ku %.3f (oracle %.3f) Pu %.3f (oracle %.3f)", m.K, m.tau,
              m.L, Ku, oracle.Ku, Pu, oracle.Pu)};
}

Outcome ac3() {
  const auto err = [](double dt) {
    double y = 1.0;
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < n; ++k) y = sim::rk4_step(y, 0.0, dt, [](double x, double) { return -x; });
    return std::abs(y - std::exp(-1.0));
  };
  const double ratio = err(0.1) / err(0.05);
  return {ratio >= 14.0, fmt("error ratio %.2f", ratio)};
}

Outcome ac4() {
  double worst_mlp = 0.0;
  const std::vector<std::vector<std::size_t>> archs{{3, 5, 2}, {4, 8, 6, 1}, {2, 16, 3}};
  for (const auto& sizes : archs) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto net = nnet::Mlp::random(sizes, seed);
      Rng rng(seed + 100);
      for (double& b : net.parameters()) b += rng.uniform(-0.1, 0.1);
      nnet::Matrix x(7, sizes.front()), y(7, sizes.back());
      for (double& v : x.data) v = rng.uniform(-1.5, 1.5);
      for (double& v : y.data) v = rng.uniform(-1, 1);
      const auto lg = nnet::mse_grad(net, x, y);
      worst_mlp = std::max(worst_mlp, max_rel_grad_error(net.parameters(), lg.grad, [&] {
                             return nnet::mse(net, x, y);
                           }));
    }
  }
  double worst_bptt = 0.0;
  const std::vector<std::vector<std::size_t>> ctl{{4}, {6, 3}, {8}};
  for (const auto& hidden : ctl) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      surrogate::NarxModel m{nnet::Mlp::random({4, 3, 1}, seed + 10), 2, 2, 0, 0.1, {}, {}};
      m.input_norm = nnet::Normalizer::identity(4);
      m.target_norm = nnet::Normalizer::identity(1);
      auto nc = neuro::NeuralController::make(hidden, 2, -2.0, 2.0, seed);
      const neuro::BpttEpisode ep{{0.3, 0.8, -0.2}, {1.0, 1.0, 1.5}, {}};
      neuro::default_feature_norm(nc, {ep});
      const auto lg = neuro::bptt_loss_grad(nc, m, ep, 0.05);
      worst_bptt = std::max(worst_bptt, max_rel_grad_error(nc.net().parameters(), lg.grad, [&] {
                              return neuro::bptt_loss(nc, m, ep, 0.05);
                            }));
    }
  }
  return {worst_mlp < 1e-4 && worst_bptt < 1e-4,
          fmt("max rel error mlp %.2e, bptt %.2e", worst_mlp, worst_bptt)};
}

Outcome ac5() {
  surrogate::FitOptions fo;
  fo.input_delay = -1;
  fo.train.max_epochs = 100;
  fo.train.learning_rate = 3e-3;
  fo.train.patience = 0;
  const auto fit = surrogate::fit_surrogate(prbs_record(2.0, 1.0), fo);
  const auto& r = fit.report;
  const double one = r.one_step_rmse / r.output_range, roll = r.rollout_rmse / r.output_range;
  return {one < 0.01 && roll < 0.05 && r.rollout_steps == 50,
          fmt("one-step %.3f%%, 50-step rollout %.3f%% of range", 100 * one, 100 * roll)};
}

Outcome ac6() {
  const auto fit = fit_fopdt_surrogate(3.0, 2.5);
  const auto zn = zn_gains(-3, 3);
  const std::vector<neuro::Episode> eps{{{sim::StepReference{1.0, 0.0, 1.0}}, {}, 20.0, {}}};
  neuro::StaticTuneOptions so;
  so.budget = 500;
  so.seed = 11;
  so.bounds = {{0, 5}, {0, 5}, {0, 2}};
  const auto res = neuro::tune_static_ai(fit.model, eps, zn, so);
  const auto plant = sim::make_fopdt(1, 1, 0.5, -3, 3);
  const auto iae = [&](const control::PidGains& g) {
    control::PidController c(g);
    return metrics::iae(sim::simulate(plant, c, eps[0].reference, {}, {}, {0.1, 20.0, 0}));
  };
  const double a = iae(res.gains), z = iae(zn);
  return {res.evaluations <= 500 && a <= 1.1 * z,
          fmt("IAE ai %.4f vs ZN %.4f (ratio %.3f, %zu evaluations)", a, z, a / z,
              res.evaluations)};
}

Outcome ac7() {
  const double dt = 0.1;
  const auto plant = sim::make_fopdt(1, 1, 0.5, -10, 10);
  const auto zn = zn_gains(-10, 10);
  neuro::DualDatasetMix mix;
  mix.lambda = 0.5;
  {
    Rng rng(5);
    sim::ProfileReference pr;
    for (int i = 0; i < 100; ++i) {
      pr.t.push_back(i * 3.0);
      pr.w.push_back(rng.uniform(-1.5, 1.5));
    }
    control::PidController c(zn);
    mix.a.push_back(sim::simulate(plant, c, {pr}, {}, {}, {dt, 300.0, 1}));
  }
  for (double s0 : {0.0, 0.5, -0.5}) {
    for (double a : {0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, -0.3, -0.6, -0.9, -1.2}) {
      control::PidController c(zn);
      const auto tr = sim::simulate(plant, c, {sim::ProfileReference{{0.0, 10.0}, {s0, s0 + a}}},
                                    {}, {}, {dt, 25.0, 1});
      mix.b.push_back(dataio::slice(tr, 90, tr.size()));
    }
  }
  auto nc = neuro::NeuralController::make({32, 16}, 4, -10, 10, 42);
  neuro::ImitationOptions io;
  io.beta = 0.0;
  io.train.seed = 42;
  io.train.max_epochs = 3000;
  io.train.learning_rate = 2e-3;
  io.train.final_learning_rate = 1e-5;
  io.train.patience = 0;
  io.train.batch_size = 32;
  neuro::train_imitation(nc, mix, io);

  const sim::ReferenceSpec ref{sim::StepReference{1.0, 0.0, 1.0}};
  control::PidController teacher(zn);
  const auto tp = sim::simulate(plant, teacher, ref, {}, {}, {dt, 15.0, 1});
  nc.reset();
  const auto tn = sim::simulate(plant, nc, ref, {}, {}, {dt, 15.0, 1});
  double worst = 0.0;
  for (std::size_t k = 0; k < tp.size(); ++k) worst = std::max(worst, std::abs(tp.y[k] - tn.y[k]));
  return {worst < 0.02, fmt("max |y_nn - y_pid| %.4f (bound 0.02)", worst)};
}

Outcome ac8() {
  const double lo = -3, hi = 3;
  const auto plant = sim::make_fopdt(1, 1, 0.5, lo, hi);
  const sim::ReferenceSpec ref{sim::StepReference{0.0, 0.0, 1.0}};
  const sim::SimConfig cfg{0.01, 40.0, 0};
  safety::SwitchParams sp;
  sp.theta_hi = 0.2;
  sp.theta_lo = 0.1;
  sp.dwell = 5;
  sp.agree_tol = 0.05 * (hi - lo);
  safety::SupervisedController sc(std::make_unique<safety::ConstantOutput>(hi),
                                  std::make_unique<control::PidController>(zn_gains(lo, hi)), sp);
  const auto guarded = sim::simulate(plant, sc, ref, {}, {}, cfg);
  safety::ConstantOutput bare_ctl(hi);
  const auto bare = sim::simulate(plant, bare_ctl, ref, {}, {}, cfg);
  const auto mg = metrics::compute_step_metrics(guarded);
  const auto mb = metrics::compute_step_metrics(bare);
  std::size_t to_fb = 0;
  for (const auto& t : sc.supervisor().log()) to_fb += t.to == safety::Mode::fallback;
  double jump = 0.0;
  for (double j : sc.handover_jumps()) jump = std::max(jump, j);
  return {mg.settled && !mb.settled && to_fb >= 1 && jump <= 1e-6,
          fmt("supervised settles at %.2f s, bare settled=%d, %zu FALLBACK entries, max handover "
              "jump %.1e",
              mg.settling_time, static_cast<int>(mb.settled), to_fb, jump)};
}

Outcome ac9() {
  const double delta = 0.1;
  safety::BlendedController bc(std::make_unique<control::PidController>(zn_gains(-3, 3)),
                               std::make_unique<safety::AdversarialOutput>(1.0, 9), delta);
  const auto tr = sim::simulate(sim::make_fopdt(1, 1, 0.5, -3, 3), bc,
                                {sim::StepReference{0.0, 0.0, 1.0}}, {}, {}, {0.01, 1000.0, 0});
  const auto* conv = tr.column("u_conv");
  if (!conv) return {false, "u_conv column missing"};
  std::size_t violations = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double d = std::abs(tr.u[k] - (*conv)[k]);
    worst = std::max(worst, d);
    violations += !(d <= delta);
  }
  return {tr.size() >= 100000 && violations == 0,
          fmt("%zu steps, %zu absorbed non-finite corrections, max |u - u_conv| %.17g, %zu "
              "violations",
              tr.size(), bc.blender().absorbed().size(), worst, violations)};
}

Outcome ac10() {
  const double dt = 0.1;
  const auto fit = fit_fopdt_surrogate(3.0, 2.5);
  const auto zn = zn_gains(-3, 3);
  std::vector<neuro::BpttEpisode> eps;
  for (double a : {0.5, 1.0, 1.5}) {
    for (bool sw : {false, true}) {
      neuro::BpttEpisode e;
      for (int k = 0; k < 200; ++k) {
        e.w.push_back(k >= 10 ? a : 0.0);
        e.gain.push_back(sw && k >= 100 ? 2.0 : 1.0);
      }
      eps.push_back(std::move(e));
    }
  }
  auto gs = neuro::GainScheduler::make({16}, {{{0.1, 3.0}, {0.05, 3.0}, {0.0, 1.0}}}, 7);
  neuro::BpttOptions bo;
  bo.train.max_epochs = 100;
  bo.train.learning_rate = 1e-2;
  bo.train.batch_size = 6;
  bo.train.seed = 3;
  bo.train.patience = 0;
  bo.rho = 0.01;
  neuro::train_bptt(gs, zn, fit.model, eps, bo);

  sim::PlantModel plant = sim::make_fopdt(1, 1, 0.5, -3, 3);
  plant.gain_steps.push_back({10.0, 2.0});
  const sim::ReferenceSpec ref{sim::StepReference{1.0, 0.0, 1.0}};
  control::PidController fixed(zn);
  const double iz = metrics::iae(sim::simulate(plant, fixed, ref, {}, {}, {dt, 20.0, 0}));
  neuro::ScheduledPidController sched(gs, zn);
  const double is = metrics::iae(sim::simulate(plant, sched, ref, {}, {}, {dt, 20.0, 0}));
  return {is <= iz, fmt("IAE scheduler %.4f vs fixed ZN %.4f", is, iz)};
}

Outcome ac11() {
  const auto nc = neuro::NeuralController::make({64, 48}, 4, -1, 1, 1);
  const auto s = metrics::measure_latency(nc.net(), 1000);
  return {nc.net().parameter_count() <= 5000 && s.timings_ms.size() == 1000 && s.median_ms < 3.9,
          fmt("%zu parameters, median %.4f ms, p95 %.4f ms, max %.4f ms",
              nc.net().parameter_count(), s.median_ms, s.p95_ms, s.max_ms)};
}

int cli(std::vector<std::string> args, std::string& err) {
  args.insert(args.begin(), "clcs");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, e;
  const int rc = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, e);
  err = e.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome ac12() {
  const fs::path root = fs::temp_directory_path() / "clcs_acceptance_pipeline";
  fs::remove_all(root);
  fs::create_directories(root);
  const nlohmann::json cfg = nlohmann::json::parse(R"({
    "sim": {"dt": 0.1, "horizon": 300, "seed": 7},
    "plant": {"variant": "fopdt", "params": {"K": 1, "tau": 1, "L": 0.5},
              "limits": {"u_min": -3, "u_max": 3}},
    "excitation": {"kind": "prbs", "order": 9, "amplitude": 2.5, "bit_period": 0.5, "seed": 3},
    "surrogate": {"train": {"max_epochs": 100}},
    "reference": {"kind": "step", "time": 1, "initial": 0, "final": 1},
    "tuning": {"method": "ai", "budget": 200,
               "episodes": [{"reference": {"kind": "step", "time": 1, "final": 1}, "horizon": 20}]},
    "training": {"mode": "bptt", "target": "scheduler", "horizon": 200,
                 "train": {"max_epochs": 20}}
  })");
  const std::string config = (root / "pipeline.json").string();
  std::ofstream(config) << cfg.dump(2);
  nlohmann::json closed = cfg;
  closed["controller"] = {{"kind", "pid+scheduler"}};
  const std::string sim_config = (root / "simulate.json").string();
  std::ofstream(sim_config) << closed.dump(2);

  std::string err;
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    const auto p = [&](const char* sub) { return (d / sub).string(); };
    const std::vector<std::vector<std::string>> steps{
        {"record", "--config", config, "--out", p("record"), "--seed", "7"},
        {"fit-surrogate", "--config", config, "--data", p("record/recording.csv"), "--out",
         p("fit"), "--seed", "7"},
        {"tune", "--config", config, "--surrogate", p("fit/surrogate.narx"), "--out", p("tune"),
         "--seed", "7"},
        {"train-controller", "--config", config, "--surrogate", p("fit/surrogate.narx"), "--gains",
         p("tune/gains.json"), "--out", p("train"), "--seed", "7"},
        {"simulate", "--config", sim_config, "--model", p("train/scheduler.mlp"), "--gains",
         p("tune/gains.json"), "--out", p("sim"), "--seed", "7"}};
    for (const auto& s : steps) {
      if (cli(s, err) != 0) return {false, s[0] + " failed: " + err};
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
  }
  fs::remove_all(root);
  return {files >= 10 && differing == 0,
          fmt("%zu output files compared, %zu differ", files, differing)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    double budget_s;
    Outcome (*run)();
  };
  const Criterion all[] = {{"AC-1", 1, ac1},    {"AC-2", 5, ac2},   {"AC-3", 1, ac3},
                           {"AC-4", 30, ac4},   {"AC-5", 60, ac5},  {"AC-6", 120, ac6},
                           {"AC-7", 120, ac7},  {"AC-8", 10, ac8},  {"AC-9", 5, ac9},
                           {"AC-10", 180, ac10}, {"AC-11", 10, ac11}, {"AC-12", 300, ac12}};
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s <= c.budget_s;
    const bool ok = o.pass && in_time;
    failed += !ok;
    std::printf("%-5s %s  %s  [%.2f s of %.0f s]\n", c.id, ok ? "PASS" : "FAIL", o.detail.c_str(),
                s, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(all)) - failed,
              std::size(all));
  return failed == 0 ? 0 : 1;
}
