#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

#include "clcs/cli.hpp"
#include "clcs/error.hpp"

namespace clcs::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kUnbounded = 1e300;
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(Errc::config_error, path + ": " + msg);
}

/// Reads one JSON object, records every key it touches together with the
/// effective value, and rejects whatever was left untouched.
class Node {
 public:
  Node(const json* j, std::string path, json* out) : j_(j), path_(std::move(path)), out_(out) {
    if (j_ && !j_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    *out_ = json::object();
  }

  const std::string& path() const { return path_; }
  bool present() const { return j_ != nullptr; }
  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double num(const std::string& key, double def) {
    const json* v = take(key);
    double x = def;
    if (v) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      x = v->get<double>();
      if (!std::isfinite(x)) fail(key_path(key), "must be finite");
    }
    (*out_)[key] = x;
    return x;
  }

  /// Number or null; null means unbounded (+-inf) and echoes as null.
  double bound(const std::string& key, double def) {
    const json* v = take(key);
    double x = def;
    if (v) {
      if (v->is_null()) {
        x = def < 0 ? -kInf : kInf;
      } else if (v->is_number()) {
        x = v->get<double>();
      } else {
        fail(key_path(key), "expected a number or null");
      }
    }
    if (std::isfinite(x) && std::abs(x) < kUnbounded) {
      (*out_)[key] = x;
    } else {
      (*out_)[key] = nullptr;
    }
    return x;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const json* v = take(key);
    std::uint64_t x = def;
    if (v) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                      v->get<std::int64_t>() < 0)) {
        fail(key_path(key), "expected a non-negative integer");
      }
      x = v->get<std::uint64_t>();
    }
    (*out_)[key] = x;
    return x;
  }

  std::size_t size(const std::string& key, std::size_t def) {
    return static_cast<std::size_t>(u64(key, def));
  }

  long integer(const std::string& key, long def) {
    const json* v = take(key);
    long x = def;
    if (v) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      x = v->get<long>();
    }
    (*out_)[key] = x;
    return x;
  }

  std::string str(const std::string& key, const std::string& def) {
    const json* v = take(key);
    std::string x = def;
    if (v) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      x = v->get<std::string>();
    }
    (*out_)[key] = x;
    return x;
  }

  std::string choice(const std::string& key, const std::string& def,
                     std::initializer_list<const char*> allowed) {
    const std::string x = str(key, def);
    for (const char* a : allowed) {
      if (x == a) return x;
    }
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail(key_path(key), "unknown value '" + x + "' (expected one of " + list + ")");
  }

  std::vector<double> nums(const std::string& key, const std::vector<double>& def) {
    const json* v = take(key);
    std::vector<double> x = def;
    if (v) {
      if (!v->is_array()) fail(key_path(key), "expected an array of numbers");
      x.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key_path(key), "expected an array of numbers");
        x.push_back(e.get<double>());
      }
    }
    (*out_)[key] = x;
    return x;
  }

  std::vector<std::size_t> sizes(const std::string& key, const std::vector<std::size_t>& def) {
    const json* v = take(key);
    std::vector<std::size_t> x = def;
    if (v) {
      if (!v->is_array()) fail(key_path(key), "expected an array of integers");
      x.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) fail(key_path(key), "expected an array of integers");
        x.push_back(e.get<std::size_t>());
      }
    }
    (*out_)[key] = x;
    return x;
  }

  /// Path string resolved against the config directory; echoed resolved.
  std::string file(const std::string& key, const std::string& base_dir) {
    std::string p = str(key, "");
    if (!p.empty() && !base_dir.empty() && fs::path(p).is_relative()) {
      p = (fs::path(base_dir) / p).lexically_normal().string();
    }
    (*out_)[key] = p;
    return p;
  }

  Node child(const std::string& key) {
    const json* v = take(key);
    return Node(v, key_path(key), &(*out_)[key]);
  }

  std::vector<Node> children(const std::string& key) {
    const json* v = take(key);
    std::vector<Node> nodes;
    if (!v) {
      (*out_)[key] = json::array();
      return nodes;
    }
    if (!v->is_array()) fail(key_path(key), "expected an array of objects");
    (*out_)[key] = json::array();
    json& arr = (*out_)[key];
    for (std::size_t i = 0; i < v->size(); ++i) arr.push_back(json::object());
    for (std::size_t i = 0; i < v->size(); ++i) {
      nodes.emplace_back(&(*v)[i], key_path(key) + "[" + std::to_string(i) + "]", &arr[i]);
    }
    return nodes;
  }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) fail(key_path(it.key()), "unknown key");
    }
  }

 private:
  const json* take(const std::string& key) {
    used_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  const json* j_;
  std::string path_;
  json* out_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------

sim::PlantModel parse_plant(Node n) {
  sim::PlantModel p;
  const std::string variant =
      n.choice("variant", "fopdt", {"fopdt", "second_order", "tank", "state_space"});
  Node params = n.child("params");
  if (variant == "fopdt") {
    sim::Fopdt f;
    f.K = params.num("K", 1.0);
    f.tau = params.num("tau", 1.0);
    f.L = params.num("L", 0.0);
    p.variant = f;
  } else if (variant == "second_order") {
    sim::SecondOrder s;
    s.K = params.num("K", 1.0);
    s.omega_n = params.num("omega_n", 1.0);
    s.zeta = params.num("zeta", 0.7);
    p.variant = s;
  } else if (variant == "tank") {
    sim::TankNonlinear t;
    t.area = params.num("area", 1.0);
    t.outflow = params.num("outflow", 1.0);
    p.variant = t;
  } else {
    sim::LinearStateSpace ss;
    ss.n = params.size("n", 1);
    ss.A = params.nums("A", {-1.0});
    ss.B = params.nums("B", {1.0});
    ss.C = params.nums("C", {1.0});
    p.variant = ss;
  }
  params.finish();

  Node limits = n.child("limits");
  p.u_min = limits.bound("u_min", -kUnbounded);
  p.u_max = limits.bound("u_max", kUnbounded);
  if (!std::isfinite(p.u_min)) p.u_min = -kUnbounded;
  if (!std::isfinite(p.u_max)) p.u_max = kUnbounded;
  limits.finish();

  for (Node g : n.children("gain_steps")) {
    sim::GainStep s;
    s.time = g.num("time", 0.0);
    s.factor = g.num("factor", 1.0);
    g.finish();
    p.gain_steps.push_back(s);
  }
  p.initial_state = n.nums("initial_state", {});
  n.finish();
  try {
    p.validate();
  } catch (const Error& e) {
    fail(n.path(), e.what());
  }
  return p;
}

sim::SensorSpec parse_sensor(Node n) {
  sim::SensorSpec s;
  s.noise_std = n.num("noise_std", 0.0);
  s.sample_period = n.num("sample_period", 0.0);
  s.quantization = n.num("quantization", 0.0);
  n.finish();
  if (s.noise_std < 0 || s.sample_period < 0 || s.quantization < 0) {
    fail(n.path(), "sensor parameters must be >= 0");
  }
  return s;
}

sim::DisturbanceSpec parse_disturbance(Node n) {
  sim::DisturbanceSpec d;
  const std::string kind = n.choice("kind", "none", {"none", "step", "gaussian", "sinusoid"});
  if (kind == "step") {
    d.variant = sim::StepDisturbance{n.num("time", 0.0), n.num("magnitude", 0.0)};
  } else if (kind == "gaussian") {
    const double sd = n.num("std", 0.0);
    if (sd < 0) fail(n.key_path("std"), "must be >= 0");
    d.variant = sim::GaussianDisturbance{sd};
  } else if (kind == "sinusoid") {
    const double a = n.num("amplitude", 0.0);
    const double period = n.num("period", 1.0);
    if (!(period > 0)) fail(n.key_path("period"), "must be > 0");
    d.variant = sim::SinusoidDisturbance{a, period};
  }
  const std::string inj = n.choice("injection", "input", {"input", "output"});
  d.injection = inj == "input" ? sim::Injection::input_additive : sim::Injection::output_additive;
  n.finish();
  return d;
}

dataio::ExcitationSpec parse_excitation(Node n) {
  dataio::ExcitationSpec e;
  const std::string kind = n.choice("kind", "prbs", {"prbs", "chirp", "steps"});
  if (kind == "prbs") {
    dataio::Prbs p;
    p.order = static_cast<unsigned>(n.size("order", 7));
    p.amplitude = n.num("amplitude", 1.0);
    p.bit_period = n.num("bit_period", 0.1);
    p.seed = n.u64("seed", 1);
    e.variant = p;
  } else if (kind == "chirp") {
    dataio::Chirp c;
    c.amplitude = n.num("amplitude", 1.0);
    c.f0 = n.num("f0", 0.1);
    c.f1 = n.num("f1", 1.0);
    c.duration = n.num("duration", 10.0);
    e.variant = c;
  } else {
    dataio::StepTrain s;
    s.levels = n.nums("levels", {0.0, 1.0});
    s.dwell = n.num("dwell", 1.0);
    e.variant = s;
  }
  e.offset = n.num("offset", 0.0);
  n.finish();
  return e;
}

sim::ProfileReference read_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io_error, "cannot open reference profile " + path);
  sim::ProfileReference p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "t,w") {
        throw Error(Errc::schema_error, "reference profile header must be 't,w'", lineno);
      }
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("row");
      std::size_t used = 0;
      const double t = std::stod(line.substr(0, comma), &used);
      const double w = std::stod(line.substr(comma + 1));
      p.t.push_back(t);
      p.w.push_back(w);
    } catch (const std::exception&) {
      throw Error(Errc::parse_error, "malformed reference profile row", lineno);
    }
  }
  if (p.t.empty()) throw Error(Errc::parse_error, "reference profile has no rows", lineno);
  return p;
}

sim::ReferenceSpec parse_reference(Node n, const std::string& base_dir) {
  sim::ReferenceSpec r;
  const std::string kind = n.choice("kind", "step", {"step", "profile"});
  if (kind == "step") {
    sim::StepReference s;
    s.time = n.num("time", 0.0);
    s.initial = n.num("initial", 0.0);
    s.final = n.num("final", 1.0);
    r.variant = s;
  } else {
    sim::ProfileReference p;
    if (n.has("path")) {
      p = read_profile(n.file("path", base_dir));
    } else {
      p.t = n.nums("t", {0.0});
      p.w = n.nums("w", {0.0});
    }
    if (p.t.size() != p.w.size() || p.t.empty()) {
      fail(n.path(), "profile needs equally many t and w values");
    }
    for (std::size_t i = 1; i < p.t.size(); ++i) {
      if (!(p.t[i] > p.t[i - 1])) fail(n.path(), "profile times must increase");
    }
    r.variant = p;
  }
  n.finish();
  return r;
}

control::PidGains parse_pid(Node& n, control::PidGains def) {
  control::PidGains g = def;
  g.kp = n.num("kp", def.kp);
  g.ki = n.num("ki", def.ki);
  g.kd = n.num("kd", def.kd);
  const std::string st = n.choice("structure", std::string(control::to_string(def.structure)),
                                  {"PID", "PI-D", "PID-P", "PI-PD"});
  g.structure = control::parse_structure(st);
  g.N = n.num("N", def.N);
  g.inner_kp = n.num("inner_kp", def.inner_kp);
  g.u_min = n.bound("u_min", def.u_min);
  g.u_max = n.bound("u_max", def.u_max);
  try {
    g.validate();
  } catch (const Error& e) {
    fail(n.path(), e.what());
  }
  return g;
}

control::PidGains pid_defaults(const std::optional<sim::PlantModel>& plant) {
  control::PidGains g;
  if (plant) {
    if (std::abs(plant->u_min) < kUnbounded) g.u_min = plant->u_min;
    if (std::abs(plant->u_max) < kUnbounded) g.u_max = plant->u_max;
  }
  return g;
}

ControllerConfig parse_controller(Node n, const std::optional<sim::PlantModel>& plant,
                                  const std::string& base_dir) {
  ControllerConfig c;
  c.kind = n.choice("kind", "open-loop",
                    {"open-loop", "relay", "constant", "pid", "cascade", "neural", "pid+scheduler"});
  const control::PidGains def = pid_defaults(plant);
  c.pid = def;
  if (c.kind == "pid" || c.kind == "pid+scheduler") {
    if (n.has("gains_path")) {
      const std::string gp = n.file("gains_path", base_dir);
      c.pid = parse_pid(n, load_gains(gp, def));
    } else {
      c.pid = parse_pid(n, def);
    }
  }
  if (c.kind == "cascade") {
    Node outer = n.child("outer");
    c.cascade.outer = parse_pid(outer, control::PidGains{});
    outer.finish();
    Node inner = n.child("inner");
    c.cascade.inner = parse_pid(inner, def);
    inner.finish();
    c.cascade.outer_channel = n.size("outer_channel", 0);
    c.cascade.inner_channel = n.size("inner_channel", 1);
    c.cascade.outer_every = n.size("outer_every", 1);
    if (c.cascade.outer_every == 0) fail(n.key_path("outer_every"), "must be >= 1");
  }
  if (c.kind == "relay") c.relay_h = n.num("h", 1.0);
  if (c.kind == "constant") c.constant = n.num("value", 0.0);
  if (c.kind == "neural" || c.kind == "pid+scheduler") c.model_path = n.file("model_path", base_dir);
  n.finish();
  return c;
}

SafetyConfig parse_safety(Node n, const std::optional<sim::PlantModel>& plant,
                          const std::string& base_dir, std::uint64_t seed) {
  SafetyConfig s;
  s.kind = n.choice("kind", "none", {"none", "switch", "blend"});
  if (s.kind == "switch") {
    s.switch_params.theta_hi = n.num("theta_hi", 0.1);
    s.switch_params.theta_lo = n.num("theta_lo", 0.05);
    s.switch_params.dwell = n.size("dwell", 5);
    s.switch_params.agree_tol = n.bound("agree_tol", kInf);
    try {
      s.switch_params.validate();
    } catch (const Error& e) {
      fail(n.path(), e.what());
    }
    Node fb = n.child("fallback");
    const control::PidGains def = pid_defaults(plant);
    if (fb.has("gains_path")) {
      s.fallback = parse_pid(fb, load_gains(fb.file("gains_path", base_dir), def));
    } else {
      s.fallback = parse_pid(fb, def);
    }
    fb.finish();
  } else if (s.kind == "blend") {
    s.delta = n.num("delta", 0.1);
    if (s.delta < 0) fail(n.key_path("delta"), "must be >= 0");
    s.correction = n.choice("correction", "adversarial", {"adversarial", "constant", "neural"});
    if (s.correction == "adversarial") {
      s.correction_scale = n.num("scale", 1.0);
      s.correction_seed = n.u64("seed", seed);
    } else if (s.correction == "constant") {
      s.correction_constant = n.num("value", 0.0);
    } else {
      s.correction_model = n.file("model_path", base_dir);
    }
  }
  n.finish();
  return s;
}

neuro::GainBounds parse_range(Node& n, const std::string& key, neuro::GainBounds def) {
  const std::vector<double> v = n.nums(key, {def.lo, def.hi});
  if (v.size() != 2 || !(v[0] <= v[1])) fail(n.key_path(key), "expected [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

neuro::Episode parse_episode(Node n, const ExperimentConfig& cfg, const std::string& base_dir) {
  neuro::Episode ep;
  ep.reference = parse_reference(n.child("reference"), base_dir);
  ep.disturbance = parse_disturbance(n.child("disturbance"));
  ep.horizon = n.num("horizon", cfg.sim.horizon);
  for (Node g : n.children("gain_steps")) {
    ep.gain_steps.push_back({g.num("time", 0.0), g.num("factor", 1.0)});
    g.finish();
  }
  n.finish();
  return ep;
}

void parse_train(Node n, nnet::TrainConfig& t, std::uint64_t seed_default) {
  t.learning_rate = n.num("learning_rate", t.learning_rate);
  t.final_learning_rate = n.num("final_learning_rate", t.final_learning_rate);
  t.beta1 = n.num("beta1", t.beta1);
  t.beta2 = n.num("beta2", t.beta2);
  t.batch_size = n.size("batch_size", t.batch_size);
  t.max_epochs = n.size("max_epochs", t.max_epochs);
  t.patience = n.size("patience", t.patience);
  t.seed = n.u64("seed", seed_default);
  n.finish();
  try {
    t.validate();
  } catch (const Error& e) {
    fail(n.path(), e.what());
  }
}

void echo_reference(json& out, const sim::ReferenceSpec& r) {
  if (const auto* s = std::get_if<sim::StepReference>(&r.variant)) {
    out = {{"kind", "step"}, {"time", s->time}, {"initial", s->initial}, {"final", s->final}};
  } else {
    const auto& p = std::get<sim::ProfileReference>(r.variant);
    out = {{"kind", "profile"}, {"t", p.t}, {"w", p.w}};
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::string& base_dir,
                              std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg;
  Node root(&doc, "", &cfg.resolved);

  Node simn = root.child("sim");
  cfg.sim.dt = simn.num("dt", 0.01);
  cfg.sim.horizon = simn.num("horizon", 10.0);
  cfg.sim.seed = simn.u64("seed", 0);
  if (seed) {
    cfg.sim.seed = *seed;
    cfg.resolved["sim"]["seed"] = *seed;
  }
  simn.finish();
  if (!(cfg.sim.dt > 0)) fail("sim.dt", "must be > 0");
  if (!(cfg.sim.horizon > 0)) fail("sim.horizon", "must be > 0");
  const std::uint64_t s0 = cfg.sim.seed;

  if (root.has("plant")) {
    cfg.plant = parse_plant(root.child("plant"));
  }
  cfg.sensor = parse_sensor(root.child("sensor"));
  cfg.disturbance = parse_disturbance(root.child("disturbance"));
  if (root.has("excitation")) cfg.excitation = parse_excitation(root.child("excitation"));
  cfg.reference = parse_reference(root.child("reference"), base_dir);
  echo_reference(cfg.resolved["reference"], cfg.reference);
  cfg.controller = parse_controller(root.child("controller"), cfg.plant, base_dir);
  cfg.safety = parse_safety(root.child("safety"), cfg.plant, base_dir, s0);

  {
    Node t = root.child("tuning");
    TuningConfig& tc = cfg.tuning;
    tc.method = t.choice("method", "rule", {"rule", "ai"});
    if (tc.method == "rule") {
      tc.rule = t.choice("rule", "ziegler-nichols", {"ziegler-nichols", "cohen-coon", "kappa-tau"});
      if (tc.rule == "ziegler-nichols") tc.zn_kind = t.choice("zn_kind", "PID", {"P", "PI", "PID"});
      tc.experiment = t.choice("experiment", tc.rule == "ziegler-nichols" ? "relay" : "step",
                               {"relay", "step", "model"});
      if (tc.experiment == "model") {
        Node m = t.child("model");
        tc.model.K = m.num("K", 1.0);
        tc.model.tau = m.num("tau", 1.0);
        tc.model.L = m.num("L", 0.0);
        m.finish();
      } else if (tc.experiment == "relay") {
        tc.relay_h = t.num("relay_h", 1.0);
        tc.relay_dt = t.num("relay_dt", 0.001);
        tc.relay_horizon = t.num("relay_horizon", 40.0);
      } else {
        tc.step_amplitude = t.num("step_amplitude", 1.0);
        tc.step_horizon = t.num("step_horizon", 40.0);
      }
    } else {
      Node b = t.child("bounds");
      tc.ai.bounds.kp = parse_range(b, "kp", tc.ai.bounds.kp);
      tc.ai.bounds.ki = parse_range(b, "ki", tc.ai.bounds.ki);
      tc.ai.bounds.kd = parse_range(b, "kd", tc.ai.bounds.kd);
      b.finish();
      tc.ai.budget = t.size("budget", 500);
      if (tc.ai.budget == 0) fail(t.key_path("budget"), "budget must be a positive integer");
      tc.ai.rho = t.num("rho", 0.01);
      tc.ai.seed = t.u64("seed", s0);
      if (t.has("initial")) {
        const auto v = t.nums("initial", {});
        if (v.size() != 3) fail(t.key_path("initial"), "expected [kp, ki, kd]");
        tc.ai.initial = std::array<double, 3>{v[0], v[1], v[2]};
      }
      for (Node e : t.children("episodes")) tc.episodes.push_back(parse_episode(e, cfg, base_dir));
      if (tc.episodes.empty()) {
        neuro::Episode ep;
        ep.reference = cfg.reference;
        ep.disturbance = cfg.disturbance;
        ep.horizon = cfg.sim.horizon;
        if (cfg.plant) ep.gain_steps = cfg.plant->gain_steps;
        tc.episodes.push_back(ep);
      }
    }
    t.finish();
  }

  {
    Node s = root.child("surrogate");
    surrogate::FitOptions& f = cfg.surrogate;
    f.p = s.size("p", 2);
    f.q = s.size("q", 2);
    f.input_delay = s.integer("input_delay", -1);
    f.hidden = s.sizes("hidden", {32});
    f.val_fraction = s.num("val_fraction", 0.25);
    f.rollout_steps = s.size("rollout_steps", 50);
    cfg.resample_dt = s.num("resample_dt", 0.0);
    f.train.learning_rate = 3e-3;
    f.train.max_epochs = 100;
    f.train.patience = 0;
    parse_train(s.child("train"), f.train, s0);
    s.finish();
    if (f.p == 0 || f.q == 0) fail("surrogate", "p and q must be >= 1");
    if (!(f.val_fraction > 0 && f.val_fraction < 1)) {
      fail("surrogate.val_fraction", "must lie in (0, 1)");
    }
  }

  {
    Node t = root.child("training");
    TrainingConfig& tr = cfg.training;
    tr.mode = t.choice("mode", "imitation", {"imitation", "bptt"});
    tr.target = t.choice("target", "neural", {"neural", "scheduler"});
    if (tr.mode == "imitation" && tr.target != "neural") {
      fail("training.target", "imitation trains a neural controller only");
    }
    tr.hidden = t.sizes("hidden", tr.target == "neural" ? std::vector<std::size_t>{32, 16}
                                                        : std::vector<std::size_t>{16});
    if (tr.target == "neural") {
      tr.history = t.size("history", 4);
    } else {
      Node b = t.child("bounds");
      tr.bounds[0] = parse_range(b, "kp", tr.bounds[0]);
      tr.bounds[1] = parse_range(b, "ki", tr.bounds[1]);
      tr.bounds[2] = parse_range(b, "kd", tr.bounds[2]);
      b.finish();
      tr.window = t.size("window", 10);
    }
    if (tr.mode == "imitation") {
      tr.lambda = t.num("lambda", 0.5);
      tr.beta = t.num("beta", 0.0);
      tr.val_fraction = t.num("val_fraction", 0.25);
      if (tr.lambda < 0 || tr.lambda > 1) fail("training.lambda", "must lie in [0, 1]");
      if (tr.beta < 0) fail("training.beta", "must be >= 0");
      Node cov = t.child("coverage");
      tr.coverage_level = cov.num("level", 1.5);
      tr.coverage_dwell = cov.num("dwell", 3.0);
      tr.coverage_horizon = cov.num("horizon", 300.0);
      cov.finish();
      Node op = t.child("operational");
      tr.start_levels = op.nums("starts", tr.start_levels);
      tr.step_levels = op.nums("steps", tr.step_levels);
      tr.step_horizon = op.num("horizon", 15.0);
      tr.settle = op.num("settle", 10.0);
      op.finish();
      tr.train.learning_rate = 2e-3;
      tr.train.final_learning_rate = 1e-5;
      tr.train.max_epochs = 3000;
      tr.train.patience = 0;
    } else {
      tr.horizon = t.size("horizon", 200);
      tr.rho = t.num("rho", 0.01);
      tr.clip = t.num("clip", 1.0);
      tr.amplitudes = t.nums("amplitudes", tr.amplitudes);
      if (tr.amplitudes.empty()) fail("training.amplitudes", "needs at least one value");
      tr.train.learning_rate = 1e-2;
      tr.train.max_epochs = 100;
      tr.train.batch_size = 6;
      tr.train.patience = 0;
    }
    parse_train(t.child("train"), tr.train, s0);
    t.finish();
  }

  root.finish();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io_error, "cannot open config " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_error, "config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path().string(), seed);
}

void save_gains(const std::string& path, const control::PidGains& g) {
  const auto lim = [](double v) -> json {
    if (std::isfinite(v) && std::abs(v) < kUnbounded) return v;
    return nullptr;
  };
  json j = {{"kp", g.kp},
            {"ki", g.ki},
            {"kd", g.kd},
            {"structure", std::string(control::to_string(g.structure))},
            {"N", g.N},
            {"inner_kp", g.inner_kp},
            {"u_min", lim(g.u_min)},
            {"u_max", lim(g.u_max)}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot write " + path);
  os << j.dump(2) << '\n';
  if (!os) throw Error(Errc::io_error, "write failed for " + path);
}

control::PidGains load_gains(const std::string& path, control::PidGains base) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io_error, "cannot open gains file " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, "gains file " + path + ": " + e.what());
  }
  json echo;
  Node n(&doc, "gains", &echo);
  control::PidGains g = parse_pid(n, base);
  n.finish();
  return g;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::io_error:
    case Errc::parse_error:
    case Errc::schema_error:
    case Errc::monotonicity_error:
      return 4;
    case Errc::diverged:
    case Errc::controller_fault:
    case Errc::not_settled:
    case Errc::identification_failed:
    case Errc::no_limit_cycle:
    case Errc::training_diverged:
    case Errc::training_unstable:
    case Errc::rollout_diverged:
    case Errc::tuning_failed:
    case Errc::unrecoverable_fault:
    case Errc::sync_impossible:
      return 3;
    default:
      return 2;
  }
}

}  // namespace clcs::cli
