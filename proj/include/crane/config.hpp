#pragma once

/**
 * @file config.hpp
 * @brief JSON configuration for parameters, scenario, planner, simulation and experiments.
 *
 * Every section and key is optional; missing values keep their defaults and
 * unknown keys are rejected.
 */

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "crane/experiments.hpp"
#include "crane/optimizer.hpp"
#include "json.hpp"

namespace crane {

using Json = nlohmann::json;

struct ExperimentConfig {
  TuneConfig tune;
  SweepConfig sweep;
  double cutoff = 1.0;  ///< aggregation level cutoff
};

struct Config {
  CraneParams params;
  Scenario scenario;
  PipelineConfig planner;
  FrictionModel variant = FrictionModel::Complete;
  SimConfig sim;
  PiGains gains = default_gains();
  ExperimentConfig experiment;

  /// Gains found by tune_pi on the default Scenario-1 NFM plan.
  static PiGains default_gains() {
    PiGains g;
    g.axis[0] = {400.0, 500.0, 10.0};
    g.axis[1] = {350.0, 500.0, 10.0};
    g.axis[2] = {500.0, 25.0, 10.0};
    return g;
  }

  void validate() const {
    params.validate();
    scenario.validate();
    planner.seed.validate(scenario.clearance.margin);
    sim.validate();
    gains.validate();
    experiment.sweep.validate();
  }
};

namespace detail {

/// Reads optional keys of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const Json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read(Section s, CraneParams& p) {
  s.get("m_r", p.m_r);
  s.get("m_t", p.m_t);
  s.get("m_p", p.m_p);
  s.get("J_x", p.J_x);
  s.get("J_y", p.J_y);
  s.get("J_l", p.J_l);
  s.get("g", p.g);
  s.get("D_x_minus", p.D_x_minus);
  s.get("D_x_plus", p.D_x_plus);
  s.get("D_y_minus", p.D_y_minus);
  s.get("D_y_plus", p.D_y_plus);
  s.get("D_l", p.D_l);
  s.get("a_x", p.a_x);
  s.get("b_x", p.b_x);
  s.get("a_y", p.a_y);
  s.get("b_y", p.b_y);
  s.get("C_l", p.C_l);
  s.get("u_min", p.u_min);
  s.get("u_max", p.u_max);
  s.get("xt_min", p.xt_min);
  s.get("xt_max", p.xt_max);
  s.get("yt_min", p.yt_min);
  s.get("yt_max", p.yt_max);
  s.get("L_min", p.L_min);
  s.get("L_max", p.L_max);
  s.finish();
}

inline Json write(const CraneParams& p) {
  return {{"m_r", p.m_r},       {"m_t", p.m_t},       {"m_p", p.m_p},     {"J_x", p.J_x},
          {"J_y", p.J_y},       {"J_l", p.J_l},       {"g", p.g},         {"D_x_minus", p.D_x_minus},
          {"D_x_plus", p.D_x_plus}, {"D_y_minus", p.D_y_minus}, {"D_y_plus", p.D_y_plus}, {"D_l", p.D_l},
          {"a_x", p.a_x},       {"b_x", p.b_x},       {"a_y", p.a_y},     {"b_y", p.b_y},
          {"C_l", p.C_l},       {"u_min", p.u_min},   {"u_max", p.u_max}, {"xt_min", p.xt_min},
          {"xt_max", p.xt_max}, {"yt_min", p.yt_min}, {"yt_max", p.yt_max}, {"L_min", p.L_min},
          {"L_max", p.L_max}};
}

inline void read(Section s, Scenario& sc) {
  s.get("name", sc.name);
  s.get("start", sc.start);
  s.get("goal", sc.goal);
  if (s.has("obstacles")) {
    const Json& arr = s.raw("obstacles");
    if (!arr.is_array()) throw ConfigError(s.path() + ".obstacles: expected an array");
    sc.obstacles.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section b(arr[i], s.path() + ".obstacles[" + std::to_string(i) + "]");
      std::array<double, 3> lo{}, hi{};
      if (!b.has("min") || !b.has("max")) throw ConfigError(b.path() + ": needs 'min' and 'max'");
      b.get("min", lo);
      b.get("max", hi);
      b.finish();
      sc.obstacles.push_back({lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]});
    }
  }
  if (s.has("clearance")) {
    Section c = s.sub("clearance");
    c.get("n_rope", sc.clearance.n_rope);
    c.get("margin", sc.clearance.margin);
    c.finish();
  }
  s.finish();
}

inline Json write(const Scenario& sc) {
  Json obs = Json::array();
  for (const auto& b : sc.obstacles) {
    obs.push_back({{"min", {b.x_min, b.y_min, b.z_min}}, {"max", {b.x_max, b.y_max, b.z_max}}});
  }
  return {{"name", sc.name},
          {"start", sc.start},
          {"goal", sc.goal},
          {"obstacles", obs},
          {"clearance", {{"n_rope", sc.clearance.n_rope}, {"margin", sc.clearance.margin}}}};
}

inline void read(Section s, PipelineConfig& pc, FrictionModel& variant) {
  Transcription& tr = pc.transcription;
  s.get("n_intervals", tr.n_intervals);
  s.get("snap_weight", tr.snap_weight);
  s.get("tension_floor", tr.tension_floor);
  s.get("clearance_smoothing", tr.clearance_smoothing);
  s.get("friction_smoothing_velocity", tr.smoothing.v_eps);
  s.get("t_lower_factor", pc.t_lower_factor);
  s.get("t_upper_factor", pc.t_upper_factor);
  s.get("verify_oversample", pc.verify_oversample);
  s.get("dt_output", pc.dt_output);
  s.get("margin_rounds", pc.margin_rounds);
  s.get("multistart", pc.multistart);
  if (s.has("variant")) {
    std::string tag;
    s.get("variant", tag);
    variant = friction_model_from_string(tag);
  }
  if (s.has("seed_planner")) {
    Section r = s.sub("seed_planner");
    SeedConfig& c = pc.seed;
    r.get("max_iterations", c.max_iterations);
    r.get("step", c.step);
    r.get("goal_bias", c.goal_bias);
    r.get("radius_gamma", c.radius_gamma);
    r.get("radius_max", c.radius_max);
    r.get("seed", c.seed);
    r.get("inflation", c.inflation);
    r.get("average_speed", c.average_speed);
    r.get("min_duration", c.min_duration);
    r.get("max_subdivisions", c.max_subdivisions);
    r.finish();
  }
  if (s.has("solver")) {
    Section o = s.sub("solver");
    SolveOptions& c = pc.solve;
    o.get("max_iterations", c.max_iterations);
    o.get("tol", c.tol);
    o.get("dual_inf_tol", c.dual_inf_tol);
    o.get("constr_viol_tol", c.constr_viol_tol);
    o.get("compl_inf_tol", c.compl_inf_tol);
    o.get("mu_init", c.mu_init);
    o.get("bound_push", c.bound_push);
    o.get("bound_frac", c.bound_frac);
    if (o.has("max_wall_time") && o.raw("max_wall_time").is_null()) {
      c.max_wall_time = kInf;  // null = no limit
    } else {
      o.get("max_wall_time", c.max_wall_time);
    }
    o.get("gradient_scaling", c.gradient_scaling);
    o.finish();
  }
  s.finish();
}

inline Json write(const PipelineConfig& pc, FrictionModel variant) {
  const Transcription& tr = pc.transcription;
  const SeedConfig& r = pc.seed;
  const SolveOptions& o = pc.solve;
  return {{"n_intervals", tr.n_intervals},
          {"snap_weight", tr.snap_weight},
          {"tension_floor", tr.tension_floor},
          {"clearance_smoothing", tr.clearance_smoothing},
          {"friction_smoothing_velocity", tr.smoothing.v_eps},
          {"t_lower_factor", pc.t_lower_factor},
          {"t_upper_factor", pc.t_upper_factor},
          {"verify_oversample", pc.verify_oversample},
          {"dt_output", pc.dt_output},
          {"margin_rounds", pc.margin_rounds},
          {"multistart", pc.multistart},
          {"variant", to_string(variant)},
          {"seed_planner",
           {{"max_iterations", r.max_iterations}, {"step", r.step}, {"goal_bias", r.goal_bias},
            {"radius_gamma", r.radius_gamma}, {"radius_max", r.radius_max}, {"seed", r.seed},
            {"inflation", r.inflation}, {"average_speed", r.average_speed}, {"min_duration", r.min_duration},
            {"max_subdivisions", r.max_subdivisions}}},
          {"solver",
           {{"max_iterations", o.max_iterations}, {"tol", o.tol}, {"dual_inf_tol", o.dual_inf_tol},
            {"constr_viol_tol", o.constr_viol_tol}, {"compl_inf_tol", o.compl_inf_tol}, {"mu_init", o.mu_init},
            {"bound_push", o.bound_push}, {"bound_frac", o.bound_frac},
            {"max_wall_time", std::isinf(o.max_wall_time) ? Json(nullptr) : Json(o.max_wall_time)},
            {"gradient_scaling", o.gradient_scaling}}}};
}

inline void read(Section s, SimConfig& c) {
  s.get("dt", c.dt);
  s.get("v_dead", c.v_dead);
  s.get("horizon", c.horizon);
  s.get("settle_time", c.settle_time);
  s.get("log_dt", c.log_dt);
  s.get("stop_velocity", c.stop_velocity);
  s.finish();
}

inline Json write(const SimConfig& c) {
  return {{"dt", c.dt},           {"v_dead", c.v_dead},   {"horizon", c.horizon},
          {"settle_time", c.settle_time}, {"log_dt", c.log_dt}, {"stop_velocity", c.stop_velocity}};
}

inline void read(Section s, PiGains& g) {
  const char* names[3] = {"x", "y", "hoist"};
  for (int i = 0; i < 3; ++i) {
    if (!s.has(names[i])) continue;
    Section a = s.sub(names[i]);
    a.get("kp", g.axis[i].kp);
    a.get("ki", g.axis[i].ki);
    a.get("integrator_limit", g.axis[i].integrator_limit);
    a.finish();
  }
  s.finish();
}

inline Json write(const PiGains& g) {
  Json j;
  const char* names[3] = {"x", "y", "hoist"};
  for (int i = 0; i < 3; ++i) {
    j[names[i]] = {{"kp", g.axis[i].kp}, {"ki", g.axis[i].ki}, {"integrator_limit", g.axis[i].integrator_limit}};
  }
  return j;
}

inline void read(Section s, ExperimentConfig& e) {
  s.get("cutoff", e.cutoff);
  if (s.has("tune")) {
    Section t = s.sub("tune");
    t.get("max_evaluations", e.tune.max_evaluations);
    t.get("initial_scale", e.tune.initial_scale);
    t.get("min_scale", e.tune.min_scale);
    t.get("zero_probe", e.tune.zero_probe);
    t.get("kp_max", e.tune.kp_max);
    t.get("ki_max", e.tune.ki_max);
    t.get("settle_time", e.tune.settle_time);
    t.get("tune_integrator", e.tune.tune_integrator);
    t.finish();
  }
  if (s.has("sweep")) {
    Section w = s.sub("sweep");
    if (w.has("levels")) {
      const Json& lv = w.raw("levels");
      if (lv.is_array()) {
        e.sweep.levels = lv.get<std::vector<double>>();
      } else {
        Section l(lv, w.path() + ".levels");
        int count = 75;
        double lo = 0.02, hi = 1.5;
        l.get("count", count);
        l.get("min", lo);
        l.get("max", hi);
        l.finish();
        e.sweep.levels = level_ladder(count, lo, hi);
      }
    }
    w.get("runs_per_level", e.sweep.runs_per_level);
    w.get("master_seed", e.sweep.master_seed);
    w.get("threads", e.sweep.threads);
    w.get("hold_time", e.sweep.metrics.hold_time);
    w.get("stop_velocity", e.sweep.metrics.stop_velocity);
    w.finish();
  }
  s.finish();
}

inline Json write(const ExperimentConfig& e) {
  const TuneConfig& t = e.tune;
  return {{"cutoff", e.cutoff},
          {"tune",
           {{"max_evaluations", t.max_evaluations}, {"initial_scale", t.initial_scale}, {"min_scale", t.min_scale},
            {"zero_probe", t.zero_probe}, {"kp_max", t.kp_max}, {"ki_max", t.ki_max},
            {"settle_time", t.settle_time}, {"tune_integrator", t.tune_integrator}}},
          {"sweep",
           {{"levels", e.sweep.levels}, {"runs_per_level", e.sweep.runs_per_level},
            {"master_seed", e.sweep.master_seed}, {"threads", e.sweep.threads},
            {"hold_time", e.sweep.metrics.hold_time}, {"stop_velocity", e.sweep.metrics.stop_velocity}}}};
}

}  // namespace detail

/// Parses a configuration document. Throws ConfigError on malformed input.
inline Config parse_config(const Json& j) {
  Config c;
  detail::Section root(j, "config");
  if (root.has("params")) detail::read(root.sub("params"), c.params);
  if (root.has("scenario")) detail::read(root.sub("scenario"), c.scenario);
  if (root.has("planner")) detail::read(root.sub("planner"), c.planner, c.variant);
  if (root.has("simulation")) detail::read(root.sub("simulation"), c.sim);
  if (root.has("controller")) detail::read(root.sub("controller"), c.gains);
  if (root.has("experiment")) detail::read(root.sub("experiment"), c.experiment);
  root.finish();
  // The sweep and tuner simulate with the same settings as `simulate`.
  c.experiment.sweep.sim = c.sim;
  c.experiment.sweep.metrics.n_rope = c.scenario.clearance.n_rope;
  c.validate();
  return c;
}

inline Config parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Fully expanded configuration, defaults included.
inline Json to_json(const Config& c) {
  return {{"params", detail::write(c.params)},
          {"scenario", detail::write(c.scenario)},
          {"planner", detail::write(c.planner, c.variant)},
          {"simulation", detail::write(c.sim)},
          {"controller", detail::write(c.gains)},
          {"experiment", detail::write(c.experiment)}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the expanded configuration as 16 hex digits.
inline std::string config_hash(const Config& c) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(c).dump());
  return os.str();
}

}  // namespace crane
