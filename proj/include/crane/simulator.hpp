#pragma once

/**
 * @file simulator.hpp
 * @brief Closed-loop crane simulator: RK4 on the full nonlinear equations of
 * motion with Karnopp stick-slip dry friction, saturated feedforward + PI
 * control on the actuated coordinates, and fixed-grid logging.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "crane/model.hpp"
#include "crane/plan.hpp"

namespace crane {

enum class SimFriction {
  Stiction,  ///< exact piecewise friction with Karnopp stick-slip
  Smoothed,  ///< tanh-smoothed friction, identical to the planning model
};

struct SimConfig {
  double dt = 1e-3;            ///< integration step [s]
  double v_dead = 1e-3;        ///< Karnopp velocity dead-band [m/s]
  double horizon = 0.0;        ///< simulated time [s]; 0 = plan end + settle_time
  double settle_time = 12.0;   ///< extra time after the plan when horizon = 0 [s]
  double log_dt = 0.01;        ///< logging grid [s]
  double stop_velocity = 2e-3; ///< speed below which an axis counts as stopped [m/s]
  SimFriction friction = SimFriction::Stiction;
  FrictionVariant variant = FrictionVariant::complete();
  SmoothingConfig smoothing;   ///< used by SimFriction::Smoothed
  std::array<double, 3> reference_offset{0.0, 0.0, 0.0};  ///< added to x_t, y_t, L references

  void validate() const {
    if (!(dt > 0)) throw ConfigError("SimConfig: dt must be positive");
    if (!(v_dead > 0)) throw ConfigError("SimConfig: v_dead must be positive");
    if (!(log_dt >= dt)) throw ConfigError("SimConfig: log_dt must be >= dt");
  }
};

// ---------------------------------------------------------------------------
// Friction with stiction

/// Breakaway (static) friction magnitude for a push in direction `dir`.
inline double breakaway_force(Axis axis, double position, int dir, const CraneParams& p, const FrictionVariant& v) {
  double pos = position;
  if (axis == Axis::X) pos = std::clamp(position, p.xt_min, p.xt_max);
  if (axis == Axis::Y) pos = std::clamp(position, p.yt_min, p.yt_max);
  return std::max(0.0, detail::dry_for(axis, pos, dir, p, v));
}

/// Kinetic friction force acting on a sliding axis (opposes `dir`).
inline double kinetic_force(Axis axis, double position, double velocity, int dir, const CraneParams& p,
                            const FrictionVariant& v) {
  return -(detail::viscous_for(axis, dir, p, v) * velocity + dir * breakaway_force(axis, position, dir, p, v));
}

/// Karnopp friction force on an axis given the net applied (non-friction)
/// force: viscous + dry opposing motion outside the dead-band; inside it the
/// axis sticks (friction cancels the applied force) unless the applied force
/// exceeds the breakaway level, in which case kinetic friction opposes it.
inline double stiction_force(Axis axis, double position, double velocity, double applied, const CraneParams& p,
                             double v_dead = 1e-3, const FrictionVariant& v = FrictionVariant::complete()) {
  if (std::abs(velocity) >= v_dead) return kinetic_force(axis, position, velocity, velocity < 0 ? -1 : 1, p, v);
  const int dir = applied < 0 ? -1 : 1;
  if (std::abs(applied) <= breakaway_force(axis, position, dir, p, v)) return -applied;
  return kinetic_force(axis, position, velocity, dir, p, v);
}

// ---------------------------------------------------------------------------
// Dynamics

using SimVector = std::array<double, 10>;  // x, xd, y, yd, L, Ld, a, ad, b, bd

inline SimVector to_vector(const CraneState& s) {
  return {s.x_t, s.xd_t, s.y_t, s.yd_t, s.L, s.Ld, s.alpha, s.alphad, s.beta, s.betad};
}
inline CraneState to_state(const SimVector& v) {
  CraneState s;
  s.x_t = v[0];
  s.xd_t = v[1];
  s.y_t = v[2];
  s.yd_t = v[3];
  s.L = v[4];
  s.Ld = v[5];
  s.alpha = v[6];
  s.alphad = v[7];
  s.beta = v[8];
  s.betad = v[9];
  return s;
}

struct AxisMode {
  bool stuck = false;
  int dir = 1;  ///< friction direction used while sliding inside the dead-band
};

using AxisModes = std::array<AxisMode, 3>;  // X, Y, Hoist

namespace detail {

/// Accelerations for fixed stick/slip modes. Stuck axes have zero
/// acceleration; a stuck hoist transmits whatever rope force keeps L fixed.
inline Accelerations<double> moded_accelerations(const CraneState& s, const InputForces& u, const CraneParams& p,
                                                 const FrictionVariant& fv, double v_dead, const AxisModes& modes,
                                                 std::array<double, 3>* applied_out = nullptr) {
  const double sa = std::sin(s.alpha), ca = std::cos(s.alpha);
  const double sb = std::sin(s.beta), cb = std::cos(s.beta);
  if (std::abs(sa) < kSingularSinAlpha) throw SingularityError("beta equation", "sin(alpha) vanishes in simulation");
  if (!(s.L > 0)) throw SingularityError("alpha equation", "rope length must be positive");
  const double m = p.m_p;
  const double px = sa * sb, qy = ca;
  const double centripetal = m * (s.L * s.alphad * s.alphad + s.L * s.betad * s.betad - ca * ca * s.L * s.betad * s.betad);
  const double gravity = p.g * m * cb * sa;

  auto sliding = [&](Axis axis, double pos, double vel, int dir) {
    const int d = std::abs(vel) >= v_dead ? (vel < 0 ? -1 : 1) : dir;
    return -kinetic_force(axis, pos, vel, d, p, fv);  // d(.) carries the velocity sign
  };

  const double dx = modes[0].stuck ? 0.0 : sliding(Axis::X, s.x_t, s.xd_t, modes[0].dir);
  const double dy = modes[1].stuck ? 0.0 : sliding(Axis::Y, s.y_t, s.yd_t, modes[1].dir);
  const double Mx = p.total_x_mass(), My = p.total_y_mass();

  Accelerations<double> a;
  double tension = 0.0;  // f_l - d_l
  if (!modes[2].stuck) {
    const double dl = sliding(Axis::Hoist, s.L, s.Ld, modes[2].dir);
    tension = u.f_l - dl;
    a.xdd_t = modes[0].stuck ? 0.0 : (u.f_x - dx - tension * px) / Mx;
    a.ydd_t = modes[1].stuck ? 0.0 : (u.f_y - dy - tension * qy) / My;
    a.Ldd = (tension - m * qy * a.ydd_t + centripetal - m * px * a.xdd_t + gravity) / (m + p.J_l);
  } else {
    // Locked drum: tension = m (q ydd + p xdd) - centripetal - gravity.
    const double k0 = -centripetal - gravity;
    double a11 = Mx + m * px * px, a12 = m * px * qy, a22 = My + m * qy * qy;
    double b1 = u.f_x - dx - k0 * px, b2 = u.f_y - dy - k0 * qy;
    if (modes[0].stuck) { a11 = 1; a12 = 0; b1 = 0; }
    if (modes[1].stuck) { a22 = 1; a12 = 0; b2 = 0; }
    const double det = a11 * a22 - a12 * a12;
    a.xdd_t = (b1 * a22 - a12 * b2) / det;
    a.ydd_t = (a11 * b2 - a12 * b1) / det;
    a.Ldd = 0.0;
    tension = m * (qy * a.ydd_t + px * a.xdd_t) + k0;
  }
  if (applied_out) {
    (*applied_out)[0] = u.f_x - tension * px;
    (*applied_out)[1] = u.f_y - tension * qy;
    // Hoist: everything in the rope-length numerator except the hoist friction.
    (*applied_out)[2] = u.f_l - m * qy * a.ydd_t + centripetal - m * px * a.xdd_t + gravity;
  }
  const auto sw = swing_accelerations(s, a.xdd_t, a.ydd_t, p.g);
  a.alphadd = sw[0];
  a.betadd = sw[1];
  return a;
}

inline SimVector derivative(const SimVector& v, const Accelerations<double>& a) {
  return {v[1], a.xdd_t, v[3], a.ydd_t, v[5], a.Ldd, v[7], a.alphadd, v[9], a.betadd};
}

}  // namespace detail

/// Decides which low-velocity axes stick at this state and input.
inline AxisModes resolve_stiction(const CraneState& s, const InputForces& u, const CraneParams& p,
                                  const FrictionVariant& fv, double v_dead) {
  const std::array<double, 3> vel{s.xd_t, s.yd_t, s.Ld};
  const std::array<double, 3> pos{s.x_t, s.y_t, s.L};
  const std::array<Axis, 3> axes{Axis::X, Axis::Y, Axis::Hoist};
  AxisModes modes;
  for (int i = 0; i < 3; ++i) {
    modes[i].stuck = std::abs(vel[i]) < v_dead;
    modes[i].dir = vel[i] < 0 ? -1 : 1;
  }
  // Release stuck axes whose holding force exceeds breakaway; re-check the
  // others since releasing one axis changes the coupling forces.
  for (int pass = 0; pass < 4; ++pass) {
    std::array<double, 3> applied{};
    CraneState held = s;
    if (modes[0].stuck) held.xd_t = 0;
    if (modes[1].stuck) held.yd_t = 0;
    if (modes[2].stuck) held.Ld = 0;
    detail::moded_accelerations(held, u, p, fv, v_dead, modes, &applied);
    bool changed = false;
    for (int i = 0; i < 3; ++i) {
      if (!modes[i].stuck) continue;
      const int dir = applied[i] < 0 ? -1 : 1;
      if (std::abs(applied[i]) > breakaway_force(axes[i], pos[i], dir, p, fv)) {
        modes[i].stuck = false;
        modes[i].dir = dir;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return modes;
}

/// One RK4 step with stick-slip friction; stuck axes keep zero velocity and
/// zero acceleration for the whole step.
inline CraneState sim_step(const CraneState& state, const InputForces& u, const CraneParams& p, const SimConfig& cfg,
                           AxisModes* modes_out = nullptr) {
  if (cfg.friction == SimFriction::Smoothed) {
    auto f = [&](const SimVector& v) {
      return detail::derivative(v, eom_accelerations(to_state(v), u, p, cfg.variant, cfg.smoothing));
    };
    const SimVector x0 = to_vector(state);
    const double h = cfg.dt;
    auto axpy = [](const SimVector& a, const SimVector& d, double s) {
      SimVector r;
      for (int i = 0; i < 10; ++i) r[i] = a[i] + s * d[i];
      return r;
    };
    const auto k1 = f(x0);
    const auto k2 = f(axpy(x0, k1, h / 2));
    const auto k3 = f(axpy(x0, k2, h / 2));
    const auto k4 = f(axpy(x0, k3, h));
    SimVector r;
    for (int i = 0; i < 10; ++i) r[i] = x0[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return to_state(r);
  }

  const AxisModes modes = resolve_stiction(state, u, p, cfg.variant, cfg.v_dead);
  if (modes_out) *modes_out = modes;
  CraneState s0 = state;
  if (modes[0].stuck) s0.xd_t = 0;
  if (modes[1].stuck) s0.yd_t = 0;
  if (modes[2].stuck) s0.Ld = 0;
  auto f = [&](const SimVector& v) {
    return detail::derivative(v, detail::moded_accelerations(to_state(v), u, p, cfg.variant, cfg.v_dead, modes));
  };
  const SimVector x0 = to_vector(s0);
  const double h = cfg.dt;
  auto axpy = [](const SimVector& a, const SimVector& d, double sc) {
    SimVector r;
    for (int i = 0; i < 10; ++i) r[i] = a[i] + sc * d[i];
    return r;
  };
  const auto k1 = f(x0);
  const auto k2 = f(axpy(x0, k1, h / 2));
  const auto k3 = f(axpy(x0, k2, h / 2));
  const auto k4 = f(axpy(x0, k3, h));
  SimVector r;
  for (int i = 0; i < 10; ++i) r[i] = x0[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return to_state(r);
}

/// Open-loop integration with a time-varying input evaluated at every RK4
/// stage (smoothed friction only; used for flatness round trips).
inline std::vector<CraneState> simulate_open_loop(const CraneState& x0,
                                                  const std::function<InputForces(double)>& input,
                                                  const CraneParams& p, const SimConfig& cfg, double duration) {
  std::vector<CraneState> out{x0};
  SimVector x = to_vector(x0);
  const int n = static_cast<int>(std::llround(duration / cfg.dt));
  auto f = [&](const SimVector& v, double t) {
    return detail::derivative(v, eom_accelerations(to_state(v), input(t), p, cfg.variant, cfg.smoothing));
  };
  const double h = cfg.dt;
  for (int i = 0; i < n; ++i) {
    const double t = i * h;
    auto axpy = [](const SimVector& a, const SimVector& d, double sc) {
      SimVector r;
      for (int k = 0; k < 10; ++k) r[k] = a[k] + sc * d[k];
      return r;
    };
    const auto k1 = f(x, t);
    const auto k2 = f(axpy(x, k1, h / 2), t + h / 2);
    const auto k3 = f(axpy(x, k2, h / 2), t + h / 2);
    const auto k4 = f(axpy(x, k3, h), t + h);
    for (int k = 0; k < 10; ++k) x[k] += h / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]);
    out.push_back(to_state(x));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PI control

struct PiAxisGains {
  double kp = 0.0;  ///< [N/m]
  double ki = 0.0;  ///< [N/(m s)]
  double integrator_limit = 10.0;  ///< bound on |ki * integral| [N]
};

struct PiGains {
  std::array<PiAxisGains, 3> axis{};  // X, Y, Hoist

  void validate() const {
    for (const auto& a : axis) {
      if (!(a.kp >= 0 && a.ki >= 0)) throw ConfigError("PiGains: gains must be non-negative");
      if (!(a.integrator_limit > 0)) throw ConfigError("PiGains: integrator limit must be positive");
    }
  }
};

struct PiState {
  std::array<double, 3> integral{0.0, 0.0, 0.0};  ///< accumulated error [m s]
};

/// PI update with conditional-integration anti-windup. [lo, hi] is the range
/// left for the feedback term after the feedforward (u_min - u_ff, u_max - u_ff).
inline double pi_step(double reference, double measurement, const PiAxisGains& g, double& integral, double dt,
                      double lo, double hi) {
  if (!(dt > 0)) throw ConfigError("pi_step: dt must be positive");
  const double e = reference - measurement;
  double next = integral + e * dt;
  if (g.ki > 0) {
    const double cap = g.integrator_limit / g.ki;
    next = std::clamp(next, -cap, cap);
  }
  const double u = g.kp * e + g.ki * next;
  if ((u > hi && e > 0) || (u < lo && e < 0)) return g.kp * e + g.ki * integral;  // freeze
  integral = next;
  return u;
}

/// What the controller is allowed to see: actuated coordinates only.
struct Measurement {
  double x_t = 0, y_t = 0, L = 0;
  static Measurement of(const CraneState& s) { return {s.x_t, s.y_t, s.L}; }
};

class PiController {
 public:
  explicit PiController(PiGains gains) : gains_(gains) { gains_.validate(); }

  /// Feedback forces for the given references and measurement.
  InputForces update(const std::array<double, 3>& ref, const Measurement& m, const InputForces& u_ff,
                     const CraneParams& p, double dt) {
    const std::array<double, 3> meas{m.x_t, m.y_t, m.L};
    InputForces fb;
    for (int i = 0; i < 3; ++i) {
      fb[i] = pi_step(ref[i], meas[i], gains_.axis[i], state_.integral[i], dt, p.u_min[i] - u_ff[i],
                      p.u_max[i] - u_ff[i]);
    }
    return fb;
  }

  const PiState& state() const { return state_; }

 private:
  PiGains gains_;
  PiState state_;
};

// ---------------------------------------------------------------------------
// Closed loop

struct SimLog {
  std::vector<double> t;
  std::vector<CraneState> state;
  std::vector<std::array<double, 3>> reference;  ///< x_t, y_t, L targets
  std::vector<InputForces> u_ff, u_fb, u_applied;
  std::vector<Vec3> payload;
  std::vector<Vec3> payload_planned;
  double reference_end = 0.0;
  double dt = 0.0;                                ///< integration step used
  std::array<double, 3> saturation_time{0, 0, 0}; ///< time with u_ff + u_fb clipped [s]
  std::array<double, 3> iae{0, 0, 0};             ///< integral |ref - meas| at integration rate [m s]
  bool aborted = false;
  std::string message;

  std::size_t size() const { return t.size(); }
};

inline double clamp_force(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

/// Runs feedforward + PI on the plan against the simulated plant.
inline SimLog run_closed_loop(const Plan& plan, const CraneParams& plant, const PiGains& gains, const SimConfig& cfg) {
  cfg.validate();
  if (plan.empty()) throw ConfigError("run_closed_loop: empty plan");
  const double horizon = cfg.horizon > 0 ? cfg.horizon : plan.t_end() + cfg.settle_time;
  const long n_steps = std::lround(horizon / cfg.dt);
  const long log_every = std::max(1L, std::lround(cfg.log_dt / cfg.dt));

  // References at the control rate.
  std::vector<PlanPoint> refs(static_cast<std::size_t>(n_steps + 1));
  for (long i = 0; i <= n_steps; ++i) refs[static_cast<std::size_t>(i)] = plan.evaluate(i * cfg.dt);

  SimLog log;
  log.reference_end = plan.t_end();
  log.dt = cfg.dt;
  PiController pi(gains);
  CraneState x = refs[0].state;

  for (long i = 0; i <= n_steps; ++i) {
    const PlanPoint& r = refs[static_cast<std::size_t>(i)];
    const std::array<double, 3> ref{r.state.x_t + cfg.reference_offset[0], r.state.y_t + cfg.reference_offset[1],
                                    r.state.L + cfg.reference_offset[2]};
    const Measurement m = Measurement::of(x);
    const InputForces fb = pi.update(ref, m, r.u_ff, plant, cfg.dt);
    InputForces ua;
    for (int k = 0; k < 3; ++k) {
      const double cmd = r.u_ff[k] + fb[k];
      ua[k] = clamp_force(cmd, plant.u_min[k], plant.u_max[k]);
      if (i < n_steps && ua[k] != cmd) log.saturation_time[k] += cfg.dt;
    }
    if (i < n_steps) {
      log.iae[0] += std::abs(ref[0] - m.x_t) * cfg.dt;
      log.iae[1] += std::abs(ref[1] - m.y_t) * cfg.dt;
      log.iae[2] += std::abs(ref[2] - m.L) * cfg.dt;
    }
    if (i % log_every == 0) {
      log.t.push_back(i * cfg.dt);
      log.state.push_back(x);
      log.reference.push_back(ref);
      log.u_ff.push_back(r.u_ff);
      log.u_fb.push_back(fb);
      log.u_applied.push_back(ua);
      log.payload.push_back(payload_position(x));
      log.payload_planned.push_back({r.jet[0][0], r.jet[1][0], r.jet[2][0]});
    }
    if (i == n_steps) break;
    try {
      x = sim_step(x, ua, plant, cfg);
    } catch (const SingularityError& e) {
      log.aborted = true;
      log.message = std::string("integration aborted at t = ") + std::to_string((i + 1) * cfg.dt) + ": " + e.what();
      break;
    }
  }
  return log;
}

inline const char* kSimLogCsvHeader =
    "t,x_t,xd_t,y_t,yd_t,L,Ld,alpha,alphad,beta,betad,x_t_ref,y_t_ref,L_ref,"
    "f_x_ff,f_y_ff,f_l_ff,f_x_fb,f_y_fb,f_l_fb,f_x,f_y,f_l,x_p,y_p,z_p,x_p_ref,y_p_ref,z_p_ref";

inline void write_simlog_csv(std::ostream& os, const SimLog& log, const std::string& provenance = "") {
  if (!provenance.empty()) os << "# " << provenance << '\n';
  os << kSimLogCsvHeader << '\n';
  os << std::setprecision(17);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto v = to_vector(log.state[k]);
    os << log.t[k];
    for (double e : v) os << ',' << e;
    for (double e : log.reference[k]) os << ',' << e;
    for (const auto* u : {&log.u_ff[k], &log.u_fb[k], &log.u_applied[k]}) {
      os << ',' << u->f_x << ',' << u->f_y << ',' << u->f_l;
    }
    for (double e : log.payload[k]) os << ',' << e;
    for (double e : log.payload_planned[k]) os << ',' << e;
    os << '\n';
  }
}

}  // namespace crane
