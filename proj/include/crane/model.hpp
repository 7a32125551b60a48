#pragma once

/**
 * @file model.hpp
 * @brief Crane parameters, friction models and the nonlinear equations of
 * motion of the 3D overhead crane.
 *
 * Coordinates: the rail travels along X, the trolley along Y, and the rope
 * hangs from the trolley plane z = 0 with length L and swing angles
 * (alpha, beta). alpha = pi/2, beta = 0 is the straight-down equilibrium and
 * the payload sits at
 *
 *   r_p = (x_t + L sin(alpha) sin(beta), y_t + L cos(alpha), -L sin(alpha) cos(beta)).
 *
 * Friction terms d(.) carry the sign of the axis velocity and enter the
 * equations subtracted from the applied force, so they always oppose motion.
 */

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "crane/autodiff.hpp"

namespace crane {

/// Thrown when a configuration makes a map or equation singular.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Invalid parameter sets, scenarios and settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Axis { X, Y, Hoist };

using Quartic = std::array<double, 5>;

struct CraneParams {
  double m_r = 2.0;
  double m_t = 1.0;
  double m_p = 0.8;
  double J_x = 0.4;
  double J_y = 0.25;
  double J_l = 0.3;
  double g = 9.81;

  double D_x_minus = 10.0;
  double D_x_plus = 9.0;
  double D_y_minus = 7.0;
  double D_y_plus = 7.5;
  double D_l = 3.0;

  // Dry-friction magnitudes C(-)(x) = sum a_i x^i and C(+)(x) = sum b_i x^i.
  Quartic a_x{4.0, -1.6, 1.2, 0.0, 0.0};
  Quartic b_x{3.4, 1.4, -1.1, 0.0, 0.0};
  Quartic a_y{2.6, 0.8, -0.9, 0.0, 0.0};
  Quartic b_y{3.0, -0.9, 0.7, 0.0, 0.0};
  double C_l = 1.8;

  std::array<double, 3> u_min{-8.0, -6.0, -10.5};
  std::array<double, 3> u_max{8.0, 6.0, 2.0};

  double xt_min = 0.0;
  double xt_max = 1.2;
  double yt_min = 0.0;
  double yt_max = 1.0;
  double L_min = 0.15;
  double L_max = 0.8;

  double total_x_mass() const { return J_x + m_t + m_r; }
  double total_y_mass() const { return J_y + m_t; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Evaluates c0 + c1 x + ... + c4 x^4 (Horner) for any scalar type.
template <typename S>
S eval_quartic(const Quartic& c, const S& x) {
  S r = S(c[4]);
  for (int i = 3; i >= 0; --i) r = r * x + c[static_cast<std::size_t>(i)];
  return r;
}

/// Mean value of a quartic over [lo, hi], by exact integration.
inline double quartic_mean(const Quartic& c, double lo, double hi) {
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    acc += c[static_cast<std::size_t>(i)] * (std::pow(hi, i + 1) - std::pow(lo, i + 1)) / (i + 1);
  }
  return acc / (hi - lo);
}

/// Smallest value of the quartic over 1000 equispaced points of [lo, hi].
inline double quartic_sampled_min(const Quartic& c, double lo, double hi, int samples = 1000) {
  double m = eval_quartic(c, lo);
  for (int i = 1; i < samples; ++i) {
    const double x = lo + (hi - lo) * i / (samples - 1);
    m = std::min(m, eval_quartic(c, x));
  }
  return m;
}

inline void CraneParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("CraneParams: " + msg); };
  if (!(m_r > 0 && m_t > 0 && m_p > 0 && g > 0)) fail("masses and g must be positive");
  if (!(J_x >= 0 && J_y >= 0 && J_l >= 0)) fail("inertia parameters must be non-negative");
  if (!(D_x_minus >= 0 && D_x_plus >= 0 && D_y_minus >= 0 && D_y_plus >= 0 && D_l >= 0)) {
    fail("viscous coefficients must be non-negative");
  }
  if (!(C_l >= 0)) fail("C_l must be non-negative");
  if (!(L_min > 0 && L_min < L_max)) fail("need 0 < L_min < L_max");
  if (!(xt_min < xt_max)) fail("need xt_min < xt_max");
  if (!(yt_min < yt_max)) fail("need yt_min < yt_max");
  for (int i = 0; i < 3; ++i) {
    if (!(u_min[i] < 0 && 0 < u_max[i])) fail("force limits must bracket zero on every axis");
  }
  const double hold = -g * m_p;
  if (!(u_min[2] < hold && hold < u_max[2])) fail("hoist limits must bracket the holding force -g*m_p");
  constexpr double kTol = 1e-12;
  if (quartic_sampled_min(a_x, xt_min, xt_max) < -kTol || quartic_sampled_min(b_x, xt_min, xt_max) < -kTol) {
    fail("x dry-friction polynomial negative inside the workspace");
  }
  if (quartic_sampled_min(a_y, yt_min, yt_max) < -kTol || quartic_sampled_min(b_y, yt_min, yt_max) < -kTol) {
    fail("y dry-friction polynomial negative inside the workspace");
  }
}

enum class FrictionModel { Complete, Simplified, NoDryFriction };

inline const char* to_string(FrictionModel m) {
  switch (m) {
    case FrictionModel::Complete: return "cm";
    case FrictionModel::Simplified: return "sm";
    case FrictionModel::NoDryFriction: return "nfm";
  }
  return "?";
}

inline FrictionModel friction_model_from_string(const std::string& s) {
  if (s == "cm" || s == "CM" || s == "complete") return FrictionModel::Complete;
  if (s == "sm" || s == "SM" || s == "simplified") return FrictionModel::Simplified;
  if (s == "nfm" || s == "NFM" || s == "none") return FrictionModel::NoDryFriction;
  throw ConfigError("unknown friction variant '" + s + "' (expected cm, sm or nfm)");
}

/// Which friction terms are evaluated, and how.
struct FrictionVariant {
  FrictionModel tag = FrictionModel::Complete;
  double dry_x = 0.0;  ///< Simplified only: constant dry magnitude on X [N].
  double dry_y = 0.0;  ///< Simplified only: constant dry magnitude on Y [N].
  bool averaged_viscous = false;

  static FrictionVariant complete() { return {}; }

  /// Variant of the given kind derived from complete-model coefficients.
  static FrictionVariant from(FrictionModel tag, const CraneParams& p) {
    FrictionVariant v;
    v.tag = tag;
    if (tag == FrictionModel::Complete) return v;
    v.averaged_viscous = true;
    if (tag == FrictionModel::Simplified) {
      v.dry_x = 0.5 * (quartic_mean(p.a_x, p.xt_min, p.xt_max) + quartic_mean(p.b_x, p.xt_min, p.xt_max));
      v.dry_y = 0.5 * (quartic_mean(p.a_y, p.yt_min, p.yt_max) + quartic_mean(p.b_y, p.yt_min, p.yt_max));
      if (v.dry_x < 0 || v.dry_y < 0) throw ConfigError("simplified dry constants must be non-negative");
    }
    return v;
  }
};

/// tanh blending of sign/piecewise selections in the friction terms.
struct SmoothingConfig {
  bool enabled = true;
  double v_eps = 0.01;  ///< [m/s]

  static SmoothingConfig exact() { return {false, 0.01}; }
};

struct CraneState {
  double x_t = 0.0, xd_t = 0.0;
  double y_t = 0.0, yd_t = 0.0;
  double L = 0.5, Ld = 0.0;
  double alpha = std::numbers::pi / 2, alphad = 0.0;
  double beta = 0.0, betad = 0.0;
};

struct InputForces {
  double f_x = 0.0, f_y = 0.0, f_l = 0.0;

  double operator[](int i) const { return i == 0 ? f_x : (i == 1 ? f_y : f_l); }
  double& operator[](int i) { return i == 0 ? f_x : (i == 1 ? f_y : f_l); }
};

template <typename S>
struct Accelerations {
  S xdd_t{}, ydd_t{}, Ldd{}, alphadd{}, betadd{};
};

inline std::array<double, 3> payload_position(const CraneState& s) {
  const double sa = std::sin(s.alpha), ca = std::cos(s.alpha);
  const double sb = std::sin(s.beta), cb = std::cos(s.beta);
  return {s.x_t + s.L * sa * sb, s.y_t + s.L * ca, -s.L * sa * cb};
}

inline std::array<double, 3> payload_velocity(const CraneState& s) {
  const double sa = std::sin(s.alpha), ca = std::cos(s.alpha);
  const double sb = std::sin(s.beta), cb = std::cos(s.beta);
  return {s.xd_t + s.Ld * sa * sb + s.L * (ca * sb * s.alphad + sa * cb * s.betad),
          s.yd_t + s.Ld * ca - s.L * sa * s.alphad,
          -s.Ld * sa * cb - s.L * (ca * cb * s.alphad - sa * sb * s.betad)};
}

// ---------------------------------------------------------------------------
// Friction

/// Direction-dependent viscous coefficient; 0 at rest on X/Y, constant on the hoist.
inline double viscous_coeff(Axis axis, double velocity, const CraneParams& p) {
  switch (axis) {
    case Axis::X: return velocity < 0 ? p.D_x_minus : (velocity > 0 ? p.D_x_plus : 0.0);
    case Axis::Y: return velocity < 0 ? p.D_y_minus : (velocity > 0 ? p.D_y_plus : 0.0);
    case Axis::Hoist: return p.D_l;
  }
  return 0.0;
}

namespace detail {

inline double viscous_for(Axis axis, int dir, const CraneParams& p, const FrictionVariant& v) {
  if (axis == Axis::Hoist) return p.D_l;
  const double minus = axis == Axis::X ? p.D_x_minus : p.D_y_minus;
  const double plus = axis == Axis::X ? p.D_x_plus : p.D_y_plus;
  if (v.averaged_viscous) return 0.5 * (minus + plus);
  return dir < 0 ? minus : plus;
}

/// Dry-friction magnitude for a motion direction, no range check.
template <typename S>
S dry_for(Axis axis, const S& pos, int dir, const CraneParams& p, const FrictionVariant& v) {
  if (v.tag == FrictionModel::NoDryFriction) return S(0.0);
  if (axis == Axis::Hoist) return S(p.C_l);
  if (v.tag == FrictionModel::Simplified) return S(axis == Axis::X ? v.dry_x : v.dry_y);
  const Quartic& c = axis == Axis::X ? (dir < 0 ? p.a_x : p.b_x) : (dir < 0 ? p.a_y : p.b_y);
  return eval_quartic(c, pos);
}

}  // namespace detail

/// Dry-friction magnitude (non-negative) for the direction of `velocity`;
/// 0 at zero velocity. Complete X/Y require the position inside the workspace.
inline double dry_friction(Axis axis, double position, double velocity, const CraneParams& p,
                           const FrictionVariant& v) {
  if (velocity == 0.0) return 0.0;
  if (v.tag == FrictionModel::Complete && axis != Axis::Hoist) {
    const double lo = axis == Axis::X ? p.xt_min : p.yt_min;
    const double hi = axis == Axis::X ? p.xt_max : p.yt_max;
    if (position < lo || position > hi) {
      throw std::out_of_range("dry_friction: position " + std::to_string(position) +
                              " outside workspace [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
  return detail::dry_for(axis, position, velocity < 0 ? -1 : 1, p, v);
}

/// Effective friction d = D(v) v + sign(v) C(pos, v). With smoothing enabled,
/// every sign/branch selection is replaced by tanh(v / v_eps) blending.
/// Exact form range-checks like dry_friction; the smoothed form does not
/// (optimizer iterates may step outside the workspace).
template <typename S>
S effective_friction(Axis axis, const S& position, const S& velocity, const CraneParams& p,
                     const FrictionVariant& v, const SmoothingConfig& sm) {
  if (sm.enabled) {
    using std::tanh;
    const S s = tanh(velocity * (1.0 / sm.v_eps));
    const S wp = (s + 1.0) * 0.5;
    const S wm = (1.0 - s) * 0.5;
    const S visc = (wp * detail::viscous_for(axis, 1, p, v) + wm * detail::viscous_for(axis, -1, p, v)) * velocity;
    const S dry = s * (wp * detail::dry_for(axis, position, 1, p, v) + wm * detail::dry_for(axis, position, -1, p, v));
    return visc + dry;
  }
  const double vel = value_of(velocity);
  if (vel == 0.0) return S(0.0);
  const int dir = vel < 0 ? -1 : 1;
  const double mag = dry_friction(axis, value_of(position), vel, p, v);
  return velocity * detail::viscous_for(axis, dir, p, v) + S(dir * mag);
}

/// Re-expresses complete-model parameters for a reduced model: SM replaces each
/// X/Y dry polynomial pair by the workspace mean of (C- + C+)/2 and averages the
/// viscous coefficients; NFM additionally zeroes every dry term.
inline CraneParams derive_variant_params(const CraneParams& complete, FrictionModel target) {
  if (target == FrictionModel::Complete) return complete;
  const FrictionVariant fv = FrictionVariant::from(FrictionModel::Simplified, complete);
  CraneParams p = complete;
  const double dx = 0.5 * (complete.D_x_minus + complete.D_x_plus);
  const double dy = 0.5 * (complete.D_y_minus + complete.D_y_plus);
  p.D_x_minus = p.D_x_plus = dx;
  p.D_y_minus = p.D_y_plus = dy;
  const double cx = target == FrictionModel::Simplified ? fv.dry_x : 0.0;
  const double cy = target == FrictionModel::Simplified ? fv.dry_y : 0.0;
  p.a_x = p.b_x = Quartic{cx, 0, 0, 0, 0};
  p.a_y = p.b_y = Quartic{cy, 0, 0, 0, 0};
  if (target == FrictionModel::NoDryFriction) p.C_l = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Equations of motion

/// Minimum |sin(alpha)| accepted by the beta equation.
inline constexpr double kSingularSinAlpha = 1e-9;

/// Evaluates the five equations of motion in order: trolley X, trolley Y,
/// rope length (using the fresh trolley accelerations), then the swing angles.
inline Accelerations<double> eom_accelerations(const CraneState& s, const InputForces& u, const CraneParams& p,
                                               const FrictionVariant& v, const SmoothingConfig& sm) {
  const double sa = std::sin(s.alpha), ca = std::cos(s.alpha);
  const double sb = std::sin(s.beta), cb = std::cos(s.beta);
  if (std::abs(sa) < kSingularSinAlpha) {
    throw SingularityError("beta equation", "sin(alpha) L denominator vanishes (alpha = " + std::to_string(s.alpha) + ")");
  }
  if (!(s.L > 0)) throw SingularityError("alpha equation", "rope length must be positive");

  const double dx = effective_friction(Axis::X, s.x_t, s.xd_t, p, v, sm);
  const double dy = effective_friction(Axis::Y, s.y_t, s.yd_t, p, v, sm);
  const double dl = effective_friction(Axis::Hoist, s.L, s.Ld, p, v, sm);
  const double m = p.m_p;

  Accelerations<double> a;
  a.xdd_t = (u.f_x - dx - (u.f_l - dl) * sa * sb) / p.total_x_mass();
  a.ydd_t = (u.f_y - dy - (u.f_l - dl) * ca) / p.total_y_mass();
  a.Ldd = (u.f_l - dl - m * ca * a.ydd_t + m * s.L * s.alphad * s.alphad + m * s.L * s.betad * s.betad -
           m * ca * ca * s.L * s.betad * s.betad - m * sa * sb * a.xdd_t + p.g * m * cb * sa) /
          (m + p.J_l);
  a.alphadd = (sa * a.ydd_t - ca * sb * a.xdd_t + p.g * ca * cb + ca * sa * s.L * s.betad * s.betad -
               2.0 * s.Ld * s.alphad) /
              s.L;
  a.betadd = (-p.g * sb - cb * a.xdd_t - 2.0 * sa * s.Ld * s.betad - 2.0 * ca * s.L * s.alphad * s.betad) / (sa * s.L);
  return a;
}

/// Swing-angle accelerations given the actuated-coordinate accelerations.
inline std::array<double, 2> swing_accelerations(const CraneState& s, double xdd_t, double ydd_t, double g) {
  const double sa = std::sin(s.alpha), ca = std::cos(s.alpha);
  const double sb = std::sin(s.beta), cb = std::cos(s.beta);
  if (std::abs(sa) < kSingularSinAlpha) {
    throw SingularityError("beta equation", "sin(alpha) L denominator vanishes");
  }
  const double add = (sa * ydd_t - ca * sb * xdd_t + g * ca * cb + ca * sa * s.L * s.betad * s.betad -
                      2.0 * s.Ld * s.alphad) /
                     s.L;
  const double bdd = (-g * sb - cb * xdd_t - 2.0 * sa * s.Ld * s.betad - 2.0 * ca * s.L * s.alphad * s.betad) / (sa * s.L);
  return {add, bdd};
}

}  // namespace crane
