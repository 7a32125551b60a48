#pragma once

/**
 * @file flatness.hpp
 * @brief Flat-output maps of the crane: payload position and its derivatives
 * up to order four determine the full state and the actuator forces.
 *
 * The maps are templated on the scalar type so the optimizer can push AD
 * numbers through exactly the same code that produces feedforward forces.
 * Time derivatives are propagated with order-2 Taylor jets on the payload
 * acceleration, which is all that the rope-length and trolley equations
 * require (alpha and beta depend on the acceleration, their second
 * derivatives on the snap).
 */

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "crane/jet.hpp"
#include "crane/model.hpp"

namespace crane {

using Vec3 = std::array<double, 3>;

/// Payload position and its first four time derivatives, per axis:
/// jet[axis][order], axis 0..2 = x, y, z.
using FlatJet = std::array<std::array<double, 5>, 3>;

/// Flat LTI state: per axis (position, velocity, acceleration, jerk),
/// laid out x-block, y-block, z-block.
using FlatState = std::array<double, 12>;

inline FlatJet make_flat_jet(const FlatState& x, const Vec3& snap) {
  FlatJet j{};
  for (int a = 0; a < 3; ++a) {
    for (int k = 0; k < 4; ++k) j[a][k] = x[4 * a + k];
    j[a][4] = snap[a];
  }
  return j;
}

inline FlatState flat_state_of(const FlatJet& j) {
  FlatState x{};
  for (int a = 0; a < 3; ++a) {
    for (int k = 0; k < 4; ++k) x[4 * a + k] = j[a][k];
  }
  return x;
}

/// Rest state at a payload position.
inline FlatState static_flat_state(const Vec3& p) {
  FlatState x{};
  for (int a = 0; a < 3; ++a) x[4 * a] = p[a];
  return x;
}

inline Vec3 flat_position(const FlatState& x) { return {x[0], x[4], x[8]}; }

/// Smallest z_pdd + g accepted by the angle maps [m/s^2], as a fraction of g.
inline constexpr double kFreeFallFraction = 1e-6;

/// Swing angles from the payload acceleration. The rope pulls the payload
/// along (r_t - r_p), so (xdd, ydd, zdd + g) is parallel to
/// (-sin a sin b, -cos a, sin a cos b) with a positive factor.
inline std::array<double, 2> angles_from_accel(const Vec3& acc, double g = 9.81) {
  const double az = acc[2] + g;
  if (!(az > kFreeFallFraction * g)) {
    throw SingularityError("beta map", "payload in free fall (zdd + g = " + std::to_string(az) + ")");
  }
  const double alpha = std::atan2(std::sqrt(acc[0] * acc[0] + az * az), -acc[1]);
  const double beta = std::atan2(-acc[0], az);
  return {alpha, beta};
}

/// Mapped coordinates of one flat point, as order-2 time jets.
template <typename S>
struct FlatMapJets {
  Jet<S, 2> x_t, y_t, L, alpha, beta;
};

/// Core inverse kinematics on jets. `jet[a][k]` is the k-th derivative of
/// payload axis a (k = 0..4).
template <typename S>
FlatMapJets<S> flat_map_jets(const std::array<std::array<S, 5>, 3>& jet, double g) {
  using J = Jet<S, 2>;
  auto coeffs = [](const S& d0, const S& d1, const S& d2) {
    J j;
    j.coeff(0) = d0;
    j.coeff(1) = d1;
    j.coeff(2) = d2 * 0.5;
    return j;
  };
  const J ax = coeffs(jet[0][2], jet[0][3], jet[0][4]);
  const J ay = coeffs(jet[1][2], jet[1][3], jet[1][4]);
  const J az = coeffs(jet[2][2], jet[2][3], jet[2][4]) + g;
  if (!(value_of(az) > kFreeFallFraction * g)) {
    throw SingularityError("beta map", "payload in free fall (zdd + g = " + std::to_string(value_of(az)) + ")");
  }
  FlatMapJets<S> out;
  out.alpha = atan2(sqrt(ax * ax + az * az), -ay);
  out.beta = atan2(-ax, az);
  const auto [sa, ca] = sincos(out.alpha);
  const auto [sb, cb] = sincos(out.beta);
  const J denom = sa * cb;
  if (!(std::abs(value_of(denom)) > 1e-9)) {
    throw SingularityError("rope length map", "sin(alpha) cos(beta) vanishes");
  }
  const J zp = coeffs(jet[2][0], jet[2][1], jet[2][2]);
  out.L = -zp / denom;
  out.x_t = coeffs(jet[0][0], jet[0][1], jet[0][2]) - out.L * sb * sa;
  out.y_t = coeffs(jet[1][0], jet[1][1], jet[1][2]) - out.L * ca;
  return out;
}

/// Actuator forces from mapped jets: hoist force from the rope-length
/// equation first, then the trolley equations.
template <typename S>
std::array<S, 3> forces_from_jets(const FlatMapJets<S>& m, const CraneParams& p, const FrictionVariant& v,
                                  const SmoothingConfig& sm) {
  using std::cos;
  using std::sin;
  const S sa = sin(m.alpha.value()), ca = cos(m.alpha.value());
  const S sb = sin(m.beta.value()), cb = cos(m.beta.value());
  const S L = m.L.value();
  const S Ld = m.L.derivative(1), Ldd = m.L.derivative(2);
  const S ad = m.alpha.derivative(1), bd = m.beta.derivative(1);
  const S xdd = m.x_t.derivative(2), ydd = m.y_t.derivative(2);
  const double mp = p.m_p;

  const S dx = effective_friction(Axis::X, m.x_t.value(), m.x_t.derivative(1), p, v, sm);
  const S dy = effective_friction(Axis::Y, m.y_t.value(), m.y_t.derivative(1), p, v, sm);
  const S dl = effective_friction(Axis::Hoist, L, Ld, p, v, sm);

  const S fl = Ldd * (mp + p.J_l) + dl + ca * ydd * mp - L * ad * ad * mp - L * bd * bd * mp +
               ca * ca * L * bd * bd * mp + sa * sb * xdd * mp - cb * sa * (p.g * mp);
  const S tension = fl - dl;
  const S fx = xdd * p.total_x_mass() + dx + tension * sa * sb;
  const S fy = ydd * p.total_y_mass() + dy + tension * ca;
  return {fx, fy, fl};
}

inline CraneState flat_to_state(const FlatJet& jet, const CraneParams& p) {
  const auto m = flat_map_jets<double>(jet, p.g);
  CraneState s;
  s.x_t = m.x_t.value();
  s.xd_t = m.x_t.derivative(1);
  s.y_t = m.y_t.value();
  s.yd_t = m.y_t.derivative(1);
  s.L = m.L.value();
  s.Ld = m.L.derivative(1);
  s.alpha = m.alpha.value();
  s.alphad = m.alpha.derivative(1);
  s.beta = m.beta.value();
  s.betad = m.beta.derivative(1);
  return s;
}

/// The input map: forces that make the payload follow the given jet.
inline InputForces flat_to_input(const FlatJet& jet, const CraneParams& p, const FrictionVariant& v,
                                 const SmoothingConfig& sm = {}) {
  const auto f = forces_from_jets(flat_map_jets<double>(jet, p.g), p, v, sm);
  return {f[0], f[1], f[2]};
}

/// Exact zero-order-hold step of the quadruple-integrator chain. A is
/// nilpotent, so the matrix exponential is a finite Taylor polynomial.
template <typename S>
std::array<S, 12> flat_step(const std::array<S, 12>& x, const std::array<S, 3>& snap, const S& dt) {
  std::array<S, 12> r;
  const S h2 = dt * dt * 0.5, h3 = dt * dt * dt * (1.0 / 6.0), h4 = dt * dt * dt * dt * (1.0 / 24.0);
  for (int a = 0; a < 3; ++a) {
    const S& p = x[4 * a];
    const S& v = x[4 * a + 1];
    const S& acc = x[4 * a + 2];
    const S& j = x[4 * a + 3];
    const S& u = snap[a];
    r[4 * a] = p + v * dt + acc * h2 + j * h3 + u * h4;
    r[4 * a + 1] = v + acc * dt + j * h2 + u * h3;
    r[4 * a + 2] = acc + j * dt + u * h2;
    r[4 * a + 3] = j + u * dt;
  }
  return r;
}

inline FlatState flat_step(const FlatState& x, const Vec3& snap, double dt) {
  if (!(dt > 0)) throw ConfigError("flat_step: dt must be positive");
  return flat_step<double>(x, snap, dt);
}

/// Classic RK4 step of the flat LTI system x' = A x + B u with constant u.
template <typename S>
std::array<S, 12> flat_rk4_step(const std::array<S, 12>& x, const std::array<S, 3>& snap, const S& dt) {
  auto f = [&](const std::array<S, 12>& s) {
    std::array<S, 12> d;
    for (int a = 0; a < 3; ++a) {
      d[4 * a] = s[4 * a + 1];
      d[4 * a + 1] = s[4 * a + 2];
      d[4 * a + 2] = s[4 * a + 3];
      d[4 * a + 3] = snap[a];
    }
    return d;
  };
  auto axpy = [](const std::array<S, 12>& base, const std::array<S, 12>& d, const S& h) {
    std::array<S, 12> r;
    for (int i = 0; i < 12; ++i) r[i] = base[i] + d[i] * h;
    return r;
  };
  const S half = dt * 0.5;
  const auto k1 = f(x);
  const auto k2 = f(axpy(x, k1, half));
  const auto k3 = f(axpy(x, k2, half));
  const auto k4 = f(axpy(x, k3, dt));
  std::array<S, 12> r;
  const S w = dt * (1.0 / 6.0);
  for (int i = 0; i < 12; ++i) r[i] = x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * w;
  return r;
}

}  // namespace crane
