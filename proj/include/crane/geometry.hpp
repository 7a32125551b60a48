#pragma once

/**
 * @file geometry.hpp
 * @brief Box obstacles, rope discretization and clearance evaluation.
 */

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "crane/flatness.hpp"
#include "crane/plan.hpp"

namespace crane {

struct BoxObstacle {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0, z_min = 0, z_max = 0;

  void validate() const {
    if (!(x_min < x_max && y_min < y_max && z_min < z_max)) {
      throw ConfigError("BoxObstacle: min must be below max on every axis");
    }
  }

  double lo(int axis) const { return axis == 0 ? x_min : (axis == 1 ? y_min : z_min); }
  double hi(int axis) const { return axis == 0 ? x_max : (axis == 1 ? y_max : z_max); }

  BoxObstacle inflated(double margin) const {
    return {x_min - margin, x_max + margin, y_min - margin, y_max + margin, z_min - margin, z_max + margin};
  }

  bool contains(const Vec3& p) const {
    return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max && p[2] >= z_min && p[2] <= z_max;
  }
};

struct ClearanceConfig {
  int n_rope = 9;        ///< rope sample count N_r (>= 2)
  double margin = 0.01;  ///< safety margin epsilon [m]

  void validate() const {
    if (n_rope < 2) throw ConfigError("ClearanceConfig: n_rope must be >= 2");
    if (!(margin >= 0)) throw ConfigError("ClearanceConfig: margin must be >= 0");
  }
};

/// Rope sample j (0-based) of n: trolley at j = 0, payload at j = n-1.
template <typename S>
std::array<S, 3> rope_point(const std::array<S, 3>& r_t, const std::array<S, 3>& r_p, int j, int n) {
  const double wp = static_cast<double>(j) / (n - 1);
  const double wt = static_cast<double>(n - 1 - j) / (n - 1);
  return {r_t[0] * wt + r_p[0] * wp, r_t[1] * wt + r_p[1] * wp, r_t[2] * wt + r_p[2] * wp};
}

inline std::vector<Vec3> rope_points(const Vec3& r_t, const Vec3& r_p, int n) {
  if (n < 2) throw ConfigError("rope_points: need at least 2 samples");
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) pts.push_back(rope_point<double>(r_t, r_p, j, n));
  return pts;
}

/// Signed clearance ||d|| - eps, where d holds the per-axis distances from the
/// point to the box slab. `smoothing` > 0 replaces ||d|| by
/// sqrt(||d||^2 + smoothing^2) - smoothing, which is differentiable at d = 0.
template <typename S>
S box_clearance(const std::array<S, 3>& p, const BoxObstacle& box, double eps, double smoothing = 0.0) {
  using std::sqrt;
  S sq(0.0);
  for (int a = 0; a < 3; ++a) {
    const double v = value_of(p[a]);
    if (v < box.lo(a)) {
      const S d = box.lo(a) - p[a];
      sq += d * d;
    } else if (v > box.hi(a)) {
      const S d = p[a] - box.hi(a);
      sq += d * d;
    }
  }
  if (smoothing > 0) return sqrt(sq + smoothing * smoothing) - (smoothing + eps);
  if (value_of(sq) == 0.0) return S(-eps);
  return sqrt(sq) - eps;
}

inline double box_clearance(const Vec3& p, const BoxObstacle& box, double eps) {
  return box_clearance<double>(p, box, eps, 0.0);
}

/// Violation test for a clearance value: below zero, or touching the box
/// (phi = -eps), which matters at eps = 0.
inline bool clearance_violated(double phi, double eps) { return phi < 0 || phi <= -eps; }

/// Clearance of every rope sample (rows, trolley first) against every
/// obstacle (columns) at a flat state.
inline Eigen::MatrixXd clearance_all(const FlatState& x, const std::vector<BoxObstacle>& obstacles,
                                     const ClearanceConfig& cfg, const CraneParams& p) {
  cfg.validate();
  Eigen::MatrixXd phi(cfg.n_rope, static_cast<Eigen::Index>(obstacles.size()));
  if (obstacles.empty()) return phi;
  const CraneState s = flat_to_state(make_flat_jet(x, Vec3{}), p);
  const Vec3 r_t{s.x_t, s.y_t, 0.0};
  const Vec3 r_p = flat_position(x);
  for (int j = 0; j < cfg.n_rope; ++j) {
    const Vec3 q = rope_point<double>(r_t, r_p, j, cfg.n_rope);
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      phi(j, static_cast<Eigen::Index>(i)) = box_clearance(q, obstacles[i], cfg.margin);
    }
  }
  return phi;
}

struct CollisionReport {
  bool collided = false;
  double first_violation_time = std::numeric_limits<double>::infinity();
  /// Smallest clearance seen; +infinity when there are no obstacles.
  double min_phi = std::numeric_limits<double>::infinity();
  std::vector<bool> obstacle_hit;
  bool singular = false;
  std::size_t samples_checked = 0;
};

/// Checks a plan at `oversample` points per sample interval (linear
/// interpolation of flat states) with clearance margin `eps` (0 = contact).
inline CollisionReport verify_trajectory(const Plan& plan, const std::vector<BoxObstacle>& obstacles,
                                         const ClearanceConfig& cfg, int oversample, double eps = 0.0) {
  if (oversample < 1) throw ConfigError("verify_trajectory: oversample factor must be >= 1");
  CollisionReport rep;
  rep.obstacle_hit.assign(obstacles.size(), false);
  if (plan.empty()) return rep;
  ClearanceConfig c = cfg;
  c.margin = eps;
  auto check = [&](const FlatState& x, double time) {
    ++rep.samples_checked;
    if (obstacles.empty()) return;
    Eigen::MatrixXd phi;
    try {
      phi = clearance_all(x, obstacles, c, plan.model);
    } catch (const SingularityError&) {
      rep.singular = true;
      rep.collided = true;
      rep.first_violation_time = std::min(rep.first_violation_time, time);
      return;
    }
    for (Eigen::Index i = 0; i < phi.cols(); ++i) {
      const double m = phi.col(i).minCoeff();
      rep.min_phi = std::min(rep.min_phi, m);
      if (clearance_violated(m, eps)) {
        rep.obstacle_hit[static_cast<std::size_t>(i)] = true;
        if (!rep.collided) rep.first_violation_time = time;
        rep.collided = true;
      }
    }
  };
  for (std::size_t k = 0; k + 1 < plan.size(); ++k) {
    for (int i = 0; i < oversample; ++i) {
      const double w = static_cast<double>(i) / oversample;
      FlatState x;
      for (int e = 0; e < 12; ++e) x[e] = (1 - w) * plan.flat[k][e] + w * plan.flat[k + 1][e];
      check(x, (1 - w) * plan.t[k] + w * plan.t[k + 1]);
    }
  }
  check(plan.flat.back(), plan.t.back());
  return rep;
}

}  // namespace crane
