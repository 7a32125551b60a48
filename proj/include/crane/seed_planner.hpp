#pragma once

/**
 * @file seed_planner.hpp
 * @brief Geometric initial guess: RRT* over payload positions, greedy
 * shortcutting and a time-warped cubic spline sampled on the collocation grid.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/flatness.hpp"
#include "crane/geometry.hpp"

namespace crane {

/// Error raised by a pipeline stage; `stage()` names the stage.
class PlanningError : public std::runtime_error {
 public:
  PlanningError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct SeedConfig {
  int max_iterations = 2000;
  double step = 0.08;             ///< steering step [m]
  double goal_bias = 0.1;
  double radius_gamma = 1.0;      ///< r_n = min(gamma (log n / n)^(1/3), radius_max)
  double radius_max = 0.25;       ///< [m]
  unsigned long long seed = 1;
  double inflation = 0.04;        ///< obstacle inflation for the geometric search [m]
  double average_speed = 0.3;     ///< time allocation speed [m/s]
  double min_duration = 1.0;      ///< T_guess floor, also the static-case duration [s]
  int max_subdivisions = 6;       ///< waypoint densification rounds if the spline clips an obstacle

  void validate(double margin = 0.0) const {
    if (max_iterations < 1) throw ConfigError("SeedConfig: iteration budget must be >= 1");
    if (!(step > 0)) throw ConfigError("SeedConfig: step must be positive");
    if (!(goal_bias >= 0 && goal_bias < 1)) throw ConfigError("SeedConfig: goal bias must be in [0, 1)");
    if (!(inflation >= margin)) throw ConfigError("SeedConfig: inflation must be >= the clearance margin");
    if (!(average_speed > 0)) throw ConfigError("SeedConfig: average speed must be positive");
    if (!(min_duration > 0)) throw ConfigError("SeedConfig: min duration must be positive");
    if (!(radius_gamma > 0 && radius_max > 0)) throw ConfigError("SeedConfig: radius parameters must be positive");
  }
};

/// Axis-aligned region the payload may occupy.
struct PayloadBounds {
  Vec3 lo{0, 0, 0}, hi{0, 0, 0};

  static PayloadBounds from(const CraneParams& p) {
    return {{p.xt_min, p.yt_min, -p.L_max}, {p.xt_max, p.yt_max, -p.L_min}};
  }
  bool contains(const Vec3& q) const {
    for (int a = 0; a < 3; ++a) {
      if (q[a] < lo[a] || q[a] > hi[a]) return false;
    }
    return true;
  }
};

inline double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

inline double path_length(const std::vector<Vec3>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += distance(path[i - 1], path[i]);
  return len;
}

/// Exact segment / closed box intersection (slab method).
inline bool segment_hits_box(const Vec3& a, const Vec3& b, const BoxObstacle& box) {
  double t0 = 0.0, t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = b[k] - a[k];
    if (std::abs(d) < 1e-15) {
      if (a[k] < box.lo(k) || a[k] > box.hi(k)) return false;
      continue;
    }
    double ta = (box.lo(k) - a[k]) / d, tb = (box.hi(k) - a[k]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

inline bool segment_free(const Vec3& a, const Vec3& b, const std::vector<BoxObstacle>& inflated) {
  for (const auto& box : inflated) {
    if (segment_hits_box(a, b, box)) return false;
  }
  return true;
}

inline bool point_free(const Vec3& q, const std::vector<BoxObstacle>& inflated) {
  for (const auto& box : inflated) {
    if (box.contains(q)) return false;
  }
  return true;
}

inline std::vector<BoxObstacle> inflate_all(const std::vector<BoxObstacle>& obstacles, double margin) {
  std::vector<BoxObstacle> out;
  out.reserve(obstacles.size());
  for (const auto& b : obstacles) out.push_back(b.inflated(margin));
  return out;
}

struct RrtResult {
  std::vector<Vec3> waypoints;
  std::vector<double> best_cost_history;  ///< best start-goal cost after each iteration (inf before first)
  std::size_t tree_size = 0;
};

/// RRT* from start to goal; segments are collision-checked exactly against
/// the inflated boxes. Deterministic for a fixed cfg.seed.
inline RrtResult rrt_star(const Vec3& start, const Vec3& goal, const std::vector<BoxObstacle>& obstacles,
                          const PayloadBounds& bounds, const SeedConfig& cfg) {
  cfg.validate();
  const auto boxes = inflate_all(obstacles, cfg.inflation);
  if (!bounds.contains(start)) throw PlanningError("seed planner", "start outside the payload workspace");
  if (!bounds.contains(goal)) throw PlanningError("seed planner", "goal outside the payload workspace");
  if (!point_free(start, boxes)) throw PlanningError("seed planner", "start inside an inflated obstacle");
  if (!point_free(goal, boxes)) throw PlanningError("seed planner", "goal inside an inflated obstacle");

  RrtResult res;
  if (distance(start, goal) < 1e-12) {
    res.waypoints = {start};
    res.best_cost_history.assign(1, 0.0);
    res.tree_size = 1;
    return res;
  }

  struct Node {
    Vec3 p;
    int parent;
    double cost;
    std::vector<int> children;
  };
  std::vector<Node> tree{{start, -1, 0.0, {}}};
  std::vector<int> goal_links;  // nodes with a free straight segment to the goal
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto best_goal = [&](int* who) {
    double best = std::numeric_limits<double>::infinity();
    for (int i : goal_links) {
      const double c = tree[i].cost + distance(tree[i].p, goal);
      if (c < best) {
        best = c;
        if (who) *who = i;
      }
    }
    return best;
  };
  auto propagate = [&](int root) {
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      for (int c : tree[n].children) {
        tree[c].cost = tree[n].cost + distance(tree[n].p, tree[c].p);
        stack.push_back(c);
      }
    }
  };
  auto detach = [&](int child) {
    auto& ch = tree[tree[child].parent].children;
    ch.erase(std::find(ch.begin(), ch.end(), child));
  };

  if (segment_free(start, goal, boxes)) goal_links.push_back(0);
  res.best_cost_history.reserve(static_cast<std::size_t>(cfg.max_iterations));

  for (int it = 0; it < cfg.max_iterations; ++it) {
    Vec3 sample;
    if (unit(rng) < cfg.goal_bias) {
      sample = goal;
    } else {
      for (int a = 0; a < 3; ++a) sample[a] = bounds.lo[a] + unit(rng) * (bounds.hi[a] - bounds.lo[a]);
    }
    int nearest = 0;
    double dn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const double d = distance(tree[i].p, sample);
      if (d < dn) {
        dn = d;
        nearest = static_cast<int>(i);
      }
    }
    if (dn < 1e-12) {
      res.best_cost_history.push_back(best_goal(nullptr));
      continue;
    }
    const double s = std::min(1.0, cfg.step / dn);
    Vec3 q;
    for (int a = 0; a < 3; ++a) q[a] = tree[nearest].p[a] + s * (sample[a] - tree[nearest].p[a]);
    if (!point_free(q, boxes) || !segment_free(tree[nearest].p, q, boxes)) {
      res.best_cost_history.push_back(best_goal(nullptr));
      continue;
    }
    const double n = static_cast<double>(tree.size() + 1);
    const double radius = std::min(cfg.radius_gamma * std::cbrt(std::log(n) / n), cfg.radius_max);
    std::vector<int> near;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (distance(tree[i].p, q) <= radius) near.push_back(static_cast<int>(i));
    }
    int parent = nearest;
    double cost = tree[nearest].cost + distance(tree[nearest].p, q);
    for (int i : near) {
      const double c = tree[i].cost + distance(tree[i].p, q);
      if (c < cost && segment_free(tree[i].p, q, boxes)) {
        cost = c;
        parent = i;
      }
    }
    const int id = static_cast<int>(tree.size());
    tree.push_back({q, parent, cost, {}});
    tree[parent].children.push_back(id);
    for (int i : near) {
      if (i == parent) continue;
      const double c = cost + distance(q, tree[i].p);
      if (c < tree[i].cost - 1e-12 && segment_free(q, tree[i].p, boxes)) {
        detach(i);
        tree[i].parent = id;
        tree[i].cost = c;
        tree[id].children.push_back(i);
        propagate(i);
      }
    }
    if (distance(q, goal) <= cfg.step && segment_free(q, goal, boxes)) goal_links.push_back(id);
    res.best_cost_history.push_back(best_goal(nullptr));
  }

  res.tree_size = tree.size();
  int last = -1;
  if (!std::isfinite(best_goal(&last))) {
    throw PlanningError("seed planner", "no path found within " + std::to_string(cfg.max_iterations) + " iterations");
  }
  std::vector<Vec3> rev{goal};
  for (int n = last; n >= 0; n = tree[n].parent) rev.push_back(tree[n].p);
  res.waypoints.assign(rev.rbegin(), rev.rend());
  return res;
}

/// Greedy shortcut: from each kept waypoint jump to the farthest waypoint
/// reachable by a free straight segment.
inline std::vector<Vec3> shortcut(const std::vector<Vec3>& path, const std::vector<BoxObstacle>& obstacles,
                                  const SeedConfig& cfg) {
  if (path.size() <= 2) return path;
  const auto boxes = inflate_all(obstacles, cfg.inflation);
  std::vector<Vec3> out{path.front()};
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t j = path.size() - 1;
    while (j > i + 1 && !segment_free(path[i], path[j], boxes)) --j;
    out.push_back(path[j]);
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spline guess

/// Clamped cubic spline (zero end slopes) through (t_i, y_i).
class ClampedCubic {
 public:
  ClampedCubic(std::vector<double> t, const std::vector<double>& y) : t_(std::move(t)), y_(y) {
    const std::size_t n = t_.size();
    if (n < 2 || y.size() != n) throw ConfigError("ClampedCubic: need >= 2 matching knots");
    // Tridiagonal system for the second derivatives M_i.
    std::vector<double> a(n), b(n), c(n), r(n);
    const double h0 = t_[1] - t_[0], hn = t_[n - 1] - t_[n - 2];
    b[0] = 2 * h0;
    c[0] = h0;
    r[0] = 6 * ((y[1] - y[0]) / h0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double hl = t_[i] - t_[i - 1], hr = t_[i + 1] - t_[i];
      a[i] = hl;
      b[i] = 2 * (hl + hr);
      c[i] = hr;
      r[i] = 6 * ((y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl);
    }
    a[n - 1] = hn;
    b[n - 1] = 2 * hn;
    r[n - 1] = -6 * ((y[n - 1] - y[n - 2]) / hn);
    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      r[i] -= w * r[i - 1];
    }
    m_.assign(n, 0.0);
    m_[n - 1] = r[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) m_[i] = (r[i] - c[i] * m_[i + 1]) / b[i];
  }

  /// Value and derivatives 1..3 at s.
  std::array<double, 4> eval(double s) const {
    s = std::clamp(s, t_.front(), t_.back());
    std::size_t k = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), s) - t_.begin());
    k = std::clamp<std::size_t>(k, 1, t_.size() - 1) - 1;
    const double h = t_[k + 1] - t_[k];
    const double u = s - t_[k], w = t_[k + 1] - s;
    const double m0 = m_[k], m1 = m_[k + 1];
    const double v = m0 * w * w * w / (6 * h) + m1 * u * u * u / (6 * h) + (y_[k] / h - m0 * h / 6) * w +
                     (y_[k + 1] / h - m1 * h / 6) * u;
    const double d1 = -m0 * w * w / (2 * h) + m1 * u * u / (2 * h) - (y_[k] / h - m0 * h / 6) +
                      (y_[k + 1] / h - m1 * h / 6);
    const double d2 = (m0 * w + m1 * u) / h;
    const double d3 = (m1 - m0) / h;
    return {v, d1, d2, d3};
  }

 private:
  std::vector<double> t_, y_, m_;
};

/// Septic smoothstep b(s) = 35s^4 - 84s^5 + 70s^6 - 20s^7 and derivatives 1..3.
inline std::array<double, 4> smoothstep7(double s) {
  s = std::clamp(s, 0.0, 1.0);
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
  return {35 * s4 - 84 * s4 * s + 70 * s4 * s2 - 20 * s4 * s3, 140 * s3 - 420 * s4 + 420 * s4 * s - 140 * s4 * s2,
          420 * s2 - 1680 * s3 + 2100 * s4 - 840 * s4 * s, 840 * s - 5040 * s2 + 8400 * s3 - 4200 * s4};
}

struct SeedGuess {
  std::vector<FlatState> nodes;  ///< n_intervals + 1
  std::vector<Vec3> snaps;       ///< n_intervals, last one zero
  double t_guess = 0.0;
  std::vector<Vec3> waypoints;   ///< knots actually used
};

namespace detail {

inline SeedGuess sample_spline(const std::vector<Vec3>& wp, double t_total, int n_intervals, double speed) {
  std::vector<double> knots{0.0};
  for (std::size_t i = 1; i < wp.size(); ++i) knots.push_back(knots.back() + distance(wp[i - 1], wp[i]) / speed);
  const double scale = t_total / knots.back();
  for (double& k : knots) k *= scale;
  std::array<std::vector<double>, 3> ys;
  for (const auto& q : wp) {
    for (int a = 0; a < 3; ++a) ys[a].push_back(q[a]);
  }
  const std::array<ClampedCubic, 3> spl{ClampedCubic(knots, ys[0]), ClampedCubic(knots, ys[1]),
                                        ClampedCubic(knots, ys[2])};
  SeedGuess g;
  g.t_guess = t_total;
  g.waypoints = wp;
  const double h = t_total / n_intervals;
  for (int k = 0; k <= n_intervals; ++k) {
    const double t = k * h;
    const auto b = smoothstep7(t / t_total);
    const double s0 = t_total * b[0], s1 = b[1], s2 = b[2] / t_total, s3 = b[3] / (t_total * t_total);
    FlatState x{};
    for (int a = 0; a < 3; ++a) {
      const auto d = spl[a].eval(s0);
      x[4 * a] = d[0];
      x[4 * a + 1] = d[1] * s1;
      x[4 * a + 2] = d[2] * s1 * s1 + d[1] * s2;
      x[4 * a + 3] = d[3] * s1 * s1 * s1 + 3 * d[2] * s1 * s2 + d[1] * s3;
    }
    if (k == 0 || k == n_intervals) {
      for (int a = 0; a < 3; ++a) x[4 * a] = (k == 0 ? wp.front() : wp.back())[a];
    }
    g.nodes.push_back(x);
  }
  for (int k = 0; k < n_intervals; ++k) {
    Vec3 u{};
    if (k + 1 < n_intervals) {
      for (int a = 0; a < 3; ++a) u[a] = (g.nodes[k + 1][4 * a + 3] - g.nodes[k][4 * a + 3]) / h;
    }
    g.snaps.push_back(u);
  }
  return g;
}

inline bool guess_clear(const SeedGuess& g, const std::vector<BoxObstacle>& inflated) {
  for (const auto& x : g.nodes) {
    if (!point_free(flat_position(x), inflated)) return false;
  }
  return true;
}

}  // namespace detail

/// Spline guess on n_intervals + 1 nodes. Segment times are proportional to
/// length at cfg.average_speed; a septic time warp brings velocity,
/// acceleration and jerk to zero at both ends. If the spline clips an
/// inflated obstacle the waypoint list is densified and refit.
inline SeedGuess fit_guess(const std::vector<Vec3>& waypoints, const SeedConfig& cfg, int n_intervals,
                           const std::vector<BoxObstacle>& obstacles = {}) {
  if (waypoints.empty()) throw ConfigError("fit_guess: need at least one waypoint");
  if (n_intervals < 1) throw ConfigError("fit_guess: need at least one interval");
  std::vector<Vec3> wp{waypoints.front()};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (distance(wp.back(), waypoints[i]) > 1e-12) wp.push_back(waypoints[i]);
  }
  const double len = path_length(wp);
  if (wp.size() < 2) {
    SeedGuess g;
    g.t_guess = cfg.min_duration;
    g.nodes.assign(static_cast<std::size_t>(n_intervals) + 1, static_flat_state(wp.front()));
    g.snaps.assign(static_cast<std::size_t>(n_intervals), Vec3{});
    g.waypoints = wp;
    return g;
  }
  const double t_total = std::max(cfg.min_duration, len / cfg.average_speed);
  const auto boxes = inflate_all(obstacles, cfg.inflation);
  SeedGuess g = detail::sample_spline(wp, t_total, n_intervals, cfg.average_speed);
  for (int round = 0; round < cfg.max_subdivisions && !detail::guess_clear(g, boxes); ++round) {
    std::vector<Vec3> dense{wp.front()};
    for (std::size_t i = 1; i < wp.size(); ++i) {
      dense.push_back({0.5 * (wp[i - 1][0] + wp[i][0]), 0.5 * (wp[i - 1][1] + wp[i][1]),
                       0.5 * (wp[i - 1][2] + wp[i][2])});
      dense.push_back(wp[i]);
    }
    wp = dense;
    g = detail::sample_spline(wp, t_total, n_intervals, cfg.average_speed);
  }
  return g;
}

}  // namespace crane
