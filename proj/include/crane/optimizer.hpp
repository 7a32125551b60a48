#pragma once

/**
 * @file optimizer.hpp
 * @brief Direct-collocation transcription of the free-final-time planning
 * problem and the guess -> solve -> map -> verify pipeline.
 *
 * Decision vector: flat states at N+1 nodes (12 each), piecewise-constant
 * snaps on N intervals (3 each), final time T. Cost T + lambda (T/N) sum |u_k|^2.
 * Dynamics are RK4 defects of the flat integrator chain with step T/N.
 * Rest-to-rest boundary conditions and the terminal snap are imposed as fixed
 * variable bounds. Path constraints are evaluated at every node through the
 * flat maps, with exact first and second derivatives from forward-mode AD.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "crane/autodiff.hpp"
#include "crane/flatness.hpp"
#include "crane/geometry.hpp"
#include "crane/nlp.hpp"
#include "crane/plan.hpp"
#include "crane/seed_planner.hpp"

namespace crane {

struct Scenario {
  std::string name = "scenario";
  Vec3 start{0, 0, 0}, goal{0, 0, 0};
  std::vector<BoxObstacle> obstacles;
  ClearanceConfig clearance;

  void validate() const {
    clearance.validate();
    for (const auto& b : obstacles) b.validate();
  }
};

/// Collocation layout and path-constraint options.
class Transcription {
 public:
  int n_intervals = 100;
  double snap_weight = 1e-3;          ///< lambda
  double t_lower = 0.5, t_upper = 10.0;
  bool pin_terminal_snap = true;      ///< u_{N-1} = 0
  bool with_path_constraints = true;
  double tension_floor = 0.1;         ///< zdd_p + g >= floor * g
  double clearance_smoothing = 1e-6;  ///< [m]
  SmoothingConfig smoothing;

  void validate() const {
    if (n_intervals < 2) throw ConfigError("Transcription: need at least 2 intervals");
    if (!(snap_weight >= 0)) throw ConfigError("Transcription: snap weight must be >= 0");
    if (!(t_lower > 0 && t_lower <= t_upper)) throw ConfigError("Transcription: invalid final-time bounds");
  }

  int n_nodes() const { return n_intervals + 1; }
  int n_vars() const { return 12 * n_nodes() + 3 * n_intervals + 1; }
  int state_index(int k, int i) const { return 12 * k + i; }
  int snap_index(int k, int a) const { return 12 * n_nodes() + 3 * k + a; }
  int time_index() const { return n_vars() - 1; }
  /// Snap used at node k (the last node reuses the final interval's snap).
  int node_snap_interval(int k) const { return std::min(k, n_intervals - 1); }

  int rows_per_node(const Scenario& sc) const {
    return with_path_constraints ? 13 + sc.clearance.n_rope * static_cast<int>(sc.obstacles.size()) : 0;
  }
  int n_defects() const { return 12 * n_intervals; }
  int n_rows(const Scenario& sc) const { return n_defects() + n_nodes() * rows_per_node(sc); }

  Eigen::VectorXd pack(const std::vector<FlatState>& nodes, const std::vector<Vec3>& snaps, double t_end) const {
    if (static_cast<int>(nodes.size()) != n_nodes() || static_cast<int>(snaps.size()) != n_intervals) {
      throw ConfigError("Transcription::pack: node/snap counts do not match the layout");
    }
    Eigen::VectorXd z(n_vars());
    for (int k = 0; k < n_nodes(); ++k) {
      for (int i = 0; i < 12; ++i) z[state_index(k, i)] = nodes[k][i];
    }
    for (int k = 0; k < n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) z[snap_index(k, a)] = snaps[k][a];
    }
    z[time_index()] = t_end;
    return z;
  }

  std::vector<FlatState> nodes(const Eigen::VectorXd& z) const {
    std::vector<FlatState> out(static_cast<std::size_t>(n_nodes()));
    for (int k = 0; k < n_nodes(); ++k) {
      for (int i = 0; i < 12; ++i) out[k][i] = z[state_index(k, i)];
    }
    return out;
  }

  std::vector<Vec3> snaps(const Eigen::VectorXd& z) const {
    std::vector<Vec3> out(static_cast<std::size_t>(n_intervals));
    for (int k = 0; k < n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) out[k][a] = z[snap_index(k, a)];
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Objective and defects

inline double objective(const Eigen::VectorXd& z, const Transcription& tr) {
  const double T = z[tr.time_index()];
  double sum = 0.0;
  for (int k = 0; k < tr.n_intervals; ++k) {
    for (int a = 0; a < 3; ++a) sum += z[tr.snap_index(k, a)] * z[tr.snap_index(k, a)];
  }
  return T + tr.snap_weight * sum * (T / tr.n_intervals);
}

namespace detail {

template <typename S>
S make_var(double v, int i) {
  if constexpr (std::is_same_v<S, double>) {
    (void)i;
    return v;
  } else {
    return S::variable(v, i);
  }
}

/// Next state of one axis (4 entries) under RK4 of the integrator chain.
/// Local variables: x0..x3, u, T.
template <typename S>
std::array<S, 4> axis_rk4(const std::array<S, 6>& v, int n_intervals) {
  const S h = v[5] * (1.0 / n_intervals);
  std::array<S, 12> x;
  std::array<S, 3> u;
  for (int i = 0; i < 12; ++i) x[i] = S(0.0);
  for (int i = 0; i < 4; ++i) x[i] = v[i];
  u[0] = v[4];
  u[1] = S(0.0);
  u[2] = S(0.0);
  const auto r = flat_rk4_step<S>(x, u, h);
  return {r[0], r[1], r[2], r[3]};
}

template <typename S>
std::array<S, 6> axis_locals(const Eigen::VectorXd& z, const Transcription& tr, int k, int a) {
  std::array<S, 6> v;
  for (int i = 0; i < 4; ++i) v[i] = make_var<S>(z[tr.state_index(k, 4 * a + i)], i);
  v[4] = make_var<S>(z[tr.snap_index(k, a)], 4);
  v[5] = make_var<S>(z[tr.time_index()], 5);
  return v;
}

inline std::array<int, 6> axis_columns(const Transcription& tr, int k, int a) {
  return {tr.state_index(k, 4 * a), tr.state_index(k, 4 * a + 1), tr.state_index(k, 4 * a + 2),
          tr.state_index(k, 4 * a + 3), tr.snap_index(k, a), tr.time_index()};
}

}  // namespace detail

/// x_{k+1} - RK4(x_k, u_k, T/N) for k = 0..N-1, stacked node by node.
inline Eigen::VectorXd defects(const Eigen::VectorXd& z, const Transcription& tr) {
  Eigen::VectorXd r(tr.n_defects());
  for (int k = 0; k < tr.n_intervals; ++k) {
    for (int a = 0; a < 3; ++a) {
      const auto next = detail::axis_rk4<double>(detail::axis_locals<double>(z, tr, k, a), tr.n_intervals);
      for (int o = 0; o < 4; ++o) r[12 * k + 4 * a + o] = z[tr.state_index(k + 1, 4 * a + o)] - next[o];
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Path constraints

struct NodeContext {
  const CraneParams* params;
  const FrictionVariant* variant;
  const Scenario* scenario;
  const Transcription* tr;
};

/// Path-constraint rows of one node, every row in the form value >= 0:
/// [x_t - min, max - x_t, y_t ..., L ..., f_x - u_min, u_max - f_x, f_y ..., f_l ...,
///  zdd_p + (1 - floor) g, phi(rope j, obstacle i) for j, i].
/// Local variables: 12 flat-state entries then the node's snap.
template <typename S>
void node_rows(const std::array<S, 15>& v, const NodeContext& ctx, S* out) {
  const CraneParams& p = *ctx.params;
  std::array<std::array<S, 5>, 3> jet;
  for (int a = 0; a < 3; ++a) {
    for (int o = 0; o < 4; ++o) jet[a][o] = v[4 * a + o];
    jet[a][4] = v[12 + a];
  }
  const FlatMapJets<S> m = flat_map_jets<S>(jet, p.g);
  const auto f = forces_from_jets<S>(m, p, *ctx.variant, ctx.tr->smoothing);
  const S xt = m.x_t.value(), yt = m.y_t.value(), L = m.L.value();
  out[0] = xt - p.xt_min;
  out[1] = p.xt_max - xt;
  out[2] = yt - p.yt_min;
  out[3] = p.yt_max - yt;
  out[4] = L - p.L_min;
  out[5] = p.L_max - L;
  for (int a = 0; a < 3; ++a) {
    out[6 + 2 * a] = f[a] - p.u_min[a];
    out[7 + 2 * a] = p.u_max[a] - f[a];
  }
  out[12] = v[10] + (1.0 - ctx.tr->tension_floor) * p.g;
  const Scenario& sc = *ctx.scenario;
  if (sc.obstacles.empty()) return;
  const std::array<S, 3> r_t{xt, yt, S(0.0)};
  const std::array<S, 3> r_p{v[0], v[4], v[8]};
  const int nr = sc.clearance.n_rope;
  for (int j = 0; j < nr; ++j) {
    const auto q = rope_point<S>(r_t, r_p, j, nr);
    for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
      out[13 + j * static_cast<int>(sc.obstacles.size()) + static_cast<int>(i)] =
          box_clearance<S>(q, sc.obstacles[i], sc.clearance.margin, ctx.tr->clearance_smoothing);
    }
  }
}

namespace detail {

template <typename S>
std::array<S, 15> node_locals(const Eigen::VectorXd& z, const Transcription& tr, int k) {
  std::array<S, 15> v;
  for (int i = 0; i < 12; ++i) v[i] = make_var<S>(z[tr.state_index(k, i)], i);
  const int ks = tr.node_snap_interval(k);
  for (int a = 0; a < 3; ++a) v[12 + a] = make_var<S>(z[tr.snap_index(ks, a)], 12 + a);
  return v;
}

inline std::array<int, 15> node_columns(const Transcription& tr, int k) {
  std::array<int, 15> c;
  for (int i = 0; i < 12; ++i) c[i] = tr.state_index(k, i);
  const int ks = tr.node_snap_interval(k);
  for (int a = 0; a < 3; ++a) c[12 + a] = tr.snap_index(ks, a);
  return c;
}

}  // namespace detail

struct PathConstraintValues {
  Eigen::VectorXd values;  ///< node-major, rows_per_node per node
  Eigen::VectorXd lower, upper;
};

/// Path-constraint values at every node; throws SingularityError naming the
/// node when a node cannot be mapped.
inline PathConstraintValues path_constraints(const Eigen::VectorXd& z, const Transcription& tr, const Scenario& sc,
                                             const CraneParams& p, const FrictionVariant& v) {
  const int R = tr.rows_per_node(sc);
  PathConstraintValues out;
  out.values.resize(tr.n_nodes() * R);
  out.lower = Eigen::VectorXd::Zero(tr.n_nodes() * R);
  out.upper = Eigen::VectorXd::Constant(tr.n_nodes() * R, kInf);
  if (R == 0) return out;
  const NodeContext ctx{&p, &v, &sc, &tr};
  std::vector<double> rows(static_cast<std::size_t>(R));
  for (int k = 0; k < tr.n_nodes(); ++k) {
    try {
      node_rows<double>(detail::node_locals<double>(z, tr, k), ctx, rows.data());
    } catch (const SingularityError& e) {
      throw SingularityError(e.where(), "node " + std::to_string(k) + ": " + e.what());
    }
    for (int r = 0; r < R; ++r) out.values[k * R + r] = rows[r];
  }
  return out;
}

// ---------------------------------------------------------------------------
// NLP assembly

/// Rest state at a payload position, used for both boundary conditions.
inline FlatState rest_state(const Vec3& p) { return static_flat_state(p); }

/// Builds the NLP. The returned callbacks capture copies of every input.
inline NlpProblem build_nlp(const Scenario& scenario, const CraneParams& params, const FrictionVariant& variant,
                            const Transcription& transcription) {
  scenario.validate();
  transcription.validate();
  const FlatState x_start = rest_state(scenario.start);
  const FlatState x_end = rest_state(scenario.goal);
  for (const auto& x : {x_start, x_end}) {
    try {
      (void)flat_to_state(make_flat_jet(x, Vec3{}), params);
    } catch (const SingularityError& e) {
      throw PlanningError("optimizer", std::string("boundary state cannot be mapped: ") + e.what());
    }
  }

  struct Data {
    Scenario sc;
    CraneParams p;
    FrictionVariant v;
    Transcription tr;
  };
  auto d = std::make_shared<const Data>(Data{scenario, params, variant, transcription});
  const Transcription& tr = d->tr;
  const int N = tr.n_intervals;
  const int R = tr.rows_per_node(scenario);

  NlpProblem nlp;
  nlp.n = tr.n_vars();
  nlp.m = tr.n_rows(scenario);
  nlp.x_lower.assign(static_cast<std::size_t>(nlp.n), -kInf);
  nlp.x_upper.assign(static_cast<std::size_t>(nlp.n), kInf);
  for (int i = 0; i < 12; ++i) {
    nlp.x_lower[tr.state_index(0, i)] = nlp.x_upper[tr.state_index(0, i)] = x_start[i];
    nlp.x_lower[tr.state_index(N, i)] = nlp.x_upper[tr.state_index(N, i)] = x_end[i];
  }
  if (tr.pin_terminal_snap) {
    for (int a = 0; a < 3; ++a) nlp.x_lower[tr.snap_index(N - 1, a)] = nlp.x_upper[tr.snap_index(N - 1, a)] = 0.0;
  }
  nlp.x_lower[tr.time_index()] = tr.t_lower;
  nlp.x_upper[tr.time_index()] = tr.t_upper;
  nlp.g_lower.assign(static_cast<std::size_t>(nlp.m), 0.0);
  nlp.g_upper.assign(static_cast<std::size_t>(nlp.m), 0.0);
  for (int r = tr.n_defects(); r < nlp.m; ++r) nlp.g_upper[r] = kInf;

  // Jacobian pattern: defect rows, then node rows.
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < 3; ++a) {
      const auto cols = detail::axis_columns(tr, k, a);
      for (int o = 0; o < 4; ++o) {
        const int row = 12 * k + 4 * a + o;
        nlp.jac_rows.push_back(row);
        nlp.jac_cols.push_back(tr.state_index(k + 1, 4 * a + o));
        for (int c : cols) {
          nlp.jac_rows.push_back(row);
          nlp.jac_cols.push_back(c);
        }
      }
    }
  }
  for (int k = 0; k <= N && R > 0; ++k) {
    const auto cols = detail::node_columns(tr, k);
    for (int r = 0; r < R; ++r) {
      for (int c : cols) {
        nlp.jac_rows.push_back(tr.n_defects() + k * R + r);
        nlp.jac_cols.push_back(c);
      }
    }
  }

  // Hessian pattern (lower triangle): objective, defects, nodes.
  auto push_lower = [&nlp](int i, int j) {
    nlp.hess_rows.push_back(std::max(i, j));
    nlp.hess_cols.push_back(std::min(i, j));
  };
  push_lower(tr.time_index(), tr.time_index());
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < 3; ++a) {
      push_lower(tr.snap_index(k, a), tr.snap_index(k, a));
      push_lower(tr.time_index(), tr.snap_index(k, a));
    }
  }
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < 3; ++a) {
      const auto cols = detail::axis_columns(tr, k, a);
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j <= i; ++j) push_lower(cols[i], cols[j]);
      }
    }
  }
  for (int k = 0; k <= N && R > 0; ++k) {
    const auto cols = detail::node_columns(tr, k);
    for (int i = 0; i < 15; ++i) {
      for (int j = 0; j <= i; ++j) push_lower(cols[i], cols[j]);
    }
  }

  nlp.f = [d](const Eigen::VectorXd& z) { return objective(z, d->tr); };
  nlp.grad_f = [d](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    const Transcription& t = d->tr;
    g.setZero(t.n_vars());
    const double T = z[t.time_index()];
    double sum = 0.0;
    for (int k = 0; k < t.n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) {
        const double u = z[t.snap_index(k, a)];
        sum += u * u;
        g[t.snap_index(k, a)] = 2.0 * t.snap_weight * u * T / t.n_intervals;
      }
    }
    g[t.time_index()] = 1.0 + t.snap_weight * sum / t.n_intervals;
  };
  nlp.g = [d](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    const Transcription& t = d->tr;
    g.resize(t.n_rows(d->sc));
    g.head(t.n_defects()) = defects(z, t);
    if (t.rows_per_node(d->sc) > 0) g.tail(g.size() - t.n_defects()) = path_constraints(z, t, d->sc, d->p, d->v).values;
  };
  nlp.jac_values = [d](const Eigen::VectorXd& z, Eigen::VectorXd& vals) {
    using D6 = ad::Dual<6>;
    using D15 = ad::Dual<15>;
    const Transcription& t = d->tr;
    const int Rn = t.rows_per_node(d->sc);
    Eigen::Index e = 0;
    for (int k = 0; k < t.n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) {
        const auto next = detail::axis_rk4<D6>(detail::axis_locals<D6>(z, t, k, a), t.n_intervals);
        for (int o = 0; o < 4; ++o) {
          vals[e++] = 1.0;
          for (int c = 0; c < 6; ++c) vals[e++] = -next[o].g[c];
        }
      }
    }
    if (Rn == 0) return;
    const NodeContext ctx{&d->p, &d->v, &d->sc, &t};
    std::vector<D15> rows(static_cast<std::size_t>(Rn));
    for (int k = 0; k < t.n_nodes(); ++k) {
      node_rows<D15>(detail::node_locals<D15>(z, t, k), ctx, rows.data());
      for (int r = 0; r < Rn; ++r) {
        for (int c = 0; c < 15; ++c) vals[e++] = rows[r].g[c];
      }
    }
  };
  nlp.hess_values = [d](const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& lam,
                        Eigen::VectorXd& vals) {
    using H6 = ad::Dual2<6>;
    using H15 = ad::Dual2<15>;
    const Transcription& t = d->tr;
    const int Rn = t.rows_per_node(d->sc);
    const double T = z[t.time_index()];
    const double w = obj_factor * t.snap_weight / t.n_intervals;
    Eigen::Index e = 0;
    vals[e++] = 0.0;
    for (int k = 0; k < t.n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) {
        vals[e++] = 2.0 * w * T;
        vals[e++] = 2.0 * w * z[t.snap_index(k, a)];
      }
    }
    for (int k = 0; k < t.n_intervals; ++k) {
      for (int a = 0; a < 3; ++a) {
        const auto next = detail::axis_rk4<H6>(detail::axis_locals<H6>(z, t, k, a), t.n_intervals);
        for (int i = 0; i < 6; ++i) {
          for (int j = 0; j <= i; ++j) {
            double h = 0.0;
            for (int o = 0; o < 4; ++o) h -= lam[12 * k + 4 * a + o] * next[o].hess(i, j);
            vals[e++] = h;
          }
        }
      }
    }
    if (Rn == 0) return;
    const NodeContext ctx{&d->p, &d->v, &d->sc, &t};
    std::vector<H15> rows(static_cast<std::size_t>(Rn));
    for (int k = 0; k < t.n_nodes(); ++k) {
      node_rows<H15>(detail::node_locals<H15>(z, t, k), ctx, rows.data());
      const int base = t.n_defects() + k * Rn;
      for (int i = 0; i < 15; ++i) {
        for (int j = 0; j <= i; ++j) {
          double h = 0.0;
          for (int r = 0; r < Rn; ++r) h += lam[base + r] * rows[r].hess(i, j);
          vals[e++] = h;
        }
      }
    }
  };
  return nlp;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
  SeedConfig seed;
  Transcription transcription;  ///< T bounds are overwritten from the guess
  double t_lower_factor = 0.5;
  double t_upper_factor = 3.0;
  SolveOptions solve;
  int verify_oversample = 10;
  double dt_output = 0.01;       ///< plan resampling step [s]
  int margin_rounds = 3;         ///< re-solves with a raised margin after a failed verification
  int multistart = 1;            ///< independent seeds tried concurrently; best verified plan wins
};

struct PlanResult {
  bool ok = false;
  std::string stage;    ///< failing stage when !ok
  std::string message;
  Plan plan;
  SolveReport report;
  SeedGuess guess;
  Transcription transcription;
  Eigen::VectorXd z;
  CollisionReport verification;
  double node_violation = kInf;
  unsigned long long seed = 0;
};

namespace detail {

inline PlanResult plan_once(const Scenario& scenario, const CraneParams& params, FrictionModel variant_tag,
                            const PipelineConfig& cfg, unsigned long long seed) {
  PlanResult res;
  res.seed = seed;
  const FrictionVariant variant = FrictionVariant::from(variant_tag, params);
  try {
    scenario.validate();
    SeedConfig sc = cfg.seed;
    sc.seed = seed;
    sc.validate(scenario.clearance.margin);
    const PayloadBounds bounds = PayloadBounds::from(params);
    const RrtResult rrt = rrt_star(scenario.start, scenario.goal, scenario.obstacles, bounds, sc);
    const auto path = shortcut(rrt.waypoints, scenario.obstacles, sc);
    res.guess = fit_guess(path, sc, cfg.transcription.n_intervals, scenario.obstacles);
  } catch (const PlanningError& e) {
    res.stage = e.stage();
    res.message = e.what();
    return res;
  } catch (const ConfigError& e) {
    res.stage = "seed planner";
    res.message = e.what();
    return res;
  }

  Transcription tr = cfg.transcription;
  tr.t_lower = cfg.t_lower_factor * res.guess.t_guess;
  tr.t_upper = cfg.t_upper_factor * res.guess.t_guess;
  res.transcription = tr;
  Eigen::VectorXd z = tr.pack(res.guess.nodes, res.guess.snaps, res.guess.t_guess);

  Scenario sc_nlp = scenario;
  SolveOptions opts = cfg.solve;
  for (int round = 0; round <= cfg.margin_rounds; ++round) {
    NlpProblem nlp;
    try {
      nlp = build_nlp(sc_nlp, params, variant, tr);
    } catch (const std::exception& e) {
      res.stage = "optimizer";
      res.message = e.what();
      return res;
    }
    auto [zs, rep] = solve(nlp, z, opts);
    res.report = rep;
    res.z = zs;
    res.node_violation = rep.max_violation;
    const bool usable = rep.status == SolveStatus::Optimal ||
                        (rep.status == SolveStatus::FeasibleStalled && rep.max_violation <= 1e-6);
    if (!usable) {
      res.stage = "optimizer";
      res.message = std::string("solver status ") + to_string(rep.status) + ": " + rep.message;
      return res;
    }
    try {
      double dt = 0.0;
      const auto [nodes, snaps] = resample_nodes(tr.nodes(zs), tr.snaps(zs), zs[tr.time_index()], cfg.dt_output, &dt);
      res.plan = trajectory_to_plan(nodes, snaps, dt, params, variant, tr.smoothing);
    } catch (const SingularityError& e) {
      res.stage = "flatness";
      res.message = e.what();
      return res;
    }
    res.verification =
        verify_trajectory(res.plan, scenario.obstacles, scenario.clearance, cfg.verify_oversample, scenario.clearance.margin);
    if (!res.verification.collided) {
      res.ok = true;
      res.stage.clear();
      res.message = "ok";
      return res;
    }
    // Inter-node corner cutting: raise the node margin by the shortfall and re-solve.
    const double shortfall = res.verification.min_phi < 0 ? -res.verification.min_phi : 1e-3;
    sc_nlp.clearance.margin += shortfall + 1e-3;
    z = zs;
    opts.mu_init = std::min(opts.mu_init, 1e-3);
  }
  res.stage = "verification";
  res.message = "plan violates the clearance margin between nodes (min phi = " +
                std::to_string(res.verification.min_phi) + ")";
  return res;
}

}  // namespace detail

/// Seed planner -> NLP solve -> flat maps -> oversampled verification. Never
/// returns an unverified plan as ok.
inline PlanResult plan_pipeline(const Scenario& scenario, const CraneParams& params, FrictionModel variant,
                                const PipelineConfig& cfg) {
  if (cfg.multistart <= 1) return detail::plan_once(scenario, params, variant, cfg, cfg.seed.seed);
  std::vector<std::future<PlanResult>> runs;
  for (int i = 0; i < cfg.multistart; ++i) {
    runs.push_back(std::async(std::launch::async, detail::plan_once, scenario, params, variant, cfg,
                              cfg.seed.seed + static_cast<unsigned long long>(i)));
  }
  PlanResult best;
  bool have = false;
  for (auto& f : runs) {
    PlanResult r = f.get();
    const bool better = !have || (r.ok && !best.ok) ||
                        (r.ok == best.ok && r.ok && r.report.objective < best.report.objective);
    if (better) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace crane
