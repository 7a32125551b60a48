#pragma once

/**
 * @file plan.hpp
 * @brief Time-sampled plan: flat trajectory samples with piecewise-constant
 * snap, mapped trolley/rope references and feedforward forces.
 *
 * Sample k holds the flat state at t_k and the snap applied on
 * [t_k, t_{k+1}); the trajectory between samples is therefore exact and can
 * be evaluated at any time.
 */

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "crane/flatness.hpp"

namespace crane {

struct PlanPoint {
  FlatJet jet{};
  CraneState state;
  InputForces u_ff;
};

struct Plan {
  std::vector<double> t;
  std::vector<FlatState> flat;
  std::vector<Vec3> snap;
  std::vector<CraneState> state;
  std::vector<InputForces> u_ff;

  // Model the feedforward was computed with.
  CraneParams model;
  FrictionVariant variant;
  SmoothingConfig smoothing;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
  double t_end() const { return t.empty() ? 0.0 : t.back(); }

  /// Exact flat jet at time t; holds the final sample (with zero snap)
  /// after the end and the first sample before the start.
  FlatJet jet_at(double time) const {
    if (t.empty()) throw ConfigError("Plan::jet_at on an empty plan");
    if (time <= t.front()) return make_flat_jet(flat.front(), t.size() > 1 ? snap.front() : Vec3{});
    if (time >= t.back()) return make_flat_jet(flat.back(), Vec3{});
    auto it = std::upper_bound(t.begin(), t.end(), time);
    const std::size_t k = static_cast<std::size_t>(std::distance(t.begin(), it)) - 1;
    const double dt = time - t[k];
    const FlatState x = dt > 0 ? flat_step<double>(flat[k], snap[k], dt) : flat[k];
    return make_flat_jet(x, snap[k]);
  }

  PlanPoint evaluate(double time) const {
    PlanPoint pt;
    pt.jet = jet_at(time);
    pt.state = flat_to_state(pt.jet, model);
    pt.u_ff = flat_to_input(pt.jet, model, variant, smoothing);
    return pt;
  }
};

/// Maps a node sequence to a plan. `snaps` holds one entry per interval
/// (nodes - 1) or per node; the last node reuses the final snap, and a
/// single node is treated as static.
inline Plan trajectory_to_plan(const std::vector<FlatState>& nodes, const std::vector<Vec3>& snaps, double dt,
                               const CraneParams& p, const FrictionVariant& v, const SmoothingConfig& sm = {}) {
  if (nodes.empty()) throw ConfigError("trajectory_to_plan: no nodes");
  if (!(snaps.size() + 1 == nodes.size() || snaps.size() == nodes.size())) {
    throw ConfigError("trajectory_to_plan: snap count must be nodes-1 or nodes");
  }
  if (nodes.size() > 1 && !(dt > 0)) throw ConfigError("trajectory_to_plan: dt must be positive");
  Plan plan;
  plan.model = p;
  plan.variant = v;
  plan.smoothing = sm;
  const std::size_t n = nodes.size();
  plan.t.resize(n);
  plan.flat = nodes;
  plan.snap.resize(n);
  plan.state.resize(n);
  plan.u_ff.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    plan.t[k] = static_cast<double>(k) * dt;
    plan.snap[k] = snaps.empty() ? Vec3{} : snaps[std::min(k, snaps.size() - 1)];
    const FlatJet jet = make_flat_jet(nodes[k], plan.snap[k]);
    try {
      plan.state[k] = flat_to_state(jet, p);
      plan.u_ff[k] = flat_to_input(jet, p, v, sm);
    } catch (const SingularityError& e) {
      throw SingularityError(e.where(), "node " + std::to_string(k) + ": " + e.what());
    }
  }
  return plan;
}

/// Resamples a collocation solution so every node is kept and the spacing is
/// T/(n_intervals * m) <= dt_max.
inline std::pair<std::vector<FlatState>, std::vector<Vec3>> resample_nodes(const std::vector<FlatState>& nodes,
                                                                           const std::vector<Vec3>& snaps,
                                                                           double t_end, double dt_max,
                                                                           double* dt_out = nullptr) {
  const std::size_t n_int = nodes.size() - 1;
  if (n_int == 0) {
    if (dt_out) *dt_out = 0.0;
    return {nodes, {}};
  }
  const double h = t_end / static_cast<double>(n_int);
  const int m = std::max(1, static_cast<int>(std::ceil(h / dt_max - 1e-9)));
  const double sub = h / m;
  std::vector<FlatState> out;
  std::vector<Vec3> out_snap;
  out.reserve(n_int * m + 1);
  for (std::size_t k = 0; k < n_int; ++k) {
    for (int i = 0; i < m; ++i) {
      out.push_back(i == 0 ? nodes[k] : flat_step<double>(nodes[k], snaps[k], sub * i));
      out_snap.push_back(snaps[k]);
    }
  }
  out.push_back(nodes.back());
  if (dt_out) *dt_out = sub;
  return {out, out_snap};
}

// ---------------------------------------------------------------------------
// CSV

inline const char* kPlanCsvHeader =
    "t,x_p,xd_p,xdd_p,x3_p,x4_p,y_p,yd_p,ydd_p,y3_p,y4_p,z_p,zd_p,zdd_p,z3_p,z4_p,"
    "x_t,y_t,L,alpha,beta,f_x,f_y,f_l";

/// Writes the plan; `provenance` becomes a leading '# ...' line.
inline void write_plan_csv(std::ostream& os, const Plan& plan, const std::string& provenance = "") {
  if (!provenance.empty()) os << "# " << provenance << '\n';
  os << kPlanCsvHeader << '\n';
  os << std::setprecision(17);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    os << plan.t[k];
    const FlatJet j = make_flat_jet(plan.flat[k], plan.snap[k]);
    for (int a = 0; a < 3; ++a) {
      for (int d = 0; d < 5; ++d) os << ',' << j[a][d];
    }
    const CraneState& s = plan.state[k];
    const InputForces& u = plan.u_ff[k];
    os << ',' << s.x_t << ',' << s.y_t << ',' << s.L << ',' << s.alpha << ',' << s.beta << ',' << u.f_x << ','
       << u.f_y << ',' << u.f_l << '\n';
  }
}

/// Reads a plan CSV and recomputes the mapped columns with the given model.
inline Plan read_plan_csv(std::istream& is, const CraneParams& p, const FrictionVariant& v,
                          const SmoothingConfig& sm = {}) {
  std::string line;
  std::vector<FlatState> nodes;
  std::vector<Vec3> snaps;
  std::vector<double> times;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("t,", 0) != 0) throw ConfigError("plan CSV: missing header line");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 16) throw ConfigError("plan CSV: short row");
    times.push_back(row[0]);
    FlatJet j{};
    for (int a = 0; a < 3; ++a) {
      for (int d = 0; d < 5; ++d) j[a][d] = row[1 + 5 * a + d];
    }
    nodes.push_back(flat_state_of(j));
    snaps.push_back({j[0][4], j[1][4], j[2][4]});
  }
  if (nodes.empty()) throw ConfigError("plan CSV: no samples");
  const double dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  Plan plan = trajectory_to_plan(nodes, snaps, dt, p, v, sm);
  plan.t = times;
  return plan;
}

}  // namespace crane
