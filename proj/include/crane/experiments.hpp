#pragma once

/**
 * @file experiments.hpp
 * @brief Friction perturbation, run metrics, PI tuning and Monte-Carlo sweeps.
 */

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "crane/geometry.hpp"
#include "crane/simulator.hpp"
#include "json.hpp"

namespace crane {

// ---------------------------------------------------------------------------
// Friction perturbation

struct PerturbationSpec {
  double level = 0.0;  ///< delta: factors drawn from U[1 - delta, 1 + delta]
  unsigned long long seed = 1;
  int max_retries = 100;

  void validate() const {
    if (!(level >= 0)) throw ConfigError("PerturbationSpec: level must be >= 0");
    if (max_retries < 1) throw ConfigError("PerturbationSpec: max_retries must be >= 1");
  }
};

/// Multiplies every dry-friction coefficient by an independent factor; the
/// viscous coefficients are untouched. Draws again when a polynomial turns
/// negative inside the workspace.
inline CraneParams perturb_friction(const CraneParams& params, const PerturbationSpec& spec) {
  spec.validate();
  if (spec.level == 0.0) return params;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> dist(1.0 - spec.level, 1.0 + spec.level);
  auto factor = [&] { return std::max(0.0, dist(rng)); };
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    CraneParams p = params;
    for (Quartic* q : {&p.a_x, &p.b_x, &p.a_y, &p.b_y}) {
      for (double& c : *q) c *= factor();
    }
    p.C_l *= factor();
    try {
      p.validate();
      return p;
    } catch (const ConfigError&) {
    }
  }
  throw ConfigError("perturb_friction: no admissible draw after " + std::to_string(spec.max_retries) + " attempts");
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsConfig {
  double hold_time = 0.5;        ///< speeds must stay below threshold this long [s]
  double stop_velocity = 2e-3;   ///< [m/s]
  int n_rope = 9;                ///< rope samples for the collision check
};

struct RunMetrics {
  bool collided = false;
  double first_collision_time = std::numeric_limits<double>::quiet_NaN();
  double stop_time = 0.0;
  bool stopped = true;  ///< false: never settled, stop_time is the horizon
  double residual_oscillation = 0.0;
  double max_tracking_error = 0.0;
  std::array<double, 3> iae{0.0, 0.0, 0.0};
  bool aborted = false;
};

/// Extracts run metrics from a log. IAE is recomputed on the logged grid
/// (left rectangle rule).
inline RunMetrics metrics(const SimLog& log, const std::vector<BoxObstacle>& obstacles,
                          const MetricsConfig& cfg = {}) {
  RunMetrics m;
  m.aborted = log.aborted;
  const std::size_t n = log.size();
  if (n == 0) return m;

  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = log.state[k];
    if (!obstacles.empty() && !m.collided) {
      const Vec3 rt{s.x_t, s.y_t, 0.0};
      for (const Vec3& q : rope_points(rt, log.payload[k], cfg.n_rope)) {
        for (const auto& box : obstacles) {
          if (clearance_violated(box_clearance(q, box, 0.0), 0.0)) {
            m.collided = true;
            m.first_collision_time = log.t[k];
          }
        }
        if (m.collided) break;
      }
    }
    if (k < log.payload_planned.size()) {
      double d = 0;
      for (int a = 0; a < 3; ++a) d += std::pow(log.payload[k][a] - log.payload_planned[k][a], 2);
      m.max_tracking_error = std::max(m.max_tracking_error, std::sqrt(d));
    }
    if (k + 1 < n && k < log.reference.size()) {
      const double h = log.t[k + 1] - log.t[k];
      m.iae[0] += std::abs(log.reference[k][0] - s.x_t) * h;
      m.iae[1] += std::abs(log.reference[k][1] - s.y_t) * h;
      m.iae[2] += std::abs(log.reference[k][2] - s.L) * h;
    }
  }

  // Stop time: first sample after the reference end from which all actuated
  // speeds stay below the threshold for hold_time.
  auto slow = [&](std::size_t k) {
    const auto& s = log.state[k];
    return std::abs(s.xd_t) < cfg.stop_velocity && std::abs(s.yd_t) < cfg.stop_velocity &&
           std::abs(s.Ld) < cfg.stop_velocity;
  };
  std::size_t stop = n - 1;
  m.stopped = false;
  std::size_t run_start = n;
  for (std::size_t k = 0; k < n; ++k) {
    if (log.t[k] < log.reference_end - 1e-12) continue;
    if (!slow(k)) {
      run_start = n;
      continue;
    }
    if (run_start == n) run_start = k;
    if (log.t[k] - log.t[run_start] >= cfg.hold_time - 1e-9) {
      stop = run_start;
      m.stopped = true;
      break;
    }
  }
  m.stop_time = log.t[stop];

  const Vec3& fin = log.payload.back();
  for (std::size_t k = stop; k < n; ++k) {
    double d = 0;
    for (int a = 0; a < 3; ++a) d += std::pow(log.payload[k][a] - fin[a], 2);
    m.residual_oscillation = std::max(m.residual_oscillation, std::sqrt(d));
  }
  return m;
}

// ---------------------------------------------------------------------------
// PI tuning

struct TuneConfig {
  int max_evaluations = 150;
  double initial_scale = 2.0;   ///< multiplicative probe factor
  double min_scale = 1.05;      ///< stop once the probe factor shrinks below this
  double zero_probe = 10.0;     ///< value tried for a gain currently at zero
  double kp_max = 500.0;        ///< upper bound of the search box [N/m]
  double ki_max = 500.0;        ///< [N/(m s)]
  double settle_time = 3.0;     ///< simulated time after the plan [s]
  bool tune_integrator = true;
};

struct TuneResult {
  PiGains gains;
  double iae = 0.0;          ///< total IAE of the returned gains
  double initial_iae = 0.0;  ///< total IAE of the starting gains
  int evaluations = 0;
  bool budget_exhausted = false;
};

/// Total closed-loop IAE of the three actuated axes; +inf when the run aborts.
inline double closed_loop_iae(const Plan& plan, const CraneParams& plant, const PiGains& gains, const SimConfig& cfg) {
  const SimLog log = run_closed_loop(plan, plant, gains, cfg);
  if (log.aborted) return std::numeric_limits<double>::infinity();
  return log.iae[0] + log.iae[1] + log.iae[2];
}

/// Coordinate pattern search over (Kp, Ki) per axis minimizing total IAE.
inline TuneResult tune_pi(const Plan& plan, const CraneParams& plant, const PiGains& initial, const TuneConfig& tc = {},
                          SimConfig sim = {}) {
  initial.validate();
  if (tc.max_evaluations < 1) throw ConfigError("TuneConfig: max_evaluations must be >= 1");
  if (!(tc.initial_scale > 1 && tc.min_scale > 1)) throw ConfigError("TuneConfig: scales must exceed 1");
  if (sim.horizon <= 0) sim.horizon = plan.t_end() + tc.settle_time;

  TuneResult res;
  res.gains = initial;
  res.initial_iae = res.iae = closed_loop_iae(plan, plant, initial, sim);
  res.evaluations = 1;

  auto coord = [](PiGains& g, int i) -> double& { return i % 2 == 0 ? g.axis[i / 2].kp : g.axis[i / 2].ki; };
  const int n_coords = tc.tune_integrator ? 6 : 3;
  double scale = tc.initial_scale;
  while (scale >= tc.min_scale) {
    bool improved = false;
    for (int c = 0; c < n_coords; ++c) {
      const int i = tc.tune_integrator ? c : 2 * c;
      const double x = coord(res.gains, i);
      std::vector<double> probes = x > 0 ? std::vector<double>{x * scale, x / scale} : std::vector<double>{tc.zero_probe};
      const double cap = i % 2 == 0 ? tc.kp_max : tc.ki_max;
      for (double& v : probes) v = std::min(v, cap);
      for (double v : probes) {
        if (v == x) continue;
        if (res.evaluations >= tc.max_evaluations) {
          res.budget_exhausted = true;
          return res;
        }
        PiGains trial = res.gains;
        coord(trial, i) = v;
        const double f = closed_loop_iae(plan, plant, trial, sim);
        ++res.evaluations;
        if (f < res.iae) {
          res.iae = f;
          res.gains = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) scale = std::sqrt(scale);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Monte-Carlo sweep

/// `n` levels evenly spaced over [lo, hi].
inline std::vector<double> level_ladder(int n = 75, double lo = 0.02, double hi = 1.5) {
  if (n < 1) throw ConfigError("level_ladder: need at least one level");
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

struct SweepConfig {
  std::vector<double> levels = level_ladder();
  int runs_per_level = 1;
  unsigned long long master_seed = 1;
  int threads = 0;  ///< 0 = hardware concurrency
  SimConfig sim;
  MetricsConfig metrics;

  void validate() const {
    if (levels.empty()) throw ConfigError("SweepConfig: no levels");
    for (double l : levels) {
      if (!(l >= 0)) throw ConfigError("SweepConfig: levels must be >= 0");
    }
    if (runs_per_level < 1) throw ConfigError("SweepConfig: runs_per_level must be >= 1");
    sim.validate();
  }
};

struct SweepPlan {
  std::string tag;  ///< e.g. "cm"
  Plan plan;
};

struct SweepRow {
  std::string plan;
  double level = 0.0;
  int run = 0;
  unsigned long long seed = 0;
  bool failed = false;
  std::string message;
  RunMetrics metrics;
};

/// Seed of the perturbation used by (level index, run). Every plan sees the
/// same perturbed plant for the same pair.
inline unsigned long long run_seed(unsigned long long master, std::size_t level_index, int run) {
  std::seed_seq seq{static_cast<unsigned>(master & 0xffffffffULL), static_cast<unsigned>(master >> 32),
                    static_cast<unsigned>(level_index), static_cast<unsigned>(run)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<unsigned long long>(out[0]) << 32) | out[1];
}

/// Runs every plan against every perturbed plant. Rows are sorted by
/// (plan, level, run) regardless of thread scheduling.
inline std::vector<SweepRow> sweep(const std::vector<BoxObstacle>& obstacles, const std::vector<SweepPlan>& plans,
                                   const CraneParams& params, const PiGains& gains, const SweepConfig& cfg) {
  cfg.validate();
  gains.validate();
  struct Task {
    std::size_t plan, level;
    int run;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < plans.size(); ++p) {
    for (std::size_t l = 0; l < cfg.levels.size(); ++l) {
      for (int r = 0; r < cfg.runs_per_level; ++r) tasks.push_back({p, l, r});
    }
  }
  std::vector<SweepRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      SweepRow& row = rows[i];
      row.plan = plans[t.plan].tag;
      row.level = cfg.levels[t.level];
      row.run = t.run;
      row.seed = run_seed(cfg.master_seed, t.level, t.run);
      try {
        const CraneParams plant = perturb_friction(params, {row.level, row.seed});
        const SimLog log = run_closed_loop(plans[t.plan].plan, plant, gains, cfg.sim);
        row.metrics = metrics(log, obstacles, cfg.metrics);
        if (log.aborted) {
          row.failed = true;
          row.message = log.message;
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.message = e.what();
      }
    }
  };
  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
  n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.plan, a.level, a.run) < std::tie(b.plan, b.level, b.run);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Quartiles {
  double q1 = 0, median = 0, q3 = 0;
};

/// Linear-interpolation quantiles; NaN entries are dropped.
inline Quartiles quartiles(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  Quartiles q;
  if (v.empty()) {
    q.q1 = q.median = q.q3 = std::numeric_limits<double>::quiet_NaN();
    return q;
  }
  std::sort(v.begin(), v.end());
  auto at = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

struct PlanSummary {
  std::string plan;
  int runs = 0;
  int collisions = 0;
  int failures = 0;
  Quartiles residual_oscillation, stop_time, max_tracking_error;
};

/// Per-plan statistics over rows with level <= cutoff. Collided runs are included.
inline std::vector<PlanSummary> summarize(const std::vector<SweepRow>& rows, double cutoff = 1.0) {
  std::map<std::string, std::vector<const SweepRow*>> by_plan;
  for (const auto& r : rows) {
    if (r.level <= cutoff + 1e-12) by_plan[r.plan].push_back(&r);
  }
  std::vector<PlanSummary> out;
  for (const auto& [tag, rs] : by_plan) {
    PlanSummary s;
    s.plan = tag;
    std::vector<double> osc, stop, err;
    for (const SweepRow* r : rs) {
      ++s.runs;
      if (r->metrics.collided) ++s.collisions;
      if (r->failed) {
        ++s.failures;
        continue;
      }
      osc.push_back(r->metrics.residual_oscillation);
      stop.push_back(r->metrics.stop_time);
      err.push_back(r->metrics.max_tracking_error);
    }
    s.residual_oscillation = quartiles(osc);
    s.stop_time = quartiles(stop);
    s.max_tracking_error = quartiles(err);
    out.push_back(s);
  }
  return out;
}

inline const char* kSweepCsvHeader =
    "plan,level,run,seed,failed,collided,first_collision_time,stop_time,stopped,residual_oscillation,"
    "max_tracking_error,iae_x,iae_y,iae_l";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const std::string& provenance = "") {
  if (!provenance.empty()) os << "# " << provenance << '\n';
  os << kSweepCsvHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    const RunMetrics& m = r.metrics;
    os << r.plan << ',' << r.level << ',' << r.run << ',' << r.seed << ',' << r.failed << ',' << m.collided << ','
       << m.first_collision_time << ',' << m.stop_time << ',' << m.stopped << ',' << m.residual_oscillation << ','
       << m.max_tracking_error << ',' << m.iae[0] << ',' << m.iae[1] << ',' << m.iae[2] << '\n';
  }
}

inline nlohmann::json to_json(const Quartiles& q) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"q1", num(q.q1)}, {"median", num(q.median)}, {"q3", num(q.q3)}};
}

inline nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j{{"collided", m.collided},
                   {"stop_time", m.stop_time},
                   {"stopped", m.stopped},
                   {"residual_oscillation", m.residual_oscillation},
                   {"max_tracking_error", m.max_tracking_error},
                   {"iae", m.iae},
                   {"aborted", m.aborted}};
  j["first_collision_time"] = m.collided ? nlohmann::json(m.first_collision_time) : nlohmann::json(nullptr);
  return j;
}

/// Summary document: per-plan quartiles up to the cutoff and collision rates per level.
inline nlohmann::json sweep_summary_json(const std::vector<SweepRow>& rows, double cutoff = 1.0) {
  nlohmann::json j;
  j["cutoff"] = cutoff;
  for (const auto& s : summarize(rows, cutoff)) {
    j["plans"][s.plan] = {{"runs", s.runs},
                          {"collisions", s.collisions},
                          {"failures", s.failures},
                          {"residual_oscillation", to_json(s.residual_oscillation)},
                          {"stop_time", to_json(s.stop_time)},
                          {"max_tracking_error", to_json(s.max_tracking_error)}};
  }
  std::map<std::string, std::map<double, std::pair<int, int>>> rate;
  for (const auto& r : rows) {
    auto& c = rate[r.plan][r.level];
    ++c.first;
    if (r.metrics.collided) ++c.second;
  }
  for (const auto& [plan, levels] : rate) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [level, c] : levels) {
      arr.push_back({{"level", level}, {"runs", c.first}, {"collision_rate", static_cast<double>(c.second) / c.first}});
    }
    j["collision_rate_by_level"][plan] = arr;
  }
  return j;
}

}  // namespace crane
