// Command-line front end: plan, simulate, tune, sweep, verify.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "crane/crane.hpp"

namespace fs = std::filesystem;
using namespace crane;

namespace {

enum Exit : int {
  kOk = 0,
  kParseError = 2,
  kInfeasible = 3,
  kSolverFailure = 4,
  kCollision = 5,
};

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<unsigned long long> seed;
  std::string variant;
  int ncoll = 0;
  int verbose = 0;
  std::string plan;
};

/// Failure that maps to a specific exit code.
struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct Context {
  Config cfg;
  std::string hash;
  fs::path out;
  int verbose = 0;

  std::string provenance(unsigned long long seed) const {
    return "config_hash=" + hash + " seed=" + std::to_string(seed);
  }

  std::ofstream open(const std::string& name) const {
    std::ofstream f(out / name);
    if (!f) throw ExitError(kParseError, "cannot write " + (out / name).string());
    return f;
  }

  void write_json(const std::string& name, Json j, unsigned long long seed) const {
    j["config_hash"] = hash;
    j["seed"] = seed;
    open(name) << j.dump(2) << '\n';
  }

  void note(const std::string& msg) const {
    if (verbose > 0) std::cerr << msg << '\n';
  }
};

Context make_context(const Options& o) {
  Context c;
  c.cfg = o.config.empty() ? Config{} : load_config(o.config);
  if (o.seed) {
    c.cfg.planner.seed.seed = *o.seed;
    c.cfg.experiment.sweep.master_seed = *o.seed;
  }
  if (!o.variant.empty()) c.cfg.variant = friction_model_from_string(o.variant);
  if (o.ncoll > 0) c.cfg.planner.transcription.n_intervals = o.ncoll;
  c.cfg.validate();
  c.hash = config_hash(c.cfg);
  c.out = o.out;
  c.verbose = o.verbose;
  if (o.verbose > 1) {
    c.cfg.planner.solve.verbose = o.verbose - 1;
    c.cfg.planner.solve.log = &std::cerr;
  }
  fs::create_directories(c.out);
  return c;
}

Json report_json(const PlanResult& r) {
  const SolveReport& s = r.report;
  Json j{{"ok", r.ok},
         {"stage", r.stage},
         {"message", r.message},
         {"status", to_string(s.status)},
         {"iterations", s.iterations},
         {"objective", s.objective},
         {"max_violation", s.max_violation},
         {"dual_infeasibility", s.dual_infeasibility},
         {"final_mu", s.final_mu},
         {"wall_time", s.wall_time},
         {"solver_message", s.message},
         {"planner_seed", r.seed}};
  if (r.ok) {
    j["final_time"] = r.plan.t_end();
    j["samples"] = r.plan.size();
    j["min_clearance"] = r.verification.min_phi;
  }
  return j;
}

Json collision_json(const CollisionReport& c) {
  Json j{{"collided", c.collided}, {"singular", c.singular}, {"samples_checked", c.samples_checked},
         {"obstacle_hit", c.obstacle_hit}};
  j["first_violation_time"] = c.collided ? Json(c.first_violation_time) : Json(nullptr);
  j["min_phi"] = std::isinf(c.min_phi) ? Json(nullptr) : Json(c.min_phi);
  return j;
}

[[noreturn]] void fail_plan(const PlanResult& r) {
  const std::string msg = r.message.starts_with(r.stage) ? r.message : r.stage + ": " + r.message;
  if (r.stage == "seed planner") throw ExitError(kInfeasible, msg);
  if (r.report.status == SolveStatus::Infeasible) throw ExitError(kInfeasible, msg);
  if (r.stage == "verification") throw ExitError(kCollision, msg);
  throw ExitError(kSolverFailure, msg);
}

PlanResult plan_variant(const Context& c, FrictionModel v) {
  c.note(std::string("planning with ") + to_string(v));
  PlanResult r = plan_pipeline(c.cfg.scenario, c.cfg.params, v, c.cfg.planner);
  if (r.ok) {
    c.note("  T = " + std::to_string(r.plan.t_end()) + " s, " + std::to_string(r.report.iterations) + " iterations");
  }
  return r;
}

/// Plan from --plan if given, otherwise a fresh solve with the configured variant.
Plan obtain_plan(const Context& c, const Options& o, FrictionModel v) {
  if (!o.plan.empty()) {
    std::ifstream in(o.plan);
    if (!in) throw ConfigError("cannot open plan file '" + o.plan + "'");
    return read_plan_csv(in, c.cfg.params, FrictionVariant::from(v, c.cfg.params), c.cfg.planner.transcription.smoothing);
  }
  PlanResult r = plan_variant(c, v);
  if (!r.ok) fail_plan(r);
  return r.plan;
}

int cmd_plan(const Options& o) {
  const Context c = make_context(o);
  const PlanResult r = plan_variant(c, c.cfg.variant);
  const std::string tag = to_string(c.cfg.variant);
  const unsigned long long seed = c.cfg.planner.seed.seed;
  c.write_json("solve_report_" + tag + ".json", report_json(r), seed);
  if (!r.ok) fail_plan(r);
  auto f = c.open("plan_" + tag + ".csv");
  write_plan_csv(f, r.plan, c.provenance(seed));
  return kOk;
}

int cmd_simulate(const Options& o) {
  const Context c = make_context(o);
  const Plan plan = obtain_plan(c, o, c.cfg.variant);
  const SimLog log = run_closed_loop(plan, c.cfg.params, c.cfg.gains, c.cfg.sim);
  const unsigned long long seed = c.cfg.planner.seed.seed;
  const std::string tag = to_string(c.cfg.variant);
  auto f = c.open("simlog_" + tag + ".csv");
  write_simlog_csv(f, log, c.provenance(seed));
  MetricsConfig mc = c.cfg.experiment.sweep.metrics;
  Json j = to_json(metrics(log, c.cfg.scenario.obstacles, mc));
  j["saturation_time"] = log.saturation_time;
  j["message"] = log.message;
  c.write_json("metrics_" + tag + ".json", j, seed);
  if (log.aborted) throw ExitError(kSolverFailure, log.message);
  return kOk;
}

int cmd_tune(const Options& o) {
  Options oo = o;
  if (oo.variant.empty()) oo.variant = "nfm";
  const Context c = make_context(oo);
  const Plan plan = obtain_plan(c, o, c.cfg.variant);
  const TuneResult t = tune_pi(plan, c.cfg.params, c.cfg.gains, c.cfg.experiment.tune, c.cfg.sim);
  Json j{{"controller", detail::write(t.gains)},
         {"iae", t.iae},
         {"initial_iae", t.initial_iae},
         {"evaluations", t.evaluations},
         {"budget_exhausted", t.budget_exhausted}};
  c.write_json("gains.json", j, c.cfg.planner.seed.seed);
  c.note("IAE " + std::to_string(t.initial_iae) + " -> " + std::to_string(t.iae));
  return kOk;
}

int cmd_sweep(const Options& o) {
  const Context c = make_context(o);
  std::vector<SweepPlan> plans;
  for (FrictionModel v : {FrictionModel::Complete, FrictionModel::Simplified, FrictionModel::NoDryFriction}) {
    PlanResult r = plan_variant(c, v);
    if (!r.ok) fail_plan(r);
    plans.push_back({to_string(v), std::move(r.plan)});
  }
  const auto rows = sweep(c.cfg.scenario.obstacles, plans, c.cfg.params, c.cfg.gains, c.cfg.experiment.sweep);
  const unsigned long long seed = c.cfg.experiment.sweep.master_seed;
  auto f = c.open("sweep.csv");
  write_sweep_csv(f, rows, c.provenance(seed));
  c.write_json("sweep_summary.json", sweep_summary_json(rows, c.cfg.experiment.cutoff), seed);
  return kOk;
}

int cmd_verify(const Options& o) {
  const Context c = make_context(o);
  if (o.plan.empty()) throw ConfigError("verify needs --plan");
  const Plan plan = obtain_plan(c, o, c.cfg.variant);
  const auto& sc = c.cfg.scenario;
  const CollisionReport rep =
      verify_trajectory(plan, sc.obstacles, sc.clearance, c.cfg.planner.verify_oversample, sc.clearance.margin);
  c.write_json("collision_report.json", collision_json(rep), c.cfg.planner.seed.seed);
  if (rep.collided) {
    std::cerr << "collision: clearance below " << sc.clearance.margin << " m at t = " << rep.first_violation_time
              << " s\n";
    return kCollision;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-optimal overhead crane planning and closed-loop simulation"};
  app.require_subcommand(1);
  // One Options per subcommand: CLI11 resets flags bound to shared variables.
  std::array<Options, 5> opts;
  auto add_common = [](CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "seed override (planner seed and sweep master seed)");
    sub->add_option("--variant", o.variant, "friction model used for planning")
        ->check(CLI::IsMember({"cm", "sm", "nfm"}));
    sub->add_option("--ncoll", o.ncoll, "number of collocation intervals")->check(CLI::PositiveNumber);
    sub->add_flag("--verbose,-v", o.verbose, "progress on stderr; repeat for solver iterations");
  };
  auto* plan = app.add_subcommand("plan", "solve for a verified time-optimal plan");
  auto* simulate = app.add_subcommand("simulate", "closed-loop simulation of a plan");
  auto* tune = app.add_subcommand("tune", "tune the PI gains by IAE (NFM plan by default)");
  auto* sw = app.add_subcommand("sweep", "friction-perturbation Monte-Carlo sweep of CM, SM and NFM plans");
  auto* verify = app.add_subcommand("verify", "oversampled collision check of a plan CSV");
  const std::array<CLI::App*, 5> subs{plan, simulate, tune, sw, verify};
  for (std::size_t i = 0; i < subs.size(); ++i) add_common(subs[i], opts[i]);
  for (std::size_t i : {1, 2, 4}) {
    subs[i]->add_option("--plan", opts[i].plan, "plan CSV to use instead of planning")->check(CLI::ExistingFile);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kParseError;
  }

  try {
    if (*plan) return cmd_plan(opts[0]);
    if (*simulate) return cmd_simulate(opts[1]);
    if (*tune) return cmd_tune(opts[2]);
    if (*sw) return cmd_sweep(opts[3]);
    if (*verify) return cmd_verify(opts[4]);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParseError;
  } catch (const PlanningError& e) {
    std::cerr << "error: " << e.stage() << ": " << e.what() << '\n';
    return kSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolverFailure;
  }
  return kOk;
}
