#pragma once

/**
 * @file nlp.hpp
 * @brief Sparse nonlinear program container and a primal-dual interior-point
 * solver.
 *
 * Problem form:
 *
 *     min f(x)   s.t.   g_l <= g(x) <= g_u,   x_l <= x <= x_u
 *
 * Rows with g_l == g_u are equalities; variables with x_l == x_u are fixed and
 * removed. Inequality rows get a slack s with g(x) - s = 0 and bounds on s.
 * Every iteration solves the primal-dual Newton system with the slack block
 * condensed out, using a sparse LDL^T with inertia correction, then
 * backtracks on an l1 exact-penalty barrier merit function (with one
 * second-order correction). The barrier parameter follows the monotone
 * Fiacco-McCormick rule. Derivatives are supplied by the caller.
 */

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/model.hpp"

namespace crane {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct NlpProblem {
  int n = 0;  ///< variables
  int m = 0;  ///< constraint rows
  std::vector<double> x_lower, x_upper;
  std::vector<double> g_lower, g_upper;

  std::function<double(const Eigen::VectorXd&)> f;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> grad_f;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> g;

  /// Constant Jacobian sparsity (row, col) and its value callback.
  std::vector<int> jac_rows, jac_cols;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> jac_values;

  /// Lower-triangular (row >= col) Hessian sparsity of
  /// obj_factor * f + sum_i lambda_i g_i, and its value callback.
  std::vector<int> hess_rows, hess_cols;
  std::function<void(const Eigen::VectorXd&, double, const Eigen::VectorXd&, Eigen::VectorXd&)> hess_values;

  void validate() const {
    auto sz = [](const auto& v) { return static_cast<int>(v.size()); };
    if (n <= 0) throw ConfigError("NlpProblem: no variables");
    if (sz(x_lower) != n || sz(x_upper) != n) throw ConfigError("NlpProblem: variable bound sizes");
    if (sz(g_lower) != m || sz(g_upper) != m) throw ConfigError("NlpProblem: constraint bound sizes");
    if (jac_rows.size() != jac_cols.size()) throw ConfigError("NlpProblem: Jacobian pattern sizes differ");
    if (hess_rows.size() != hess_cols.size()) throw ConfigError("NlpProblem: Hessian pattern sizes differ");
    for (std::size_t k = 0; k < jac_rows.size(); ++k) {
      if (jac_rows[k] < 0 || jac_rows[k] >= m || jac_cols[k] < 0 || jac_cols[k] >= n) {
        throw ConfigError("NlpProblem: Jacobian entry out of range");
      }
    }
    for (std::size_t k = 0; k < hess_rows.size(); ++k) {
      if (hess_cols[k] < 0 || hess_rows[k] >= n || hess_rows[k] < hess_cols[k]) {
        throw ConfigError("NlpProblem: Hessian entry not in the lower triangle");
      }
    }
    for (int i = 0; i < n; ++i) {
      if (x_lower[i] > x_upper[i]) throw ConfigError("NlpProblem: variable lower bound above upper bound");
    }
    for (int i = 0; i < m; ++i) {
      if (g_lower[i] > g_upper[i]) throw ConfigError("NlpProblem: constraint lower bound above upper bound");
    }
    if (!f || !grad_f || (m > 0 && (!g || !jac_values)) || !hess_values) {
      throw ConfigError("NlpProblem: missing callback");
    }
  }
};

enum class SolveStatus { Optimal, FeasibleStalled, Infeasible, IterationLimit, LineSearchFailure, EvaluationError };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleStalled: return "feasible-stalled";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration-limit";
    case SolveStatus::LineSearchFailure: return "line-search-failure";
    case SolveStatus::EvaluationError: return "evaluation-error";
  }
  return "unknown";
}

struct SolveOptions {
  int max_iterations = 1000;
  double tol = 1e-8;              ///< scaled overall optimality error
  double dual_inf_tol = 1e-4;     ///< unscaled stationarity
  double constr_viol_tol = 1e-8;  ///< unscaled constraint violation
  double compl_inf_tol = 1e-6;
  double mu_init = 0.1;
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double max_wall_time = kInf;    ///< [s]
  bool gradient_scaling = true;
  int verbose = 0;
  std::ostream* log = nullptr;
};

struct SolveReport {
  SolveStatus status = SolveStatus::IterationLimit;
  int iterations = 0;
  double objective = kInf;
  double max_violation = kInf;   ///< unscaled, constraint rows and variable bounds
  double dual_infeasibility = kInf;
  double final_mu = 0.0;
  double wall_time = 0.0;        ///< [s]
  std::string message;
  Eigen::VectorXd multipliers;   ///< constraint multipliers (unscaled)

  bool success() const { return status == SolveStatus::Optimal; }
  bool feasible(double tol = 1e-6) const { return max_violation <= tol; }
};

/// Constraint violation of x against rows and bounds.
inline double max_violation(const NlpProblem& nlp, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (int i = 0; i < nlp.n; ++i) {
    v = std::max({v, nlp.x_lower[i] - x[i], x[i] - nlp.x_upper[i]});
  }
  if (nlp.m > 0) {
    Eigen::VectorXd g(nlp.m);
    nlp.g(x, g);
    for (int i = 0; i < nlp.m; ++i) v = std::max({v, nlp.g_lower[i] - g[i], g[i] - nlp.g_upper[i]});
  }
  return v;
}

namespace detail {

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& nlp, const SolveOptions& opt) : nlp_(nlp), opt_(opt) {}

  std::pair<Eigen::VectorXd, SolveReport> run(const Eigen::VectorXd& x_guess) {
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport rep;
    setup(x_guess);
    try {
      initialize();
    } catch (const SingularityError& e) {
      rep.status = SolveStatus::EvaluationError;
      rep.message = std::string("evaluation failed at the starting point: ") + e.what();
      return {full_x(x_), finish(rep, t0)};
    }

    if (const int row = violated_fixed_row(); row >= 0) {
      rep.status = SolveStatus::Infeasible;
      rep.message = "constraint row " + std::to_string(row) + " depends only on fixed variables and is violated";
      return {full_x(x_), finish(rep, t0)};
    }

    double mu = opt_.mu_init;
    double delta_w_last = 0.0;
    const double theta_init = c_.lpNorm<1>();
    const double theta_max = 1e4 * std::max(1.0, theta_init);
    const double theta_min = 1e-4 * std::max(1.0, theta_init);
    filter_.clear();
    for (int iter = 0;; ++iter) {
      rep.iterations = iter;
      const double viol = unscaled_violation();
      const double dual = dual_infeasibility(0.0);
      if (opt_.verbose > 0 && opt_.log) {
        *opt_.log << "iter " << iter << " f=" << f_ / obj_scale_ << " viol=" << viol << " dual=" << dual
                  << " mu=" << mu << '\n';
      }
      if (overall_error(0.0) <= opt_.tol ||
          (viol <= opt_.constr_viol_tol && dual / obj_scale_ <= opt_.dual_inf_tol &&
           complementarity(0.0) <= opt_.compl_inf_tol)) {
        rep.status = SolveStatus::Optimal;
        break;
      }
      if (iter >= opt_.max_iterations) {
        rep.status = SolveStatus::IterationLimit;
        rep.message = "iteration limit reached";
        break;
      }
      if (seconds_since(t0) > opt_.max_wall_time) {
        rep.status = SolveStatus::IterationLimit;
        rep.message = "wall-time limit reached";
        break;
      }

      // Barrier update (possibly several times per iteration); resets the filter.
      while (mu > opt_.tol / 10 && overall_error(mu) <= 10.0 * mu) {
        mu = std::max(opt_.tol / 10, std::min(0.2 * mu, std::pow(mu, 1.5)));
        filter_.clear();
      }
      rep.final_mu = mu;
      const double tau = std::max(0.99, 1.0 - mu);

      Step d;
      if (!newton_step(mu, delta_w_last, d, false)) {
        rep.status = SolveStatus::LineSearchFailure;
        rep.message = "KKT system could not be factorized";
        break;
      }
      const double alpha_max = max_step(w_, d.dw, tau);
      const double alpha_z = std::min(max_step_z(z_l_, d.dz_l, tau), max_step_z(z_u_, d.dz_u, tau));

      // Tiny step: accept and let the barrier parameter move on.
      double rel = 0.0;
      for (int i = 0; i < nw_; ++i) rel = std::max(rel, std::abs(d.dw[i]) / (1.0 + std::abs(w_[i])));
      if (rel < 1e-14) {
        Trial tr;
        if (evaluate_trial(w_ + alpha_max * d.dw, tr)) accept(tr, d, alpha_max, alpha_z, mu);
        if (mu > opt_.tol / 10) {
          mu = std::max(opt_.tol / 10, std::min(0.2 * mu, std::pow(mu, 1.5)));
          filter_.clear();
        }
        continue;
      }

      const double theta0 = c_.lpNorm<1>();
      const double phi0 = barrier_value(mu, f_, w_);
      const double gd = barrier_gradient(mu).dot(d.dw);
      const double alpha_min = min_step(theta0, gd, theta_min);

      double alpha = alpha_max;
      bool accepted = false;
      for (int ls = 0; alpha >= alpha_min && ls < 60; ++ls) {
        Trial tr;
        if (evaluate_trial(w_ + alpha * d.dw, tr)) {
          const double th = tr.c.lpNorm<1>();
          const double ph = barrier_value(mu, tr.f, tr.w);
          bool f_type = false;
          if (acceptable(th, ph, theta0, phi0, gd, alpha, theta_min, theta_max, f_type)) {
            if (opt_.verbose > 1 && opt_.log) {
              *opt_.log << "  step alpha=" << alpha << " alpha_max=" << alpha_max << " ls=" << ls
                        << " dw=" << delta_w_ << (f_type ? " f" : " h") << '\n';
            }
            if (!f_type) augment_filter(theta0, phi0);
            accept(tr, d, alpha, alpha_z, mu);
            accepted = true;
            break;
          }
          if (ls == 0 && th >= theta0) {
            // Second-order correction for the full step.
            Step soc;
            if (soc_step(mu, alpha, tr.c, soc)) {
              const double a_soc = max_step(w_, soc.dw, tau);
              Trial ts;
              if (evaluate_trial(w_ + a_soc * soc.dw, ts)) {
                const double ths = ts.c.lpNorm<1>();
                const double phs = barrier_value(mu, ts.f, ts.w);
                bool f_soc = false;
                if (acceptable(ths, phs, theta0, phi0, gd, alpha, theta_min, theta_max, f_soc)) {
                  if (opt_.verbose > 1 && opt_.log) *opt_.log << "  soc step alpha=" << a_soc << '\n';
                  if (!f_soc) augment_filter(theta0, phi0);
                  accept(ts, soc, a_soc, alpha_z, mu);
                  accepted = true;
                  break;
                }
              }
            }
          }
        }
        alpha *= 0.5;
      }
      if (accepted) continue;

      // Feasibility restoration.
      if (opt_.verbose > 0 && opt_.log) *opt_.log << "  restoration\n";
      augment_filter(theta0, phi0);
      const RestorationOutcome ro = restore(mu, tau, delta_w_last);
      if (ro == RestorationOutcome::Ok) continue;
      const double v = unscaled_violation();
      if (v <= opt_.constr_viol_tol * 100) {
        rep.status = SolveStatus::FeasibleStalled;
        rep.message = "line search stalled at a feasible point";
      } else if (ro == RestorationOutcome::Stationary || infeasibility_stationary()) {
        rep.status = SolveStatus::Infeasible;
        rep.message = "converged to a stationary point of the constraint violation";
      } else {
        rep.status = SolveStatus::LineSearchFailure;
        rep.message = "line search and restoration failed";
      }
      break;
    }
    return {full_x(x_), finish(rep, t0)};
  }

 private:
  // Filter line search.
  std::vector<std::pair<double, double>> filter_;
  static constexpr double kGammaTheta = 1e-5, kGammaPhi = 1e-8, kSTheta = 1.1, kSPhi = 2.3, kEtaPhi = 1e-8;

  double barrier_value(double mu, double f, const Eigen::VectorXd& w) const {
    const Eigen::VectorXd none = Eigen::VectorXd::Zero(m_);
    return merit(mu, 0.0, f, none, w);
  }

  bool in_filter(double theta, double phi) const {
    for (const auto& [ft, fp] : filter_) {
      if (theta >= ft && phi >= fp) return true;
    }
    return false;
  }

  void augment_filter(double theta0, double phi0) {
    filter_.emplace_back((1 - kGammaTheta) * theta0, phi0 - kGammaPhi * theta0);
  }

  double min_step(double theta0, double gd, double theta_min) const {
    double a = kGammaTheta;
    if (gd < 0) {
      a = std::min(a, kGammaPhi * theta0 / -gd);
      if (theta0 <= theta_min) a = std::min(a, std::pow(theta0, kSTheta) / std::pow(-gd, kSPhi));
    }
    return 0.05 * a;
  }

  bool acceptable(double th, double ph, double theta0, double phi0, double gd, double alpha, double theta_min,
                  double theta_max, bool& f_type) const {
    f_type = false;
    if (!std::isfinite(ph) || th > theta_max || in_filter(th, ph)) return false;
    const double slack = 1e-14 * std::max(1.0, std::abs(phi0));
    const bool switching = gd < 0 && alpha * std::pow(-gd, kSPhi) > std::pow(theta0, kSTheta);
    if (theta0 <= theta_min && switching) {
      f_type = true;
      return ph <= phi0 + kEtaPhi * alpha * gd + slack;
    }
    return th <= (1 - kGammaTheta) * theta0 || ph <= phi0 - kGammaPhi * theta0 + slack;
  }

  enum class RestorationOutcome { Ok, Stationary, Failed };

  /// Minimum-norm steps on the linearized constraints until the iterate is
  /// acceptable to the filter.
  RestorationOutcome restore(double mu, double tau, double& delta_w_hint) {
    const double theta_start = c_.lpNorm<1>();
    for (int it = 0; it < 100; ++it) {
      const double theta = c_.lpNorm<1>();
      if (it > 0 && theta <= 0.9 * theta_start && !in_filter(theta, barrier_value(mu, f_, w_))) {
        lam_.setZero();
        least_squares_multipliers();
        return RestorationOutcome::Ok;
      }
      if (infeasibility_stationary() && theta > 0) return RestorationOutcome::Stationary;
      Step d;
      if (!newton_step(mu, delta_w_hint, d, true)) return RestorationOutcome::Failed;
      double alpha = max_step(w_, d.dw, tau);
      const double alpha_z = std::min(max_step_z(z_l_, d.dz_l, tau), max_step_z(z_u_, d.dz_u, tau));
      bool moved = false;
      for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
        Trial tr;
        if (!evaluate_trial(w_ + alpha * d.dw, tr)) continue;
        if (tr.c.lpNorm<1>() <= (1 - 1e-4 * alpha) * theta) {
          Step keep = d;
          keep.dl.setZero();
          accept(tr, keep, alpha, alpha_z, mu);
          moved = true;
          break;
        }
      }
      if (!moved) return theta_start > 0 && infeasibility_stationary() ? RestorationOutcome::Stationary
                                                                      : RestorationOutcome::Failed;
    }
    return RestorationOutcome::Failed;
  }

  struct Step {
    Eigen::VectorXd dw, dl, dz_l, dz_u;
  };
  struct Trial {
    Eigen::VectorXd w, c, g_raw;
    double f = 0.0;
  };

  const NlpProblem& nlp_;
  SolveOptions opt_;

  // Index maps.
  std::vector<int> free_;      // free variable -> full index
  std::vector<int> to_free_;   // full index -> free index or -1
  std::vector<int> eq_rows_, ineq_rows_;
  std::vector<int> row_slot_;  // constraint row -> slack index or -1
  Eigen::VectorXd x_fixed_;    // full vector holding fixed values

  int nf_ = 0, ns_ = 0, nw_ = 0, m_ = 0;
  double obj_scale_ = 1.0;
  Eigen::VectorXd row_scale_;

  // Iterate (scaled). w = (x_free, s).
  Eigen::VectorXd w_, x_, lam_, z_l_, z_u_;
  Eigen::VectorXd lo_, hi_;
  std::vector<bool> has_lo_, has_hi_;

  // Values at the iterate.
  double f_ = 0.0;
  Eigen::VectorXd grad_, c_, g_raw_, jac_vals_;

  // KKT assembly.
  std::vector<int> jac_map_;   // jac entry -> free column or -1
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  Eigen::SparseMatrix<double> kkt_;
  bool analyzed_ = false;

  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  Eigen::VectorXd full_x(const Eigen::VectorXd& xf) const {
    Eigen::VectorXd x = x_fixed_;
    for (int i = 0; i < nf_; ++i) x[free_[i]] = xf[i];
    return x;
  }

  void setup(const Eigen::VectorXd& guess) {
    nlp_.validate();
    if (guess.size() != nlp_.n) throw ConfigError("solve: guess has the wrong dimension");
    to_free_.assign(static_cast<std::size_t>(nlp_.n), -1);
    x_fixed_ = guess;
    for (int i = 0; i < nlp_.n; ++i) {
      if (nlp_.x_lower[i] == nlp_.x_upper[i]) {
        x_fixed_[i] = nlp_.x_lower[i];
      } else {
        to_free_[i] = static_cast<int>(free_.size());
        free_.push_back(i);
      }
    }
    nf_ = static_cast<int>(free_.size());
    m_ = nlp_.m;
    row_slot_.assign(static_cast<std::size_t>(m_), -1);
    for (int i = 0; i < m_; ++i) {
      if (nlp_.g_lower[i] == nlp_.g_upper[i]) {
        eq_rows_.push_back(i);
      } else {
        row_slot_[i] = static_cast<int>(ineq_rows_.size());
        ineq_rows_.push_back(i);
      }
    }
    ns_ = static_cast<int>(ineq_rows_.size());
    nw_ = nf_ + ns_;
    jac_map_.resize(nlp_.jac_rows.size());
    for (std::size_t k = 0; k < jac_map_.size(); ++k) jac_map_[k] = to_free_[nlp_.jac_cols[k]];
    x_ = Eigen::VectorXd(nf_);
    for (int i = 0; i < nf_; ++i) x_[i] = guess[free_[i]];
  }

  void eval_all(const Eigen::VectorXd& xf, double& f, Eigen::VectorXd& grad, Eigen::VectorXd& g_raw) const {
    const Eigen::VectorXd x = full_x(xf);
    f = nlp_.f(x);
    grad.resize(nlp_.n);
    nlp_.grad_f(x, grad);
    g_raw.resize(m_);
    if (m_ > 0) nlp_.g(x, g_raw);
    if (!std::isfinite(f) || !grad.allFinite() || !g_raw.allFinite()) {
      throw SingularityError("nlp", "non-finite function value");
    }
  }

  // Scaled residual c = scale * (g - target), target = bound (equality) or slack.
  Eigen::VectorXd residual(const Eigen::VectorXd& g_raw, const Eigen::VectorXd& w) const {
    Eigen::VectorXd c(m_);
    for (int i = 0; i < m_; ++i) {
      const double gs = row_scale_[i] * g_raw[i];
      c[i] = row_slot_[i] < 0 ? gs - row_scale_[i] * nlp_.g_lower[i] : gs - w[nf_ + row_slot_[i]];
    }
    return c;
  }

  void initialize() {
    // Gradient-based scaling at the starting point.
    double f0;
    Eigen::VectorXd grad0, g0;
    {
      Eigen::VectorXd xf = x_;
      for (int i = 0; i < nf_; ++i) {
        const int j = free_[i];
        xf[i] = std::clamp(xf[i], nlp_.x_lower[j], nlp_.x_upper[j]);
      }
      x_ = xf;
    }
    eval_all(x_, f0, grad0, g0);
    row_scale_ = Eigen::VectorXd::Ones(m_);
    obj_scale_ = 1.0;
    if (opt_.gradient_scaling) {
      double gmax = 0.0;
      for (int i = 0; i < nf_; ++i) gmax = std::max(gmax, std::abs(grad0[free_[i]]));
      obj_scale_ = std::min(1.0, 100.0 / std::max(gmax, 1e-300));
      Eigen::VectorXd jv(nlp_.jac_rows.size());
      if (m_ > 0) nlp_.jac_values(full_x(x_), jv);
      Eigen::VectorXd rmax = Eigen::VectorXd::Zero(m_);
      for (std::size_t k = 0; k < jac_map_.size(); ++k) {
        if (jac_map_[k] >= 0) rmax[nlp_.jac_rows[k]] = std::max(rmax[nlp_.jac_rows[k]], std::abs(jv[k]));
      }
      for (int i = 0; i < m_; ++i) row_scale_[i] = rmax[i] > 100.0 ? 100.0 / rmax[i] : 1.0;
    }

    // Bounds on w = (x_free, s) and interior push.
    lo_.resize(nw_);
    hi_.resize(nw_);
    has_lo_.assign(static_cast<std::size_t>(nw_), false);
    has_hi_.assign(static_cast<std::size_t>(nw_), false);
    for (int i = 0; i < nf_; ++i) {
      lo_[i] = nlp_.x_lower[free_[i]];
      hi_[i] = nlp_.x_upper[free_[i]];
    }
    for (int k = 0; k < ns_; ++k) {
      const int r = ineq_rows_[k];
      lo_[nf_ + k] = row_scale_[r] * nlp_.g_lower[r];
      hi_[nf_ + k] = row_scale_[r] * nlp_.g_upper[r];
    }
    for (int i = 0; i < nw_; ++i) {
      has_lo_[i] = std::isfinite(lo_[i]) && lo_[i] > -1e19;
      has_hi_[i] = std::isfinite(hi_[i]) && hi_[i] < 1e19;
    }
    w_.resize(nw_);
    w_.head(nf_) = x_;
    for (int k = 0; k < ns_; ++k) w_[nf_ + k] = row_scale_[ineq_rows_[k]] * g0[ineq_rows_[k]];
    for (int i = 0; i < nw_; ++i) w_[i] = push_inside(i, w_[i]);
    if (!(x_ == w_.head(nf_))) x_ = w_.head(nf_);

    z_l_ = Eigen::VectorXd::Zero(nw_);
    z_u_ = Eigen::VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) z_l_[i] = 1.0;
      if (has_hi_[i]) z_u_[i] = 1.0;
    }
    lam_ = Eigen::VectorXd::Zero(m_);
    refresh();
    least_squares_multipliers();
  }

  double push_inside(int i, double v) const {
    const double l = lo_[i], u = hi_[i];
    const bool hl = has_lo_[i], hu = has_hi_[i];
    double pl = 0, pu = 0;
    if (hl) pl = opt_.bound_push * std::max(1.0, std::abs(l));
    if (hu) pu = opt_.bound_push * std::max(1.0, std::abs(u));
    if (hl && hu) {
      pl = std::min(pl, opt_.bound_frac * (u - l));
      pu = std::min(pu, opt_.bound_frac * (u - l));
    }
    if (hl) v = std::max(v, l + pl);
    if (hu) v = std::min(v, u - pu);
    return v;
  }

  /// Evaluates f, gradient, residual and Jacobian at w_.
  void refresh() {
    double f;
    Eigen::VectorXd grad, g_raw;
    eval_all(w_.head(nf_), f, grad, g_raw);
    f_ = obj_scale_ * f;
    grad_.resize(nf_);
    for (int i = 0; i < nf_; ++i) grad_[i] = obj_scale_ * grad[free_[i]];
    g_raw_ = g_raw;
    c_ = residual(g_raw_, w_);
    jac_vals_.resize(static_cast<Eigen::Index>(nlp_.jac_rows.size()));
    if (m_ > 0) nlp_.jac_values(full_x(w_.head(nf_)), jac_vals_);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) jac_vals_[k] *= row_scale_[nlp_.jac_rows[k]];
    if (!jac_vals_.allFinite()) throw SingularityError("nlp", "non-finite Jacobian");
  }

  /// J' v on the free variables (v indexed by constraint rows).
  Eigen::VectorXd jt_times(const Eigen::VectorXd& v) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nf_);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) {
      if (jac_map_[k] >= 0) r[jac_map_[k]] += jac_vals_[k] * v[nlp_.jac_rows[k]];
    }
    return r;
  }

  /// Gradient of the Lagrangian in w (without the barrier).
  Eigen::VectorXd lagrangian_gradient() const {
    Eigen::VectorXd r(nw_);
    r.head(nf_) = grad_ + jt_times(lam_);
    for (int k = 0; k < ns_; ++k) r[nf_ + k] = -lam_[ineq_rows_[k]];
    return r;
  }

  Eigen::VectorXd barrier_gradient(double mu) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nw_);
    r.head(nf_) = grad_;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) r[i] -= mu / (w_[i] - lo_[i]);
      if (has_hi_[i]) r[i] += mu / (hi_[i] - w_[i]);
    }
    return r;
  }

  double merit(double mu, double nu, double f, const Eigen::VectorXd& c, const Eigen::VectorXd& w) const {
    double phi = f;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        const double d = w[i] - lo_[i];
        if (!(d > 0)) return kInf;
        phi -= mu * std::log(d);
      }
      if (has_hi_[i]) {
        const double d = hi_[i] - w[i];
        if (!(d > 0)) return kInf;
        phi -= mu * std::log(d);
      }
    }
    return phi + nu * c.lpNorm<1>();
  }

  double complementarity(double mu) const {
    double e = 0.0;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) e = std::max(e, std::abs(z_l_[i] * (w_[i] - lo_[i]) - mu));
      if (has_hi_[i]) e = std::max(e, std::abs(z_u_[i] * (hi_[i] - w_[i]) - mu));
    }
    return e;
  }

  double dual_infeasibility(double) const {
    const Eigen::VectorXd r = lagrangian_gradient() - z_l_ + z_u_;
    return nw_ > 0 ? r.lpNorm<Eigen::Infinity>() : 0.0;
  }

  double overall_error(double mu) const {
    const double smax = 100.0;
    const double nm = static_cast<double>(m_ + 2 * nw_);
    const double sum_mult = lam_.lpNorm<1>() + z_l_.lpNorm<1>() + z_u_.lpNorm<1>();
    const double sd = std::max(smax, nm > 0 ? sum_mult / nm : 0.0) / smax;
    const double sc = std::max(smax, nw_ > 0 ? (z_l_.lpNorm<1>() + z_u_.lpNorm<1>()) / (2.0 * nw_) : 0.0) / smax;
    const double primal = m_ > 0 ? c_.lpNorm<Eigen::Infinity>() : 0.0;
    return std::max({dual_infeasibility(mu) / sd, primal, complementarity(mu) / sc});
  }

  double unscaled_violation() const {
    double v = 0.0;
    for (int i = 0; i < m_; ++i) {
      v = std::max({v, nlp_.g_lower[i] - g_raw_[i], g_raw_[i] - nlp_.g_upper[i]});
    }
    for (int i = 0; i < nf_; ++i) v = std::max({v, lo_[i] - w_[i], w_[i] - hi_[i]});
    return v;
  }

  /// First row that no free variable can change and that violates its
  /// bounds, or -1.
  int violated_fixed_row() const {
    std::vector<bool> movable(static_cast<std::size_t>(m_), false);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) {
      if (jac_map_[k] >= 0) movable[nlp_.jac_rows[k]] = true;
    }
    for (int i = 0; i < m_; ++i) {
      if (movable[i]) continue;
      const double v = std::max(nlp_.g_lower[i] - g_raw_[i], g_raw_[i] - nlp_.g_upper[i]);
      if (v > opt_.constr_viol_tol) return i;
    }
    return -1;
  }

  bool infeasibility_stationary() const {
    // ||J' c|| small relative to ||c||: no descent direction for the violation.
    const Eigen::VectorXd jc = jt_times(c_);
    if (jc.lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, c_.lpNorm<Eigen::Infinity>())) return true;
    // Same test on the distance of g(x) to its bounds, with slacks eliminated
    // and directions blocked by active variable bounds removed.
    Eigen::VectorXd r(m_);
    for (int i = 0; i < m_; ++i) {
      const double gi = g_raw_[i];
      r[i] = row_scale_[i] * (gi - std::clamp(gi, nlp_.g_lower[i], nlp_.g_upper[i]));
    }
    const double rn = r.lpNorm<Eigen::Infinity>();
    if (!(rn > 0)) return false;
    auto projected = [&](Eigen::VectorXd gr) {
      for (int i = 0; i < nf_; ++i) {
        const double tol = 1e-6 * std::max(1.0, std::abs(w_[i]));
        if (has_lo_[i] && w_[i] - lo_[i] <= tol && gr[i] > 0) gr[i] = 0;
        if (has_hi_[i] && hi_[i] - w_[i] <= tol && gr[i] < 0) gr[i] = 0;
      }
      return gr.lpNorm<Eigen::Infinity>();
    };
    if (projected(jt_times(r)) <= 1e-6 * std::max(1.0, rn)) return true;
    // L1 violation: a subgradient that vanishes.
    Eigen::VectorXd sgn(m_);
    for (int i = 0; i < m_; ++i) sgn[i] = r[i] > 0 ? 1.0 : (r[i] < 0 ? -1.0 : 0.0);
    return projected(jt_times(sgn)) <= 1e-6;
  }

  double max_step(const Eigen::VectorXd& w, const Eigen::VectorXd& dw, double tau) {
    double a = 1.0;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i] && dw[i] < 0) a = std::min(a, -tau * (w[i] - lo_[i]) / dw[i]);
      if (has_hi_[i] && dw[i] > 0) a = std::min(a, tau * (hi_[i] - w[i]) / dw[i]);
    }
    return a;
  }

  static double max_step_z(const Eigen::VectorXd& z, const Eigen::VectorXd& dz, double tau) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (dz[i] < 0 && z[i] > 0) a = std::min(a, -tau * z[i] / dz[i]);
    }
    return a;
  }

  Eigen::VectorXd sigma() const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) s[i] += z_l_[i] / (w_[i] - lo_[i]);
      if (has_hi_[i]) s[i] += z_u_[i] / (hi_[i] - w_[i]);
    }
    return s;
  }

  /// Assembles the condensed KKT matrix (lower triangle).
  void assemble(double delta_w, double delta_c, const Eigen::VectorXd& sig) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nlp_.hess_rows.size() + jac_map_.size() + static_cast<std::size_t>(nf_ + m_));
    Eigen::VectorXd hv(static_cast<Eigen::Index>(nlp_.hess_rows.size()));
    Eigen::VectorXd lam_full(m_);
    for (int i = 0; i < m_; ++i) lam_full[i] = lam_[i] * row_scale_[i];
    if (restoration_) {
      hv.setZero();
    } else {
      nlp_.hess_values(full_x(w_.head(nf_)), obj_scale_, lam_full, hv);
      if (!hv.allFinite()) throw SingularityError("nlp", "non-finite Hessian");
    }
    const double prox = restoration_ ? kProx : 0.0;
    for (std::size_t k = 0; k < nlp_.hess_rows.size(); ++k) {
      const int r = to_free_[nlp_.hess_rows[k]], c = to_free_[nlp_.hess_cols[k]];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, hv[k]);
    }
    for (int i = 0; i < nf_; ++i) trip.emplace_back(i, i, sig[i] + delta_w + prox);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) {
      if (jac_map_[k] >= 0) trip.emplace_back(nf_ + nlp_.jac_rows[k], jac_map_[k], jac_vals_[k]);
    }
    for (int i = 0; i < m_; ++i) {
      double d = -delta_c;
      if (row_slot_[i] >= 0) d -= 1.0 / (sig[nf_ + row_slot_[i]] + delta_w + prox);
      trip.emplace_back(nf_ + i, nf_ + i, d);
    }
    kkt_.resize(nf_ + m_, nf_ + m_);
    kkt_.setFromTriplets(trip.begin(), trip.end());
  }

  bool factorize_with_inertia(double& delta_w, const Eigen::VectorXd& sig) {
    const double delta_c = m_ > 0 ? 1e-8 : 0.0;
    double dw = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
      assemble(dw, delta_c, sig);
      if (!analyzed_) {
        ldlt_.analyzePattern(kkt_);
        analyzed_ = true;
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() == Eigen::Success) {
        const auto& D = ldlt_.vectorD();
        int pos = 0, neg = 0;
        bool tiny = false;
        for (Eigen::Index i = 0; i < D.size(); ++i) {
          if (!std::isfinite(D[i]) || std::abs(D[i]) < 1e-300) tiny = true;
          if (D[i] > 0) ++pos;
          else if (D[i] < 0) ++neg;
        }
        if (!tiny && pos == nf_ && neg == m_) {
          delta_w = dw;
          return true;
        }
      }
      if (dw == 0.0) {
        dw = delta_w == 0.0 ? 1e-4 : std::max(1e-20, delta_w / 3);
      } else {
        dw *= delta_w == 0.0 ? 100.0 : 8.0;
      }
      if (dw > 1e40) return false;
    }
    return false;
  }

  Eigen::VectorXd solve_kkt(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    for (int r = 0; r < 2; ++r) {
      const Eigen::VectorXd res = rhs - kkt_.selfadjointView<Eigen::Lower>() * sol;
      if (res.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) break;
      sol += ldlt_.solve(res);
    }
    return sol;
  }

  /// Recovers the full step from the condensed solution.
  Step expand(const Eigen::VectorXd& sol, const Eigen::VectorXd& r_s, const Eigen::VectorXd& sig, double delta_w,
              double mu) const {
    Step d;
    d.dw.resize(nw_);
    d.dw.head(nf_) = sol.head(nf_);
    d.dl = sol.tail(m_);
    for (int k = 0; k < ns_; ++k) {
      d.dw[nf_ + k] = (d.dl[ineq_rows_[k]] - r_s[k]) / (sig[nf_ + k] + delta_w + (restoration_ ? kProx : 0.0));
    }
    d.dz_l = Eigen::VectorXd::Zero(nw_);
    d.dz_u = Eigen::VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        const double s = w_[i] - lo_[i];
        d.dz_l[i] = mu / s - z_l_[i] - z_l_[i] / s * d.dw[i];
      }
      if (has_hi_[i]) {
        const double s = hi_[i] - w_[i];
        d.dz_u[i] = mu / s - z_u_[i] + z_u_[i] / s * d.dw[i];
      }
    }
    return d;
  }

  Eigen::VectorXd rhs_for(double mu, const Eigen::VectorXd& c, const Eigen::VectorXd& sig, double delta_w,
                          Eigen::VectorXd& r_s) const {
    Eigen::VectorXd gphi = barrier_gradient(mu);
    Eigen::VectorXd rhs(nf_ + m_);
    r_s.resize(ns_);
    if (restoration_) {
      gphi.head(nf_) -= grad_;
      rhs.head(nf_) = -gphi.head(nf_);
      for (int k = 0; k < ns_; ++k) r_s[k] = gphi[nf_ + k];
    } else {
      rhs.head(nf_) = -(gphi.head(nf_) + jt_times(lam_));
      for (int k = 0; k < ns_; ++k) r_s[k] = gphi[nf_ + k] - lam_[ineq_rows_[k]];
    }
    const double prox = restoration_ ? kProx : 0.0;
    for (int i = 0; i < m_; ++i) {
      double v = -c[i];
      if (row_slot_[i] >= 0) v -= r_s[row_slot_[i]] / (sig[nf_ + row_slot_[i]] + delta_w + prox);
      rhs[nf_ + i] = v;
    }
    return rhs;
  }

  double delta_w_ = 0.0;
  bool restoration_ = false;
  static constexpr double kProx = 1.0;

  bool newton_step(double mu, double& delta_w_hint, Step& d, bool restoration) {
    restoration_ = restoration;
    const Eigen::VectorXd sig = sigma();
    double dw = restoration ? 0.0 : delta_w_hint;
    const bool ok = factorize_with_inertia(dw, sig);
    if (!ok) {
      restoration_ = false;
      return false;
    }
    delta_w_ = dw;
    if (!restoration) delta_w_hint = dw;
    Eigen::VectorXd r_s;
    const Eigen::VectorXd rhs = rhs_for(mu, c_, sig, dw, r_s);
    const Eigen::VectorXd sol = solve_kkt(rhs);
    if (!sol.allFinite()) {
      restoration_ = false;
      return false;
    }
    d = expand(sol, r_s, sig, dw, mu);
    restoration_ = false;
    return true;
  }

  /// Second-order correction: same matrix, residual replaced by
  /// alpha c(w) + c(w + alpha d).
  bool soc_step(double mu, double alpha, const Eigen::VectorXd& c_trial, Step& d) {
    const Eigen::VectorXd sig = sigma();
    Eigen::VectorXd r_s;
    const Eigen::VectorXd c_soc = alpha * c_ + c_trial;
    Eigen::VectorXd rhs = rhs_for(mu, c_soc, sig, delta_w_, r_s);
    Eigen::VectorXd sol = solve_kkt(rhs);
    if (!sol.allFinite()) return false;
    d = expand(sol, r_s, sig, delta_w_, mu);
    return true;
  }

  bool evaluate_trial(const Eigen::VectorXd& w, Trial& tr) const {
    tr.w = w;
    Eigen::VectorXd grad;
    try {
      double f;
      eval_all(w.head(nf_), f, grad, tr.g_raw);
      tr.f = obj_scale_ * f;
    } catch (const SingularityError&) {
      return false;
    }
    tr.c = residual(tr.g_raw, w);
    return true;
  }

  void accept(const Trial& tr, const Step& d, double alpha, double alpha_z, double mu) {
    w_ = tr.w;
    lam_ += alpha * d.dl;
    z_l_ += alpha_z * d.dz_l;
    z_u_ += alpha_z * d.dz_u;
    // Keep the multipliers within a factor of the central path.
    const double kappa = 1e10;
    for (int i = 0; i < nw_; ++i) {
      if (has_lo_[i]) {
        const double s = w_[i] - lo_[i];
        z_l_[i] = std::clamp(z_l_[i], mu / (kappa * s), kappa * mu / s);
      }
      if (has_hi_[i]) {
        const double s = hi_[i] - w_[i];
        z_u_[i] = std::clamp(z_u_[i], mu / (kappa * s), kappa * mu / s);
      }
    }
    x_ = w_.head(nf_);
    try {
      refresh();
    } catch (const SingularityError&) {
      // Values were finite for the trial; derivative failure keeps the old Jacobian.
    }
  }

  /// Least-squares equality multipliers at the start (bounded, as in common practice).
  void least_squares_multipliers() {
    if (m_ == 0) return;
    // [I J'; J 0] [r; lam] = [-(grad - z_l + z_u); 0]
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < nf_; ++i) trip.emplace_back(i, i, 1.0);
    for (std::size_t k = 0; k < jac_map_.size(); ++k) {
      if (jac_map_[k] >= 0) trip.emplace_back(nf_ + nlp_.jac_rows[k], jac_map_[k], jac_vals_[k]);
    }
    for (int i = 0; i < m_; ++i) trip.emplace_back(nf_ + i, nf_ + i, row_slot_[i] >= 0 ? -1.0 : -1e-8);
    Eigen::SparseMatrix<double> K(nf_ + m_, nf_ + m_);
    K.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver(K);
    if (solver.info() != Eigen::Success) return;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf_ + m_);
    rhs.head(nf_) = -(grad_ - z_l_.head(nf_) + z_u_.head(nf_));
    for (int k = 0; k < ns_; ++k) rhs[nf_ + ineq_rows_[k]] = z_l_[nf_ + k] - z_u_[nf_ + k];
    const Eigen::VectorXd sol = solver.solve(rhs);
    if (sol.allFinite() && sol.tail(m_).lpNorm<Eigen::Infinity>() <= 1e3) lam_ = sol.tail(m_);
  }

  SolveReport& finish(SolveReport& rep, std::chrono::steady_clock::time_point t0) const {
    rep.wall_time = seconds_since(t0);
    if (w_.size() == nw_ && g_raw_.size() == m_) {
      rep.objective = f_ / obj_scale_;
      rep.max_violation = unscaled_violation();
      rep.dual_infeasibility = dual_infeasibility(0.0) / obj_scale_;
      rep.multipliers = Eigen::VectorXd(m_);
      for (int i = 0; i < m_; ++i) rep.multipliers[i] = lam_[i] * row_scale_[i] / obj_scale_;
    }
    if (rep.message.empty()) rep.message = to_string(rep.status);
    return rep;
  }
};

}  // namespace detail

/// Solves the NLP from the given starting point.
inline std::pair<Eigen::VectorXd, SolveReport> solve(const NlpProblem& nlp, const Eigen::VectorXd& guess,
                                                     const SolveOptions& options = {}) {
  detail::InteriorPoint ip(nlp, options);
  return ip.run(guess);
}

// ---------------------------------------------------------------------------
// Derivative checks

struct DerivativeCheck {
  double grad_rel_error = 0.0;
  double jac_rel_error = 0.0;
  double hess_rel_error = 0.0;
};

namespace detail {
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }
}  // namespace detail

/// Compares the derivative callbacks against central differences in the
/// given coordinates.
inline DerivativeCheck check_derivatives(const NlpProblem& nlp, const Eigen::VectorXd& x,
                                         const std::vector<int>& coords, double h = 1e-6) {
  DerivativeCheck out;
  Eigen::VectorXd grad(nlp.n);
  nlp.grad_f(x, grad);
  Eigen::VectorXd jv(static_cast<Eigen::Index>(nlp.jac_rows.size()));
  if (nlp.m > 0) nlp.jac_values(x, jv);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nlp.m, nlp.n);
  for (std::size_t k = 0; k < nlp.jac_rows.size(); ++k) J(nlp.jac_rows[k], nlp.jac_cols[k]) += jv[k];

  // Hessian of a random-weighted Lagrangian.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd lam(nlp.m);
  for (int i = 0; i < nlp.m; ++i) lam[i] = u(rng);
  Eigen::VectorXd hv(static_cast<Eigen::Index>(nlp.hess_rows.size()));
  nlp.hess_values(x, 1.0, lam, hv);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nlp.n, nlp.n);
  for (std::size_t k = 0; k < nlp.hess_rows.size(); ++k) {
    H(nlp.hess_rows[k], nlp.hess_cols[k]) += hv[k];
    if (nlp.hess_rows[k] != nlp.hess_cols[k]) H(nlp.hess_cols[k], nlp.hess_rows[k]) += hv[k];
  }
  auto lag_grad = [&](const Eigen::VectorXd& xx) {
    Eigen::VectorXd gr(nlp.n);
    nlp.grad_f(xx, gr);
    Eigen::VectorXd jj(static_cast<Eigen::Index>(nlp.jac_rows.size()));
    if (nlp.m > 0) nlp.jac_values(xx, jj);
    for (std::size_t k = 0; k < nlp.jac_rows.size(); ++k) gr[nlp.jac_cols[k]] += lam[nlp.jac_rows[k]] * jj[k];
    return gr;
  };

  for (int j : coords) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (nlp.f(xp) - nlp.f(xm)) / (2 * h);
    out.grad_rel_error = std::max(out.grad_rel_error, detail::rel_err(fd, grad[j]));
    if (nlp.m > 0) {
      Eigen::VectorXd gp(nlp.m), gm(nlp.m);
      nlp.g(xp, gp);
      nlp.g(xm, gm);
      for (int i = 0; i < nlp.m; ++i) {
        out.jac_rel_error = std::max(out.jac_rel_error, detail::rel_err((gp[i] - gm[i]) / (2 * h), J(i, j)));
      }
    }
    const Eigen::VectorXd dl = (lag_grad(xp) - lag_grad(xm)) / (2 * h);
    for (int i = 0; i < nlp.n; ++i) out.hess_rel_error = std::max(out.hess_rel_error, detail::rel_err(dl[i], H(i, j)));
  }
  return out;
}

}  // namespace crane
