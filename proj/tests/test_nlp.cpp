#include <gtest/gtest.h>

#include "crane/autodiff.hpp"
#include "crane/nlp.hpp"

using namespace crane;

namespace {

/// Dense NLP whose derivatives come from second-order forward AD of the
/// callables F(x) and G(x).
template <int N, typename F, typename G>
NlpProblem dense_problem(int m, F f, G g) {
  using D2 = ad::Dual2<N>;
  NlpProblem nlp;
  nlp.n = N;
  nlp.m = m;
  nlp.x_lower.assign(N, -kInf);
  nlp.x_upper.assign(N, kInf);
  nlp.g_lower.assign(static_cast<std::size_t>(m), -kInf);
  nlp.g_upper.assign(static_cast<std::size_t>(m), kInf);
  auto vars = [](const Eigen::VectorXd& x) {
    std::array<D2, N> v;
    for (int i = 0; i < N; ++i) v[i] = D2::variable(x[i], i);
    return v;
  };
  auto plain = [](const Eigen::VectorXd& x) {
    std::array<double, N> v;
    for (int i = 0; i < N; ++i) v[i] = x[i];
    return v;
  };
  nlp.f = [f, plain](const Eigen::VectorXd& x) { return f(plain(x)); };
  nlp.grad_f = [f, vars](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    const D2 r = f(vars(x));
    for (int i = 0; i < N; ++i) out[i] = r.grad(i);
  };
  nlp.g = [g, plain, m](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    const auto r = g(plain(x));
    for (int i = 0; i < m; ++i) out[i] = r[i];
  };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < N; ++j) {
      nlp.jac_rows.push_back(i);
      nlp.jac_cols.push_back(j);
    }
  }
  nlp.jac_values = [g, vars, m](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    const auto r = g(vars(x));
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < N; ++j) out[i * N + j] = r[i].grad(j);
    }
  };
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j <= i; ++j) {
      nlp.hess_rows.push_back(i);
      nlp.hess_cols.push_back(j);
    }
  }
  nlp.hess_values = [f, g, vars, m](const Eigen::VectorXd& x, double sigma, const Eigen::VectorXd& lam,
                                    Eigen::VectorXd& out) {
    const auto v = vars(x);
    const D2 fo = f(v);
    const auto go = g(v);
    int k = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j <= i; ++j) {
        double h = sigma * fo.hess(i, j);
        for (int c = 0; c < m; ++c) h += lam[c] * go[c].hess(i, j);
        out[k++] = h;
      }
    }
  };
  return nlp;
}

template <typename S>
S hs071_f(const std::array<S, 4>& x) {
  return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
}

template <typename S>
std::array<S, 2> hs071_g(const std::array<S, 4>& x) {
  return {x[0] * x[1] * x[2] * x[3], x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]};
}

NlpProblem hs071() {
  auto f = [](const auto& x) { return hs071_f(x); };
  auto g = [](const auto& x) { return hs071_g(x); };
  NlpProblem nlp = dense_problem<4>(2, f, g);
  nlp.x_lower.assign(4, 1.0);
  nlp.x_upper.assign(4, 5.0);
  nlp.g_lower = {25.0, 40.0};
  nlp.g_upper = {kInf, 40.0};
  return nlp;
}

}  // namespace

TEST(InteriorPoint, UnconstrainedQuadratic) {
  auto f = [](const auto& x) { return (x[0] - 1.0) * (x[0] - 1.0) + 3.0 * (x[1] + 2.0) * (x[1] + 2.0); };
  auto g = [](const auto& x) { return std::array<std::decay_t<decltype(x[0])>, 0>{}; };
  const NlpProblem nlp = dense_problem<2>(0, f, g);
  auto [x, rep] = solve(nlp, Eigen::Vector2d(5, 5), SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Optimal);
  EXPECT_NEAR(x[0], 1.0, 1e-8);
  EXPECT_NEAR(x[1], -2.0, 1e-8);
}

TEST(InteriorPoint, Rosenbrock) {
  auto f = [](const auto& x) { return 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1.0 - x[0]) * (1.0 - x[0]); };
  auto g = [](const auto& x) { return std::array<std::decay_t<decltype(x[0])>, 0>{}; };
  const NlpProblem nlp = dense_problem<2>(0, f, g);
  auto [x, rep] = solve(nlp, Eigen::Vector2d(-1.2, 1.0), SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Optimal);
  EXPECT_NEAR(x[0], 1.0, 1e-6);
  EXPECT_NEAR(x[1], 1.0, 1e-6);
}

TEST(InteriorPoint, ActiveBound) {
  auto f = [](const auto& x) { return x[0] + 0.5 * x[1] * x[1]; };
  auto g = [](const auto& x) { return std::array<std::decay_t<decltype(x[0])>, 0>{}; };
  NlpProblem nlp = dense_problem<2>(0, f, g);
  nlp.x_lower[0] = 2.0;
  auto [x, rep] = solve(nlp, Eigen::Vector2d(4, 1), SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Optimal);
  EXPECT_NEAR(x[0], 2.0, 1e-7);
  EXPECT_NEAR(x[1], 0.0, 1e-7);
}

TEST(InteriorPoint, Hs071) {
  const NlpProblem nlp = hs071();
  Eigen::Vector4d x0(1, 5, 5, 1);
  auto [x, rep] = solve(nlp, x0, SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Optimal) << rep.message;
  EXPECT_NEAR(rep.objective, 17.014017145, 1e-6);
  EXPECT_NEAR(x[0], 1.0, 1e-6);
  EXPECT_NEAR(x[1], 4.742999637, 1e-6);
  EXPECT_NEAR(x[2], 3.821149978, 1e-6);
  EXPECT_NEAR(x[3], 1.379408293, 1e-6);
  EXPECT_LE(rep.max_violation, 1e-8);
  EXPECT_GE(rep.max_violation, 0.0);
}

TEST(InteriorPoint, InfeasibleIsReported) {
  // x0 + x1 >= 3 and x0 + x1 <= 1.
  auto f = [](const auto& x) { return x[0] * x[0] + x[1] * x[1]; };
  auto g = [](const auto& x) {
    return std::array<std::decay_t<decltype(x[0])>, 2>{x[0] + x[1], x[0] + x[1]};
  };
  NlpProblem nlp = dense_problem<2>(2, f, g);
  nlp.g_lower = {3.0, -kInf};
  nlp.g_upper = {kInf, 1.0};
  auto [x, rep] = solve(nlp, Eigen::Vector2d(0, 0), SolveOptions{});
  EXPECT_EQ(rep.status, SolveStatus::Infeasible) << to_string(rep.status) << ": " << rep.message;
  EXPECT_GT(rep.max_violation, 0.5);
}

TEST(InteriorPoint, IterationLimitIsReported) {
  const NlpProblem nlp = hs071();
  SolveOptions o;
  o.max_iterations = 2;
  auto [x, rep] = solve(nlp, Eigen::Vector4d(1, 5, 5, 1), o);
  EXPECT_EQ(rep.status, SolveStatus::IterationLimit);
  EXPECT_EQ(rep.iterations, 2);
}

TEST(NlpProblem, ValidateCatchesInconsistentSizes) {
  NlpProblem nlp = hs071();
  nlp.g_lower.pop_back();
  EXPECT_THROW(nlp.validate(), ConfigError);
  nlp = hs071();
  nlp.hess_rows[1] = 0;
  nlp.hess_cols[1] = 1;
  EXPECT_THROW(nlp.validate(), ConfigError);
}

TEST(CheckDerivatives, DetectsWrongGradient) {
  NlpProblem nlp = hs071();
  const Eigen::Vector4d x(1.5, 2.5, 3.5, 1.2);
  const auto good = check_derivatives(nlp, x, {0, 1, 2, 3});
  EXPECT_LT(good.grad_rel_error, 1e-7);
  EXPECT_LT(good.jac_rel_error, 1e-7);
  EXPECT_LT(good.hess_rel_error, 1e-6);
  auto grad = nlp.grad_f;
  nlp.grad_f = [grad](const Eigen::VectorXd& z, Eigen::VectorXd& out) {
    grad(z, out);
    out[2] += 0.01;
  };
  EXPECT_GT(check_derivatives(nlp, x, {0, 1, 2, 3}).grad_rel_error, 1e-3);
}
