#pragma once

/**
 * @file autodiff.hpp
 * @brief Dense forward-mode dual numbers with first (Dual) and second
 * (Dual2) order derivative propagation over a fixed number of inputs.
 *
 * These are the scalar types the optimizer feeds through the templated
 * flatness maps to obtain exact constraint Jacobians and Lagrangian
 * Hessians. Dual2 stores the Hessian as a packed lower triangle.
 *
 * @code
 * auto x = crane::ad::Dual2<2>::variable(0.3, 0);
 * auto y = crane::ad::Dual2<2>::variable(1.2, 1);
 * auto f = sin(x) * y;
 * // f.grad(0) == cos(0.3) * 1.2, f.hess(0, 1) == cos(0.3)
 * @endcode
 */

#include <array>
#include <cmath>
#include <cstddef>

namespace crane::ad {

template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> g{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(implicit): constants mix freely

  static Dual variable(double value, int index) {
    Dual d(value);
    d.g[static_cast<std::size_t>(index)] = 1.0;
    return d;
  }

  double grad(int i) const { return g[static_cast<std::size_t>(i)]; }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) g[i] += o.g[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) g[i] -= o.g[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) g[i] = v * o.g[i] + o.v * g[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    const double q = v * inv;
    for (int i = 0; i < N; ++i) g[i] = (g[i] - q * o.g[i]) * inv;
    v = q;
    return *this;
  }
};

/// Applies a scalar function with known first derivative.
template <int N>
Dual<N> chain(const Dual<N>& a, double f, double df) {
  Dual<N> r(f);
  for (int i = 0; i < N; ++i) r.g[i] = df * a.g[i];
  return r;
}

template <int N> Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <int N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <int N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N> Dual<N> operator-(double b, const Dual<N>& a) { return -a + b; }
template <int N> Dual<N> operator-(Dual<N> a) {
  a.v = -a.v;
  for (auto& x : a.g) x = -x;
  return a;
}
template <int N> Dual<N> operator*(Dual<N> a, double b) {
  a.v *= b;
  for (auto& x : a.g) x *= b;
  return a;
}
template <int N> Dual<N> operator*(double b, Dual<N> a) { return a * b; }
template <int N> Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <int N> Dual<N> operator/(double b, const Dual<N>& a) {
  return chain(a, b / a.v, -b / (a.v * a.v));
}

template <int N> Dual<N> sin(const Dual<N>& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
template <int N> Dual<N> cos(const Dual<N>& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
template <int N> Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s);
}
template <int N> Dual<N> tanh(const Dual<N>& a) {
  const double t = std::tanh(a.v);
  return chain(a, t, 1.0 - t * t);
}
template <int N> Dual<N> atan2(const Dual<N>& y, const Dual<N>& x) {
  const double r2 = x.v * x.v + y.v * y.v;
  Dual<N> r(std::atan2(y.v, x.v));
  const double fy = x.v / r2, fx = -y.v / r2;
  for (int i = 0; i < N; ++i) r.g[i] = fy * y.g[i] + fx * x.g[i];
  return r;
}

/// Packed index of the (i, j) entry of a symmetric N x N matrix, i >= j.
constexpr int packed_index(int i, int j) {
  return i >= j ? i * (i + 1) / 2 + j : j * (j + 1) / 2 + i;
}

template <int N>
struct Dual2 {
  static constexpr int kPacked = N * (N + 1) / 2;
  double v = 0.0;
  std::array<double, N> g{};
  std::array<double, kPacked> h{};

  Dual2() = default;
  Dual2(double value) : v(value) {}  // NOLINT(implicit)

  static Dual2 variable(double value, int index) {
    Dual2 d(value);
    d.g[static_cast<std::size_t>(index)] = 1.0;
    return d;
  }

  double grad(int i) const { return g[static_cast<std::size_t>(i)]; }
  double hess(int i, int j) const { return h[static_cast<std::size_t>(packed_index(i, j))]; }

  Dual2& operator+=(const Dual2& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) g[i] += o.g[i];
    for (int k = 0; k < kPacked; ++k) h[k] += o.h[k];
    return *this;
  }
  Dual2& operator-=(const Dual2& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) g[i] -= o.g[i];
    for (int k = 0; k < kPacked; ++k) h[k] -= o.h[k];
    return *this;
  }
  Dual2& operator*=(const Dual2& o) {
    int k = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j <= i; ++j, ++k) {
        h[k] = v * o.h[k] + o.v * h[k] + g[i] * o.g[j] + o.g[i] * g[j];
      }
    }
    for (int i = 0; i < N; ++i) g[i] = v * o.g[i] + o.v * g[i];
    v *= o.v;
    return *this;
  }
};

/// Applies a scalar function with known first and second derivatives.
template <int N>
Dual2<N> chain(const Dual2<N>& a, double f, double df, double d2f) {
  Dual2<N> r(f);
  for (int i = 0; i < N; ++i) r.g[i] = df * a.g[i];
  int k = 0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j <= i; ++j, ++k) r.h[k] = df * a.h[k] + d2f * a.g[i] * a.g[j];
  }
  return r;
}

template <int N> Dual2<N> operator+(Dual2<N> a, const Dual2<N>& b) { return a += b; }
template <int N> Dual2<N> operator-(Dual2<N> a, const Dual2<N>& b) { return a -= b; }
template <int N> Dual2<N> operator*(Dual2<N> a, const Dual2<N>& b) { return a *= b; }
template <int N> Dual2<N> operator+(Dual2<N> a, double b) { a.v += b; return a; }
template <int N> Dual2<N> operator+(double b, Dual2<N> a) { a.v += b; return a; }
template <int N> Dual2<N> operator-(Dual2<N> a, double b) { a.v -= b; return a; }
template <int N> Dual2<N> operator-(Dual2<N> a) {
  a.v = -a.v;
  for (auto& x : a.g) x = -x;
  for (auto& x : a.h) x = -x;
  return a;
}
template <int N> Dual2<N> operator-(double b, const Dual2<N>& a) { return -a + b; }
template <int N> Dual2<N> operator*(Dual2<N> a, double b) {
  a.v *= b;
  for (auto& x : a.g) x *= b;
  for (auto& x : a.h) x *= b;
  return a;
}
template <int N> Dual2<N> operator*(double b, Dual2<N> a) { return a * b; }
template <int N> Dual2<N> operator/(Dual2<N> a, double b) { return a * (1.0 / b); }
template <int N> Dual2<N> reciprocal(const Dual2<N>& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}
template <int N> Dual2<N> operator/(const Dual2<N>& a, const Dual2<N>& b) { return a * reciprocal(b); }
template <int N> Dual2<N> operator/(double a, const Dual2<N>& b) { return reciprocal(b) * a; }
template <int N> Dual2<N>& operator/=(Dual2<N>& a, const Dual2<N>& b) { return a = a / b; }

template <int N> Dual2<N> sin(const Dual2<N>& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, s, c, -s);
}
template <int N> Dual2<N> cos(const Dual2<N>& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, c, -s, -c);
}
template <int N> Dual2<N> sqrt(const Dual2<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
template <int N> Dual2<N> tanh(const Dual2<N>& a) {
  const double t = std::tanh(a.v);
  const double d = 1.0 - t * t;
  return chain(a, t, d, -2.0 * t * d);
}
template <int N> Dual2<N> atan2(const Dual2<N>& y, const Dual2<N>& x) {
  const double r2 = x.v * x.v + y.v * y.v;
  const double r4 = r2 * r2;
  const double fy = x.v / r2, fx = -y.v / r2;
  const double fyy = -2.0 * x.v * y.v / r4;
  const double fxx = 2.0 * x.v * y.v / r4;
  const double fxy = (y.v * y.v - x.v * x.v) / r4;
  Dual2<N> r(std::atan2(y.v, x.v));
  for (int i = 0; i < N; ++i) r.g[i] = fy * y.g[i] + fx * x.g[i];
  int k = 0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j <= i; ++j, ++k) {
      r.h[k] = fy * y.h[k] + fx * x.h[k] + fyy * y.g[i] * y.g[j] + fxx * x.g[i] * x.g[j] +
               fxy * (x.g[i] * y.g[j] + y.g[i] * x.g[j]);
    }
  }
  return r;
}

}  // namespace crane::ad

namespace crane {

inline double value_of(double x) { return x; }
template <int N> double value_of(const ad::Dual<N>& x) { return x.v; }
template <int N> double value_of(const ad::Dual2<N>& x) { return x.v; }

}  // namespace crane
