#pragma once

/**
 * @file jet.hpp
 * @brief Truncated Taylor jets in time.
 *
 * A Jet<T, N> holds the normalized Taylor coefficients c_k = f^(k)(t0) / k!
 * for k = 0..N. Arithmetic follows the truncated composition rules, so a
 * chain of elementary operations yields exact time derivatives up to order
 * N. T may itself be an AD scalar, which is how the optimizer differentiates
 * the flat maps with respect to the decision variables.
 */

#include <array>
#include <cmath>

#include "crane/autodiff.hpp"

namespace crane {

template <typename T, int N>
class Jet {
 public:
  static constexpr int kOrder = N;

  Jet() { c_.fill(T(0.0)); }
  Jet(const T& value) {  // NOLINT(implicit): constants promote to jets
    c_.fill(T(0.0));
    c_[0] = value;
  }

  /// Builds a jet from time derivatives f, f', f'', ... (missing orders are 0).
  template <typename Range>
  static Jet from_derivatives(const Range& derivs) {
    Jet j;
    double fact = 1.0;
    int k = 0;
    for (const auto& d : derivs) {
      if (k > N) break;
      j.c_[k] = T(d) * (1.0 / fact);
      ++k;
      fact *= k;
    }
    return j;
  }

  const T& coeff(int k) const { return c_[static_cast<std::size_t>(k)]; }
  T& coeff(int k) { return c_[static_cast<std::size_t>(k)]; }
  const T& value() const { return c_[0]; }

  /// k-th time derivative, k! * c_k.
  T derivative(int k) const {
    double fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    return c_[static_cast<std::size_t>(k)] * fact;
  }

  Jet& operator+=(const Jet& o) {
    for (int k = 0; k <= N; ++k) c_[k] += o.c_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int k = 0; k <= N; ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& x : c_) x = x * s;
    return *this;
  }

 private:
  std::array<T, N + 1> c_;
};

template <typename T, int N> Jet<T, N> operator+(Jet<T, N> a, const Jet<T, N>& b) { return a += b; }
template <typename T, int N> Jet<T, N> operator-(Jet<T, N> a, const Jet<T, N>& b) { return a -= b; }
template <typename T, int N> Jet<T, N> operator-(const Jet<T, N>& a) {
  Jet<T, N> r;
  for (int k = 0; k <= N; ++k) r.coeff(k) = -a.coeff(k);
  return r;
}
template <typename T, int N> Jet<T, N> operator+(Jet<T, N> a, double s) {
  a.coeff(0) = a.coeff(0) + s;
  return a;
}
template <typename T, int N> Jet<T, N> operator+(double s, Jet<T, N> a) { return a + s; }
template <typename T, int N> Jet<T, N> operator-(Jet<T, N> a, double s) { return a + (-s); }
template <typename T, int N> Jet<T, N> operator-(double s, const Jet<T, N>& a) { return -a + s; }
template <typename T, int N> Jet<T, N> operator*(Jet<T, N> a, double s) { return a *= s; }
template <typename T, int N> Jet<T, N> operator*(double s, Jet<T, N> a) { return a *= s; }
template <typename T, int N> Jet<T, N> operator/(Jet<T, N> a, double s) { return a *= 1.0 / s; }

template <typename T, int N>
Jet<T, N> operator*(const Jet<T, N>& a, const Jet<T, N>& b) {
  Jet<T, N> r;
  for (int k = 0; k <= N; ++k) {
    T acc = a.coeff(0) * b.coeff(k);
    for (int i = 1; i <= k; ++i) acc += a.coeff(i) * b.coeff(k - i);
    r.coeff(k) = acc;
  }
  return r;
}

template <typename T, int N>
Jet<T, N> operator/(const Jet<T, N>& a, const Jet<T, N>& b) {
  Jet<T, N> q;
  const T inv = 1.0 / b.coeff(0);
  for (int k = 0; k <= N; ++k) {
    T acc = a.coeff(k);
    for (int i = 1; i <= k; ++i) acc -= b.coeff(i) * q.coeff(k - i);
    q.coeff(k) = acc * inv;
  }
  return q;
}

template <typename T, int N> Jet<T, N> operator/(double s, const Jet<T, N>& b) { return Jet<T, N>(T(s)) / b; }

template <typename T, int N>
Jet<T, N> sqrt(const Jet<T, N>& a) {
  using std::sqrt;
  Jet<T, N> r;
  r.coeff(0) = sqrt(a.coeff(0));
  if constexpr (N >= 1) {
    const T inv2 = 0.5 / r.coeff(0);
    for (int k = 1; k <= N; ++k) {
      T acc = a.coeff(k);
      for (int i = 1; i < k; ++i) acc -= r.coeff(i) * r.coeff(k - i);
      r.coeff(k) = acc * inv2;
    }
  }
  return r;
}

/// Joint sine/cosine recurrence; returns {sin, cos}.
template <typename T, int N>
std::array<Jet<T, N>, 2> sincos(const Jet<T, N>& u) {
  using std::cos;
  using std::sin;
  Jet<T, N> s, c;
  s.coeff(0) = sin(u.coeff(0));
  c.coeff(0) = cos(u.coeff(0));
  for (int k = 1; k <= N; ++k) {
    T as = u.coeff(1) * c.coeff(k - 1);
    T ac = u.coeff(1) * s.coeff(k - 1);
    for (int j = 2; j <= k; ++j) {
      as += (u.coeff(j) * c.coeff(k - j)) * static_cast<double>(j);
      ac += (u.coeff(j) * s.coeff(k - j)) * static_cast<double>(j);
    }
    s.coeff(k) = as * (1.0 / k);
    c.coeff(k) = -ac * (1.0 / k);
  }
  return {s, c};
}

template <typename T, int N> Jet<T, N> sin(const Jet<T, N>& u) { return sincos(u)[0]; }
template <typename T, int N> Jet<T, N> cos(const Jet<T, N>& u) { return sincos(u)[1]; }

template <typename T, int N>
Jet<T, N> tanh(const Jet<T, N>& u) {
  using std::tanh;
  Jet<T, N> t, w;  // w = 1 - t^2
  t.coeff(0) = tanh(u.coeff(0));
  w.coeff(0) = 1.0 - t.coeff(0) * t.coeff(0);
  for (int k = 1; k <= N; ++k) {
    T acc = u.coeff(1) * w.coeff(k - 1);
    for (int j = 2; j <= k; ++j) acc += (u.coeff(j) * w.coeff(k - j)) * static_cast<double>(j);
    t.coeff(k) = acc * (1.0 / k);
    T sq = t.coeff(0) * t.coeff(k);
    for (int i = 1; i <= k; ++i) sq += t.coeff(i) * t.coeff(k - i);
    w.coeff(k) = -sq;
  }
  return t;
}

/// Two-argument arctangent; the series is obtained by integrating
/// (x y' - y x') / (x^2 + y^2).
template <typename T, int N>
Jet<T, N> atan2(const Jet<T, N>& y, const Jet<T, N>& x) {
  using std::atan2;
  Jet<T, N> r;
  r.coeff(0) = atan2(y.coeff(0), x.coeff(0));
  if constexpr (N >= 1) {
    // Work at order N-1 on the derivative series.
    Jet<T, N - 1> xs, ys, dx, dy;
    for (int m = 0; m < N; ++m) {
      xs.coeff(m) = x.coeff(m);
      ys.coeff(m) = y.coeff(m);
      dx.coeff(m) = x.coeff(m + 1) * static_cast<double>(m + 1);
      dy.coeff(m) = y.coeff(m + 1) * static_cast<double>(m + 1);
    }
    const Jet<T, N - 1> rate = (xs * dy - ys * dx) / (xs * xs + ys * ys);
    for (int k = 1; k <= N; ++k) r.coeff(k) = rate.coeff(k - 1) * (1.0 / k);
  }
  return r;
}

template <typename T, int N> double value_of(const Jet<T, N>& j) { return value_of(j.value()); }

using Jet4 = Jet<double, 4>;

}  // namespace crane
