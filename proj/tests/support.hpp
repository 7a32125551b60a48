#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "crane/config.hpp"

namespace crane::testing {

/// Small seeded generator used by the property tests.
class Rng {
 public:
  explicit Rng(unsigned long long seed) : eng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  Vec3 point(const Vec3& lo, const Vec3& hi) {
    return {uniform(lo[0], hi[0]), uniform(lo[1], hi[1]), uniform(lo[2], hi[2])};
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

/// b(s) = 35 s^4 - 84 s^5 + 70 s^6 - 20 s^7 and its derivatives 0..4 with
/// respect to s.
inline std::array<double, 5> septic(double s) {
  if (s <= 0) return {0, 0, 0, 0, 0};
  if (s >= 1) return {1, 0, 0, 0, 0};
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s, s6 = s5 * s, s7 = s6 * s;
  return {35 * s4 - 84 * s5 + 70 * s6 - 20 * s7, 140 * s3 - 420 * s4 + 420 * s5 - 140 * s6,
          420 * s2 - 1680 * s3 + 2100 * s4 - 840 * s5, 840 * s - 5040 * s2 + 8400 * s3 - 4200 * s4,
          840 - 10080 * s + 25200 * s2 - 16800 * s3};
}

/// Rest-to-rest septic move from a to b over [0, T], held at b afterwards.
inline FlatJet septic_jet(const Vec3& a, const Vec3& b, double T, double t) {
  const auto s = septic(t / T);
  FlatJet j{};
  for (int ax = 0; ax < 3; ++ax) {
    const double d = b[ax] - a[ax];
    j[ax][0] = a[ax] + d * s[0];
    for (int k = 1; k <= 4; ++k) j[ax][k] = d * s[k] / std::pow(T, k);
  }
  return j;
}

/// Minimum distance from q to the box by dense sampling of its surface
/// (0 when inside).
inline double brute_box_distance(const Vec3& q, const BoxObstacle& b, int grid = 60) {
  if (b.contains(q)) return 0.0;
  double best = INFINITY;
  auto consider = [&](const Vec3& s) {
    double d = 0;
    for (int a = 0; a < 3; ++a) d += (q[a] - s[a]) * (q[a] - s[a]);
    best = std::min(best, std::sqrt(d));
  };
  // Grid on each face plus the projection-aligned point, so the sampled
  // minimum is exact when the closest point lies on a grid line.
  for (int face = 0; face < 6; ++face) {
    const int fixed = face / 2;
    const double fv = face % 2 == 0 ? b.lo(fixed) : b.hi(fixed);
    const int u = (fixed + 1) % 3, v = (fixed + 2) % 3;
    std::vector<double> us, vs;
    for (int i = 0; i <= grid; ++i) {
      us.push_back(b.lo(u) + (b.hi(u) - b.lo(u)) * i / grid);
      vs.push_back(b.lo(v) + (b.hi(v) - b.lo(v)) * i / grid);
    }
    us.push_back(std::clamp(q[u], b.lo(u), b.hi(u)));
    vs.push_back(std::clamp(q[v], b.lo(v), b.hi(v)));
    for (double x : us) {
      for (double y : vs) {
        Vec3 s{};
        s[fixed] = fv;
        s[u] = x;
        s[v] = y;
        consider(s);
      }
    }
  }
  return best;
}

inline std::string config_path(const std::string& name) { return std::string(CRANE_CONFIG_DIR) + "/" + name; }

inline Config scenario_config(int k) { return load_config(config_path("scenario" + std::to_string(k) + ".json")); }

}  // namespace crane::testing
