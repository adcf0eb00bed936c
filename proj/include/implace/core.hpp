#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace implace {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// acos with the argument clamped to [-1, 1] so pairwise-dot roundoff
// cannot produce NaN.
inline double safe_acos(double x) {
  return std::acos(std::clamp(x, -1.0, 1.0));
}

struct Aabb {
  Vec3 min{Vec3::Constant(std::numeric_limits<double>::max())};
  Vec3 max{Vec3::Constant(std::numeric_limits<double>::lowest())};

  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void pad(double m) {
    min.array() -= m;
    max.array() += m;
  }
  bool empty() const { return (max.array() < min.array()).any(); }
  Vec3 extent() const { return max - min; }
};

// splitmix64; used to derive independent per-stage seeds from one root seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  return Rng(mix_seed(seed, salt));
}

// Deterministic parallel map over [0, n): each index writes only its own
// output slot, so the result is independent of the thread schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned max_threads = 0) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (max_threads != 0) hw = std::min(hw, max_threads);
  if (hw <= 1 || n < 256) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t chunk = (n + hw - 1) / hw;
  for (unsigned t = 0; t < hw; ++t) {
    std::size_t begin = t * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& w : workers) w.join();
}

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace implace
