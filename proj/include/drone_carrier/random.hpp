#pragma once

// Seeded random streams. One master seed fans out into independent named
// streams so that adding a consumer never perturbs the draws of another.

#include "drone_carrier/common.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace drone_carrier {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  /// Child stream keyed by (master seed, name, index).
  static RngStream derive(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return RngStream(splitmix64(master ^ fnv1a(name)) ^ splitmix64(index + 0x51ed2701ULL));
  }

  double normal(double sigma = 1.0) {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }
  Vec2 normal2(double sigma) { return {normal(sigma), normal(sigma)}; }
  Vec3 normal3(double sigma) { return {normal(sigma), normal(sigma), normal(sigma)}; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace drone_carrier
