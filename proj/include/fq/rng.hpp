#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace fq {

// Deterministic random stream with hierarchical splitting.
//
// Every stream is identified by a 64-bit key.  split() derives a child key
// from the parent key and a label without consuming any state from the
// parent stream, so adding draws to one stream (or adding a sibling) never
// perturbs another.  All variate transforms are implemented on top of the
// raw 64-bit output, which keeps sequences identical across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key), gen_(mix_(key ^ 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t key() const { return key_; }

  Rng split(std::uint64_t label) const { return Rng(mix_(key_ ^ mix_(label + 0x632be59bd9b4e019ull))); }

  Rng split(std::string_view label) const {
    // FNV-1a over the label bytes, folded into the parent key.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return Rng(mix_(key_ ^ mix_(h)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer uniform on [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free for our purposes: 64-bit multiply-shift partition.
    __uint128_t m = static_cast<__uint128_t>(gen_()) * static_cast<__uint128_t>(n);
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang; shape > 0, unit scale.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  double exponential() { return -std::log(uniform()); }

  // Student-t with dof degrees of freedom, variance dof/(dof-2).
  double student_t(double dof) { return normal() / std::sqrt(chi_squared(dof) / dof); }

  // Student-t rescaled to unit variance; requires dof > 2.
  double student_t_standardized(double dof) { return student_t(dof) * std::sqrt((dof - 2.0) / dof); }

 private:
  static std::uint64_t mix_(std::uint64_t z) {
    // splitmix64 finalizer.
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fq
