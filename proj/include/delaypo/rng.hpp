#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "delaypo/errors.hpp"

namespace delaypo {

// Counter-based splittable PRNG.
//
// A generator is a pair (key, counter) and the i-th output is
//     out(i) = mix64(key + i * 0x9E3779B97F4A7C15)        for i = 1, 2, ...
// where mix64 is the SplitMix64 finalizer. Streams are therefore pure
// functions of the 64-bit key, so any stream can be reproduced from the
// seed alone and a reimplementation in another language only needs the two
// functions below. Child streams are derived with derive_key, which never
// touches the parent counter: splitting is order-independent.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t label) {
  return mix64(key ^ (0x9E3779B97F4A7C15ULL + mix64(label)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) via the multiply-shift reduction.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Index drawn from a probability vector. Consumes one draw. Leftover
  // rounding mass goes to the last index with positive probability.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = next_double();
    double cum = 0.0;
    int last_positive = 0;
    for (int i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = i;
      cum += probs[i];
      if (u < cum) return i;
    }
    return last_positive;
  }

  // Child stream independent of this stream's position.
  Rng split(std::uint64_t label) const { return Rng(derive_key(key_, label)); }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Random probability vector (Dirichlet(1), i.e. uniform on the simplex).
inline Eigen::VectorXd random_simplex_point(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.next_double();
    v[i] = -std::log(1.0 - u);
  }
  double s = v.sum();
  if (!(s > 0.0)) return Eigen::VectorXd::Constant(n, 1.0 / n);
  return v / s;
}

}  // namespace delaypo
