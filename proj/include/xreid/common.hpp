#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>

namespace xreid {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatI = Eigen::MatrixXi;
using Rng = std::mt19937_64;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

// SplitMix64 step; used to derive independent RNG streams from (seed, index)
// pairs so that e.g. trial 3 draws the same gallery no matter what ran before.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

// Glorot/Xavier uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Mat xavier_uniform(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

inline Mat gaussian_matrix(int rows, int cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = stddev * dist(rng);
  return m;
}

// FNV-1a 64-bit, used to fingerprint configs in checkpoints and output JSON.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace xreid
