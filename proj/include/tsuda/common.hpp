// ============================================================================
// common.hpp - shared aliases, seeded RNG streams, small numeric helpers
// ============================================================================
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsuda {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// splitmix64; used to derive independent RNG streams from (master seed, tag).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Independent substream id from a master seed and one or two tags.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(splitmix64(master) ^ splitmix64(tag + 0x51ed270b0f3ff4c5ULL));
}
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
  return derive_seed(master, hash_str(tag));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

// Largest-remainder apportionment of n into parts proportional to weights.
// Every part gets at least min_each (requires n >= min_each * weights.size()).
inline std::vector<int> apportion(int n, const std::vector<double>& weights, int min_each = 0) {
  const int k = static_cast<int>(weights.size());
  if (k == 0) throw std::invalid_argument("apportion: no weights");
  if (n < min_each * k) throw std::invalid_argument("apportion: n too small for min_each");
  double wsum = 0;
  for (double w : weights) wsum += w;
  std::vector<int> out(k, 0);
  std::vector<double> rem(k);
  int base_total = 0;
  for (int i = 0; i < k; ++i) {
    const double quota = n * (weights[i] / wsum);
    out[i] = static_cast<int>(quota);
    rem[i] = quota - out[i];
    base_total += out[i];
  }
  int leftover = n - base_total;
  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int i = 0; i < leftover; ++i) out[order[i % k]] += 1;
  // Raise any part below min_each by taking from the currently largest part.
  for (int i = 0; i < k; ++i) {
    while (out[i] < min_each) {
      int big = 0;
      for (int j = 1; j < k; ++j)
        if (out[j] > out[big]) big = j;
      if (big == i || out[big] <= min_each)
        throw std::invalid_argument("apportion: cannot satisfy min_each");
      --out[big];
      ++out[i];
    }
  }
  return out;
}

inline bool approx_eq(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace tsuda
