#pragma once
// Deterministic, portable sampling. Everything is built on std::mt19937_64,
// whose output sequence is fixed by the standard, plus explicit transforms
// (no std::*_distribution, whose outputs are implementation-defined):
//   - uniform01: ((v >> 11) + 1) * 2^-53, in (0, 1];
//   - below(n): rejection sampling on the top of the 64-bit range;
//   - gaussian: Box-Muller on two uniform01 draws, both outputs used;
//   - sample_indices: partial Fisher-Yates, result sorted ascending.
// A (seed, call sequence) pair therefore reproduces bit-exactly everywhere.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace stnltv {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
  }

  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // k distinct indices from [0, n), sorted ascending.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stnltv
