#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace txd {

// Input/flag problems the caller can fix (CLI maps these to exit code 1).
// Everything else throws std::runtime_error and maps to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Seeding and random draws.
//
// The engine is std::mt19937_64, whose output is pinned bit-for-bit by the
// standard. The distribution transforms are hand-rolled because std::
// distributions are implementation-defined and would break cross-toolchain
// reproducibility.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a master seed and a stream tag.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(master ^ splitmix64(tag));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  void reseed(std::uint64_t seed) {
    engine_.seed(seed);
    has_spare_ = false;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Rejection sampling, exactly unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::runtime_error("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; caches the second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

  double exponential() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return -std::log(u);
  }

  // Dirichlet(1,...,1): normalized unit-rate exponentials.
  std::vector<double> dirichlet_uniform(std::size_t k) {
    std::vector<double> v(k);
    double sum = 0.0;
    for (auto& x : v) {
      x = exponential();
      sum += x;
    }
    for (auto& x : v) x /= sum;
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic parallel map: static index partition, results written by
// index, so the output never depends on the worker count.
// ---------------------------------------------------------------------------
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(workers);
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace txd
