#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dough {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64-bit). Used for run manifests and seed derivation, not
// for anything adversarial.
// ---------------------------------------------------------------------------

constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t hash_bytes(const void* data, size_t n, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t hash_str(const std::string& s, uint64_t h = kFnvOffset) {
  return hash_bytes(s.data(), s.size(), h);
}

inline uint64_t hash_u64(uint64_t x, uint64_t h = kFnvOffset) {
  return hash_bytes(&x, sizeof(x), h);
}

std::string hex64(uint64_t v);

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions are hand-rolled because std::*_distribution is
// implementation-defined and would break run reproducibility across builds.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t seed() const { return seed_; }

  // Independent child stream; does not consume parent state.
  Rng fork(uint64_t stream) const { return Rng(hash_u64(stream, hash_u64(seed_))); }
  Rng fork(const std::string& label) const { return Rng(hash_str(label, hash_u64(seed_))); }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    // Rejection sampling keeps the draw unbiased.
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  // Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic parallel map: item i writes only its own slot, so results are
// identical regardless of scheduling. Worker exceptions are rethrown once.
// ---------------------------------------------------------------------------

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

int default_threads();

}  // namespace dough
