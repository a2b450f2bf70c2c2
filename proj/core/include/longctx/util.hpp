#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace longctx {

inline constexpr const char* kVersion = "0.1.0";

// splitmix64-based generator. Kept self-contained so that streams are stable
// across standard library versions; std::mt19937 distributions are not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Rejection-free modulo is fine for our n << 2^64.
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller; one value per call, deterministic call sequence.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

// Stable seed for a (base_seed, document, anchor, run) tuple. Adding or
// removing windows from an experiment never changes another window's stream.
inline uint64_t derive_seed(uint64_t base_seed, std::string_view doc_id, int64_t anchor,
                            int run_index) {
  uint64_t h = fnv1a64(doc_id);
  h = mix64(h ^ mix64(base_seed));
  h = mix64(h ^ static_cast<uint64_t>(anchor) * 0x9e3779b97f4a7c15ull);
  h = mix64(h ^ (static_cast<uint64_t>(run_index) + 1));
  return h;
}

inline std::string to_hex(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// the outcome is identical for any thread count.
inline void parallel_for(int64_t n, int n_threads, const std::function<void(int64_t)>& fn) {
  if (n_threads <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      int64_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int used = static_cast<int>(std::min<int64_t>(n_threads, n));
  pool.reserve(static_cast<size_t>(used));
  for (int t = 0; t < used; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline int resolve_threads(int requested) {
  const char* env = std::getenv("LONGCTX_THREADS");
  if (env != nullptr && *env != '\0') {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  if (requested >= 1) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace longctx
