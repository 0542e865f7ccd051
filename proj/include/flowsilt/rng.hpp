#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace flowsilt::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
inline Counter philox4x32_10(Counter ctr, Key key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
    const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Stream tags separate the independent noise sources of one replicate.
enum class Stream : std::uint64_t { Flow = 1, Particle = 2, Branch = 3, Init = 4, Aux = 5 };

inline Key derive_key(std::uint64_t seed, std::uint64_t replicate, Stream s) {
  std::uint64_t k = splitmix64(seed ^ splitmix64(replicate * 0x2545F4914F6CDD1Dull + std::uint64_t(s)));
  return {std::uint32_t(k), std::uint32_t(k >> 32)};
}

// Uniform on the open interval (0, 1).
inline double to_unit(std::uint32_t x) { return (double(x) + 0.5) * 0x1p-32; }

inline void box_muller(std::uint32_t a, std::uint32_t b, double& z0, double& z1) {
  const double r = std::sqrt(-2.0 * std::log(to_unit(a)));
  const double th = 6.283185307179586476925286766559 * to_unit(b);
  z0 = r * std::cos(th);
  z1 = r * std::sin(th);
}

// Four standard normals from one Philox block.
inline void normals4(const Counter& ctr, const Key& key, double* out) {
  const Counter w = philox4x32_10(ctr, key);
  box_muller(w[0], w[1], out[0], out[1]);
  box_muller(w[2], w[3], out[2], out[3]);
}

// Fill `count` normals for a (a, b, c) counter triple; the fourth counter word is the block index.
inline void fill_normals(const Key& key, std::uint32_t a, std::uint32_t b, std::uint32_t c, double* out, int count) {
  double buf[4];
  for (int base = 0, block = 0; base < count; base += 4, ++block) {
    normals4({a, b, c, std::uint32_t(block)}, key, buf);
    for (int i = 0; i < 4 && base + i < count; ++i) out[base + i] = buf[i];
  }
}

inline Counter hash_counter(std::uint64_t hash, std::uint32_t step, std::uint32_t block) {
  return {std::uint32_t(hash), std::uint32_t(hash >> 32), step, block};
}

// Small sequential generator on top of Philox for auxiliary sampling (tests, tuple draws).
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;
  PhiloxEngine(std::uint64_t seed, std::uint64_t stream)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, stream_(stream) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }
  result_type operator()() {
    if (pos_ == 4) {
      buf_ = philox4x32_10({std::uint32_t(ctr_), std::uint32_t(ctr_ >> 32), std::uint32_t(stream_),
                            std::uint32_t(stream_ >> 32)},
                           key_);
      ++ctr_;
      pos_ = 0;
    }
    return buf_[pos_++];
  }
  double uniform() { return to_unit((*this)()); }
  double normal() {
    double z0, z1;
    box_muller((*this)(), (*this)(), z0, z1);
    return z0;
  }

 private:
  Key key_;
  std::uint64_t stream_;
  std::uint64_t ctr_ = 0;
  Counter buf_{};
  int pos_ = 4;
};

}  // namespace flowsilt::rng
