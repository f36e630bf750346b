// ============================================================================
// Counter-based random streams (Philox4x32-10) with deterministic normals.
//
// Streams are keyed by (master seed, experiment tag, replica id, purpose id).
// Replica and purpose live in the counter block, so streams with distinct tags
// draw from provably disjoint counter ranges; the experiment tag is hashed
// into the key. Identical tags reproduce identical output on any platform and
// any thread schedule — normals use an explicit Box–Muller instead of
// std::normal_distribution, whose algorithm is implementation-defined.
// ============================================================================
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace membrane {

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint32_t mulhi32(uint32_t a, uint32_t b) {
  return static_cast<uint32_t>((static_cast<uint64_t>(a) * b) >> 32);
}

}  // namespace detail

// One 128-bit-counter, 64-bit-key Philox block cipher evaluation.
inline void philox4x32_10(const uint32_t ctr_in[4], const uint32_t key_in[2],
                          uint32_t out[4]) {
  constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  uint32_t x0 = ctr_in[0], x1 = ctr_in[1], x2 = ctr_in[2], x3 = ctr_in[3];
  uint32_t k0 = key_in[0], k1 = key_in[1];
  for (int round = 0; round < 10; ++round) {
    const uint32_t hi0 = detail::mulhi32(M0, x0), lo0 = M0 * x0;
    const uint32_t hi1 = detail::mulhi32(M1, x2), lo1 = M1 * x2;
    const uint32_t y0 = hi1 ^ x1 ^ k0, y1 = lo1;
    const uint32_t y2 = hi0 ^ x3 ^ k1, y3 = lo0;
    x0 = y0; x1 = y1; x2 = y2; x3 = y3;
    k0 += W0; k1 += W1;
  }
  out[0] = x0; out[1] = x1; out[2] = x2; out[3] = x3;
}

class RngStream {
 public:
  RngStream() = default;

  static RngStream make(uint64_t master_seed, std::string_view experiment,
                        uint32_t replica, uint32_t purpose) {
    RngStream s;
    uint64_t chain = master_seed ^ (detail::fnv1a(experiment) * 0x9E3779B97F4A7C15ull);
    const uint64_t k = detail::splitmix64(chain);
    s.key_[0] = static_cast<uint32_t>(k);
    s.key_[1] = static_cast<uint32_t>(k >> 32);
    s.replica_ = replica;
    s.purpose_ = purpose;
    return s;
  }

  uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  uint64_t next_u64() {
    const uint64_t lo = next_u32();
    const uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  // Uniform on (0,1]: 53 significant bits, never exactly 0.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  void fill_normals(double* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = next_normal();
  }
  void fill_normals(std::vector<double>& dst) { fill_normals(dst.data(), dst.size()); }

  // Uniform integer in [0, bound) by 64-bit multiply (bound << 2^32).
  uint32_t next_below(uint32_t bound) {
    return static_cast<uint32_t>((static_cast<uint64_t>(next_u32()) * bound) >> 32);
  }

  uint32_t replica() const { return replica_; }
  uint32_t purpose() const { return purpose_; }

 private:
  void refill() {
    const uint32_t ctr[4] = {static_cast<uint32_t>(idx_),
                             static_cast<uint32_t>(idx_ >> 32), replica_, purpose_};
    philox4x32_10(ctr, key_, buf_);
    ++idx_;
    buf_pos_ = 0;
  }

  uint32_t key_[2] = {0, 0};
  uint32_t replica_ = 0;
  uint32_t purpose_ = 0;
  uint64_t idx_ = 0;
  uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace membrane
