#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace specmmd::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic seed derivation for named substreams of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return master ^ splitmix64(tag);
}

namespace detail {

inline void mulhilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                      std::uint64_t& lo) {
  const unsigned __int128 p =
      static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

}  // namespace detail

/// Philox4x64-10 counter-based generator. A (key, counter) pair maps to a
/// 4-word block through ten bumped-key rounds, so arbitrarily many
/// independent streams can be opened by key choice alone and any block can
/// be regenerated without sequential state.
class Stream {
 public:
  explicit Stream(std::uint64_t key0, std::uint64_t key1 = 0)
      : key0_(key0), key1_(key1) {
    block(counter_++, buf_);
  }

  std::uint64_t next_u64() {
    if (pos_ == 4) {
      block(counter_++, buf_);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  /// Uniform on the open interval (0, 1); never returns an endpoint, so
  /// log/tan transforms below stay finite.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on explicit uniforms.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Standard Cauchy via the inverse CDF.
  double cauchy() {
    return std::tan(std::numbers::pi * (next_unit() - 0.5));
  }

  bool bernoulli_half() { return next_unit() < 0.5; }

  /// One Philox4x64-10 block for a given counter value.
  void block(std::uint64_t counter, std::uint64_t out[4]) const {
    std::uint64_t c0 = counter, c1 = 0, c2 = 0, c3 = 0;
    std::uint64_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t hi0, lo0, hi1, lo1;
      detail::mulhilo64(kMul0, c0, hi0, lo0);
      detail::mulhilo64(kMul1, c2, hi1, lo1);
      const std::uint64_t n0 = hi1 ^ c1 ^ k0;
      const std::uint64_t n1 = lo1;
      const std::uint64_t n2 = hi0 ^ c3 ^ k1;
      const std::uint64_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
  }

 private:
  static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ull;
  static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ull;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

  std::uint64_t key0_;
  std::uint64_t key1_;
  std::uint64_t counter_ = 0;
  std::uint64_t buf_[4];
  int pos_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Substream tags; combined with a seed they name every RNG use site.
namespace stream {
constexpr std::uint64_t kDataX = 0x01;
constexpr std::uint64_t kDataY = 0x02;
constexpr std::uint64_t kBernoulli = 0x03;
constexpr std::uint64_t kFrequencies = 0x04;
constexpr std::uint64_t kPermutation = 0x05;
}  // namespace stream

}  // namespace specmmd::rng
