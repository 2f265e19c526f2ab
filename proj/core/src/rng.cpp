#include "fwlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace fwlab {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

// 53 random bits mapped to the open interval (0, 1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

std::array<std::uint32_t, 4> block_for(const std::array<std::uint32_t, 2>& key, std::uint64_t stream,
                                       std::uint64_t block) {
  return philox4x32({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                     static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                    key);
}

std::array<std::uint32_t, 2> split_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream) : key_(split_key(seed)), stream_(stream) {}

void NormalStream::refill() {
  const auto r = block_for(key_, stream_, block_++);
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  // Box-Muller
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cache_[0] = rad * std::cos(theta);
  cache_[1] = rad * std::sin(theta);
  cached_ = 2;
}

double NormalStream::next() {
  if (cached_ == 0) refill();
  ++draws_;
  return cache_[2 - cached_--];
}

void NormalStream::fill(Vec& out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = next();
}

UniformStream::UniformStream(std::uint64_t seed, std::uint64_t stream) : key_(split_key(seed)), stream_(stream) {}

double UniformStream::next() {
  if (used_ >= 4) {
    buffer_ = block_for(key_, stream_, block_++);
    used_ = 0;
  }
  const double u = to_unit(buffer_[used_], buffer_[used_ + 1]);
  used_ += 2;
  return u;
}

}  // namespace fwlab
