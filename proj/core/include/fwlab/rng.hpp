#pragma once

#include <array>
#include <cstdint>

#include "fwlab/types.hpp"

namespace fwlab {

/// Philox4x32-10 block function (Salmon et al., SC'11). Stateless: the
/// output depends only on (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer; used to derive independent keys from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// Standard normal variates for one trajectory. The stream is keyed by
/// (seed, stream index) and the k-th draw depends on nothing else, so
/// trajectories can be produced in any order on any thread.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream);

  double next();
  void fill(Vec& out);
  std::uint64_t draws() const noexcept { return draws_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::uint64_t draws_ = 0;
  double cache_[2] = {0.0, 0.0};
  int cached_ = 0;
};

/// Uniform (0,1) variates on the same counter scheme.
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint64_t stream);
  double next();

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

}  // namespace fwlab
