#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fwlab {

/// State dimension is bounded so that points and matrices live on the stack.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline bool all_finite(const Vec& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

/// a(x) is not positive definite at a queried point.
class EllipticityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trajectory left the ball of radius R_max.
class ExplosionError : public std::runtime_error {
 public:
  ExplosionError(long step, double radius)
      : std::runtime_error("trajectory exploded at step " + std::to_string(step) +
                           " (|x| = " + std::to_string(radius) + ")"),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace fwlab
