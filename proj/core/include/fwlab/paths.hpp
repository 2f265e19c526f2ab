#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fwlab/types.hpp"

namespace fwlab {

/// Uniform grid t_k = k T / N on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps);

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double dt() const noexcept { return horizon_ / steps_; }
  double time(int k) const noexcept { return horizon_ * k / steps_; }

 private:
  double horizon_;
  int steps_;
};

/// Node samples X_0..X_N of a trajectory; values between nodes are
/// piecewise linear.
class DiscretePath {
 public:
  DiscretePath(TimeGrid grid, std::vector<Vec> nodes);

  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return static_cast<int>(nodes_.front().size()); }
  int steps() const noexcept { return grid_.steps(); }
  const Vec& node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }
  const std::vector<Vec>& nodes() const noexcept { return nodes_; }
  const Vec& front() const { return nodes_.front(); }
  const Vec& back() const { return nodes_.back(); }

  /// Linear interpolation; t is clamped to [0, T].
  Vec at(double t) const;

 private:
  TimeGrid grid_;
  std::vector<Vec> nodes_;
};

/// One period of a closed path: N free nodes, X_N is X_0 by construction.
class PeriodicPath {
 public:
  PeriodicPath(double period, std::vector<Vec> free_nodes);
  /// Throws std::invalid_argument unless X_N == X_0 exactly.
  static PeriodicPath from_closed(const DiscretePath& path);

  double period() const noexcept { return period_; }
  int steps() const noexcept { return static_cast<int>(nodes_.size()); }
  int dim() const noexcept { return static_cast<int>(nodes_.front().size()); }
  double dt() const noexcept { return period_ / steps(); }
  /// Index taken modulo N (any sign).
  const Vec& node(long k) const;
  const std::vector<Vec>& free_nodes() const noexcept { return nodes_; }

  /// Periodic linear interpolation at any t.
  Vec at(double t) const;
  /// Closed DiscretePath with N + 1 nodes on [0, S].
  DiscretePath closed() const;

 private:
  double period_;
  std::vector<Vec> nodes_;
};

/// P = S^{-1} int_0^S dt delta_{theta_t Y}, represented by the loop Y.
class HolonomicMeasure {
 public:
  explicit HolonomicMeasure(PeriodicPath path) : path_(std::move(path)) {}
  const PeriodicPath& path() const noexcept { return path_; }
  double period() const noexcept { return path_.period(); }

 private:
  PeriodicPath path_;
};

struct Periodized {
  Vec value;
  Vec jump;  // X_0 - X_T, the jump at multiples of T
};

/// Value of the T-periodization X^T_t = X_{t - floor(t/T) T}.
Periodized periodize(const DiscretePath& path, double t);

/// (theta_s Y)_t = Y_{t-s}; s is rounded to whole grid steps.
PeriodicPath translate(const PeriodicPath& path, double shift);

/// (Theta Y)_t = Y_{-t}: node order reversed about node 0.
PeriodicPath time_reverse(const PeriodicPath& path);

/// iota_delta(s) = (C/delta) (4u(1-u))^3 with u = s/delta on (0, delta), C = 35/16.
double mollifier(double s, double width);
double mollifier_derivative(double s, double width);

struct Mollified {
  DiscretePath smoothed;
  DiscretePath derivative;
};

struct MollifiedLoop {
  PeriodicPath smoothed;
  PeriodicPath derivative;
};

/// Discrete convolution with iota_delta (weights normalized to sum 1) and
/// with its derivative. Values before t = 0 are held at X_0. Requires
/// 2 dt <= delta < T/4.
Mollified mollify(const DiscretePath& path, double width);
/// Circular convolution; the output stays periodic.
MollifiedLoop mollify(const PeriodicPath& path, double width);

/// max |X_t - X_s| over grid times s, t in [t1, t2] with |t - s| < delta.
double continuity_modulus(const DiscretePath& path, double delta, double t1, double t2);

/// Nodes of x (1 - t) + y t on a uniform grid of [0, 1].
DiscretePath affine_bridge(const Vec& x, const Vec& y, int steps);

/// Circle center + r (cos w t, sin w t) sampled over one period 2 pi / |w|.
PeriodicPath circle_loop(double radius, double angular_velocity, int steps, const Vec& center);

/// Smooth random loop: Gaussian node noise (seeded) circularly mollified,
/// recentred and scaled to the given RMS amplitude.
PeriodicPath random_loop(int dim, int steps, double period, double amplitude, std::uint64_t seed,
                         const Vec& center);

/// CSV with header `t,x1..xn`.
void write_csv(std::ostream& out, const DiscretePath& path);
DiscretePath read_csv(std::istream& in);

}  // namespace fwlab
