#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fwlab/model.hpp"
#include "fwlab/paths.hpp"

namespace testing_support {

/// Catalog instances exercised by the property suites; the anisotropic and
/// modulated members have off-diagonal structure in every field.
inline std::vector<fwlab::DiffusionModel> catalog() {
  using fwlab::Mat;
  Mat a(2, 2), h(2, 2), c(2, 2);
  a << 1.5, 0.4, 0.4, 0.8;
  h << 1.2, 0.3, 0.3, 0.7;
  c << 0.1, -0.9, 1.1, -0.2;
  return {fwlab::make_rotational_ou(1.0), fwlab::make_bounded_rotation(1.3), fwlab::make_double_well(0.3, 0.7),
          fwlab::make_anisotropic_ou(a, h, c), fwlab::make_modulated_diffusion(0.8, 0.3, 0.2)};
}

inline fwlab::Vec random_point(int dim, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  fwlab::Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = n(rng);
  return x;
}

/// Continuum loop: piecewise-linear through the given coarse nodes,
/// mollified with width period/5. Sampling it at different node counts
/// gives discretizations of one and the same smooth loop.
inline fwlab::PeriodicPath mollified_loop(const std::vector<fwlab::Vec>& coarse, int steps, double period) {
  const fwlab::PeriodicPath knots(period, coarse);
  std::vector<fwlab::Vec> nodes;
  for (int k = 0; k < steps; ++k) nodes.push_back(knots.at(period * k / steps));
  return fwlab::mollify(fwlab::PeriodicPath(period, std::move(nodes)), 0.2 * period).smoothed;
}

inline std::vector<fwlab::Vec> random_knots(int dim, std::mt19937_64& rng, int count = 16, double scale = 0.8) {
  std::vector<fwlab::Vec> knots;
  for (int k = 0; k < count; ++k) knots.push_back(random_point(dim, rng, scale));
  return knots;
}

inline fwlab::PeriodicPath random_mollified_loop(int dim, int steps, double period, std::mt19937_64& rng,
                                                 double scale = 0.8) {
  return mollified_loop(random_knots(dim, rng, 16, scale), steps, period);
}

}  // namespace testing_support
