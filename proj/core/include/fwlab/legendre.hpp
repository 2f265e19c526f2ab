#pragma once

#include <span>
#include <vector>

namespace fwlab {

struct LegendreDual {
  std::vector<double> lambdas;
  std::vector<double> values;  // Lambda(lambda) = max_i [lambda q_i - s_i]
  bool convex_input = true;    // false when some sample lies above the lower hull
};

/// Convex conjugate of the samples (q_i, s_i) evaluated at the slopes of
/// their lower convex hull plus `extra` dual points. Non-finite s_i are
/// skipped. Throws std::invalid_argument on size mismatch or unsorted q.
LegendreDual legendre(std::span<const double> q, std::span<const double> s, std::span<const double> extra = {});

/// s**(q) = max_j [lambda_j q - Lambda_j] at the requested points.
std::vector<double> inverse_legendre(const LegendreDual& dual, std::span<const double> q);

/// Indices of the samples on the lower convex hull.
std::vector<std::size_t> lower_hull(std::span<const double> q, std::span<const double> s);

}  // namespace fwlab
