#include "fwlab/legendre.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fwlab {

std::vector<std::size_t> lower_hull(std::span<const double> q, std::span<const double> s) {
  std::vector<std::size_t> hull;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!std::isfinite(s[i])) continue;
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      // drop b when it is not strictly below the segment a-i
      const double cross = (q[b] - q[a]) * (s[i] - s[a]) - (s[b] - s[a]) * (q[i] - q[a]);
      if (cross <= 0.0) hull.pop_back();
      else break;
    }
    hull.push_back(i);
  }
  return hull;
}

LegendreDual legendre(std::span<const double> q, std::span<const double> s, std::span<const double> extra) {
  if (q.size() != s.size()) throw std::invalid_argument("legendre: size mismatch");
  if (!std::is_sorted(q.begin(), q.end())) throw std::invalid_argument("legendre: q must be sorted");
  LegendreDual out;
  const auto hull = lower_hull(q, s);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!std::isfinite(s[i]) || std::binary_search(hull.begin(), hull.end(), i)) continue;
    // off-hull samples that sit on a hull segment (collinear) are still convex
    auto it = std::lower_bound(hull.begin(), hull.end(), i);
    if (it == hull.begin() || it == hull.end()) {
      out.convex_input = false;
      continue;
    }
    const std::size_t a = *(it - 1), b = *it;
    const double w = (q[i] - q[a]) / (q[b] - q[a]);
    const double chord = (1.0 - w) * s[a] + w * s[b];
    if (s[i] > chord + 1e-12 * std::max(1.0, std::abs(chord))) out.convex_input = false;
  }
  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const std::size_t a = hull[k], b = hull[k + 1];
    out.lambdas.push_back((s[b] - s[a]) / (q[b] - q[a]));
  }
  out.lambdas.insert(out.lambdas.end(), extra.begin(), extra.end());
  std::sort(out.lambdas.begin(), out.lambdas.end());
  out.lambdas.erase(std::unique(out.lambdas.begin(), out.lambdas.end()), out.lambdas.end());
  for (double l : out.lambdas) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < q.size(); ++i)
      if (std::isfinite(s[i])) v = std::max(v, l * q[i] - s[i]);
    out.values.push_back(v);
  }
  return out;
}

std::vector<double> inverse_legendre(const LegendreDual& dual, std::span<const double> q) {
  std::vector<double> out;
  out.reserve(q.size());
  for (double x : q) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < dual.lambdas.size(); ++j)
      if (std::isfinite(dual.values[j])) v = std::max(v, dual.lambdas[j] * x - dual.values[j]);
    out.push_back(v);
  }
  return out;
}

}  // namespace fwlab
