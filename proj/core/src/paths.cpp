#include "fwlab/paths.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fwlab/rng.hpp"

namespace fwlab {

namespace {

constexpr double kMollifierNorm = 35.0 / 16.0;

void check_nodes(const std::vector<Vec>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("path has no nodes");
  const auto n = nodes.front().size();
  if (n < 1 || n > kMaxDim) throw std::invalid_argument("path dimension out of range");
  for (const auto& x : nodes) {
    if (x.size() != n) throw std::invalid_argument("path nodes have inconsistent dimensions");
    if (!all_finite(x)) throw std::invalid_argument("path node is not finite");
  }
}

Vec lerp(const Vec& a, const Vec& b, double w) { return (1.0 - w) * a + w * b; }

// Discrete kernel weights w_j = dt * iota(j dt), j = 0..J, normalized to sum
// 1; derivative weights are shifted to sum exactly 0.
void kernel_weights(double dt, double width, std::vector<double>& w, std::vector<double>& dw) {
  const int count = static_cast<int>(std::ceil(width / dt));
  w.assign(static_cast<std::size_t>(count) + 1, 0.0);
  dw.assign(w.size(), 0.0);
  double sum = 0.0, dsum = 0.0;
  int support = 0;
  for (int j = 1; j <= count; ++j) {
    const double s = j * dt;
    if (s >= width) break;
    w[j] = dt * mollifier(s, width);
    dw[j] = dt * mollifier_derivative(s, width);
    sum += w[j];
    dsum += dw[j];
    ++support;
  }
  for (int j = 1; j <= support; ++j) {
    w[j] /= sum;
    dw[j] = dw[j] / sum - dsum / sum / support;
  }
}

void check_width(double width, double dt, double horizon) {
  if (!(width > 0.0) || !(width < horizon / 4.0)) {
    throw std::invalid_argument("mollifier width must satisfy 0 < delta < T/4");
  }
  if (width < 2.0 * dt) throw std::invalid_argument("mollifier width must cover at least two grid steps");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("time horizon must be positive");
  if (steps < 2) throw std::invalid_argument("time grid needs at least two steps");
}

DiscretePath::DiscretePath(TimeGrid grid, std::vector<Vec> nodes) : grid_(grid), nodes_(std::move(nodes)) {
  check_nodes(nodes_);
  if (static_cast<int>(nodes_.size()) != grid_.steps() + 1) {
    throw std::invalid_argument("node count must equal steps + 1");
  }
}

Vec DiscretePath::at(double t) const {
  const double dt = grid_.dt();
  const double u = std::clamp(t, 0.0, grid_.horizon()) / dt;
  const int k = std::min(static_cast<int>(std::floor(u)), grid_.steps() - 1);
  return lerp(nodes_[k], nodes_[k + 1], u - k);
}

PeriodicPath::PeriodicPath(double period, std::vector<Vec> free_nodes)
    : period_(period), nodes_(std::move(free_nodes)) {
  if (!(period > 0.0) || !std::isfinite(period)) throw std::invalid_argument("period must be positive");
  check_nodes(nodes_);
  if (nodes_.size() < 2) throw std::invalid_argument("periodic path needs at least two nodes");
}

PeriodicPath PeriodicPath::from_closed(const DiscretePath& path) {
  if (path.front() != path.back()) throw std::invalid_argument("path is not closed: X_0 != X_N");
  std::vector<Vec> nodes(path.nodes().begin(), path.nodes().end() - 1);
  return PeriodicPath(path.grid().horizon(), std::move(nodes));
}

const Vec& PeriodicPath::node(long k) const {
  const long n = steps();
  long r = k % n;
  if (r < 0) r += n;
  return nodes_[static_cast<std::size_t>(r)];
}

Vec PeriodicPath::at(double t) const {
  const double local = t - std::floor(t / period_) * period_;
  const double u = local / dt();
  const long k = static_cast<long>(std::floor(u));
  return lerp(node(k), node(k + 1), u - static_cast<double>(k));
}

DiscretePath PeriodicPath::closed() const {
  std::vector<Vec> nodes = nodes_;
  nodes.push_back(nodes_.front());
  return DiscretePath(TimeGrid(period_, steps()), std::move(nodes));
}

Periodized periodize(const DiscretePath& path, double t) {
  const double horizon = path.grid().horizon();
  const double local = t - std::floor(t / horizon) * horizon;
  return {path.at(local), path.front() - path.back()};
}

PeriodicPath translate(const PeriodicPath& path, double shift) {
  const long n = path.steps();
  const long m = std::lround(shift / path.dt());
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) nodes.push_back(path.node(k - m));
  return PeriodicPath(path.period(), std::move(nodes));
}

PeriodicPath time_reverse(const PeriodicPath& path) {
  const long n = path.steps();
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) nodes.push_back(path.node(-k));
  return PeriodicPath(path.period(), std::move(nodes));
}

double mollifier(double s, double width) {
  if (s <= 0.0 || s >= width) return 0.0;
  const double u = s / width;
  const double b = 4.0 * u * (1.0 - u);
  return kMollifierNorm / width * b * b * b;
}

double mollifier_derivative(double s, double width) {
  if (s <= 0.0 || s >= width) return 0.0;
  const double u = s / width;
  const double b = 4.0 * u * (1.0 - u);
  return kMollifierNorm / (width * width) * 3.0 * b * b * 4.0 * (1.0 - 2.0 * u);
}

Mollified mollify(const DiscretePath& path, double width) {
  const TimeGrid& grid = path.grid();
  check_width(width, grid.dt(), grid.horizon());
  std::vector<double> w, dw;
  kernel_weights(grid.dt(), width, w, dw);
  const int n = grid.steps();
  const int dim = path.dim();
  std::vector<Vec> smooth, deriv;
  smooth.reserve(static_cast<std::size_t>(n) + 1);
  deriv.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    Vec s = Vec::Zero(dim), d = Vec::Zero(dim);
    for (std::size_t j = 1; j < w.size(); ++j) {
      const Vec& x = path.node(std::max(0, k - static_cast<int>(j)));
      s += w[j] * x;
      d += dw[j] * x;
    }
    smooth.push_back(s);
    deriv.push_back(d);
  }
  return {DiscretePath(grid, std::move(smooth)), DiscretePath(grid, std::move(deriv))};
}

MollifiedLoop mollify(const PeriodicPath& path, double width) {
  check_width(width, path.dt(), path.period());
  std::vector<double> w, dw;
  kernel_weights(path.dt(), width, w, dw);
  const long n = path.steps();
  const int dim = path.dim();
  std::vector<Vec> smooth, deriv;
  for (long k = 0; k < n; ++k) {
    Vec s = Vec::Zero(dim), d = Vec::Zero(dim);
    for (std::size_t j = 1; j < w.size(); ++j) {
      const Vec& x = path.node(k - static_cast<long>(j));
      s += w[j] * x;
      d += dw[j] * x;
    }
    smooth.push_back(s);
    deriv.push_back(d);
  }
  return {PeriodicPath(path.period(), std::move(smooth)), PeriodicPath(path.period(), std::move(deriv))};
}

double continuity_modulus(const DiscretePath& path, double delta, double t1, double t2) {
  if (!(delta > 0.0)) throw std::invalid_argument("continuity modulus needs delta > 0");
  const double dt = path.grid().dt();
  const int lo = std::max(0, static_cast<int>(std::ceil(t1 / dt - 1e-9)));
  const int hi = std::min(path.steps(), static_cast<int>(std::floor(t2 / dt + 1e-9)));
  if (!(t2 > t1) || lo >= hi) throw std::invalid_argument("empty window for continuity modulus");
  double best = 0.0;
  for (int i = lo; i <= hi; ++i) {
    for (int j = i + 1; j <= hi && (j - i) * dt < delta; ++j) {
      best = std::max(best, (path.node(j) - path.node(i)).norm());
    }
  }
  return best;
}

DiscretePath affine_bridge(const Vec& x, const Vec& y, int steps) {
  if (x.size() != y.size()) throw std::invalid_argument("bridge endpoints differ in dimension");
  TimeGrid grid(1.0, steps);
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<std::size_t>(steps) + 1);
  nodes.push_back(x);
  for (int k = 1; k < steps; ++k) {
    const double t = grid.time(k);
    nodes.push_back((1.0 - t) * x + t * y);
  }
  nodes.push_back(y);
  return DiscretePath(grid, std::move(nodes));
}

PeriodicPath circle_loop(double radius, double angular_velocity, int steps, const Vec& center) {
  if (center.size() < 2) throw std::invalid_argument("circle loop needs dimension >= 2");
  if (angular_velocity == 0.0) throw std::invalid_argument("circle loop needs nonzero angular velocity");
  const double period = 2.0 * std::numbers::pi / std::abs(angular_velocity);
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const double phase = 2.0 * std::numbers::pi * k / steps;
    Vec x = center;
    x[0] += radius * std::cos(phase);
    x[1] += radius * std::sin(angular_velocity > 0 ? phase : -phase);
    nodes.push_back(x);
  }
  return PeriodicPath(period, std::move(nodes));
}

PeriodicPath random_loop(int dim, int steps, double period, double amplitude, std::uint64_t seed,
                         const Vec& center) {
  if (center.size() != dim) throw std::invalid_argument("random loop center has wrong dimension");
  NormalStream noise(seed, 0);
  std::vector<Vec> nodes;
  for (int k = 0; k < steps; ++k) {
    Vec x(dim);
    noise.fill(x);
    nodes.push_back(x);
  }
  PeriodicPath raw(period, std::move(nodes));
  // two passes of a quarter-period kernel keep only a few low harmonics
  const double width = std::max(period / 5.0, 2.0 * raw.dt());
  PeriodicPath smooth = mollify(mollify(raw, width).smoothed, width).smoothed;
  Vec mean = Vec::Zero(dim);
  for (const auto& x : smooth.free_nodes()) mean += x;
  mean /= steps;
  double rms = 0.0;
  for (const auto& x : smooth.free_nodes()) rms += (x - mean).squaredNorm();
  rms = std::sqrt(rms / steps);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (const auto& x : smooth.free_nodes()) out.push_back(center + (rms > 0 ? amplitude / rms : 0.0) * (x - mean));
  return PeriodicPath(period, std::move(out));
}

void write_csv(std::ostream& out, const DiscretePath& path) {
  out << "t";
  for (int i = 1; i <= path.dim(); ++i) out << ",x" << i;
  out << '\n';
  for (int k = 0; k <= path.steps(); ++k) {
    out << format_double(path.grid().time(k));
    for (int i = 0; i < path.dim(); ++i) out << ',' << format_double(path.node(k)[i]);
    out << '\n';
  }
}

DiscretePath read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("t", 0) != 0) throw std::invalid_argument("missing CSV header");
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("CSV header has unsupported dimension");
  std::vector<double> times;
  std::vector<Vec> nodes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (static_cast<int>(values.size()) != dim + 1) throw std::invalid_argument("CSV row has wrong arity");
    times.push_back(values[0]);
    Vec x(dim);
    for (int i = 0; i < dim; ++i) x[i] = values[static_cast<std::size_t>(i) + 1];
    nodes.push_back(x);
  }
  if (nodes.size() < 3) throw std::invalid_argument("CSV path needs at least three rows");
  const int steps = static_cast<int>(nodes.size()) - 1;
  const double horizon = times.back() - times.front();
  const double dt = horizon / steps;
  for (int k = 0; k <= steps; ++k) {
    if (std::abs(times[k] - times.front() - k * dt) > 1e-9 * std::max(1.0, horizon)) {
      throw std::invalid_argument("CSV times are not on a uniform grid");
    }
  }
  return DiscretePath(TimeGrid(horizon, steps), std::move(nodes));
}

}  // namespace fwlab
