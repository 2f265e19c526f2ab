#include "fwlab/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <Eigen/Eigenvalues>

#include "fwlab/action.hpp"
#include "fwlab/rng.hpp"

namespace fwlab {

namespace {

struct RadialStep {
  double value, d1, d2;  // chi, chi', chi'' in r
};

// Quintic smoothstep, C^2 at both ends.
RadialStep radial_step(double r, double inner, double outer) {
  if (r <= inner) return {0.0, 0.0, 0.0};
  if (r >= outer) return {1.0, 0.0, 0.0};
  const double w = outer - inner;
  const double u = (r - inner) / w;
  return {u * u * u * (10.0 - 15.0 * u + 6.0 * u * u), 30.0 * u * u * (1.0 - u) * (1.0 - u) / w,
          60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (w * w)};
}

bool has_origin_minimum(const DiffusionModel& model) {
  const int n = model.dim();
  const Vec zero = Vec::Zero(n);
  const auto& v = model.potential();
  if (v.gradient(zero).norm() > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Mat> eig(v.hessian(zero), Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) return false;
  const double v0 = v.value(zero);
  for (double r : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    for (const Vec& d : sphere_directions(n, 16)) {
      if (!(v.value(r * d) > v0)) return false;
    }
  }
  return true;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shared Euler-Maruyama loop. `drift(t, x)` and `sigma(t, x)` act on the
// recorded segment; burn-in steps use the untilted model dynamics.
template <class Drift, class Sigma>
DiscretePath integrate(const DiffusionModel& model, const SimConfig& cfg, const Vec& x0, std::uint64_t stream,
                       Drift&& drift, Sigma&& sigma) {
  validate(cfg);
  if (x0.size() != model.dim() || !all_finite(x0)) {
    throw std::invalid_argument("initial condition must be finite and match the model dimension");
  }
  const double dt = cfg.grid.dt();
  const double amp = std::sqrt(2.0 * cfg.eps * dt);
  NormalStream noise(cfg.seed, stream);
  Vec xi(model.dim());
  Vec x = x0;
  long step = 0;

  auto advance = [&](const Vec& b, const Mat& s) {
    if (cfg.zero_noise) xi.setZero();
    else noise.fill(xi);
    x += b * dt + amp * (s * xi);
    ++step;
    const double r = x.norm();
    if (!(r <= cfg.r_max)) throw ExplosionError(step, r);
  };

  for (int k = 0; k < cfg.burn_in_steps; ++k) advance(model.drift_at(x), model.noise_factor_at(x));

  const int n = cfg.grid.steps();
  std::vector<Vec> nodes;
  nodes.reserve(static_cast<std::size_t>(n) + 1);
  nodes.push_back(x);
  for (int k = 0; k < n; ++k) {
    const double t = cfg.grid.time(k);
    advance(drift(t, x), sigma(t, x));
    nodes.push_back(x);
  }
  return DiscretePath(cfg.grid, std::move(nodes));
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (!(cfg.eps > 0.0) || !std::isfinite(cfg.eps)) throw std::invalid_argument("noise strength eps must be > 0");
  if (!(cfg.r_max > 0.0)) throw std::invalid_argument("explosion radius must be > 0");
  if (cfg.batch < 1) throw std::invalid_argument("batch size must be >= 1");
  if (cfg.burn_in_steps < 0) throw std::invalid_argument("burn-in steps must be >= 0");
}

ScalarPotential default_confining_potential(const DiffusionModel& model, double inner, double outer,
                                            double stiffness) {
  if (has_origin_minimum(model)) return model.potential();
  if (!(0.0 < inner && inner < outer) || !(stiffness > 0.0)) {
    throw std::invalid_argument("confining blend needs 0 < inner < outer and stiffness > 0");
  }
  const ScalarPotential v = model.potential();
  ScalarPotential u;
  u.value = [=](const Vec& x) {
    const auto chi = radial_step(x.norm(), inner, outer);
    return (1.0 - chi.value) * 0.5 * stiffness * x.squaredNorm() + chi.value * v.value(x);
  };
  u.gradient = [=](const Vec& x) -> Vec {
    const double r = x.norm();
    const auto chi = radial_step(r, inner, outer);
    Vec g = (1.0 - chi.value) * stiffness * x + chi.value * v.gradient(x);
    if (chi.d1 != 0.0) g += chi.d1 * (v.value(x) - 0.5 * stiffness * x.squaredNorm()) * x / r;
    return g;
  };
  u.hessian = [=](const Vec& x) -> Mat {
    const int n = static_cast<int>(x.size());
    const double r = x.norm();
    const auto chi = radial_step(r, inner, outer);
    const Mat id = Mat::Identity(n, n);
    Mat h = (1.0 - chi.value) * stiffness * id + chi.value * v.hessian(x);
    if (chi.d1 != 0.0 || chi.d2 != 0.0) {
      const Vec e = x / r;
      const Vec dg = v.gradient(x) - stiffness * x;
      const double dv = v.value(x) - 0.5 * stiffness * x.squaredNorm();
      const Vec grad_chi = chi.d1 * e;
      h += grad_chi * dg.transpose() + dg * grad_chi.transpose();
      h += dv * (chi.d2 * e * e.transpose() + (chi.d1 / r) * (id - e * e.transpose()));
    }
    return h;
  };
  return u;
}

ConfiningCheck check_confining(const DiffusionModel& model, const ScalarPotential& u, double radius) {
  ConfiningCheck out;
  const int n = model.dim();
  const auto dirs = sphere_directions(n, 24);
  out.matches_outside = true;
  for (double f : {1.01, 1.5, 2.0, 3.0}) {
    for (const Vec& d : dirs) {
      const Vec x = f * radius * d;
      const double vv = model.potential().value(x);
      if (std::abs(u.value(x) - vv) > 1e-12 * (1.0 + std::abs(vv))) out.matches_outside = false;
    }
  }
  const Vec zero = Vec::Zero(n);
  Eigen::SelfAdjointEigenSolver<Mat> eig(u.hessian(zero), Eigen::EigenvaluesOnly);
  out.hessian_min_eigenvalue = eig.eigenvalues().minCoeff();
  bool unique = u.gradient(zero).norm() <= 1e-12 && out.hessian_min_eigenvalue > 0.0;
  const double u0 = u.value(zero);
  for (int i = 1; i <= 60 && unique; ++i) {
    const double r = 3.0 * radius * i / 60.0;
    for (const Vec& d : dirs) {
      if (!(u.value(r * d) > u0)) {
        unique = false;
        break;
      }
    }
  }
  out.unique_minimum_at_origin = unique;
  return out;
}

namespace {

PeriodicPath centred_velocity(const PeriodicPath& y) {
  const long n = y.steps();
  const double inv = 1.0 / (2.0 * y.dt());
  std::vector<Vec> v;
  v.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) v.push_back((y.node(k + 1) - y.node(k - 1)) * inv);
  return PeriodicPath(y.period(), std::move(v));
}

}  // namespace

TiltedDrift::TiltedDrift(const DiffusionModel& model, PeriodicPath reference, ScalarPotential confining)
    : model_(model),
      reference_(std::move(reference)),
      velocity_(centred_velocity(reference_)),
      confining_(std::move(confining)) {
  if (reference_.dim() != model_.dim()) throw std::invalid_argument("reference loop has wrong dimension");
}

TiltedDrift::TiltedDrift(const DiffusionModel& model, PeriodicPath reference)
    : TiltedDrift(model, std::move(reference), default_confining_potential(model)) {}

Vec TiltedDrift::drift_at(double t, const Vec& x, double eps) const {
  const Vec z = x - reference_.at(t);
  Vec b = -(model_.diffusion_at(z) * confining_.gradient(z)) + velocity_.at(t);
  if (!model_.diffusion().constant) b += eps * model_.diffusion().divergence(z);
  return b;
}

Mat TiltedDrift::noise_factor_at(double t, const Vec& x) const {
  return model_.noise_factor_at(x - reference_.at(t));
}

Vec CirculationTilt::drift_at(double, const Vec& x, double) const {
  return -rho_ * (model_.diffusion_at(x) * model_.potential().gradient(x)) + kappa_ * model_.circulation().value(x);
}

Mat CirculationTilt::noise_factor_at(double, const Vec& x) const { return model_.noise_factor_at(x); }

DiscretePath euler_maruyama(const DiffusionModel& model, const SimConfig& cfg, const Vec& x0, std::uint64_t stream) {
  return integrate(
      model, cfg, x0, stream, [&](double, const Vec& x) { return model.drift_at(x); },
      [&](double, const Vec& x) { return model.noise_factor_at(x); });
}

DiscretePath simulate_tilted(const DiffusionModel& model, const Tilt& tilt, const SimConfig& cfg,
                             const Vec& x0, std::uint64_t stream) {
  if (tilt.dim() != model.dim()) throw std::invalid_argument("tilt built for a different model");
  const double eps = cfg.eps;
  return integrate(
      model, cfg, x0, stream, [&](double t, const Vec& x) { return tilt.drift_at(t, x, eps); },
      [&](double t, const Vec& x) { return tilt.noise_factor_at(t, x); });
}

double girsanov_log_weight(const DiffusionModel& model, const Tilt& tilt, double eps,
                           const DiscretePath& path) {
  if (path.dim() != model.dim() || tilt.dim() != model.dim()) {
    throw std::invalid_argument("path, tilt and model dimensions do not match");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  // with a(x) non-constant the tilted noise a(x - Y_t) makes the laws singular
  if (!model.diffusion().constant) throw std::invalid_argument("Girsanov weights need a constant diffusion matrix");
  const double dt = path.grid().dt();
  double martingale = 0.0, bracket = 0.0;
  for (int k = 0; k < path.steps(); ++k) {
    const Vec& x = path.node(k);
    const Vec b = model.drift_at(x);
    const Vec diff = tilt.drift_at(path.grid().time(k), x, eps) - b;
    const Vec a_inv_diff = model.diffusion_inverse_at(x) * diff;
    martingale += a_inv_diff.dot(path.node(k + 1) - x - b * dt);
    bracket += a_inv_diff.dot(diff) * dt;
  }
  martingale /= 2.0 * eps;
  bracket /= 2.0 * eps;
  return -martingale + 0.5 * bracket;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

BatchResult batch_simulate(const DiffusionModel& model, const SimConfig& cfg, const Vec& x0,
                           const BatchOptions& options) {
  validate(cfg);
  const auto m = static_cast<std::size_t>(cfg.batch);
  BatchResult result;
  result.summaries.resize(m);
  if (options.keep_paths) result.paths.resize(m);

  parallel_for(m, options.threads, [&](std::size_t i) {
    PathSummary& s = result.summaries[i];
    s.index = i;
    try {
      DiscretePath path = options.tilt ? simulate_tilted(model, *options.tilt, cfg, x0, i)
                                       : euler_maruyama(model, cfg, x0, i);
      s.endpoint = path.back();
      s.work = gc_observable(model, path, cfg.eps).stratonovich;
      if (options.tilt) s.log_weight = girsanov_log_weight(model, *options.tilt, cfg.eps, path);
      if (options.functional) s.functional = options.functional(path);
      if (options.keep_paths) result.paths[i] = std::move(path);
    } catch (const ExplosionError& e) {
      s.exploded = true;
      s.explosion_step = e.step();
      s.endpoint = Vec::Constant(model.dim(), std::numeric_limits<double>::quiet_NaN());
    }
  });
  result.exploded = std::count_if(result.summaries.begin(), result.summaries.end(),
                                  [](const PathSummary& s) { return s.exploded; });
  return result;
}

void write_summaries_jsonl(std::ostream& out, std::span<const PathSummary> summaries) {
  for (const auto& s : summaries) {
    out << "{\"index\":" << s.index << ",\"endpoint\":[";
    for (Eigen::Index i = 0; i < s.endpoint.size(); ++i) {
      if (i) out << ',';
      out << (std::isfinite(s.endpoint[i]) ? fmt(s.endpoint[i]) : "null");
    }
    out << "],\"W_value\":" << (s.exploded ? "null" : fmt(s.work))
        << ",\"exploded\":" << (s.exploded ? "true" : "false") << "}\n";
  }
}

}  // namespace fwlab
