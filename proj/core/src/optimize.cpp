#include "fwlab/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "fwlab/action.hpp"
#include "fwlab/lbfgs.hpp"
#include "fwlab/simulate.hpp"

namespace fwlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvPhi = 0.6180339887498949;

// Flat layout: node j occupies entries [j d, (j + 1) d).
Eigen::VectorXd flatten(const PeriodicPath& p) {
  const int d = p.dim();
  Eigen::VectorXd x(static_cast<Eigen::Index>(p.steps()) * d);
  for (int j = 0; j < p.steps(); ++j) x.segment(j * d, d) = p.free_nodes()[static_cast<std::size_t>(j)];
  return x;
}

PeriodicPath unflatten(const Eigen::VectorXd& x, int dim, double period) {
  const int n = static_cast<int>(x.size()) / dim;
  std::vector<Vec> nodes(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) nodes[static_cast<std::size_t>(j)] = x.segment(j * dim, dim);
  return PeriodicPath(period, std::move(nodes));
}

std::vector<Vec> split(const Eigen::VectorXd& g, int dim) {
  std::vector<Vec> out(static_cast<std::size_t>(g.size() / dim));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = g.segment(static_cast<Eigen::Index>(j) * dim, dim);
  return out;
}

struct LoopTerms {
  double rate = 0.0;  // discrete rate_I of the loop
  double work = 0.0;  // Stratonovich work per unit time
};

// Discrete rate and work of a loop given as a flat node vector, with
// analytic gradients. For segment j with r = dX/dt - b(m), u = a^{-1}(m) r:
//   d e_j / d X_{j+1} =  (2/dt) u - Db^T u + g/2
//   d e_j / d X_j     = -(2/dt) u - Db^T u + g/2,   g_l = -u.(d_l a) u,
// and rate = sum e_j / (4N). For the work, with f = a^{-1} c,
//   d W / d X_{j+1} = ( f + Df^T Delta / 2) / S
//   d W / d X_j     = (-f + Df^T Delta / 2) / S.
class LoopEvaluator {
 public:
  LoopEvaluator(const DiffusionModel& model, int nodes, double period)
      : model_(model), n_(nodes), d_(model.dim()), period_(period), dt_(period / nodes) {}

  double period() const { return period_; }

  LoopTerms operator()(const Eigen::VectorXd& x, Eigen::VectorXd* g_rate, Eigen::VectorXd* g_work,
                       bool want_rate = true, bool want_work = true) const {
    if (g_rate) g_rate->setZero(x.size());
    if (g_work) g_work->setZero(x.size());
    const bool constant = model_.diffusion().constant;
    double rate = 0.0, work = 0.0;
    for (int j = 0; j < n_; ++j) {
      const int j1 = (j + 1) % n_;
      const Vec x0 = x.segment(j * d_, d_);
      const Vec x1 = x.segment(j1 * d_, d_);
      const Vec delta = x1 - x0;
      const Vec m = 0.5 * (x0 + x1);
      if (want_rate) {
        const Vec r = delta / dt_ - model_.drift_at(m);
        const Vec u = model_.diffusion_inverse_at(m) * r;
        rate += r.dot(u);
        if (g_rate) {
          Vec common = -(model_.drift_jacobian_at(m).transpose() * u);
          if (!constant)
            for (int l = 0; l < d_; ++l) common(l) -= 0.5 * u.dot(model_.diffusion().partial(m, l) * u);
          const Vec lead = (2.0 / dt_) * u;
          g_rate->segment(j1 * d_, d_) += lead + common;
          g_rate->segment(j * d_, d_) += common - lead;
        }
      }
      if (want_work) {
        const Vec f = model_.work_field_at(m);
        work += f.dot(delta);
        if (g_work) {
          const Vec half = 0.5 * (model_.work_field_jacobian_at(m).transpose() * delta);
          g_work->segment(j1 * d_, d_) += f + half;
          g_work->segment(j * d_, d_) += half - f;
        }
      }
    }
    const double rate_scale = 1.0 / (4.0 * n_);
    if (g_rate) *g_rate *= rate_scale;
    if (g_work) *g_work /= period_;
    return {rate * rate_scale, work / period_};
  }

 private:
  const DiffusionModel& model_;
  int n_;
  int d_;
  double period_;
  double dt_;
};

// Approximate inverse Hessian of the rate: for every coordinate, the inverse
// of the circulant operator k (2 x_j - x_{j-1} - x_{j+1}) + sigma x_j. The
// kinetic part of the action dominates the spectrum, so this removes most of
// the O(N^2) conditioning of the node problem.
class LoopPreconditioner {
 public:
  LoopPreconditioner(int nodes, int dim, double k, double sigma)
      : n_(nodes), d_(dim), off_(-k), gamma_(-(2.0 * k + sigma)) {
    const double diag = 2.0 * k + sigma;
    inv_den_.resize(static_cast<std::size_t>(n_));
    cp_.resize(static_cast<std::size_t>(n_));
    for (int j = 0; j < n_; ++j) {
      double dj = diag;
      if (j == 0) dj -= gamma_;
      if (j == n_ - 1) dj -= off_ * off_ / gamma_;
      const double den = j == 0 ? dj : dj - off_ * cp_[static_cast<std::size_t>(j - 1)];
      inv_den_[static_cast<std::size_t>(j)] = 1.0 / den;
      cp_[static_cast<std::size_t>(j)] = off_ / den;
    }
    std::vector<double> u(static_cast<std::size_t>(n_), 0.0);
    u.front() = gamma_;
    u.back() = off_;
    z_ = u;
    thomas(z_.data(), 1);
    factor_den_ = 1.0 + z_.front() + off_ * z_.back() / gamma_;
  }

  void operator()(Eigen::VectorXd& v) const {
    for (int c = 0; c < d_; ++c) {
      double* x = v.data() + c;
      thomas(x, d_);
      const double f = (x[0] + off_ * x[static_cast<std::ptrdiff_t>(n_ - 1) * d_] / gamma_) / factor_den_;
      for (int j = 0; j < n_; ++j) x[static_cast<std::ptrdiff_t>(j) * d_] -= f * z_[static_cast<std::size_t>(j)];
    }
  }

 private:
  // tridiagonal solve in place on a strided vector (the cyclic corners are
  // handled by Sherman-Morrison in operator())
  void thomas(double* x, int stride) const {
    x[0] *= inv_den_[0];
    for (int j = 1; j < n_; ++j) {
      double& xj = x[static_cast<std::ptrdiff_t>(j) * stride];
      xj = (xj - off_ * x[static_cast<std::ptrdiff_t>(j - 1) * stride]) * inv_den_[static_cast<std::size_t>(j)];
    }
    for (int j = n_ - 2; j >= 0; --j)
      x[static_cast<std::ptrdiff_t>(j) * stride] -= cp_[static_cast<std::size_t>(j)] * x[static_cast<std::ptrdiff_t>(j + 1) * stride];
  }

  int n_, d_;
  double off_, gamma_;
  double factor_den_ = 1.0;
  std::vector<double> inv_den_, cp_, z_;
};

std::function<void(Eigen::VectorXd&)> loop_preconditioner(const DiffusionModel& model, int nodes, double period,
                                                          const Vec& center) {
  const int d = model.dim();
  const double dt = period / nodes;
  const Mat a_inv = model.diffusion_inverse_at(center);
  const double kappa = a_inv.trace() / d;
  const double drift = std::max(model.drift_jacobian_at(center).squaredNorm() / d, 1e-2);
  const double scale = 2.0 / (4.0 * nodes);
  auto p = std::make_shared<LoopPreconditioner>(nodes, d, scale * kappa / (dt * dt), scale * kappa * drift);
  return [p](Eigen::VectorXd& v) { (*p)(v); };
}

LbfgsOptions inner_options(const OptimizerConfig& cfg) {
  LbfgsOptions o;
  o.max_iterations = cfg.max_iterations;
  o.memory = cfg.lbfgs_memory;
  o.gradient_tolerance = cfg.gradient_tolerance / cfg.nodes;
  return o;
}

Vec center_of(const DiffusionModel& model, const OptimizerConfig& cfg) {
  if (cfg.init_center.size() == 0) return Vec::Zero(model.dim());
  if (cfg.init_center.size() != model.dim()) throw std::invalid_argument("optimizer: init_center has wrong dimension");
  return cfg.init_center;
}

bool better(double v1, double s1, double v2, double s2) {
  if (std::isnan(v2)) return !std::isnan(v1);
  if (std::isnan(v1)) return false;
  if (v1 == v2) return s1 < s2;
  if (std::isinf(v1) || std::isinf(v2)) return v1 < v2;
  const double tie = 1e-12 * std::max(1.0, std::abs(v2));
  if (v1 < v2 - tie) return true;
  if (v1 > v2 + tie) return false;
  return s1 < s2;
}

// Golden-section search of f on [a, b] with both endpoints also evaluated.
// Returns the best evaluated period; equal values favour the lower period.
template <class F>
double golden_section(F&& f, double a, double b, double tolerance) {
  double best_s = a, best_v = f(a);
  auto consider = [&](double s, double v) {
    if (better(v, s, best_v, best_s)) {
      best_v = v;
      best_s = s;
    }
  };
  if (b <= a) return best_s;
  consider(b, f(b));
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  consider(c, fc);
  double fd = f(d);
  consider(d, fd);
  while (b - a > tolerance) {
    if (!better(fd, d, fc, c)) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
      consider(d, fd);
    }
  }
  return best_s;
}

struct AlState {
  Eigen::VectorXd x;
  double lambda = 0.0;
  double mu = 0.0;
};

struct AlOutcome {
  AlState state;
  double rate = kInf;
  double work = 0.0;
  bool converged = false;
  bool feasible = false;
};

// Augmented Lagrangian L = rate - lambda (W - q) + mu/2 (W - q)^2 at a fixed period.
AlOutcome solve_constrained(const DiffusionModel& model, double q, double period, AlState state,
                            const OptimizerConfig& cfg) {
  const LoopEvaluator eval(model, cfg.nodes, period);
  const double tol = cfg.constraint_tolerance * std::max(1.0, std::abs(q));
  LbfgsOptions opts = inner_options(cfg);
  opts.precondition = loop_preconditioner(model, cfg.nodes, period, center_of(model, cfg));
  Eigen::VectorXd g_rate, g_work;
  double prev = kInf;
  AlOutcome out;
  for (int outer = 0; outer < cfg.penalty.max_outer; ++outer) {
    const double lambda = state.lambda, mu = state.mu;
    auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      const LoopTerms t = eval(x, &g_rate, &g_work);
      const double res = t.work - q;
      g = g_rate + (mu * res - lambda) * g_work;
      return t.rate - lambda * res + 0.5 * mu * res * res;
    };
    const LbfgsResult r = minimize_lbfgs(objective, state.x, opts);
    state.x = r.x;
    const LoopTerms t = eval(state.x, nullptr, nullptr);
    const double res = t.work - q;
    out.rate = t.rate;
    out.work = t.work;
    if (std::abs(res) <= tol) {
      out.feasible = true;
      out.converged = r.converged;
      out.state = state;
      return out;
    }
    state.lambda -= state.mu * res;
    if (std::abs(res) > 0.25 * prev) state.mu *= cfg.penalty.growth;
    prev = std::abs(res);
    if (state.mu > cfg.penalty.max) break;
  }
  out.state = state;
  out.feasible = false;
  out.rate = kInf;
  return out;
}

PeriodicPath initial_loop(const DiffusionModel& model, double q, double period, const OptimizerConfig& cfg) {
  const Vec center = center_of(model, cfg);
  InitMode mode = cfg.init;
  if (mode == InitMode::kAuto) mode = model.is_rotational() ? InitMode::kCircle : InitMode::kRandomLoop;
  switch (mode) {
    case InitMode::kConstant:
      return PeriodicPath(period, std::vector<Vec>(static_cast<std::size_t>(cfg.nodes), center));
    case InitMode::kCircle: {
      if (model.dim() < 2) break;
      const double gamma = model.params().gamma > 0.0 ? model.params().gamma : 1.0;
      const double omega = (q < 0.0 ? -2.0 : 2.0) * std::numbers::pi / period;
      const double radius = q == 0.0 ? 0.0 : std::sqrt(std::abs(q) / gamma);
      PeriodicPath c = circle_loop(radius, omega, cfg.nodes, Vec::Zero(model.dim()));
      // circle_loop is planar in the first two coordinates
      std::vector<Vec> nodes = c.free_nodes();
      for (auto& v : nodes) v += center;
      return PeriodicPath(period, std::move(nodes));
    }
    default:
      break;
  }
  return random_loop(model.dim(), cfg.nodes, period, cfg.init_amplitude, cfg.seed, center);
}

// Orient the loop so W has the sign of q, then scale it about its mean so W
// is q for work fields linear in x.
PeriodicPath fit_to_work(const DiffusionModel& model, double q, PeriodicPath loop) {
  if (q == 0.0) return loop;
  double w = loop_work(model, loop);
  if (w * q < 0.0) {
    loop = time_reverse(loop);
    w = -w;
  }
  if (std::abs(w) < 1e-12) return loop;
  Vec mean = Vec::Zero(loop.dim());
  for (const auto& v : loop.free_nodes()) mean += v;
  mean /= loop.steps();
  const double k = std::sqrt(std::abs(q / w));
  std::vector<Vec> nodes = loop.free_nodes();
  for (auto& v : nodes) v = mean + k * (v - mean);
  return PeriodicPath(loop.period(), std::move(nodes));
}

RatePoint rate_point_from(const DiffusionModel& model, double q, const OptimizerConfig& cfg,
                          const PeriodicPath* start, double multiplier) {
  validate(cfg);
  if (!std::isfinite(q)) throw std::invalid_argument("rate_point: q must be finite");
  const double lo = cfg.period_min, hi = cfg.period_max;

  struct Eval {
    double period = 0.0;
    AlOutcome out;
  };
  std::vector<Eval> evals;
  const Eval* best = nullptr;

  auto f = [&](double period) {
    AlState st;
    if (best != nullptr) {
      st = best->out.state;
    } else {
      PeriodicPath init = start != nullptr ? PeriodicPath(period, start->free_nodes())
                                           : fit_to_work(model, q, initial_loop(model, q, period, cfg));
      st.x = flatten(init);
      st.lambda = multiplier;
    }
    st.mu = cfg.penalty.initial;
    evals.push_back({period, solve_constrained(model, q, period, std::move(st), cfg)});
    // keep `best` valid across reallocation
    double bs = 0.0, bv = kInf;
    std::size_t bi = evals.size();
    for (std::size_t i = 0; i < evals.size(); ++i) {
      const double v = evals[i].out.feasible ? evals[i].out.rate : kInf;
      if (bi == evals.size() || better(v, evals[i].period, bv, bs)) {
        bi = i;
        bv = v;
        bs = evals[i].period;
      }
    }
    best = &evals[bi];
    return evals.back().out.feasible ? evals.back().out.rate : kInf;
  };
  evals.reserve(64);

  const double chosen = golden_section(f, lo, hi, cfg.period_tolerance * cfg.period);
  const Eval* pick = nullptr;
  for (const auto& e : evals)
    if (e.period == chosen) pick = &e;

  RatePoint p;
  p.q = q;
  p.evaluations = static_cast<int>(evals.size());
  p.feasible = pick->out.feasible;
  p.converged = pick->out.feasible && pick->out.converged;
  p.s = pick->out.feasible ? pick->out.rate : kInf;
  p.multiplier = pick->out.state.lambda;
  p.residual = pick->out.work - q;
  p.minimizer.emplace(unflatten(pick->out.state.x, model.dim(), chosen));
  return p;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = -16; i <= 16; ++i) g.push_back(i / 8.0);
  return g;
}

}  // namespace

std::string_view init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::kAuto: return "auto";
    case InitMode::kCircle: return "circle";
    case InitMode::kRandomLoop: return "random-loop";
    case InitMode::kConstant: return "constant";
  }
  return "auto";
}

InitMode parse_init_mode(std::string_view name) {
  for (InitMode m : {InitMode::kAuto, InitMode::kCircle, InitMode::kRandomLoop, InitMode::kConstant})
    if (init_mode_name(m) == name) return m;
  throw std::invalid_argument("unknown init mode '" + std::string(name) + "'");
}

void validate(const OptimizerConfig& cfg) {
  if (cfg.nodes < 16) throw std::invalid_argument("optimizer: nodes must be >= 16");
  if (!(cfg.period_min > 0.0 && cfg.period_min <= cfg.period && cfg.period <= cfg.period_max))
    throw std::invalid_argument("optimizer: need 0 < period_min <= period <= period_max");
  if (!(cfg.gradient_tolerance > 0.0 && cfg.constraint_tolerance > 0.0 && cfg.period_tolerance > 0.0 &&
        cfg.dual_tolerance > 0.0))
    throw std::invalid_argument("optimizer: tolerances must be positive");
  if (cfg.max_iterations < 1 || cfg.lbfgs_memory < 0 || cfg.period_scan < 1)
    throw std::invalid_argument("optimizer: iteration counts must be positive");
  if (!(cfg.penalty.initial > 0.0 && cfg.penalty.growth > 1.0 && cfg.penalty.max >= cfg.penalty.initial &&
        cfg.penalty.max_outer >= 1))
    throw std::invalid_argument("optimizer: bad penalty schedule");
  if (!(cfg.dual_cap > 0.0) || !(cfg.init_amplitude >= 0.0))
    throw std::invalid_argument("optimizer: dual_cap and init_amplitude must be positive");
}

std::vector<Vec> action_gradient(const DiffusionModel& model, const PeriodicPath& path) {
  const LoopEvaluator eval(model, path.steps(), path.period());
  Eigen::VectorXd g;
  eval(flatten(path), &g, nullptr, true, false);
  return split(g * path.period(), path.dim());
}

double loop_work(const DiffusionModel& model, const PeriodicPath& path, std::vector<Vec>* gradient) {
  const LoopEvaluator eval(model, path.steps(), path.period());
  Eigen::VectorXd g;
  const LoopTerms t = eval(flatten(path), nullptr, gradient ? &g : nullptr, false, true);
  if (gradient) *gradient = split(g, path.dim());
  return t.work;
}

MinimizeResult minimize_rate(const DiffusionModel& model, const OptimizerConfig& cfg) {
  validate(cfg);
  LbfgsOptions opts = inner_options(cfg);
  opts.record_trace = true;

  struct Eval {
    double period;
    LbfgsResult result;
    double start_rate;
  };
  std::vector<Eval> evals;
  evals.reserve(64);
  const PeriodicPath init = initial_loop(model, 0.0, cfg.period, cfg);
  const Eigen::VectorXd x0 = flatten(init);

  const Vec center = center_of(model, cfg);
  auto f = [&](double period) {
    const LoopEvaluator eval(model, cfg.nodes, period);
    opts.precondition = loop_preconditioner(model, cfg.nodes, period, center);
    auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      return eval(x, &g, nullptr, true, false).rate;
    };
    Eigen::VectorXd g;
    const double start = eval(x0, nullptr, nullptr, true, false).rate;
    evals.push_back({period, minimize_lbfgs(objective, x0, opts), start});
    return evals.back().result.value;
  };
  const double chosen = golden_section(f, cfg.period_min, cfg.period_max, cfg.period_tolerance * cfg.period);

  int iterations = 0;
  const Eval* pick = nullptr;
  for (const auto& e : evals) {
    iterations += e.result.iterations;
    if (e.period == chosen) pick = &e;
  }
  MinimizeResult out{HolonomicMeasure(unflatten(pick->result.x, model.dim(), chosen)), pick->result.value,
                     pick->result.converged, iterations, {}};
  out.trace.push_back(pick->start_rate);
  out.trace.insert(out.trace.end(), pick->result.trace.begin(), pick->result.trace.end());
  return out;
}

RatePoint rate_point(const DiffusionModel& model, double q, const OptimizerConfig& cfg) {
  return rate_point_from(model, q, cfg, nullptr, 0.0);
}

RatePoint rate_point(const DiffusionModel& model, double q, const OptimizerConfig& cfg, const PeriodicPath& start,
                     double multiplier) {
  if (start.steps() != cfg.nodes || start.dim() != model.dim())
    throw std::invalid_argument("rate_point: start loop does not match nodes/dimension");
  return rate_point_from(model, q, cfg, &start, multiplier);
}

std::vector<double> RateCurve::q() const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.q);
  return out;
}

std::vector<double> RateCurve::s() const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.s);
  return out;
}

std::vector<std::size_t> convexity_violations(std::span<const double> q, std::span<const double> s,
                                              double tolerance) {
  if (q.size() != s.size()) throw std::invalid_argument("convexity_violations: size mismatch");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < q.size(); ++i) {
    if (!(std::isfinite(s[i - 1]) && std::isfinite(s[i]) && std::isfinite(s[i + 1]))) continue;
    const double w = (q[i] - q[i - 1]) / (q[i + 1] - q[i - 1]);
    const double chord = (1.0 - w) * s[i - 1] + w * s[i + 1];
    if (s[i] > chord + tolerance) out.push_back(i);
  }
  return out;
}

RateCurve rate_curve(const DiffusionModel& model, std::span<const double> q_grid, const OptimizerConfig& cfg) {
  validate(cfg);
  if (!std::is_sorted(q_grid.begin(), q_grid.end())) throw std::invalid_argument("rate_curve: q grid must be sorted");
  RateCurve curve;
  curve.points.resize(q_grid.size());
  parallel_for(q_grid.size(), cfg.threads,
               [&](std::size_t i) { curve.points[i] = rate_point(model, q_grid[i], cfg); });

  auto ok = [](const RatePoint& p) { return p.converged && p.feasible; };
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    if (ok(curve.points[i])) continue;
    std::size_t nb = curve.points.size();
    double dist = kInf;
    for (std::size_t j = 0; j < curve.points.size(); ++j) {
      if (j == i || !ok(curve.points[j])) continue;
      const double dj = std::abs(q_grid[j] - q_grid[i]);
      if (dj < dist) {
        dist = dj;
        nb = j;
      }
    }
    if (nb == curve.points.size()) continue;
    RatePoint retry = rate_point(model, q_grid[i], cfg, curve.points[nb].minimizer->path(),
                                 curve.points[nb].multiplier);
    if (ok(retry) || (retry.feasible && !curve.points[i].feasible)) curve.points[i] = std::move(retry);
  }
  for (std::size_t i = 0; i < curve.points.size(); ++i)
    if (!ok(curve.points[i])) curve.failed.push_back(i);
  const auto q = curve.q();
  const auto s = curve.s();
  curve.convexity_violations = convexity_violations(q, s);
  return curve;
}

double ft_defect(std::span<const double> q, std::span<const double> s) {
  if (q.size() != s.size()) throw std::invalid_argument("ft_defect: size mismatch");
  double defect = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::size_t j = q.size();
    for (std::size_t k = 0; k < q.size(); ++k)
      if (std::abs(q[k] + q[i]) <= 1e-12 * std::max(1.0, std::abs(q[i]))) j = k;
    if (j == q.size()) throw std::invalid_argument("ft_defect: q grid is not symmetric about 0");
    const double d = std::abs(s[j] - s[i] - q[i]);
    if (std::isnan(d)) return kInf;
    defect = std::max(defect, d);
  }
  return defect;
}

double ft_defect(const RateCurve& curve) {
  const auto q = curve.q();
  const auto s = curve.s();
  return ft_defect(q, s);
}

DualScan dual_scan(const DiffusionModel& model, const OptimizerConfig& cfg) {
  validate(cfg);
  std::vector<double> grid = cfg.lambda_grid.empty() ? default_lambda_grid() : cfg.lambda_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const int np = cfg.period_scan;
  std::vector<double> periods(static_cast<std::size_t>(np));
  for (int i = 0; i < np; ++i)
    periods[static_cast<std::size_t>(i)] =
        np == 1 ? cfg.period
                : cfg.period_min * std::pow(cfg.period_max / cfg.period_min, static_cast<double>(i) / (np - 1));
  const Vec center = center_of(model, cfg);
  std::vector<Eigen::VectorXd> starts;
  for (double p : periods)
    starts.push_back(flatten(random_loop(model.dim(), cfg.nodes, p, cfg.init_amplitude, cfg.seed, center)));

  struct Sample {
    double value = kInf;  // Lambda
    int escaped = -1;     // period index that escaped, -1 if bounded
  };
  // Periods are tried starting from `first`, so a known escaping period is
  // checked before the others.
  auto evaluate = [&](double lambda, int first) {
    LbfgsOptions opts = inner_options(cfg);
    const double radius_cap = 1e6 * std::max(1.0, cfg.init_amplitude);
    opts.escaped = [&](const Eigen::VectorXd& x, double f) {
      return f < -cfg.dual_cap || x.lpNorm<Eigen::Infinity>() > radius_cap;
    };
    double best = kInf;
    for (int k = 0; k < np; ++k) {
      const int i = (first + k) % np;
      const LoopEvaluator eval(model, cfg.nodes, periods[static_cast<std::size_t>(i)]);
      opts.precondition = loop_preconditioner(model, cfg.nodes, periods[static_cast<std::size_t>(i)], center);
      Eigen::VectorXd g_rate, g_work;
      auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const LoopTerms t = eval(x, &g_rate, &g_work);
        g = g_rate - lambda * g_work;
        return t.rate - lambda * t.work;
      };
      const LbfgsResult r = minimize_lbfgs(objective, starts[static_cast<std::size_t>(i)], opts);
      if (r.escaped || !std::isfinite(r.value)) return Sample{kInf, i};
      best = std::min(best, r.value);
    }
    return Sample{-best, -1};
  };

  std::vector<Sample> coarse(grid.size());
  parallel_for(grid.size(), cfg.threads, [&](std::size_t i) { coarse[i] = evaluate(grid[i], 0); });

  std::vector<std::pair<double, double>> samples;
  for (std::size_t i = 0; i < grid.size(); ++i) samples.emplace_back(grid[i], coarse[i].value);

  DualScan scan;
  scan.edge_low = -kInf;
  scan.edge_high = kInf;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const bool fin_lo = std::isfinite(coarse[i].value), fin_hi = std::isfinite(coarse[i + 1].value);
    if (fin_lo == fin_hi) continue;
    double inside = fin_lo ? grid[i] : grid[i + 1];
    double outside = fin_lo ? grid[i + 1] : grid[i];
    double inside_value = fin_lo ? coarse[i].value : coarse[i + 1].value;
    int hint = fin_lo ? coarse[i + 1].escaped : coarse[i].escaped;
    while (std::abs(outside - inside) > cfg.dual_tolerance) {
      const double mid = 0.5 * (inside + outside);
      const Sample s = evaluate(mid, std::max(hint, 0));
      if (std::isfinite(s.value)) {
        inside = mid;
        inside_value = s.value;
      } else {
        outside = mid;
        hint = s.escaped;
      }
    }
    samples.emplace_back(inside, inside_value);
    samples.emplace_back(outside, kInf);
    if (fin_lo) scan.edge_high = inside;
    else scan.edge_low = inside;
  }
  if (!std::isfinite(coarse.front().value) && scan.edge_low == -kInf) scan.edge_low = kInf;
  std::sort(samples.begin(), samples.end());
  for (const auto& [l, v] : samples) {
    scan.lambdas.push_back(l);
    scan.values.push_back(v);
  }
  return scan;
}

std::vector<double> rate_from_dual(const DualScan& scan, std::span<const double> q) {
  std::vector<double> out;
  for (double x : q) {
    double s = -kInf;
    for (std::size_t j = 0; j < scan.lambdas.size(); ++j)
      if (std::isfinite(scan.values[j])) s = std::max(s, scan.lambdas[j] * x - scan.values[j]);
    out.push_back(s == -kInf ? kInf : s);
  }
  return out;
}

void write_rate_curve_csv(std::ostream& out, const RateCurve& curve) {
  out << "q,s,lambda,converged\n";
  char buf[128];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d\n", p.q, p.s, p.multiplier, p.converged ? 1 : 0);
    out << buf;
  }
}

}  // namespace fwlab
