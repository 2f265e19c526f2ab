#include "fwlab/lbfgs.hpp"

#include <cmath>
#include <deque>

namespace fwlab {

LbfgsResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0, const LbfgsOptions& options) {
  LbfgsResult out;
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(x.size());
  double f = objective(x, g);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new(x.size()), g_new(x.size()), d(x.size()), py;
  std::vector<double> alpha(static_cast<std::size_t>(options.memory));
  double best_gnorm = g.lpNorm<Eigen::Infinity>();
  int stalled = 0;

  auto finish = [&](bool converged) {
    out.x = x;
    out.value = f;
    out.gradient_norm = g.lpNorm<Eigen::Infinity>();
    out.converged = converged;
    return out;
  };

  if (options.escaped && options.escaped(x, f)) {
    out.escaped = true;
    return finish(false);
  }

  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it;
    if (!std::isfinite(f)) return finish(false);
    if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) return finish(true);

    // two-loop recursion
    d = -g;
    const int m = static_cast<int>(s_hist.size());
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (options.precondition) {
      options.precondition(d);
      if (m > 0) {
        py = y_hist.back();
        options.precondition(py);
        d *= s_hist.back().dot(y_hist.back()) / y_hist.back().dot(py);
      }
    } else if (m > 0) {
      d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      d = -g;
      if (options.precondition) options.precondition(d);
      slope = g.dot(d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    if (m == 0 && !options.precondition) step = std::min(1.0, 1.0 / std::max(1e-300, g.lpNorm<Eigen::Infinity>()));
    double f_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + step * d;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      // Near the optimum the decrease drops below roundoff; a non-increasing
      // step that flattens the directional derivative still makes progress.
      if (std::isfinite(f_new) && f_new <= f && std::abs(g_new.dot(d)) <= 0.9 * std::abs(slope)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return finish(g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance);

    if (options.expand_steps) {
      Eigen::VectorXd x_try(x.size()), g_try(x.size());
      for (int ex = 0; ex < 60; ++ex) {
        const double bigger = 2.0 * step;
        x_try = x + bigger * d;
        const double f_try = objective(x_try, g_try);
        if (!(std::isfinite(f_try) && f_try < f_new && f_try <= f + options.armijo * bigger * slope)) break;
        step = bigger;
        x_new.swap(x_try);
        g_new.swap(g_try);
        f_new = f_try;
        if (options.escaped && options.escaped(x_new, f_new)) break;
      }
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    x.swap(x_new);
    g.swap(g_new);
    const double f_old = f;
    f = f_new;
    if (options.record_trace) out.trace.push_back(f);
    if (options.escaped && options.escaped(x, f)) {
      out.escaped = true;
      out.iterations = it + 1;
      return finish(false);
    }
    if (options.memory > 0 && sy > 1e-14 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    // stop after a run of iterations that improve neither f nor |g|
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (f < f_old || gnorm < best_gnorm) stalled = 0;
    else if (++stalled >= 10) {
      out.iterations = it + 1;
      return finish(gnorm <= options.gradient_tolerance);
    }
    best_gnorm = std::min(best_gnorm, gnorm);
  }
  out.iterations = options.max_iterations;
  return finish(g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance);
}

}  // namespace fwlab
