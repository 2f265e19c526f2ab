#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fwlab/model.hpp"
#include "fwlab/paths.hpp"

namespace fwlab {

struct PenaltySchedule {
  double initial = 10.0;  // starting penalty weight mu
  double growth = 10.0;   // mu is multiplied by this when the residual stalls
  double max = 1e10;      // mu above this means the constraint is unreachable
  int max_outer = 60;
};

enum class InitMode {
  kAuto,        // circle for rotational models, random loop otherwise
  kCircle,
  kRandomLoop,
  kConstant,
};

std::string_view init_mode_name(InitMode mode);
InitMode parse_init_mode(std::string_view name);

struct OptimizerConfig {
  int nodes = 256;
  double period = 6.283185307179586;          // S0
  double period_min = 1.5707963267948966;     // bracket for the period search
  double period_max = 6.283185307179586;
  int max_iterations = 20000;                 // per inner L-BFGS run
  /// Inner runs stop when |grad|_inf <= gradient_tolerance / nodes.
  double gradient_tolerance = 1e-5;
  /// Accept |W - q| <= constraint_tolerance * max(1, |q|).
  double constraint_tolerance = 1e-7;
  /// Golden-section stops when the bracket is narrower than this times S0.
  double period_tolerance = 1e-4;
  PenaltySchedule penalty;
  std::vector<double> lambda_grid;            // dual scan; empty = default grid
  int period_scan = 96;                       // periods tried per dual value
  double dual_tolerance = 1e-6;               // bisection width at domain edges
  double dual_cap = 1e3;                      // escape threshold of the dual scan
  InitMode init = InitMode::kAuto;
  Vec init_center;                            // empty = origin
  double init_amplitude = 1.0;
  std::uint64_t seed = 0;
  int lbfgs_memory = 12;                      // 0 = gradient descent with backtracking
  int threads = 1;
};

/// Throws std::invalid_argument for N < 16, a bad period bracket, or
/// non-positive tolerances.
void validate(const OptimizerConfig& cfg);

/// Gradient of the discrete per-period action (dt/4) sum r.a^{-1}(m) r with
/// respect to every free node of the loop.
std::vector<Vec> action_gradient(const DiffusionModel& model, const PeriodicPath& path);

/// Discrete Stratonovich work per unit time of a loop and its node gradient.
double loop_work(const DiffusionModel& model, const PeriodicPath& path, std::vector<Vec>* gradient = nullptr);

struct MinimizeResult {
  HolonomicMeasure measure;
  double rate = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;  // rate after each accepted step at the chosen period
};

/// Local minimizer of rate_I over nodes (L-BFGS) and period (golden section).
MinimizeResult minimize_rate(const DiffusionModel& model, const OptimizerConfig& cfg);

struct RatePoint {
  double q = 0.0;
  double s = 0.0;           // +inf when the constraint is unreachable
  double multiplier = 0.0;  // lambda, approximately ds/dq
  std::optional<HolonomicMeasure> minimizer;
  bool converged = false;
  bool feasible = true;
  double residual = 0.0;    // achieved W - q
  int evaluations = 0;      // inner solves
};

/// Constrained rate s(q) = min rate_I subject to W = q, by an augmented
/// Lagrangian in the nodes and golden-section search in the period.
RatePoint rate_point(const DiffusionModel& model, double q, const OptimizerConfig& cfg);
/// Same, starting the node search from `start` instead of the configured init.
RatePoint rate_point(const DiffusionModel& model, double q, const OptimizerConfig& cfg,
                     const PeriodicPath& start, double multiplier);

struct RateCurve {
  std::vector<RatePoint> points;
  /// Indices i with s_i above the chord of its neighbours by more than 1e-6.
  std::vector<std::size_t> convexity_violations;
  std::vector<std::size_t> failed;

  std::vector<double> q() const;
  std::vector<double> s() const;
};

/// rate_point on every grid value (concurrently); failed points are retried
/// once from the minimizer of a converged neighbour.
RateCurve rate_curve(const DiffusionModel& model, std::span<const double> q_grid, const OptimizerConfig& cfg);

std::vector<std::size_t> convexity_violations(std::span<const double> q, std::span<const double> s,
                                              double tolerance = 1e-6);

/// max over the grid of |s(-q) - s(q) - q|; throws std::invalid_argument
/// unless the grid is symmetric about 0.
double ft_defect(std::span<const double> q, std::span<const double> s);
double ft_defect(const RateCurve& curve);

struct DualScan {
  std::vector<double> lambdas;  // sorted, includes bisected domain edges
  std::vector<double> values;   // Lambda(lambda), +inf outside the domain
  double edge_low = 0.0;        // finite-domain edges found by bisection
  double edge_high = 0.0;       // (+-inf when the grid never leaves the domain)
};

/// Lambda(lambda) = -min over loops and periods of [rate_I - lambda W].
DualScan dual_scan(const DiffusionModel& model, const OptimizerConfig& cfg);

/// s(q) = max over finite scan samples of [lambda q - Lambda(lambda)].
std::vector<double> rate_from_dual(const DualScan& scan, std::span<const double> q);

/// CSV `q,s,lambda,converged`.
void write_rate_curve_csv(std::ostream& out, const RateCurve& curve);

}  // namespace fwlab
