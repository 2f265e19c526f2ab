#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fwlab/model.hpp"
#include "fwlab/paths.hpp"

namespace fwlab {

struct SimConfig {
  double eps = 0.1;
  TimeGrid grid{1.0, 100};
  std::uint64_t seed = 0;
  double r_max = 1e3;
  int batch = 1;
  /// Steps of untilted dynamics run (and discarded) before the recorded grid.
  int burn_in_steps = 0;
  /// Test hook: replaces every Gaussian increment by zero.
  bool zero_noise = false;
};

/// Throws std::invalid_argument when eps <= 0, r_max <= 0 or batch < 1.
void validate(const SimConfig& cfg);

/// Confining potential for the tilted dynamics: V itself when V has a
/// unique nondegenerate minimum at the origin, otherwise the blend
/// (1 - chi) k|x|^2/2 + chi V with a C^2 radial step chi from 0 at
/// `inner` to 1 at `outer`.
ScalarPotential default_confining_potential(const DiffusionModel& model, double inner = 1.5,
                                            double outer = 2.0, double stiffness = 0.25);

struct ConfiningCheck {
  bool matches_outside = false;      // U == V beyond the radius on sampled points
  bool unique_minimum_at_origin = false;
  double hessian_min_eigenvalue = 0.0;
};

ConfiningCheck check_confining(const DiffusionModel& model, const ScalarPotential& u, double radius);

/// Proposal dynamics for importance sampling: a time-dependent drift and
/// noise factor replacing those of the model.
class Tilt {
 public:
  virtual ~Tilt() = default;
  virtual int dim() const = 0;
  virtual Vec drift_at(double t, const Vec& x, double eps) const = 0;
  virtual Mat noise_factor_at(double t, const Vec& x) const = 0;
};

/// b~_eps(t, x) = -a(x - Y_t) grad U(x - Y_t) + eps div a(x - Y_t) + dY/dt,
/// with dY/dt from centred differences on the loop.
class TiltedDrift final : public Tilt {
 public:
  TiltedDrift(const DiffusionModel& model, PeriodicPath reference, ScalarPotential confining);
  TiltedDrift(const DiffusionModel& model, PeriodicPath reference);

  const PeriodicPath& reference() const noexcept { return reference_; }
  const ScalarPotential& confining() const noexcept { return confining_; }
  const DiffusionModel& model() const noexcept { return model_; }

  Vec reference_at(double t) const { return reference_.at(t); }
  Vec reference_velocity_at(double t) const { return velocity_.at(t); }

  int dim() const override { return model_.dim(); }
  Vec drift_at(double t, const Vec& x, double eps) const override;
  Mat noise_factor_at(double t, const Vec& x) const override;

 private:
  DiffusionModel model_;
  PeriodicPath reference_;
  PeriodicPath velocity_;
  ScalarPotential confining_;
};

/// Autonomous proposal -rho a grad V + kappa c. (rho, kappa) = (1, 1) is
/// the model itself; (1, -1) its time reversal when a is constant.
class CirculationTilt final : public Tilt {
 public:
  CirculationTilt(const DiffusionModel& model, double kappa, double rho = 1.0)
      : model_(model), kappa_(kappa), rho_(rho) {}
  double kappa() const noexcept { return kappa_; }
  double rho() const noexcept { return rho_; }
  int dim() const override { return model_.dim(); }
  Vec drift_at(double t, const Vec& x, double eps) const override;
  Mat noise_factor_at(double t, const Vec& x) const override;

 private:
  DiffusionModel model_;
  double kappa_;
  double rho_;
};

/// X_{k+1} = X_k + b(X_k) dt + sqrt(2 eps dt) sigma(X_k) xi_k, xi_k from
/// NormalStream(seed, stream). Throws ExplosionError when |X_k| > r_max.
DiscretePath euler_maruyama(const DiffusionModel& model, const SimConfig& cfg, const Vec& x0,
                            std::uint64_t stream = 0);

/// Euler-Maruyama for the tilted non-autonomous SDE.
DiscretePath simulate_tilted(const DiffusionModel& model, const Tilt& tilt, const SimConfig& cfg,
                             const Vec& x0, std::uint64_t stream = 0);

/// log dP/dQ = -M_T + <M>_T / 2 along the path, Ito sums on its grid.
double girsanov_log_weight(const DiffusionModel& model, const Tilt& tilt, double eps,
                           const DiscretePath& path);

struct PathSummary {
  std::uint64_t index = 0;
  Vec endpoint;
  double work = 0.0;        // Stratonovich W per unit time
  double log_weight = 0.0;  // 0 for untilted sampling
  double functional = 0.0;  // optional user functional of the path
  bool exploded = false;
  long explosion_step = -1;
};

struct BatchOptions {
  int threads = 1;
  bool keep_paths = false;
  const Tilt* tilt = nullptr;
  std::function<double(const DiscretePath&)> functional;
};

struct BatchResult {
  std::vector<PathSummary> summaries;
  std::vector<std::optional<DiscretePath>> paths;  // filled when keep_paths
  long exploded = 0;
};

/// Trajectory i uses NormalStream(cfg.seed, i); the result does not depend
/// on the number of threads or on scheduling.
BatchResult batch_simulate(const DiffusionModel& model, const SimConfig& cfg, const Vec& x0,
                           const BatchOptions& options = {});

/// JSON-lines records {index, endpoint, W_value, exploded}.
void write_summaries_jsonl(std::ostream& out, std::span<const PathSummary> summaries);

/// Runs body(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

/// Sum in a fixed pairwise order (independent of how terms were produced).
double pairwise_sum(std::span<const double> values);

}  // namespace fwlab
