#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "fwlab/model.hpp"
#include "fwlab/optimize.hpp"
#include "fwlab/paths.hpp"
#include "fwlab/simulate.hpp"

namespace fwlab {

enum class Observable { kWork, kAdditive };
enum class EstimatorKind { kDirect, kImportance };
/// Importance-sampling proposals: the loop tilt tracking the constrained
/// minimizer, or the model with its circulation rescaled (CirculationTilt).
enum class Proposal { kNone, kLoop, kCirculation, kAuto };

std::string_view estimator_name(EstimatorKind kind);
std::string_view proposal_name(Proposal proposal);
Proposal parse_proposal(std::string_view name);

/// Closed window [target - half_width, target + half_width] for W (per unit
/// time) or for the additive functional A_T/T = (1/T) sum f(X_k) dt.
struct EventSpec {
  double target = 0.0;
  double half_width = std::numeric_limits<double>::infinity();
  Observable observable = Observable::kWork;
  std::function<double(const Vec&)> f;  // integrand when observable is kAdditive
};

/// 0.05 max(1, |q|)
double default_half_width(double q);

struct McRecord {
  double eps = 0.0;
  double horizon = 0.0;
  double q = 0.0;
  double delta = 0.0;
  long samples = 0;
  long hits = 0;
  long exploded = 0;
  double phat = 0.0;
  double log_phat = -std::numeric_limits<double>::infinity();
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double rate = std::numeric_limits<double>::infinity();  // -(eps/T) log phat
  double rate_lo = 0.0;
  double rate_hi = std::numeric_limits<double>::infinity();
  double ess = 0.0;  // effective sample size over the hits
  EstimatorKind kind = EstimatorKind::kDirect;
  Proposal proposal = Proposal::kNone;
  double kappa = 1.0;  // CirculationTilt proposal parameters
  double rho = 1.0;
  int burn_in_steps = 0;
  bool valid = true;        // false when every path exploded
  bool unreliable = false;  // importance sampling with ess < 10
};

struct McOptions {
  int threads = 1;
  Vec x0;  // empty = origin
};

/// Direct estimate on each (eps, T) cell with cfg.batch replaced by
/// `samples`. Wilson 95% interval; zero hits give rate = +inf with the
/// rule-of-three bound -(eps/T) log(3/M) in rate_lo.
std::vector<McRecord> estimate_direct(const DiffusionModel& model, std::span<const SimConfig> cells,
                                      const EventSpec& event, long samples, const McOptions& options = {});

/// p = E_Q[exp(log weight) 1{event}] under the tilted dynamics; normal 95%
/// interval from the weighted sample variance. Requires constant a.
McRecord estimate_importance(const DiffusionModel& model, const Tilt& tilt, const SimConfig& cell,
                             const EventSpec& event, long samples, const McOptions& options = {});

/// Tilt tracking the constrained minimizer of rate_point(model, q).
/// Throws std::runtime_error when the constraint is infeasible.
TiltedDrift tilt_for_rate(const DiffusionModel& model, double q, const OptimizerConfig& cfg);

struct CirculationFit {
  double rho = 1.0;
  double kappa = 1.0;
  double divergence = 0.0;  // pilot mean of -log weight, i.e. KL(Q|P) over [0, T]
  int pilot_batches = 0;
};

/// CirculationTilt parameters for the window around `target`: for each rho
/// the secant method sets kappa so that the pilot mean of W is `target`;
/// rho then minimizes the pilot divergence (golden section in log rho on
/// [1/5, 5]). All pilots share the seed of `cell`.
CirculationFit calibrate_circulation(const DiffusionModel& model, const SimConfig& cell, double target,
                                     long pilot_samples, int threads = 1);

struct FtOptions {
  int steps = 3000;             // grid steps on [0, T]
  std::uint64_t seed = 0;
  int burn_in_steps = 0;
  int threads = 1;
  long min_direct_hits = 30;    // fewer direct hits switch a side to importance sampling
  /// kAuto runs both proposals on a pilot of samples/10 paths and keeps
  /// the one with the larger effective sample size.
  Proposal proposal = Proposal::kAuto;
  OptimizerConfig optimizer;
};

struct FtRatio {
  double log_ratio = 0.0;  // log phat(q) - log phat(-q)
  double predicted = 0.0;  // T q / eps
  McRecord plus;
  McRecord minus;
  bool flagged = false;    // a side without hits or unreliable weights
};

/// One direct batch evaluates both windows; a side with too few hits is
/// re-estimated by importance sampling with the tilt for its own target.
/// Seeds do not depend on the sign of q, so ft_ratio(-q) = -ft_ratio(q).
FtRatio ft_ratio(const DiffusionModel& model, double eps, double horizon, double q, double delta, long samples,
                 const FtOptions& options = {});

struct Histogram {
  int dim = 0;
  int bins = 0;             // per axis
  double lo = 0.0, hi = 0.0;
  std::vector<long> counts; // row-major, bins^dim cells
  long outside = 0;
};

struct OccupationStats {
  std::vector<double> averages;  // A_T / T per path
  double mean = 0.0;
  double standard_error = 0.0;
  Histogram histogram;
};

/// Additive functional (1/T) sum_{k<N} f(X_k) dt per path and a histogram
/// of visited nodes on [lo, hi]^n. All paths must share one grid.
OccupationStats occupation_stats(std::span<const DiscretePath> paths, const std::function<double(const Vec&)>& f,
                                 int bins = 32, double lo = -3.0, double hi = 3.0);

/// Burn-in of ten relaxation times 1/lambda_min(a D^2 V) at the origin.
int stationary_burn_in(const DiffusionModel& model, double dt);

/// CSV `eps,T,q,delta,M,hits,phat,ci_lo,ci_hi,rate,rate_lo,rate_hi,kind`.
void write_records_csv(std::ostream& out, std::span<const McRecord> records);
/// One JSON object per record with the CSV fields plus ess and flags.
void write_records_jsonl(std::ostream& out, std::span<const McRecord> records);

}  // namespace fwlab
