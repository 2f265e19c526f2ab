#include "fwlab/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "fwlab/rng.hpp"

namespace fwlab {

namespace {

constexpr double kZ = 1.959963984540054;  // two-sided 95%
constexpr double kInf = std::numeric_limits<double>::infinity();

Vec start_point(const DiffusionModel& model, const McOptions& options) {
  if (options.x0.size() == 0) return Vec::Zero(model.dim());
  if (options.x0.size() != model.dim()) throw std::invalid_argument("mc: x0 has wrong dimension");
  return options.x0;
}

std::function<double(const DiscretePath&)> functional_of(const EventSpec& event) {
  if (event.observable != Observable::kAdditive) return {};
  if (!event.f) throw std::invalid_argument("mc: additive event needs an integrand");
  auto f = event.f;
  return [f](const DiscretePath& p) {
    double sum = 0.0;
    for (int k = 0; k < p.steps(); ++k) sum += f(p.node(k));
    return sum / p.steps();
  };
}

bool hit(const EventSpec& event, const PathSummary& s) {
  if (s.exploded) return false;
  const double v = event.observable == Observable::kWork ? s.work : s.functional;
  return std::isfinite(v) && std::abs(v - event.target) <= event.half_width;
}

void check_event(const EventSpec& event, long samples) {
  if (!(event.half_width > 0.0)) throw std::invalid_argument("mc: window half-width must be > 0");
  if (!std::isfinite(event.target)) throw std::invalid_argument("mc: window target must be finite");
  if (samples < 100) throw std::invalid_argument("mc: need at least 100 samples");
}

McRecord blank_record(const SimConfig& cell, const EventSpec& event, long samples, EstimatorKind kind) {
  McRecord r;
  r.eps = cell.eps;
  r.horizon = cell.grid.horizon();
  r.q = event.target;
  r.delta = event.half_width;
  r.samples = samples;
  r.kind = kind;
  r.burn_in_steps = cell.burn_in_steps;
  return r;
}

void fill_direct(McRecord& r, long hits) {
  const double m = static_cast<double>(r.samples);
  const double scale = r.eps / r.horizon;
  r.hits = hits;
  r.ess = static_cast<double>(hits);
  r.phat = hits / m;
  const double z2 = kZ * kZ;
  const double centre = (r.phat + z2 / (2.0 * m)) / (1.0 + z2 / m);
  const double half = kZ / (1.0 + z2 / m) * std::sqrt(r.phat * (1.0 - r.phat) / m + z2 / (4.0 * m * m));
  r.ci_lo = std::max(0.0, centre - half);
  r.ci_hi = std::min(1.0, centre + half);
  if (hits == 0) {
    r.ci_lo = 0.0;
    r.log_phat = -kInf;
    r.rate = kInf;
    r.rate_lo = -scale * std::log(std::min(1.0, 3.0 / m));
    r.rate_hi = kInf;
    return;
  }
  r.log_phat = std::log(r.phat);
  r.rate = -scale * r.log_phat;
  r.rate_lo = -scale * std::log(r.ci_hi);
  r.rate_hi = r.ci_lo > 0.0 ? -scale * std::log(r.ci_lo) : kInf;
  if (r.rate == 0.0) r.rate = 0.0;  // no negative zero in outputs
  if (r.rate_lo == 0.0) r.rate_lo = 0.0;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -kInf;
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  std::vector<double> terms;
  terms.reserve(v.size());
  for (double x : v) terms.push_back(std::exp(x - top));
  return top + std::log(pairwise_sum(terms));
}

}  // namespace

std::string_view estimator_name(EstimatorKind kind) {
  return kind == EstimatorKind::kDirect ? "direct" : "importance";
}

std::string_view proposal_name(Proposal proposal) {
  switch (proposal) {
    case Proposal::kNone: return "none";
    case Proposal::kLoop: return "loop";
    case Proposal::kCirculation: return "circulation";
    case Proposal::kAuto: return "auto";
  }
  return "none";
}

Proposal parse_proposal(std::string_view name) {
  for (Proposal p : {Proposal::kNone, Proposal::kLoop, Proposal::kCirculation, Proposal::kAuto})
    if (proposal_name(p) == name) return p;
  throw std::invalid_argument("unknown proposal '" + std::string(name) + "'");
}

double default_half_width(double q) { return 0.05 * std::max(1.0, std::abs(q)); }

std::vector<McRecord> estimate_direct(const DiffusionModel& model, std::span<const SimConfig> cells,
                                      const EventSpec& event, long samples, const McOptions& options) {
  check_event(event, samples);
  const Vec x0 = start_point(model, options);
  BatchOptions batch;
  batch.threads = options.threads;
  batch.functional = functional_of(event);
  std::vector<McRecord> out;
  for (const SimConfig& cell : cells) {
    SimConfig c = cell;
    c.batch = static_cast<int>(samples);
    const BatchResult res = batch_simulate(model, c, x0, batch);
    McRecord r = blank_record(c, event, samples, EstimatorKind::kDirect);
    r.exploded = res.exploded;
    r.valid = res.exploded < samples;
    const long hits = std::count_if(res.summaries.begin(), res.summaries.end(),
                                    [&](const PathSummary& s) { return hit(event, s); });
    fill_direct(r, hits);
    out.push_back(r);
  }
  return out;
}

McRecord estimate_importance(const DiffusionModel& model, const Tilt& tilt, const SimConfig& cell,
                             const EventSpec& event, long samples, const McOptions& options) {
  check_event(event, samples);
  if (!model.diffusion().constant) throw std::invalid_argument("importance sampling needs a constant diffusion matrix");
  SimConfig c = cell;
  c.batch = static_cast<int>(samples);
  BatchOptions batch;
  batch.threads = options.threads;
  batch.tilt = &tilt;
  batch.functional = functional_of(event);
  const BatchResult res = batch_simulate(model, c, start_point(model, options), batch);

  McRecord r = blank_record(c, event, samples, EstimatorKind::kImportance);
  if (const auto* ct = dynamic_cast<const CirculationTilt*>(&tilt)) {
    r.proposal = Proposal::kCirculation;
    r.kappa = ct->kappa();
    r.rho = ct->rho();
  } else {
    r.proposal = Proposal::kLoop;
  }
  r.exploded = res.exploded;
  r.valid = res.exploded < samples;
  std::vector<double> lw, lw2;
  for (const auto& s : res.summaries) {
    if (!hit(event, s)) continue;
    lw.push_back(s.log_weight);
    lw2.push_back(2.0 * s.log_weight);
  }
  r.hits = static_cast<long>(lw.size());
  const double m = static_cast<double>(samples);
  const double scale = r.eps / r.horizon;
  if (lw.empty()) {
    r.rate_lo = -scale * std::log(std::min(1.0, 3.0 / m));
    r.unreliable = true;
    return r;
  }
  const double lse = log_sum_exp(lw);
  const double lse2 = log_sum_exp(lw2);
  r.ess = std::exp(2.0 * lse - lse2);
  r.unreliable = r.ess < 10.0;
  r.log_phat = lse - std::log(m);
  r.phat = std::exp(r.log_phat);
  // relative standard error of the mean of w 1{hit}
  const double rel_var = std::max(0.0, (m * std::exp(lse2 - 2.0 * lse) - 1.0) * m / (m - 1.0));
  const double rel = kZ * std::sqrt(rel_var / m);
  r.ci_lo = rel < 1.0 ? r.phat * (1.0 - rel) : 0.0;
  r.ci_hi = std::min(1.0, r.phat * (1.0 + rel));
  r.rate = -scale * r.log_phat;
  r.rate_lo = -scale * std::min(0.0, r.log_phat + std::log1p(rel));
  r.rate_hi = rel < 1.0 ? -scale * (r.log_phat + std::log1p(-rel)) : kInf;
  return r;
}

TiltedDrift tilt_for_rate(const DiffusionModel& model, double q, const OptimizerConfig& cfg) {
  const RatePoint p = rate_point(model, q, cfg);
  if (!p.feasible) throw std::runtime_error("tilt_for_rate: W = q is unreachable for this model");
  return TiltedDrift(model, p.minimizer->path());
}

CirculationFit calibrate_circulation(const DiffusionModel& model, const SimConfig& cell, double target,
                                     long pilot_samples, int threads) {
  SimConfig c = cell;
  c.batch = static_cast<int>(std::max(2L, pilot_samples));
  BatchOptions batch;
  batch.threads = threads;
  CirculationFit fit;
  const Vec x0 = Vec::Zero(model.dim());
  struct Pilot {
    double work = std::numeric_limits<double>::quiet_NaN();
    double divergence = kInf;
  };
  auto pilot = [&](double rho, double kappa) {
    const CirculationTilt tilt(model, kappa, rho);
    batch.tilt = &tilt;
    const BatchResult res = batch_simulate(model, c, x0, batch);
    ++fit.pilot_batches;
    std::vector<double> w, lw;
    for (const auto& s : res.summaries) {
      if (s.exploded) continue;
      w.push_back(s.work);
      lw.push_back(-s.log_weight);
    }
    Pilot p;
    if (w.empty()) return p;
    p.work = pairwise_sum(w) / static_cast<double>(w.size());
    p.divergence = pairwise_sum(lw) / static_cast<double>(lw.size());
    return p;
  };
  const double tol = 1e-3 * std::max(1.0, std::abs(target));
  // kappa with mean W = target at fixed rho, by secant steps
  auto match = [&](double rho) {
    double k0 = 1.0, k1 = -1.0;
    Pilot p0 = pilot(rho, k0), p1 = pilot(rho, k1);
    for (int it = 0; it < 12; ++it) {
      const double f0 = p0.work - target, f1 = p1.work - target;
      if (!std::isfinite(f0) || !std::isfinite(f1) || f1 == f0 || std::abs(f1) <= tol) break;
      const double k2 = std::clamp(k1 - f1 * (k1 - k0) / (f1 - f0), -20.0, 20.0);
      k0 = k1;
      p0 = p1;
      k1 = k2;
      p1 = pilot(rho, k1);
    }
    if (!std::isfinite(p1.work) || std::abs(p1.work - target) > 0.1 * std::max(1.0, std::abs(target)))
      p1.divergence = kInf;
    return std::pair{k1, p1.divergence};
  };

  double lo = std::log(0.2), hi = std::log(5.0);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double u = hi - g * (hi - lo), v = lo + g * (hi - lo);
  auto fu = match(std::exp(u)), fv = match(std::exp(v));
  while (hi - lo > 0.02) {
    if (fu.second <= fv.second) {
      hi = v;
      v = u;
      fv = fu;
      u = hi - g * (hi - lo);
      fu = match(std::exp(u));
    } else {
      lo = u;
      u = v;
      fu = fv;
      v = lo + g * (hi - lo);
      fv = match(std::exp(v));
    }
  }
  const bool left = fu.second <= fv.second;
  fit.rho = std::exp(left ? u : v);
  fit.kappa = left ? fu.first : fv.first;
  fit.divergence = left ? fu.second : fv.second;
  if (!std::isfinite(fit.divergence)) {
    fit.rho = 1.0;
    fit.kappa = 1.0;
  }
  return fit;
}

FtRatio ft_ratio(const DiffusionModel& model, double eps, double horizon, double q, double delta, long samples,
                 const FtOptions& options) {
  SimConfig cell;
  cell.eps = eps;
  cell.grid = TimeGrid(horizon, options.steps);
  cell.seed = options.seed;
  cell.burn_in_steps = options.burn_in_steps;
  cell.batch = static_cast<int>(samples);
  EventSpec plus_event{q, delta, Observable::kWork, {}};
  EventSpec minus_event{-q, delta, Observable::kWork, {}};
  check_event(plus_event, samples);

  McOptions mc;
  mc.threads = options.threads;
  BatchOptions batch;
  batch.threads = options.threads;
  const BatchResult direct = batch_simulate(model, cell, Vec::Zero(model.dim()), batch);

  // Every seed below depends only on options.seed, never on the sign of q.
  auto importance = [&](const EventSpec& event, Proposal proposal, long m, std::uint64_t salt) {
    SimConfig tilted = cell;
    tilted.seed = mix_seed(options.seed, salt);
    if (proposal == Proposal::kLoop) {
      const TiltedDrift tilt = tilt_for_rate(model, event.target, options.optimizer);
      return estimate_importance(model, tilt, tilted, event, m, mc);
    }
    SimConfig pilot = cell;
    pilot.seed = mix_seed(options.seed, 0x9170);
    const CirculationFit fit = calibrate_circulation(model, pilot, event.target, std::max(100L, samples / 50),
                                                     options.threads);
    const CirculationTilt tilt(model, fit.kappa, fit.rho);
    return estimate_importance(model, tilt, tilted, event, m, mc);
  };

  auto side = [&](const EventSpec& event) {
    McRecord r = blank_record(cell, event, samples, EstimatorKind::kDirect);
    r.exploded = direct.exploded;
    r.valid = direct.exploded < samples;
    const long hits = std::count_if(direct.summaries.begin(), direct.summaries.end(),
                                    [&](const PathSummary& s) { return hit(event, s); });
    fill_direct(r, hits);
    if (hits >= options.min_direct_hits) return r;
    Proposal proposal = options.proposal;
    if (proposal == Proposal::kNone) return r;
    if (proposal == Proposal::kAuto) {
      const long pilot = std::max(100L, samples / 10);
      const McRecord a = importance(event, Proposal::kLoop, pilot, 0x7418);
      const McRecord b = importance(event, Proposal::kCirculation, pilot, 0x7418);
      proposal = b.ess > a.ess ? Proposal::kCirculation : Proposal::kLoop;
    }
    return importance(event, proposal, samples, 0x7417);
  };

  FtRatio out;
  out.plus = side(plus_event);
  out.minus = q == 0.0 ? out.plus : side(minus_event);
  out.predicted = horizon * q / eps;
  out.log_ratio = q == 0.0 ? 0.0 : out.plus.log_phat - out.minus.log_phat;
  out.flagged = out.plus.hits == 0 || out.minus.hits == 0 || out.plus.unreliable || out.minus.unreliable ||
                !out.plus.valid || !out.minus.valid;
  return out;
}

OccupationStats occupation_stats(std::span<const DiscretePath> paths, const std::function<double(const Vec&)>& f,
                                 int bins, double lo, double hi) {
  if (paths.empty()) throw std::invalid_argument("occupation_stats: no paths");
  if (bins < 1 || !(lo < hi)) throw std::invalid_argument("occupation_stats: bad histogram range");
  const TimeGrid& grid = paths.front().grid();
  const int dim = paths.front().dim();
  OccupationStats out;
  out.histogram.dim = dim;
  out.histogram.bins = bins;
  out.histogram.lo = lo;
  out.histogram.hi = hi;
  std::size_t cells = 1;
  for (int i = 0; i < dim; ++i) cells *= static_cast<std::size_t>(bins);
  out.histogram.counts.assign(cells, 0);
  for (const auto& p : paths) {
    if (p.steps() != grid.steps() || p.grid().horizon() != grid.horizon() || p.dim() != dim)
      throw std::invalid_argument("occupation_stats: paths must share one grid");
    double sum = 0.0;
    for (int k = 0; k < p.steps(); ++k) {
      const Vec& x = p.node(k);
      sum += f(x);
      std::size_t index = 0;
      bool inside = true;
      for (int i = 0; i < dim && inside; ++i) {
        const double u = (x(i) - lo) / (hi - lo);
        if (!(u >= 0.0 && u < 1.0)) inside = false;
        else index = index * static_cast<std::size_t>(bins) + static_cast<std::size_t>(u * bins);
      }
      if (inside) ++out.histogram.counts[index];
      else ++out.histogram.outside;
    }
    out.averages.push_back(sum / p.steps());
  }
  const double n = static_cast<double>(out.averages.size());
  out.mean = pairwise_sum(out.averages) / n;
  if (out.averages.size() > 1) {
    std::vector<double> sq;
    for (double a : out.averages) sq.push_back((a - out.mean) * (a - out.mean));
    out.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  }
  return out;
}

int stationary_burn_in(const DiffusionModel& model, double dt) {
  const Vec zero = Vec::Zero(model.dim());
  const Mat h = model.potential().hessian(zero);
  Mat ah = model.diffusion_at(zero) * h;
  // eigenvalues of a H are real (similar to a^{1/2} H a^{1/2})
  Eigen::EigenSolver<Mat> eig(ah, false);
  double slowest = kInf;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) slowest = std::min(slowest, eig.eigenvalues()(i).real());
  if (!(slowest > 0.0)) slowest = 1.0;
  return static_cast<int>(std::ceil(10.0 / slowest / dt));
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_num(double v) { return std::isfinite(v) ? num(v) : (std::isnan(v) ? "null" : "\"" + num(v) + "\""); }

}  // namespace

void write_records_csv(std::ostream& out, std::span<const McRecord> records) {
  out << "eps,T,q,delta,M,hits,phat,ci_lo,ci_hi,rate,rate_lo,rate_hi,kind\n";
  for (const auto& r : records) {
    out << num(r.eps) << ',' << num(r.horizon) << ',' << num(r.q) << ',' << num(r.delta) << ',' << r.samples << ','
        << r.hits << ',' << num(r.phat) << ',' << num(r.ci_lo) << ',' << num(r.ci_hi) << ',' << num(r.rate) << ','
        << num(r.rate_lo) << ',' << num(r.rate_hi) << ',' << estimator_name(r.kind) << '\n';
  }
}

void write_records_jsonl(std::ostream& out, std::span<const McRecord> records) {
  for (const auto& r : records) {
    out << "{\"eps\":" << json_num(r.eps) << ",\"T\":" << json_num(r.horizon) << ",\"q\":" << json_num(r.q)
        << ",\"delta\":" << json_num(r.delta) << ",\"M\":" << r.samples << ",\"hits\":" << r.hits
        << ",\"phat\":" << json_num(r.phat) << ",\"log_phat\":" << json_num(r.log_phat)
        << ",\"ci_lo\":" << json_num(r.ci_lo) << ",\"ci_hi\":" << json_num(r.ci_hi)
        << ",\"rate\":" << json_num(r.rate) << ",\"rate_lo\":" << json_num(r.rate_lo)
        << ",\"rate_hi\":" << json_num(r.rate_hi) << ",\"kind\":\"" << estimator_name(r.kind) << "\""
        << ",\"proposal\":\"" << proposal_name(r.proposal) << "\",\"kappa\":" << json_num(r.kappa)
        << ",\"rho\":" << json_num(r.rho)
        << ",\"ess\":" << json_num(r.ess) << ",\"exploded\":" << r.exploded
        << ",\"burn_in_steps\":" << r.burn_in_steps << ",\"valid\":" << (r.valid ? "true" : "false")
        << ",\"unreliable\":" << (r.unreliable ? "true" : "false") << "}\n";
  }
}

}  // namespace fwlab
