#include "fwlab/action.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

namespace fwlab {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ActionValue fw_action(const DiffusionModel& model, const DiscretePath& path) {
  const double dt = path.grid().dt();
  double total = 0.0;
  for (int k = 0; k < path.steps(); ++k) {
    const Vec mid = 0.5 * (path.node(k) + path.node(k + 1));
    const Vec r = (path.node(k + 1) - path.node(k)) / dt - model.drift_at(mid);
    total += r.dot(model.diffusion_inverse_at(mid) * r);
  }
  total *= 0.25 * dt;
  return {total, total / path.grid().horizon()};
}

double rate_I(const DiffusionModel& model, const HolonomicMeasure& measure) {
  return fw_action(model, measure.path().closed()).per_unit_time;
}

GcValue gc_observable(const DiffusionModel& model, const DiscretePath& path, double eps) {
  const double dt = path.grid().dt();
  double strat = 0.0, ito = 0.0, corr = 0.0;
  for (int k = 0; k < path.steps(); ++k) {
    const Vec& x = path.node(k);
    const Vec dx = path.node(k + 1) - x;
    strat += model.work_field_at(0.5 * (x + path.node(k + 1))).dot(dx);
    ito += model.work_field_at(x).dot(dx);
    if (eps != 0.0) corr += (model.diffusion_at(x) * model.work_field_jacobian_at(x)).trace() * dt;
  }
  const double horizon = path.grid().horizon();
  GcValue out;
  out.stratonovich = strat / horizon;
  out.ito = ito / horizon;
  out.correction = eps * corr / horizon;
  out.periodization_jump_term = model.work_field_at(path.back()).dot(path.front() - path.back());
  return out;
}

ReversalGap reversal_gap(const DiffusionModel& model, const HolonomicMeasure& measure) {
  const HolonomicMeasure reversed(time_reverse(measure.path()));
  return {rate_I(model, reversed) - rate_I(model, measure),
          gc_observable(model, measure.path().closed(), 0.0).stratonovich};
}

ActionBoundTerms action_bound_terms(const DiffusionModel& model, const DiscretePath& path) {
  const auto& v = model.potential();
  const double dt = path.grid().dt();
  ActionBoundTerms t;
  t.action = fw_action(model, path).total;
  t.potential_gap = 0.5 * (v.value(path.back()) - v.value(path.front()));
  for (int k = 0; k < path.steps(); ++k) {
    const Vec mid = 0.5 * (path.node(k) + path.node(k + 1));
    const Vec vel = (path.node(k + 1) - path.node(k)) / dt;
    t.energy += (vel.squaredNorm() + v.gradient(mid).squaredNorm()) * dt;
  }
  t.horizon = path.grid().horizon();
  return t;
}

std::vector<ActionBoundFit> calibrate_action_bound(const DiffusionModel& model, std::span<const DiscretePath> paths,
                                                   std::span<const double> coefficients) {
  std::vector<ActionBoundTerms> terms;
  terms.reserve(paths.size());
  for (const auto& p : paths) terms.push_back(action_bound_terms(model, p));
  std::vector<ActionBoundFit> fits;
  for (double g : coefficients) {
    double c = -std::numeric_limits<double>::infinity();
    for (const auto& t : terms) c = std::max(c, (t.potential_gap + g * t.energy - t.action) / t.horizon);
    fits.push_back({g, c});
  }
  return fits;
}

void write_action_json(std::ostream& out, const ActionValue& action, const GcValue& work) {
  out << "{\"total\":" << fmt(action.total) << ",\"per_unit_time\":" << fmt(action.per_unit_time)
      << ",\"stratonovich\":" << fmt(work.stratonovich) << ",\"ito\":" << fmt(work.ito)
      << ",\"correction\":" << fmt(work.correction) << ",\"jump_term\":" << fmt(work.periodization_jump_term)
      << "}\n";
}

}  // namespace fwlab
