#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "fwlab/model.hpp"
#include "fwlab/paths.hpp"

namespace fwlab {

struct ActionValue {
  double total = 0.0;
  double per_unit_time = 0.0;
};

/// Gallavotti-Cohen work of a sampled path. The first three fields are per
/// unit time; the jump term is the raw boundary contribution
/// a^{-1}c(X_N) . (X_0 - X_N) inserted by T-periodization.
struct GcValue {
  double stratonovich = 0.0;
  double ito = 0.0;
  double correction = 0.0;
  double periodization_jump_term = 0.0;
};

struct ReversalGap {
  double gap = 0.0;        // rate of the reversed loop minus rate of the loop
  double mean_work = 0.0;  // Stratonovich work per unit time on the loop
};

/// Midpoint rule for (1/4) int [dX/dt - b]. a^{-1} [dX/dt - b] dt.
ActionValue fw_action(const DiffusionModel& model, const DiscretePath& path);

/// Per-unit-time action over one period of the loop.
double rate_I(const DiffusionModel& model, const HolonomicMeasure& measure);

/// Stratonovich sum with f = a^{-1}c at midpoints, Ito sum with f at left
/// points, and the Ito-to-Stratonovich correction eps/T sum tr(a Df) dt.
GcValue gc_observable(const DiffusionModel& model, const DiscretePath& path, double eps);

ReversalGap reversal_gap(const DiffusionModel& model, const HolonomicMeasure& measure);

/// Terms of the lower bound
///   I(X) >= [V(X_T) - V(X_0)]/2 + g int (|dX/dt|^2 + |grad V|^2) dt - C T
/// evaluated on one path; used by calibrate_action_bound.
struct ActionBoundTerms {
  double action = 0.0;
  double potential_gap = 0.0;  // [V(X_T) - V(X_0)] / 2
  double energy = 0.0;         // int |dX/dt|^2 + |grad V|^2 dt (midpoint)
  double horizon = 0.0;
};

ActionBoundTerms action_bound_terms(const DiffusionModel& model, const DiscretePath& path);

struct ActionBoundFit {
  double coefficient = 0.0;  // g
  double constant = 0.0;     // smallest C making the bound hold on every path
};

/// Diagnostic only: for each trial coefficient g, the smallest constant C
/// for which the bound holds on all given paths.
std::vector<ActionBoundFit> calibrate_action_bound(const DiffusionModel& model, std::span<const DiscretePath> paths,
                                                   std::span<const double> coefficients);

/// {"total":..,"per_unit_time":..,"stratonovich":..,"ito":..,"correction":..,"jump_term":..}
void write_action_json(std::ostream& out, const ActionValue& action, const GcValue& work);

}  // namespace fwlab
