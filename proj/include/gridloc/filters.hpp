#pragma once

#include <string>

#include "gridloc/belief_grid.hpp"
#include "gridloc/sensor_model.hpp"

namespace gridloc {

// Policy for deciding which beams may update the belief in environments that
// do not match the map (people, moved furniture).
enum class FilterKind {
  kNone,      // every beam updates
  kEntropy,   // a beam updates only if it would not raise belief entropy
  kDistance,  // a beam is dropped when it is shorter than the map can explain
};

const char* filter_kind_name(FilterKind kind);
FilterKind parse_filter_kind(const std::string& name);

struct FilterConfig {
  FilterKind kind = FilterKind::kNone;
  // Slack on the entropy comparison; absorbs floating-point noise when a beam
  // leaves the belief exactly unchanged.
  double entropy_tolerance = 1e-9;
  // Reject a beam when the belief-weighted probability that the mapped
  // obstacle lies beyond the measured distance exceeds this.
  double distance_gamma = 0.99;
};

struct FilterDecision {
  bool accept = true;
  double delta_entropy = 0.0;  // entropy filter: predicted entropy change
  double p_short = 0.0;        // distance filter: shorter-than-map probability
};

// Probability, under the belief restricted to states above epsilon, that the
// mapped obstacle alone would have produced a reading strictly beyond the
// measured one. Values near 1 mean something unmapped cut the beam short.
double p_short_conditional(const BeliefGrid& belief, const SensorTable& table,
                           const Beam& beam, double measured);

// Decides whether one beam should update the belief. h_before is the entropy
// of the belief the decision is made against; compute it once per scan and
// evaluate every beam of the scan against the same belief.
FilterDecision evaluate_beam_filter(const FilterConfig& config, const BeliefGrid& belief,
                                    const SensorTable& table, const Beam& beam,
                                    double measured, double h_before);

}  // namespace gridloc
