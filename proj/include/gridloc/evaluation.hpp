#pragma once

#include <span>
#include <vector>

#include "gridloc/grid_map.hpp"
#include "gridloc/localizer.hpp"
#include "gridloc/simulator.hpp"

namespace gridloc {

// Estimate/truth pairs reduced to a positional deviation series. Estimates
// and truth samples must pair up one-to-one on timestamps.
struct AlignedTrace {
  std::vector<double> t;
  std::vector<double> deviation;  // Euclidean (x, y) distance, meters
};

AlignedTrace align_trace(std::span<const PoseEstimate> estimates,
                         std::span<const TruthSample> truth);

// Fraction of run time spent position-lost. An interval counts as lost when
// the deviation exceeds `threshold` continuously for at least `min_duration`
// seconds; the whole interval counts from its first bad sample.
double tracking_failure_fraction(std::span<const PoseEstimate> estimates,
                                 std::span<const TruthSample> truth,
                                 double threshold = 0.45, double min_duration = 20.0);
double tracking_failure_fraction(const AlignedTrace& trace, double threshold = 0.45,
                                 double min_duration = 20.0);

struct RecoveryResult {
  double onset_t = 0.0;
  double seconds = 0.0;   // onset to completion of the hold period
  bool censored = false;  // run ended before recovery completed
};

struct RecoveryReport {
  std::vector<RecoveryResult> recoveries;
  int merged_onsets = 0;  // onsets folded into a still-unrecovered failure
};

// Per failure onset, the time until the deviation stays below `threshold`
// continuously for more than `hold` seconds (so `hold` is the floor). An
// onset occurring before the previous failure finished recovering is merged
// into it. Unrecovered failures are censored at run end.
RecoveryReport recovery_times(std::span<const PoseEstimate> estimates,
                              std::span<const TruthSample> truth,
                              std::span<const double> onsets, double threshold = 0.45,
                              double hold = 10.0);
RecoveryReport recovery_times(const AlignedTrace& trace, std::span<const double> onsets,
                              double threshold = 0.45, double hold = 10.0);

// Median with the usual even-count average; infinities propagate, so a
// majority-censored sample yields an infinite median.
double median(std::vector<double> values);

struct MeanCI {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation interval
  int n = 0;

  double lo() const { return mean - half_width; }
  double hi() const { return mean + half_width; }
};

MeanCI mean_ci95(std::span<const double> values);

// First time the deviation stays below `threshold` for at least `hold`
// seconds (the moment the hold completes); +infinity when it never does.
double time_to_localize(const AlignedTrace& trace, double threshold, double hold = 10.0);

// Mean deviation over samples at or after t_from.
double mean_error_after(const AlignedTrace& trace, double t_from);

struct SweepRow {
  double cell_size = 0.0;
  bool localized = false;
  double global_loc_seconds = 0.0;  // time to first localization from uniform prior
  double mean_error = 0.0;          // mean deviation after localization
  double update_seconds_mean = 0.0;
};

// Runs the same simulated log through the localizer at several cell sizes.
// Localization is declared when the deviation stays below
// max(0.45, cell size) for 10 seconds.
std::vector<SweepRow> resolution_sweep(const OccupancyGrid& map, const SimConfig& sim,
                                       const LocalizerConfig& base,
                                       std::span<const double> cell_sizes);

}  // namespace gridloc
