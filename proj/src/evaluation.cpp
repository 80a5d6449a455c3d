#include "gridloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridloc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZ95 = 1.959963984540054;
}  // namespace

AlignedTrace align_trace(std::span<const PoseEstimate> estimates,
                         std::span<const TruthSample> truth) {
  if (estimates.size() != truth.size())
    throw std::invalid_argument("estimate and ground-truth counts differ");
  AlignedTrace trace;
  trace.t.reserve(estimates.size());
  trace.deviation.reserve(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (std::abs(estimates[i].t - truth[i].t) > 1e-9)
      throw std::invalid_argument("estimate and ground-truth timestamps do not line up");
    trace.t.push_back(truth[i].t);
    trace.deviation.push_back(
        std::hypot(estimates[i].pose.x - truth[i].pose.x, estimates[i].pose.y - truth[i].pose.y));
  }
  return trace;
}

double tracking_failure_fraction(const AlignedTrace& trace, double threshold,
                                 double min_duration) {
  const std::size_t n = trace.t.size();
  if (n < 2) return 0.0;
  const double total = trace.t.back() - trace.t.front();
  if (!(total > 0.0)) return 0.0;
  double lost = 0.0;
  std::size_t i = 0;
  while (i < n) {
    if (trace.deviation[i] > threshold) {
      std::size_t j = i;
      while (j + 1 < n && trace.deviation[j + 1] > threshold) ++j;
      const double duration = trace.t[j] - trace.t[i];
      if (duration >= min_duration) lost += duration;
      i = j + 1;
    } else {
      ++i;
    }
  }
  return std::min(1.0, lost / total);
}

double tracking_failure_fraction(std::span<const PoseEstimate> estimates,
                                 std::span<const TruthSample> truth, double threshold,
                                 double min_duration) {
  return tracking_failure_fraction(align_trace(estimates, truth), threshold, min_duration);
}

RecoveryReport recovery_times(const AlignedTrace& trace, std::span<const double> onsets,
                              double threshold, double hold) {
  RecoveryReport report;
  if (trace.t.empty()) {
    for (const double onset : onsets) report.recoveries.push_back({onset, 0.0, true});
    return report;
  }
  std::vector<double> sorted(onsets.begin(), onsets.end());
  std::sort(sorted.begin(), sorted.end());

  double busy_until = -kInf;
  for (const double onset : sorted) {
    if (onset < busy_until) {
      ++report.merged_onsets;
      continue;
    }
    // First sample window at or after the onset where the deviation stays
    // below the threshold long enough.
    double streak_start = kInf;
    double completion = kInf;
    for (std::size_t k = 0; k < trace.t.size(); ++k) {
      if (trace.t[k] < onset) continue;
      if (trace.deviation[k] < threshold) {
        if (streak_start == kInf) streak_start = trace.t[k];
        if (trace.t[k] - streak_start >= hold) {
          completion = streak_start + hold;
          break;
        }
      } else {
        streak_start = kInf;
      }
    }
    if (completion < kInf) {
      report.recoveries.push_back({onset, completion - onset, false});
      busy_until = completion;
    } else {
      report.recoveries.push_back({onset, std::max(0.0, trace.t.back() - onset), true});
      busy_until = kInf;
    }
  }
  return report;
}

RecoveryReport recovery_times(std::span<const PoseEstimate> estimates,
                              std::span<const TruthSample> truth,
                              std::span<const double> onsets, double threshold,
                              double hold) {
  return recovery_times(align_trace(estimates, truth), onsets, threshold, hold);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MeanCI mean_ci95(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty sample");
  MeanCI ci;
  ci.n = static_cast<int>(values.size());
  double sum = 0.0;
  for (const double v : values) sum += v;
  ci.mean = sum / ci.n;
  if (ci.n < 2) {
    ci.half_width = kInf;
    return ci;
  }
  double ss = 0.0;
  for (const double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double sd = std::sqrt(ss / (ci.n - 1));
  ci.half_width = kZ95 * sd / std::sqrt(static_cast<double>(ci.n));
  return ci;
}

double time_to_localize(const AlignedTrace& trace, double threshold, double hold) {
  double streak_start = kInf;
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    if (trace.deviation[k] < threshold) {
      if (streak_start == kInf) streak_start = trace.t[k];
      if (trace.t[k] - streak_start >= hold) return streak_start + hold;
    } else {
      streak_start = kInf;
    }
  }
  return kInf;
}

double mean_error_after(const AlignedTrace& trace, double t_from) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    if (trace.t[k] < t_from) continue;
    sum += trace.deviation[k];
    ++count;
  }
  return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

std::vector<SweepRow> resolution_sweep(const OccupancyGrid& map, const SimConfig& sim,
                                       const LocalizerConfig& base,
                                       std::span<const double> cell_sizes) {
  const SimResult run = simulate(map, sim);
  std::vector<SweepRow> rows;
  for (const double cs : cell_sizes) {
    LocalizerConfig cfg = base;
    cfg.cell_size = cs;
    Localizer loc(map, cfg);
    std::vector<PoseEstimate> estimates;
    const RunStats stats = loc.process_log(run.log, nullptr, nullptr, &estimates);
    const AlignedTrace trace = align_trace(estimates, run.truth);

    SweepRow row;
    row.cell_size = cs;
    const double t_loc = time_to_localize(trace, std::max(0.45, cs), 10.0);
    row.localized = std::isfinite(t_loc);
    row.global_loc_seconds = t_loc;
    row.mean_error = row.localized ? mean_error_after(trace, t_loc)
                                   : std::numeric_limits<double>::quiet_NaN();
    row.update_seconds_mean =
        stats.scans > 0 ? stats.update_seconds_total / stats.scans : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gridloc
