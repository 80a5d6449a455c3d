#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridloc/belief_grid.hpp"
#include "gridloc/filters.hpp"
#include "gridloc/grid_map.hpp"
#include "gridloc/motion_model.hpp"
#include "gridloc/sensor_model.hpp"

namespace gridloc {

enum class PriorKind { kUniform, kGaussian };

// Flat, file-loadable run configuration. Derived model structs are built on
// demand; validate() rejects out-of-band values.
struct LocalizerConfig {
  double cell_size = 0.15;    // meters; sensible band roughly 0.10-0.40
  double theta_res_deg = 4.0; // degrees per orientation bin

  double trans_sigma_per_meter = 0.1;
  double rot_sigma_per_meter = 0.05;
  double rot_sigma_per_radian = 0.0;
  double noise_cutoff = 3.0;
  double max_atomic_trans = 0.25;
  double max_atomic_rot = 0.2;

  double sensor_sigma = 0.15;
  double sensor_c_r = 0.01;
  double sensor_c_d = 0.9;
  int sensor_n_bins = 64;
  double sensor_max_range = 5.0;

  FilterKind filter = FilterKind::kNone;
  double entropy_tolerance = 1e-9;
  double distance_gamma = 0.99;

  // Selective-update threshold is epsilon_scale / (number of free states);
  // 0 runs full updates everywhere.
  double epsilon_scale = 0.01;

  PriorKind prior = PriorKind::kUniform;
  double prior_x = 0.0, prior_y = 0.0, prior_theta = 0.0;
  double prior_sigma_xy = 0.5, prior_sigma_theta = 0.35;

  int beam_stride = 1;             // use every beam_stride-th beam of a scan
  bool reset_on_underflow = false; // reset to uniform when a scan annihilates the belief

  int theta_bins() const;
  MotionNoise motion_noise() const;
  BeamModelParams beam_params() const;
  FilterConfig filter_config() const;
  void validate() const;
};

// Key-value text config: one "key value" pair per line, '#' comments, blank
// lines ignored. Unknown keys are errors. Missing keys keep their defaults.
LocalizerConfig parse_config(std::istream& is);
void write_config(std::ostream& os, const LocalizerConfig& config);

// Number of grid states for a map extent at a given resolution.
std::size_t state_count(double width_m, double height_m, double cell_size,
                        double theta_res_deg);

// One timestamped sensor event: either a relative odometry reading or a range
// scan of (bearing, measured distance) pairs.
struct LogEvent {
  enum class Type { kOdometry, kScan };
  Type type = Type::kOdometry;
  double t = 0.0;
  OdometryReading odom;
  std::vector<std::pair<double, double>> scan;
};

// Text log, one event per line:
//   ODOM <t> <delta_trans_m> <delta_rot_rad>
//   SCAN <t> <k> <bearing_rad> <range_m> ... (k pairs)
// Timestamps must be non-decreasing. Parse errors carry line numbers.
std::vector<LogEvent> parse_log(std::istream& is);
void write_log(std::ostream& os, std::span<const LogEvent> events);

struct PoseEstimate {
  double t = 0.0;
  Pose pose;
  double prob = 0.0;      // belief at the max-posterior state
  double entropy = 0.0;
  double active_fraction = 0.0;
  bool lost = false;      // a measurement underflowed the belief this step
  int beams_used = 0;
  int beams_rejected = 0;
};

// Per-beam filter outcome, one row of the beam CSV.
struct BeamRecord {
  double t = 0.0;
  int index = 0;
  double bearing = 0.0;
  double range = 0.0;
  bool accepted = true;
  double delta_entropy = 0.0;
  double p_short = 0.0;
};

struct RunStats {
  int odom_events = 0;
  int scans = 0;
  double total_distance = 0.0;  // meters of commanded translation
  double total_rotation = 0.0;  // radians of commanded rotation
  long beams_total = 0;
  long beams_rejected = 0;
  int underflows = 0;
  double update_seconds_total = 0.0;
  double update_seconds_max = 0.0;

  double rejected_fraction() const {
    return beams_total > 0 ? static_cast<double>(beams_rejected) / beams_total : 0.0;
  }
};

// The event loop: odometry readings are summed and folded into the belief
// lazily right before the next scan; each scan is filtered against the
// scan-start belief and the accepted beams are applied in bearing order.
class Localizer {
 public:
  // Builds the sensor table from the map and config.
  Localizer(const OccupancyGrid& map, const LocalizerConfig& config);
  // Reuses a prebuilt table; its geometry and beam parameters must match.
  Localizer(const OccupancyGrid& map, const LocalizerConfig& config, SensorTable table);

  const LocalizerConfig& config() const { return config_; }
  const OccupancyGrid& map() const { return map_; }
  const SensorTable& table() const { return table_; }
  const BeliefGrid& belief() const { return belief_; }
  BeliefGrid& belief() { return belief_; }

  // Queues a relative motion; the belief is updated at the next scan.
  void handle_odometry(const OdometryReading& reading);
  // Runs any pending motion, filters, updates, and estimates.
  PoseEstimate handle_scan(double t, std::span<const std::pair<double, double>> beams,
                           std::vector<BeamRecord>* records = nullptr);
  // Dispatches one event. Odometry events return the previous estimate with
  // the event's timestamp (the pose materializes at the next scan).
  PoseEstimate step(const LogEvent& event, std::vector<BeamRecord>* records = nullptr);

  // Folds any queued odometry into the belief immediately.
  void flush_motion();

  const PoseEstimate& last_estimate() const { return last_estimate_; }
  const RunStats& stats() const { return stats_; }

  // Replays a whole log. Writes "t,x,y,theta,prob,entropy,active_fraction"
  // rows per scan to trajectory_csv and per-beam rows to beam_csv (either may
  // be null); appends scan estimates to estimates if given.
  RunStats process_log(std::span<const LogEvent> events, std::ostream* trajectory_csv,
                       std::ostream* beam_csv,
                       std::vector<PoseEstimate>* estimates = nullptr);

  static void write_trajectory_header(std::ostream& os);
  static void write_trajectory_row(std::ostream& os, const PoseEstimate& e);
  static void write_beam_header(std::ostream& os);
  static void write_beam_row(std::ostream& os, const BeamRecord& r);
  // Reads rows produced by write_trajectory_row (header optional).
  static std::vector<PoseEstimate> parse_trajectory_csv(std::istream& is);

 private:
  void init_belief();
  PoseEstimate make_estimate(double t) const;

  OccupancyGrid map_;
  LocalizerConfig config_;
  SensorTable table_;
  BeliefGrid belief_;
  OdometryReading pending_;
  bool has_pending_ = false;
  PoseEstimate last_estimate_;
  RunStats stats_;
  double last_t_ = 0.0;
  bool seen_event_ = false;
};

}  // namespace gridloc
