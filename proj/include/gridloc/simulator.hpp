#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "gridloc/grid_map.hpp"
#include "gridloc/localizer.hpp"
#include "gridloc/motion_model.hpp"
#include "gridloc/sensor_model.hpp"
#include "gridloc/util.hpp"

namespace gridloc {

// One scripted motion chunk: rotate in place, then drive forward. Commands
// are split into atomic steps; the robot performs one step per scan period.
struct ScriptCommand {
  double translate = 0.0;  // meters (negative = backwards)
  double rotate = 0.0;     // radians
};

// Disc-shaped dynamic obstacles ("people") that persist from scan to scan,
// drifting by a random walk. Before each scan the crowd is topped up (or
// thinned) until the requested fraction of beams is geometrically blocked,
// so corruption is correlated over time the way a real crowd is.
struct CrowdConfig {
  double target_fraction = 0.0;  // fraction of beams to corrupt, in [0, 1]
  double radius_min = 0.4;       // placement band around the robot, meters
  double radius_max = 2.5;
  double disc_radius = 0.25;
  double walk_sigma = 0.1;       // per-scan random-walk step of each disc, meters
  int max_obstacles = 64;        // simultaneous obstacle cap
};

struct SimConfig {
  Pose start;
  std::vector<ScriptCommand> script;
  MotionNoise odometry_noise;     // noise added to the odometry readings
  std::vector<double> bearings;   // beam directions relative to the heading
  BeamModelParams sensor_true;    // family used to sample measured ranges
  double scan_period = 0.25;      // seconds per simulation step
  double kidnap_per_meter = 0.0;  // teleport probability per meter driven
  CrowdConfig crowd;
  std::uint64_t seed = 1;
};

// k beam bearings evenly spaced around the full circle (sonar-ring layout).
std::vector<double> ring_bearings(int k);

// Script file: one "translate_m rotate_rad" pair per line, '#' comments and
// blank lines ignored. Parse errors carry line numbers.
std::vector<ScriptCommand> parse_script(std::istream& is);

struct TruthSample {
  double t = 0.0;
  Pose pose;
  bool kidnapped = false;  // a teleport happened since the previous sample
};

struct SimBeamFlag {
  double t = 0.0;
  int index = 0;
  bool corrupted = false;  // the reading reflects a dynamic obstacle, not the map
};

struct SimResult {
  std::vector<LogEvent> log;         // alternating ODOM/SCAN events
  std::vector<TruthSample> truth;    // one sample per scan
  std::vector<SimBeamFlag> beam_flags;
  std::vector<double> kidnap_times;
  double total_distance = 0.0;
  double corrupted_fraction = 0.0;   // over all beams of the run
};

// Runs the script and synthesizes the sensor log. Deterministic in the seed.
// The true pose follows the script exactly (plus kidnaps); odometry readings
// are the executed motion plus sampled noise; each beam is sampled from the
// sensor family around the nearest of (map hit, dynamic-obstacle hit) and
// flagged corrupted when a dynamic obstacle shortened it below the map hit.
// A command that would drive through a wall raises std::runtime_error naming
// the command, unless kidnaps are enabled, in which case the translation is
// clipped just short of the wall (a teleport can strand the robot anywhere).
SimResult simulate(const OccupancyGrid& map, const SimConfig& config);

// Ground-truth CSV "t,x,y,theta,kidnap_flag" and per-beam corruption CSV
// "t,beam_index,corrupted".
void write_truth_csv(std::ostream& os, std::span<const TruthSample> truth);
std::vector<TruthSample> parse_truth_csv(std::istream& is);
void write_beam_flags_csv(std::ostream& os, std::span<const SimBeamFlag> flags);

struct CorruptionWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  long beams = 0;
  long corrupted = 0;
  double fraction = 0.0;
};

// Reference-pose corruption estimate: a beam counts as corrupted when its
// measured range falls short of the map-predicted range at the true pose by
// more than 3 sigma, aggregated into fixed time windows. Truth samples must
// align one-to-one with the scans in the log.
std::vector<CorruptionWindow> estimate_corruption(std::span<const LogEvent> log,
                                                  const OccupancyGrid& map,
                                                  std::span<const TruthSample> truth,
                                                  double sigma, double max_range,
                                                  double window_seconds = 300.0);

}  // namespace gridloc
