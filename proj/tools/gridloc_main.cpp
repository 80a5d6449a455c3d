#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridloc/evaluation.hpp"
#include "gridloc/filters.hpp"
#include "gridloc/grid_map.hpp"
#include "gridloc/localizer.hpp"
#include "gridloc/sensor_model.hpp"
#include "gridloc/simulator.hpp"

namespace {

using nlohmann::json;

// File-level problems (missing/unreadable/ill-formed inputs) exit with 2;
// anything else unexpected exits with 3.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw InputError("cannot open input file: " + path);
  return is;
}

std::ofstream open_output(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw InputError("cannot open output file: " + path);
  return os;
}

gridloc::OccupancyGrid load_map(const std::string& path) {
  auto is = open_input(path);
  try {
    return gridloc::OccupancyGrid::load(is);
  } catch (const gridloc::ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

struct SimulateOptions {
  std::string map_path, script_path;
  std::string out_log, out_truth, out_flags;
  double start_x = 0.0, start_y = 0.0, start_theta = 0.0;
  int beams = 16;
  double sensor_sigma = 0.1, sensor_c_r = 0.02, sensor_c_d = 0.95;
  int sensor_n_bins = 64;
  double max_range = 5.0;
  double trans_sigma_per_meter = 0.05, rot_sigma_per_meter = 0.02, rot_sigma_per_radian = 0.05;
  double scan_period = 0.25;
  double crowd_fraction = 0.0;
  double kidnap_per_meter = 0.0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateOptions& o) {
  const auto map = load_map(o.map_path);
  gridloc::SimConfig cfg;
  cfg.start = {o.start_x, o.start_y, o.start_theta};
  {
    auto is = open_input(o.script_path);
    try {
      cfg.script = gridloc::parse_script(is);
    } catch (const gridloc::ParseError& e) {
      throw InputError(o.script_path + ": " + e.what());
    }
  }
  cfg.bearings = gridloc::ring_bearings(o.beams);
  cfg.sensor_true = gridloc::BeamModelParams::create(o.sensor_sigma, o.sensor_c_r,
                                                     o.sensor_c_d, o.sensor_n_bins,
                                                     o.max_range);
  cfg.odometry_noise.trans_sigma_per_meter = o.trans_sigma_per_meter;
  cfg.odometry_noise.rot_sigma_per_meter = o.rot_sigma_per_meter;
  cfg.odometry_noise.rot_sigma_per_radian = o.rot_sigma_per_radian;
  cfg.scan_period = o.scan_period;
  cfg.crowd.target_fraction = o.crowd_fraction;
  cfg.kidnap_per_meter = o.kidnap_per_meter;
  cfg.seed = o.seed;

  const gridloc::SimResult result = gridloc::simulate(map, cfg);

  {
    auto os = open_output(o.out_log);
    gridloc::write_log(os, result.log);
  }
  if (!o.out_truth.empty()) {
    auto os = open_output(o.out_truth);
    gridloc::write_truth_csv(os, result.truth);
  }
  if (!o.out_flags.empty()) {
    auto os = open_output(o.out_flags);
    gridloc::write_beam_flags_csv(os, result.beam_flags);
  }

  json j;
  j["scans"] = result.truth.size();
  j["total_distance_m"] = result.total_distance;
  j["corrupted_fraction"] = result.corrupted_fraction;
  j["kidnap_times"] = result.kidnap_times;
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct LocalizeOptions {
  std::string map_path, log_path, config_path, table_path;
  std::string out_trajectory, out_beams, out_snapshot;
  std::string filter_override;
  double cell_size_override = -1.0;
  double epsilon_scale_override = -1.0;
};

int run_localize(const LocalizeOptions& o) {
  const auto map = load_map(o.map_path);

  gridloc::LocalizerConfig cfg;
  if (!o.config_path.empty()) {
    auto is = open_input(o.config_path);
    try {
      cfg = gridloc::parse_config(is);
    } catch (const gridloc::ParseError& e) {
      throw InputError(o.config_path + ": " + e.what());
    }
  }
  if (!o.filter_override.empty()) cfg.filter = gridloc::parse_filter_kind(o.filter_override);
  if (o.cell_size_override > 0.0) cfg.cell_size = o.cell_size_override;
  if (o.epsilon_scale_override >= 0.0) cfg.epsilon_scale = o.epsilon_scale_override;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("config: ") + e.what());
  }

  std::vector<gridloc::LogEvent> events;
  {
    auto is = open_input(o.log_path);
    try {
      events = gridloc::parse_log(is);
    } catch (const gridloc::ParseError& e) {
      throw InputError(o.log_path + ": " + e.what());
    }
  }

  std::optional<gridloc::Localizer> loc;
  if (!o.table_path.empty()) {
    auto is = open_input(o.table_path, true);
    loc.emplace(map, cfg, gridloc::SensorTable::load(is));
  } else {
    loc.emplace(map, cfg);
  }

  std::ofstream traj_os, beam_os;
  if (!o.out_trajectory.empty()) traj_os = open_output(o.out_trajectory);
  if (!o.out_beams.empty()) beam_os = open_output(o.out_beams);
  const gridloc::RunStats stats = loc->process_log(
      events, o.out_trajectory.empty() ? nullptr : &traj_os,
      o.out_beams.empty() ? nullptr : &beam_os);

  if (!o.out_snapshot.empty()) {
    auto os = open_output(o.out_snapshot);
    loc->belief().write_snapshot_pgm(os);
  }

  const gridloc::PoseEstimate& last = loc->last_estimate();
  json j;
  j["scans"] = stats.scans;
  j["odom_events"] = stats.odom_events;
  j["total_distance_m"] = stats.total_distance;
  j["beams_total"] = stats.beams_total;
  j["beams_rejected"] = stats.beams_rejected;
  j["rejected_fraction"] = stats.rejected_fraction();
  j["underflows"] = stats.underflows;
  j["final"] = {{"t", last.t},
                {"x", last.pose.x},
                {"y", last.pose.y},
                {"theta", last.pose.theta},
                {"prob", last.prob},
                {"entropy", last.entropy},
                {"active_fraction", last.active_fraction}};
  std::cout << j.dump(2) << "\n";
  // Wall-clock timing is a property of the machine, not the run; keep it out
  // of the reproducible output stream.
  std::cerr << "update time: total " << stats.update_seconds_total << " s, max "
            << stats.update_seconds_max << " s over " << stats.scans << " scans\n";
  return 0;
}

struct FitOptions {
  std::string pairs_path;
  int n_bins = 64;
  double max_range = 0.0;  // 0 = auto
};

int run_fit(const FitOptions& o) {
  std::vector<std::pair<double, double>> pairs;
  {
    auto is = open_input(o.pairs_path);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      double e, m;
      char comma;
      if (!(ls >> e >> comma >> m)) {
        if (line_no == 1) continue;  // header row
        throw InputError(o.pairs_path + ": line " + std::to_string(line_no) +
                         ": expected 'expected,measured'");
      }
      pairs.emplace_back(e, m);
    }
  }
  const gridloc::FitResult fit =
      o.max_range > 0.0 ? gridloc::fit_parameters(pairs, o.n_bins, o.max_range)
                        : gridloc::fit_parameters(pairs);
  json j;
  j["sigma"] = fit.params.sigma;
  j["c_r"] = fit.params.c_r;
  j["c_d"] = fit.params.c_d;
  j["n_bins"] = fit.params.n_bins;
  j["max_range"] = fit.params.max_range();
  j["nll"] = fit.nll;
  j["sweeps"] = fit.sweeps;
  j["pairs"] = pairs.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct BuildTableOptions {
  std::string map_path, out_path;
  double sigma = 0.15, c_r = 0.01, c_d = 0.9;
  int n_bins = 64;
  double max_range = 5.0;
  int theta_bins = 90;
  double cell_size = 0.0;
};

int run_build_table(const BuildTableOptions& o) {
  const auto map = load_map(o.map_path);
  const auto params =
      gridloc::BeamModelParams::create(o.sigma, o.c_r, o.c_d, o.n_bins, o.max_range);
  const auto table = gridloc::SensorTable::build(map, params, o.theta_bins, o.cell_size);
  auto os = open_output(o.out_path, true);
  table.save(os);
  json j;
  j["nx"] = table.nx();
  j["ny"] = table.ny();
  j["theta_bins"] = table.theta_bins();
  j["cell_size"] = table.cell_size();
  j["n_bins"] = table.params().n_bins;
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct EvalOptions {
  std::string trajectory_path, truth_path;
  double threshold = 0.45;
  double min_duration = 20.0;
  double hold = 10.0;
};

int run_eval(const EvalOptions& o) {
  std::vector<gridloc::PoseEstimate> estimates;
  {
    auto is = open_input(o.trajectory_path);
    try {
      estimates = gridloc::Localizer::parse_trajectory_csv(is);
    } catch (const gridloc::ParseError& e) {
      throw InputError(o.trajectory_path + ": " + e.what());
    }
  }
  std::vector<gridloc::TruthSample> truth;
  {
    auto is = open_input(o.truth_path);
    try {
      truth = gridloc::parse_truth_csv(is);
    } catch (const gridloc::ParseError& e) {
      throw InputError(o.truth_path + ": " + e.what());
    }
  }

  gridloc::AlignedTrace trace;
  try {
    trace = gridloc::align_trace(estimates, truth);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::vector<double> onsets;
  for (const auto& s : truth)
    if (s.kidnapped) onsets.push_back(s.t);

  const double failure =
      gridloc::tracking_failure_fraction(trace, o.threshold, o.min_duration);
  const gridloc::RecoveryReport rec =
      gridloc::recovery_times(trace, onsets, o.threshold, o.hold);

  double sum = 0.0;
  for (const double d : trace.deviation) sum += d;

  json j;
  j["samples"] = trace.t.size();
  j["failure_fraction"] = failure;
  j["mean_error_m"] = trace.t.empty() ? 0.0 : sum / trace.t.size();
  j["kidnaps"] = onsets.size();
  j["merged_onsets"] = rec.merged_onsets;
  j["recoveries"] = json::array();
  for (const auto& r : rec.recoveries)
    j["recoveries"].push_back(
        {{"onset", r.onset_t}, {"seconds", r.seconds}, {"censored", r.censored}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SweepOptions {
  std::string map_path, script_path, out_path;
  std::vector<double> cell_sizes{0.15, 0.3, 0.6};
  double start_x = 0.0, start_y = 0.0, start_theta = 0.0;
  int beams = 16;
  double max_range = 5.0;
  std::uint64_t seed = 1;
};

int run_sweep(const SweepOptions& o) {
  const auto map = load_map(o.map_path);
  gridloc::SimConfig sim;
  sim.start = {o.start_x, o.start_y, o.start_theta};
  {
    auto is = open_input(o.script_path);
    sim.script = gridloc::parse_script(is);
  }
  sim.bearings = gridloc::ring_bearings(o.beams);
  sim.sensor_true = gridloc::BeamModelParams::create(0.1, 0.02, 0.95, 64, o.max_range);
  sim.odometry_noise.trans_sigma_per_meter = 0.05;
  sim.odometry_noise.rot_sigma_per_meter = 0.02;
  sim.odometry_noise.rot_sigma_per_radian = 0.05;
  sim.seed = o.seed;

  gridloc::LocalizerConfig base;
  base.sensor_sigma = 0.1;
  base.sensor_c_r = 0.02;
  base.sensor_c_d = 0.95;
  base.sensor_max_range = o.max_range;

  const auto rows = gridloc::resolution_sweep(map, sim, base, o.cell_sizes);
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"cell_size", r.cell_size},
                 {"localized", r.localized},
                 {"global_loc_seconds", r.localized ? json(r.global_loc_seconds) : json()},
                 {"mean_error_m", r.localized ? json(r.mean_error) : json()},
                 {"update_seconds_mean", r.update_seconds_mean}});
  if (!o.out_path.empty()) {
    auto os = open_output(o.out_path);
    os << "cell_size,localized,global_loc_seconds,mean_error_m,update_seconds_mean\n";
    for (const auto& r : rows)
      os << r.cell_size << ',' << (r.localized ? 1 : 0) << ','
         << (r.localized ? r.global_loc_seconds : -1.0) << ','
         << (r.localized ? r.mean_error : -1.0) << ',' << r.update_seconds_mean << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-based Markov localization toolkit"};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a sensor log from a scripted run");
  sim_cmd->add_option("--map", sim.map_path, "occupancy map file")->required();
  sim_cmd->add_option("--script", sim.script_path, "motion script file")->required();
  sim_cmd->add_option("--out-log", sim.out_log, "output sensor log")->required();
  sim_cmd->add_option("--out-truth", sim.out_truth, "output ground-truth CSV");
  sim_cmd->add_option("--out-flags", sim.out_flags, "output per-beam corruption CSV");
  sim_cmd->add_option("--start-x", sim.start_x, "start x, meters");
  sim_cmd->add_option("--start-y", sim.start_y, "start y, meters");
  sim_cmd->add_option("--start-theta", sim.start_theta, "start heading, radians");
  sim_cmd->add_option("--beams", sim.beams, "beams per scan (ring layout)");
  sim_cmd->add_option("--sensor-sigma", sim.sensor_sigma, "true range noise sigma, meters");
  sim_cmd->add_option("--sensor-c-r", sim.sensor_c_r, "true unmapped-return chance per bin");
  sim_cmd->add_option("--sensor-c-d", sim.sensor_c_d, "true detection chance");
  sim_cmd->add_option("--sensor-n-bins", sim.sensor_n_bins, "range bins");
  sim_cmd->add_option("--max-range", sim.max_range, "sensor max range, meters");
  sim_cmd->add_option("--trans-sigma-per-meter", sim.trans_sigma_per_meter,
                      "odometry translation noise per meter");
  sim_cmd->add_option("--rot-sigma-per-meter", sim.rot_sigma_per_meter,
                      "odometry rotation noise per meter");
  sim_cmd->add_option("--rot-sigma-per-radian", sim.rot_sigma_per_radian,
                      "odometry rotation noise per radian");
  sim_cmd->add_option("--scan-period", sim.scan_period, "seconds per step");
  sim_cmd->add_option("--crowd-fraction", sim.crowd_fraction,
                      "target fraction of beams blocked by dynamic obstacles");
  sim_cmd->add_option("--kidnap-per-meter", sim.kidnap_per_meter,
                      "teleport probability per meter");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");

  LocalizeOptions loc;
  auto* loc_cmd = app.add_subcommand("localize", "Replay a sensor log against a map");
  loc_cmd->add_option("--map", loc.map_path, "occupancy map file")->required();
  loc_cmd->add_option("--log", loc.log_path, "sensor log file")->required();
  loc_cmd->add_option("--config", loc.config_path, "key-value config file");
  loc_cmd->add_option("--table", loc.table_path, "prebuilt sensor table blob");
  loc_cmd->add_option("--out-trajectory", loc.out_trajectory, "trajectory CSV");
  loc_cmd->add_option("--out-beams", loc.out_beams, "per-beam decision CSV");
  loc_cmd->add_option("--out-snapshot", loc.out_snapshot, "final belief snapshot PGM");
  loc_cmd->add_option("--filter", loc.filter_override, "none|entropy|distance");
  loc_cmd->add_option("--cell-size", loc.cell_size_override, "grid cell size, meters");
  loc_cmd->add_option("--epsilon-scale", loc.epsilon_scale_override,
                      "selective-update threshold scale (0 = full updates)");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit-sensor", "Fit beam-model parameters to data");
  fit_cmd->add_option("--pairs", fit.pairs_path, "CSV of expected,measured pairs")->required();
  fit_cmd->add_option("--n-bins", fit.n_bins, "range bins");
  fit_cmd->add_option("--max-range", fit.max_range, "max range, meters (0 = auto)");

  BuildTableOptions bt;
  auto* bt_cmd = app.add_subcommand("build-table", "Precompute the sensor lookup table");
  bt_cmd->add_option("--map", bt.map_path, "occupancy map file")->required();
  bt_cmd->add_option("--out", bt.out_path, "output table blob")->required();
  bt_cmd->add_option("--sigma", bt.sigma, "range noise sigma, meters");
  bt_cmd->add_option("--c-r", bt.c_r, "unmapped-return chance per bin");
  bt_cmd->add_option("--c-d", bt.c_d, "detection chance");
  bt_cmd->add_option("--n-bins", bt.n_bins, "range bins");
  bt_cmd->add_option("--max-range", bt.max_range, "max range, meters");
  bt_cmd->add_option("--theta-bins", bt.theta_bins, "direction bins");
  bt_cmd->add_option("--cell-size", bt.cell_size, "table cell size (0 = map resolution)");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "Score a trajectory against ground truth");
  ev_cmd->add_option("--trajectory", ev.trajectory_path, "trajectory CSV")->required();
  ev_cmd->add_option("--truth", ev.truth_path, "ground-truth CSV")->required();
  ev_cmd->add_option("--threshold", ev.threshold, "lost threshold, meters");
  ev_cmd->add_option("--min-duration", ev.min_duration, "lost persistence, seconds");
  ev_cmd->add_option("--hold", ev.hold, "recovery hold, seconds");

  SweepOptions sw;
  auto* sw_cmd = app.add_subcommand("sweep", "Run the localizer across cell sizes");
  sw_cmd->add_option("--map", sw.map_path, "occupancy map file")->required();
  sw_cmd->add_option("--script", sw.script_path, "motion script file")->required();
  sw_cmd->add_option("--cell-sizes", sw.cell_sizes, "cell sizes to test, meters");
  sw_cmd->add_option("--out", sw.out_path, "output CSV");
  sw_cmd->add_option("--start-x", sw.start_x, "start x, meters");
  sw_cmd->add_option("--start-y", sw.start_y, "start y, meters");
  sw_cmd->add_option("--start-theta", sw.start_theta, "start heading, radians");
  sw_cmd->add_option("--beams", sw.beams, "beams per scan");
  sw_cmd->add_option("--max-range", sw.max_range, "sensor max range, meters");
  sw_cmd->add_option("--seed", sw.seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (loc_cmd->parsed()) return run_localize(loc);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (bt_cmd->parsed()) return run_build_table(bt);
    if (ev_cmd->parsed()) return run_eval(ev);
    if (sw_cmd->parsed()) return run_sweep(sw);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gridloc::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
