#include "gridloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gridloc {

namespace {

struct Disc {
  Vec2 center;
  double radius;
};

// Distance along the ray (origin, unit direction) to the rim of a disc;
// infinity when the ray misses. A ray starting inside the disc hits at 0.
double ray_disc(const Vec2& origin, const Vec2& dir, const Disc& disc) {
  const Vec2 q{disc.center.x - origin.x, disc.center.y - origin.y};
  const double proj = q.x * dir.x + q.y * dir.y;
  const double d2 = q.x * q.x + q.y * q.y - proj * proj;
  const double r2 = disc.radius * disc.radius;
  if (d2 > r2) return std::numeric_limits<double>::infinity();
  const double s = std::sqrt(r2 - d2);
  const double t = proj - s;
  if (t >= 0.0) return t;
  if (proj + s > 0.0) return 0.0;  // origin inside the disc
  return std::numeric_limits<double>::infinity();
}

double dynamic_hit(const Pose& pose, double bearing, double max_range,
                   const std::vector<Disc>& discs) {
  const double a = pose.theta + bearing;
  const Vec2 origin{pose.x, pose.y};
  const Vec2 dir{std::cos(a), std::sin(a)};
  double best = max_range;
  for (const Disc& d : discs) best = std::min(best, ray_disc(origin, dir, d));
  return best;
}

// Samples a measured range from the binned sensor family around an expected
// obstacle distance: draw the bin from the distribution, then a uniform
// position inside it (the overflow bin reads exactly max_range).
double sample_range(const BeamModelParams& params, double expected, RandomStream& rng) {
  const BeamDistribution dist = beam_distribution(params, expected);
  const double u = rng.uniform();
  const double frac = rng.uniform();
  double cum = 0.0;
  int bin = params.n_bins;
  for (int i = 1; i <= params.n_bins; ++i) {
    cum += dist.probs[i - 1];
    if (u < cum) {
      bin = i;
      break;
    }
  }
  if (bin >= params.n_bins) return params.max_range();
  return (bin - 1 + frac) * params.delta_d;
}

bool pose_free(const OccupancyGrid& map, double x, double y) {
  return map.contains(x, y) && map.traversable(map.cell_x(x), map.cell_y(y));
}

}  // namespace

std::vector<double> ring_bearings(int k) {
  if (k < 1) throw std::invalid_argument("need at least one beam");
  std::vector<double> b(k);
  for (int i = 0; i < k; ++i) b[i] = i * kTau / k;
  return b;
}

std::vector<ScriptCommand> parse_script(std::istream& is) {
  std::vector<ScriptCommand> script;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream probe(line);
    std::string first;
    if (!(probe >> first)) continue;  // blank line
    std::istringstream ls(line);
    ScriptCommand cmd;
    if (!(ls >> cmd.translate >> cmd.rotate))
      throw ParseError("expected 'translate rotate'", line_no);
    std::string extra;
    if (ls >> extra) throw ParseError("unexpected token '" + extra + "'", line_no);
    script.push_back(cmd);
  }
  return script;
}

SimResult simulate(const OccupancyGrid& map, const SimConfig& config) {
  if (config.bearings.empty()) throw std::invalid_argument("no beam bearings configured");
  if (!(config.scan_period > 0.0)) throw std::invalid_argument("scan period must be positive");
  if (config.crowd.target_fraction < 0.0 || config.crowd.target_fraction > 1.0)
    throw std::invalid_argument("crowd target fraction must be in [0, 1]");
  config.sensor_true.validate();
  if (!pose_free(map, config.start.x, config.start.y))
    throw std::invalid_argument("start pose is not in free space");

  const bool kidnaps_enabled = config.kidnap_per_meter > 0.0;
  const double max_range = config.sensor_true.max_range();
  const int n_beams = static_cast<int>(config.bearings.size());
  RandomStream rng(config.seed);

  SimResult result;
  Pose pose = config.start;
  pose.theta = wrap_angle(pose.theta);
  double t = 0.0;
  long corrupted_total = 0;
  long beams_total = 0;
  std::vector<Disc> discs;  // crowd state, carried across scans

  for (std::size_t ci = 0; ci < config.script.size(); ++ci) {
    const ScriptCommand& cmd = config.script[ci];
    const auto steps =
        decompose({cmd.translate, cmd.rotate}, config.odometry_noise);
    for (const AtomicStep& step : steps) {
      t += config.scan_period;
      bool kidnapped = false;

      if (kidnaps_enabled) {
        const double p = config.kidnap_per_meter * std::abs(step.trans);
        if (rng.uniform() < p) {
          for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
              throw std::runtime_error("could not place a kidnap target in free space");
            const double dtheta = kPi + rng.uniform(-kPi / 2.0, kPi / 2.0);
            const double dir = rng.uniform(0.0, kTau);
            const double dist = rng.uniform(-1.0, 1.0);
            const double nx = pose.x + dist * std::cos(dir);
            const double ny = pose.y + dist * std::sin(dir);
            if (!pose_free(map, nx, ny)) continue;
            pose = {nx, ny, wrap_angle(pose.theta + dtheta)};
            break;
          }
          kidnapped = true;
          result.kidnap_times.push_back(t);
        }
      }

      // Execute the commanded step: rotate, then translate along the new
      // heading, stopping at walls only when kidnaps may have moved us.
      pose.theta = wrap_angle(pose.theta + step.rot);
      double trans = step.trans;
      if (trans != 0.0) {
        const double heading_bearing = trans > 0.0 ? 0.0 : kPi;
        const double clearance = ray_cast(map, pose, heading_bearing, std::abs(trans) + 0.05);
        if (clearance < std::abs(trans) + 0.04) {
          if (!kidnaps_enabled)
            throw std::runtime_error("script command " + std::to_string(ci) +
                                     " drives the robot into a wall");
          trans = std::copysign(std::max(0.0, clearance - 0.05), trans);
        }
        pose.x += trans * std::cos(pose.theta);
        pose.y += trans * std::sin(pose.theta);
      }
      result.total_distance += std::abs(trans);

      // Odometry reports the executed motion plus sampled noise.
      const double sigma_t = config.odometry_noise.trans_sigma_per_meter * std::abs(trans);
      const double sigma_r = config.odometry_noise.rot_sigma_per_meter * std::abs(trans) +
                             config.odometry_noise.rot_sigma_per_radian * std::abs(step.rot);
      LogEvent odo;
      odo.type = LogEvent::Type::kOdometry;
      odo.t = t;
      odo.odom.delta_trans =
          trans + rng.normal_truncated(0.0, sigma_t, config.odometry_noise.cutoff);
      odo.odom.delta_rot =
          step.rot + rng.normal_truncated(0.0, sigma_r, config.odometry_noise.cutoff);
      result.log.push_back(std::move(odo));

      // Map-expected hit per beam.
      std::vector<double> d_map(n_beams);
      for (int b = 0; b < n_beams; ++b)
        d_map[b] = ray_cast(map, pose, config.bearings[b], max_range);

      // Crowd: existing discs drift a little and stragglers are dropped, then
      // the crowd is thinned or topped up until the target number of beams is
      // geometrically blocked.
      if (config.crowd.target_fraction > 0.0) {
        for (Disc& d : discs) {
          d.center.x += rng.normal(0.0, config.crowd.walk_sigma);
          d.center.y += rng.normal(0.0, config.crowd.walk_sigma);
        }
        const double keep_radius = 1.5 * config.crowd.radius_max;
        std::erase_if(discs, [&](const Disc& d) {
          return std::hypot(d.center.x - pose.x, d.center.y - pose.y) > keep_radius;
        });

        const int target =
            static_cast<int>(std::lround(config.crowd.target_fraction * n_beams));
        auto blocked_count = [&]() {
          int c = 0;
          for (int b = 0; b < n_beams; ++b)
            if (dynamic_hit(pose, config.bearings[b], max_range, discs) < d_map[b]) ++c;
          return c;
        };
        while (blocked_count() > target && !discs.empty()) discs.pop_back();
        int added = 0;
        while (blocked_count() < target &&
               static_cast<int>(discs.size()) < config.crowd.max_obstacles &&
               added < config.crowd.max_obstacles) {
          const double ang = rng.uniform(0.0, kTau);
          const double rad = rng.uniform(config.crowd.radius_min, config.crowd.radius_max);
          discs.push_back(
              {{pose.x + rad * std::cos(ang), pose.y + rad * std::sin(ang)},
               config.crowd.disc_radius});
          ++added;
        }
      } else {
        discs.clear();
      }

      // Sample the scan.
      LogEvent scan;
      scan.type = LogEvent::Type::kScan;
      scan.t = t;
      scan.scan.reserve(n_beams);
      for (int b = 0; b < n_beams; ++b) {
        const double d_dyn = dynamic_hit(pose, config.bearings[b], max_range, discs);
        const double expected = std::min(d_map[b], d_dyn);
        const double measured = sample_range(config.sensor_true, expected, rng);
        const bool corrupted = d_dyn < d_map[b] && measured < d_map[b];
        scan.scan.emplace_back(config.bearings[b], measured);
        result.beam_flags.push_back({t, b, corrupted});
        if (corrupted) ++corrupted_total;
        ++beams_total;
      }
      result.log.push_back(std::move(scan));
      result.truth.push_back({t, pose, kidnapped});
    }
  }

  result.corrupted_fraction =
      beams_total > 0 ? static_cast<double>(corrupted_total) / beams_total : 0.0;
  return result;
}

void write_truth_csv(std::ostream& os, std::span<const TruthSample> truth) {
  os << "t,x,y,theta,kidnap_flag\n" << std::setprecision(17);
  for (const TruthSample& s : truth)
    os << s.t << ',' << s.pose.x << ',' << s.pose.y << ',' << s.pose.theta << ','
       << (s.kidnapped ? 1 : 0) << "\n";
}

std::vector<TruthSample> parse_truth_csv(std::istream& is) {
  std::vector<TruthSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("t,", 0) == 0) continue;  // header
    std::istringstream ls(line);
    TruthSample s;
    char comma;
    int flag;
    if (!(ls >> s.t >> comma >> s.pose.x >> comma >> s.pose.y >> comma >> s.pose.theta >>
          comma >> flag))
      throw ParseError("malformed ground-truth row", line_no);
    s.kidnapped = flag != 0;
    out.push_back(s);
  }
  return out;
}

void write_beam_flags_csv(std::ostream& os, std::span<const SimBeamFlag> flags) {
  os << "t,beam_index,corrupted\n" << std::setprecision(17);
  for (const SimBeamFlag& f : flags)
    os << f.t << ',' << f.index << ',' << (f.corrupted ? 1 : 0) << "\n";
}

std::vector<CorruptionWindow> estimate_corruption(std::span<const LogEvent> log,
                                                  const OccupancyGrid& map,
                                                  std::span<const TruthSample> truth,
                                                  double sigma, double max_range,
                                                  double window_seconds) {
  if (!(window_seconds > 0.0)) throw std::invalid_argument("window must be positive");
  std::vector<CorruptionWindow> windows;
  auto window_for = [&](double t) -> CorruptionWindow& {
    const auto idx = static_cast<std::size_t>(std::floor(t / window_seconds));
    while (windows.size() <= idx) {
      const double start = windows.size() * window_seconds;
      windows.push_back({start, start + window_seconds, 0, 0, 0.0});
    }
    return windows[idx];
  };

  std::size_t ti = 0;
  for (const LogEvent& ev : log) {
    if (ev.type != LogEvent::Type::kScan) continue;
    if (ti >= truth.size())
      throw std::invalid_argument("more scans than ground-truth samples");
    const TruthSample& ts = truth[ti++];
    if (std::abs(ts.t - ev.t) > 1e-9)
      throw std::invalid_argument("scan and ground-truth timestamps do not line up");
    CorruptionWindow& w = window_for(ev.t);
    for (const auto& [bearing, range] : ev.scan) {
      const double expected = ray_cast(map, ts.pose, bearing, max_range);
      ++w.beams;
      if (range < expected - 3.0 * sigma) ++w.corrupted;
    }
  }
  if (ti != truth.size())
    throw std::invalid_argument("more ground-truth samples than scans");
  for (CorruptionWindow& w : windows)
    w.fraction = w.beams > 0 ? static_cast<double>(w.corrupted) / w.beams : 0.0;
  return windows;
}

}  // namespace gridloc
