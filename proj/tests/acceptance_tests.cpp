// Release gate: eleven end-to-end checks, one PASS/FAIL line each.
// Usage: acceptance_tests <path-to-gridloc-cli>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gridloc/evaluation.hpp"
#include "gridloc/grid_map.hpp"
#include "gridloc/localizer.hpp"
#include "gridloc/sensor_model.hpp"
#include "gridloc/simulator.hpp"
#include "gridloc/util.hpp"
#include "../tests/test_support.hpp"

using namespace gridloc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// Independent reference for the beam distribution: explicit branch tree over
// "mapped obstacle detected in bin i" and "unmapped obstacle returns in bin
// i" events, with its own erfc-based Gaussian discretization.
std::vector<double> tree_distribution(const BeamModelParams& p, double expected) {
  const int n = p.n_bins;
  std::vector<double> pm(n);
  double window = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto upper = [&](double x) {
      return 0.5 * std::erfc((x - expected) / (p.sigma * std::sqrt(2.0)));
    };
    pm[i] = upper(i * p.delta_d) - upper((i + 1) * p.delta_d);
    window += pm[i];
  }
  if (window <= 0.0) {
    std::fill(pm.begin(), pm.end(), 0.0);
    pm[expected <= 0.0 ? 0 : n - 1] = 1.0;
  } else {
    for (double& m : pm) m /= window;
  }

  std::vector<double> probs(n, 0.0);
  double no_unknown_yet = 1.0;
  double seen = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const double pa = no_unknown_yet * p.c_d * pm[i];
    const double pb = (1.0 - seen) * p.c_r;
    probs[i] = pa * pb + pa * (1.0 - pb) + (1.0 - pa) * pb;
    seen += probs[i];
    no_unknown_yet *= 1.0 - p.c_r;
  }
  probs[n - 1] = 1.0 - seen;

  double negative = 0.0;
  for (double q : probs)
    if (q < 0.0) negative += q;
  if (negative < 0.0) {
    double total = 0.0;
    for (double& q : probs) {
      if (q < 0.0) q = 0.0;
      total += q;
    }
    for (double& q : probs) q /= total;
  }
  return probs;
}

// ---------------------------------------------------------------------------
// 1. Every per-beam distribution sums to one, across the parameter grid.
bool criterion_normalization(std::string& detail) {
  const double c_grid[] = {0.0, 0.1, 0.5, 1.0};
  const double s_grid[] = {0.5, 2.0};  // sigma in units of the bin width
  RandomStream rng(90210);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int n = 2 + static_cast<int>(rng.uniform(0.0, 63.0));
    const double max_range = rng.uniform(1.0, 8.0);
    const double delta = max_range / n;
    const auto p = BeamModelParams::create(
        s_grid[static_cast<int>(rng.uniform(0.0, 2.0))] * delta,
        c_grid[static_cast<int>(rng.uniform(0.0, 4.0))],
        c_grid[static_cast<int>(rng.uniform(0.0, 4.0))], n, max_range);
    const BeamDistribution d = beam_distribution(p, rng.uniform(0.0, max_range));
    double sum = 0.0;
    for (const double q : d.probs) sum += q;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  const double secs = seconds_since(t0);
  detail = fmt("worst |sum-1| = %.3g over 1000 draws, %.3f s", worst, secs);
  return worst <= 1e-9 && secs < 1.0;
}

// ---------------------------------------------------------------------------
// 2. The incremental bin walk equals the exhaustive event-tree reference on
// every small instance of the parameter grid.
bool criterion_event_tree(std::string& detail) {
  const double c_grid[] = {0.0, 0.1, 0.5, 1.0};
  const double s_grid[] = {0.5, 2.0};
  const double max_range = 4.0;
  double worst = 0.0;
  long instances = 0;
  for (int n = 2; n <= 8; ++n) {
    const double delta = max_range / n;
    for (const double sb : s_grid)
      for (const double cr : c_grid)
        for (const double cd : c_grid) {
          const auto p = BeamModelParams::create(sb * delta, cr, cd, n, max_range);
          std::vector<double> expecteds = {0.0, 0.13 * max_range, max_range};
          for (int b = 1; b <= n; ++b) expecteds.push_back(p.bin_center(b));
          for (const double e : expecteds) {
            const BeamDistribution got = beam_distribution(p, e);
            const std::vector<double> want = tree_distribution(p, e);
            for (int i = 0; i < n; ++i)
              worst = std::max(worst, std::abs(got.probs[i] - want[i]));
            ++instances;
          }
        }
  }
  detail = fmt("max abs diff = %.3g over %ld instances", worst, instances);
  return worst < 1e-12;
}

// ---------------------------------------------------------------------------
// 3. Parameters fitted from self-generated samples land within 10%.
double sample_range_from(const BeamDistribution& d, const BeamModelParams& p,
                         RandomStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    acc += d.probs[i];
    if (u < acc) return i + 1 == d.n() ? p.max_range() : (i + rng.uniform()) * p.delta_d;
  }
  return p.max_range();
}

bool criterion_fit_round_trip(std::string& detail) {
  const auto truth = BeamModelParams::create(0.12, 0.04, 0.85, 32, 4.0);
  RandomStream rng(1861);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(100000);
  for (int k = 0; k < 100000; ++k) {
    const double expected = rng.uniform(0.3, 3.7);
    const BeamDistribution d = beam_distribution(truth, expected);
    pairs.emplace_back(expected, sample_range_from(d, truth, rng));
  }
  const FitResult fit = fit_parameters(pairs, truth.n_bins, truth.max_range());
  const double es = std::abs(fit.params.sigma - truth.sigma) / truth.sigma;
  const double er = std::abs(fit.params.c_r - truth.c_r) / truth.c_r;
  const double ed = std::abs(fit.params.c_d - truth.c_d) / truth.c_d;
  detail = fmt("rel err sigma %.3f, c_r %.3f, c_d %.3f (fit %.3f/%.3f/%.3f)", es, er, ed,
               fit.params.sigma, fit.params.c_r, fit.params.c_d);
  return es <= 0.10 && er <= 0.10 && ed <= 0.10;
}

// ---------------------------------------------------------------------------
// 4. Door corridor: uniform -> two door hypotheses -> peaks shifted by the
// commanded motion -> a single mode at the correct door, matching a
// hand-rolled histogram filter state for state.

// Two-door corridor at 0.5 m cells; door alcoves above columns 3 and 9.
OccupancyGrid two_door_corridor() {
  return test::make_map({
      "####################",
      "###.#####.##########",
      "#..................#",
      "####################",
  }, 0.5);
}

bool is_door_column(int ix) { return ix == 3 || ix == 9; }

// Closed-form expected range from a cell center along an axis direction
// (quarter 0..3 = +x, +y, -x, -y), derived from the corridor geometry alone.
double corridor_expected(int ix, int iy, int quarter) {
  const double x = ix * 0.5 + 0.25;
  if (iy == 1) {
    switch (quarter) {
      case 0: return 9.5 - x;
      case 1: return is_door_column(ix) ? 0.75 : 0.25;
      case 2: return x - 0.5;
      default: return 0.25;
    }
  }
  // Alcove cells: boxed in except through the corridor below.
  return quarter == 3 ? 0.75 : 0.25;
}

LocalizerConfig corridor_config() {
  LocalizerConfig c;
  c.cell_size = 0.5;
  c.theta_res_deg = 90.0;
  c.trans_sigma_per_meter = 0.0;
  c.rot_sigma_per_meter = 0.0;
  c.rot_sigma_per_radian = 0.0;
  c.max_atomic_trans = 1.0;
  c.sensor_sigma = 0.08;
  c.sensor_c_r = 0.02;
  c.sensor_c_d = 0.98;
  c.sensor_n_bins = 32;
  c.sensor_max_range = 8.0;
  c.epsilon_scale = 0.0;
  return c;
}

// Hand-rolled histogram filter over the same state space: likelihood rows
// keyed by the expected-range bin, lattice shifts with wall mass dropped.
struct ReferenceFilter {
  const OccupancyGrid& map;
  BeamModelParams params;
  std::vector<double> p;  // [it][iy][ix], 4 x 3-ish layers over the map grid
  int nx, ny;

  explicit ReferenceFilter(const OccupancyGrid& m, const BeamModelParams& bp)
      : map(m), params(bp), nx(m.width_cells()), ny(m.height_cells()) {
    p.assign(static_cast<std::size_t>(4) * ny * nx, 0.0);
    long free_cells = 0;
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix)
        if (map.traversable(ix, iy)) ++free_cells;
    const double u = 1.0 / (4.0 * free_cells);
    for (int it = 0; it < 4; ++it)
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
          if (map.traversable(ix, iy)) at(ix, iy, it) = u;
  }

  double& at(int ix, int iy, int it) {
    return p[(static_cast<std::size_t>(it) * ny + iy) * nx + ix];
  }
  double get(int ix, int iy, int it) const {
    return p[(static_cast<std::size_t>(it) * ny + iy) * nx + ix];
  }

  void normalize() {
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
  }

  void scan_beam(double bearing, double range) {
    const int mb = params.measured_bin(range);
    std::vector<std::vector<double>> rows(params.n_bins + 1);
    for (int it = 0; it < 4; ++it) {
      const int quarter =
          (it + static_cast<int>(std::llround(bearing / (kTau / 4))) + 8) % 4;
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
          if (!map.traversable(ix, iy)) continue;
          const int eb = params.measured_bin(corridor_expected(ix, iy, quarter));
          if (rows[eb].empty())
            rows[eb] = beam_distribution(params, params.bin_center(eb)).probs;
          at(ix, iy, it) *= rows[eb][mb - 1];
        }
    }
    normalize();
  }

  // One atomic forward step of `cells` grid cells along each layer's heading.
  void move_cells(int cells) {
    std::vector<double> next(p.size(), 0.0);
    const int dx[] = {1, 0, -1, 0}, dy[] = {0, 1, 0, -1};
    for (int it = 0; it < 4; ++it)
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
          const double v = get(ix, iy, it);
          if (v == 0.0) continue;
          const int tx = ix + cells * dx[it], ty = iy + cells * dy[it];
          if (tx < 0 || tx >= nx || ty < 0 || ty >= ny || !map.traversable(tx, ty))
            continue;  // mass that drives into a wall is dropped
          next[(static_cast<std::size_t>(it) * ny + ty) * nx + tx] += v;
        }
    p.swap(next);
    normalize();
  }
};

bool criterion_door_corridor(std::string& detail) {
  const OccupancyGrid map = two_door_corridor();
  const LocalizerConfig cfg = corridor_config();
  Localizer loc(map, cfg);
  ReferenceFilter ref(map, cfg.beam_params());

  double worst = 0.0;
  const auto compare = [&]() {
    for (int it = 0; it < 4; ++it)
      for (int iy = 0; iy < map.height_cells(); ++iy)
        for (int ix = 0; ix < map.width_cells(); ++ix)
          worst = std::max(worst, std::abs(loc.belief().effective_value(ix, iy, it) -
                                           ref.get(ix, iy, it)));
  };

  // Uniform start.
  const double uniform_p = 1.0 / (4.0 * map.free_cell_count());
  if (std::abs(loc.belief().max_posterior().prob - uniform_p) > 1e-15) {
    detail = "prior is not uniform";
    return false;
  }

  const auto x_marginal = [&](int ix) {
    double s = 0.0;
    for (int it = 0; it < 4; ++it)
      for (int iy = 0; iy < map.height_cells(); ++iy) s += loc.belief().effective_value(ix, iy, it);
    return s;
  };

  // Scan 1: a door overhead. Both doors (and their heading-mirrored alcove
  // twins at the same columns) survive: the x-marginal is an even split.
  const std::pair<double, double> door_scan[] = {{-kTau / 4, 0.25}, {kTau / 4, 0.75}};
  loc.handle_scan(0.25, door_scan);
  for (const auto& [bearing, range] : door_scan) ref.scan_beam(bearing, range);
  compare();
  // Wall-facing cells keep a small likelihood floor, so the two door columns
  // share just under all of the mass, split near-evenly.
  const double m3 = x_marginal(3), m9 = x_marginal(9);
  const bool bimodal = m3 > 0.45 && m9 > 0.45 && m3 + m9 > 0.95;

  // Drive two doors worth of corridor. Sideways-heading copies die in the
  // walls; the two surviving peaks shift with the motion.
  loc.handle_odometry({3.0, 0.0});
  loc.flush_motion();
  for (int s = 0; s < 3; ++s) ref.move_cells(2);
  compare();
  const double m9s = x_marginal(9), m15 = x_marginal(15);
  const bool shifted = m9s > 0.45 && m9s < 0.55 && m15 > 0.45 && m15 < 0.55 &&
                       m9s + m15 > 0.95;

  // Scan 2: a door again. Only the true pose (started at door 3, now at door
  // 9) explains it.
  const PoseEstimate est = loc.handle_scan(0.75, door_scan);
  for (const auto& [bearing, range] : door_scan) ref.scan_beam(bearing, range);
  compare();
  const bool unimodal = est.prob > 0.95 && std::abs(est.pose.x - 4.75) < 1e-9 &&
                        std::abs(est.pose.y - 0.75) < 1e-9;

  detail = fmt("split %.4f/%.4f, shifted %.4f/%.4f, final P=%.4f at x=%.2f, "
               "max |impl-oracle| = %.2g",
               m3, m9, m9s, m15, est.prob, est.pose.x, worst);
  return bimodal && shifted && unimodal && worst < 1e-12;
}

// ---------------------------------------------------------------------------
// 5. Selective updates match full updates state for state on a scripted run.
bool criterion_selective_fidelity(std::string& detail) {
  OccupancyGrid map = test::box_world(30, 30, 0.2);
  for (int iy = 10; iy <= 12; ++iy)
    for (int ix = 18; ix <= 20; ++ix) map.set(ix, iy, Occupancy::kOccupied);

  SimConfig sim;
  sim.start = {1.5, 1.5, 0.0};
  for (int lap = 0; lap < 3; ++lap)
    for (int side = 0; side < 4; ++side) {
      sim.script.push_back({3.0, 0.0});
      sim.script.push_back({0.0, kTau / 4});
    }
  sim.odometry_noise.trans_sigma_per_meter = 0.05;
  sim.odometry_noise.rot_sigma_per_meter = 0.02;
  sim.odometry_noise.rot_sigma_per_radian = 0.05;
  sim.bearings = ring_bearings(8);
  sim.sensor_true = BeamModelParams::create(0.1, 0.02, 0.95, 32, 5.0);
  sim.seed = 4242;
  const SimResult run = simulate(map, sim);

  LocalizerConfig cfg;
  cfg.cell_size = 0.2;
  cfg.theta_res_deg = 45.0;
  cfg.sensor_sigma = 0.1;
  cfg.sensor_c_r = 0.02;
  cfg.sensor_c_d = 0.95;
  cfg.sensor_n_bins = 32;
  cfg.sensor_max_range = 5.0;
  LocalizerConfig full = cfg;
  full.epsilon_scale = 0.0;

  Localizer selective(map, cfg);
  Localizer exhaustive(map, full);
  std::vector<PoseEstimate> es, ef;
  selective.process_log(run.log, nullptr, nullptr, &es);
  exhaustive.process_log(run.log, nullptr, nullptr, &ef);

  int mismatches = 0;
  for (std::size_t i = 0; i < es.size(); ++i)
    if (es[i].pose.x != ef[i].pose.x || es[i].pose.y != ef[i].pose.y ||
        es[i].pose.theta != ef[i].pose.theta)
      ++mismatches;

  const auto stats = selective.belief().active_cell_stats();
  detail = fmt("%d/%zu max-posterior mismatches, final active fraction %.4f, "
               "active mass %.4f",
               mismatches, es.size(), stats.fraction, stats.mass);
  return mismatches == 0 && stats.fraction <= 0.05 && stats.mass >= 0.99;
}

// ---------------------------------------------------------------------------
// 6. Table lookups beat ray-trace-plus-density queries by at least 3x on a
// 200 x 200 map, and the stored rows equal the direct computation.
bool criterion_lookup_speedup(std::string& detail) {
  OccupancyGrid map = test::box_world(200, 200, 0.15);
  RandomStream rng(606);
  for (int k = 0; k < 50; ++k) {
    const int ix = 2 + static_cast<int>(rng.uniform(0.0, 195.0));
    const int iy = 2 + static_cast<int>(rng.uniform(0.0, 195.0));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) map.set(ix + dx, iy + dy, Occupancy::kOccupied);
  }
  const auto params = BeamModelParams::create(0.15, 0.01, 0.9, 64, 5.0);
  const SensorTable table = SensorTable::build(map, params, 36, 0.15);

  for (const int k : {1, 2, 17, 40, 64}) {
    const std::vector<double> row = beam_distribution(params, params.bin_center(k)).probs;
    for (int j = 1; j <= params.n_bins; ++j)
      if (table.likelihood(k, j) != row[j - 1]) {
        detail = fmt("stored row %d differs from direct computation at bin %d", k, j);
        return false;
      }
  }

  struct Query {
    Pose pose;
    double bearing, measured;
  };
  std::vector<Query> queries;
  queries.reserve(400000);
  while (queries.size() < 400000) {
    const int ix = static_cast<int>(rng.uniform(0.0, 200.0));
    const int iy = static_cast<int>(rng.uniform(0.0, 200.0));
    if (!map.traversable(ix, iy)) continue;
    Query q;
    q.pose = {(ix + 0.5) * 0.15 + rng.uniform(-0.06, 0.06),
              (iy + 0.5) * 0.15 + rng.uniform(-0.06, 0.06), rng.uniform(0.0, kTau)};
    q.bearing = rng.uniform(0.0, kTau);
    q.measured = rng.uniform(0.0, 5.0);
    queries.push_back(q);
  }

  double sink_a = 0.0;
  const auto ta = std::chrono::steady_clock::now();
  for (const Query& q : queries)
    sink_a += table.lookup_likelihood(q.pose, {q.bearing, 5.0}, q.measured);
  const double per_a = seconds_since(ta) / queries.size();

  double sink_b = 0.0;
  const std::size_t nb = 40000;
  const auto tb = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < nb; ++i) {
    const Query& q = queries[i];
    const double expected =
        ray_cast(map, q.pose, q.bearing, params.max_range());
    const BeamDistribution d = beam_distribution(params, expected);
    sink_b += d.probs[params.measured_bin(q.measured) - 1];
  }
  const double per_b = seconds_since(tb) / nb;

  const double speedup = per_b / per_a;
  detail = fmt("%.1fx (lookup %.0f ns, ray+density %.0f ns; sinks %.3f/%.3f)", speedup,
               per_a * 1e9, per_b * 1e9, sink_a, sink_b);
  return speedup >= 3.0;
}

// ---------------------------------------------------------------------------
// Shared fixtures for the crowded-office and kidnap studies.
std::vector<ScriptCommand> office_patrol(int laps) {
  std::vector<ScriptCommand> script;
  for (int lap = 0; lap < laps; ++lap) {
    script.push_back({5.6, 0.0});
    script.push_back({0.0, kTau / 4});
    script.push_back({2.2, 0.0});
    script.push_back({0.0, kTau / 4});
    script.push_back({5.6, 0.0});
    script.push_back({0.0, kTau / 4});
    script.push_back({2.2, 0.0});
    script.push_back({0.0, kTau / 4});
  }
  return script;
}

SimConfig office_sim(int laps, std::uint64_t seed, int beams) {
  SimConfig sim;
  sim.start = {2.0, 1.0, 0.0};
  sim.script = office_patrol(laps);
  sim.odometry_noise.trans_sigma_per_meter = 0.05;
  sim.odometry_noise.rot_sigma_per_meter = 0.02;
  sim.odometry_noise.rot_sigma_per_radian = 0.05;
  sim.bearings = ring_bearings(beams);
  sim.sensor_true = BeamModelParams::create(0.1, 0.02, 0.95, 32, 5.0);
  sim.seed = seed;
  return sim;
}

// Global-localization posture: a uniform prior keeps every cell revivable
// after a teleport, and a random-reading weight well below the simulator's
// makes readings that contradict the pose decisively unlikely, so the belief
// actually moves when the evidence turns against it.
LocalizerConfig office_config(FilterKind filter) {
  LocalizerConfig cfg;
  cfg.cell_size = 0.3;
  cfg.theta_res_deg = 15.0;
  cfg.sensor_sigma = 0.1;
  cfg.sensor_c_r = 0.005;
  cfg.sensor_c_d = 0.95;
  cfg.sensor_n_bins = 32;
  cfg.sensor_max_range = 5.0;
  cfg.filter = filter;
  cfg.prior = PriorKind::kUniform;
  cfg.reset_on_underflow = true;
  return cfg;
}

std::vector<PoseEstimate> replay(const OccupancyGrid& map, const LocalizerConfig& cfg,
                                 const SimResult& run) {
  Localizer loc(map, cfg);
  std::vector<PoseEstimate> estimates;
  loc.process_log(run.log, nullptr, nullptr, &estimates);
  return estimates;
}

// 7. In a heavily crowded office, the distance filter keeps tracking while
// the unfiltered run fails, with separated confidence intervals.
bool criterion_crowd_filters(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const OccupancyGrid map = test::office_world();
  std::vector<double> ff_none, ff_dist;
  double corruption = 0.0;
  for (int seed = 1; seed <= 10; ++seed) {
    SimConfig sim = office_sim(7, 1000 + seed, 8);
    sim.crowd.target_fraction = 0.6;
    sim.crowd.walk_sigma = 0.05;
    const SimResult run = simulate(map, sim);
    corruption += run.corrupted_fraction;
    ff_none.push_back(
        tracking_failure_fraction(replay(map, office_config(FilterKind::kNone), run), run.truth));
    ff_dist.push_back(tracking_failure_fraction(
        replay(map, office_config(FilterKind::kDistance), run), run.truth));
  }
  corruption /= 10.0;
  const MeanCI none = mean_ci95(ff_none), dist = mean_ci95(ff_dist);
  const double secs = seconds_since(t0);
  detail = fmt("corruption %.2f; failure none %.3f+-%.3f vs distance %.3f+-%.3f; %.0f s",
               corruption, none.mean, none.half_width, dist.mean, dist.half_width, secs);
  return corruption >= 0.5 && dist.mean < none.mean && dist.hi() < none.lo() &&
         secs <= 600.0;
}

// 8. Kidnapped-robot runs: unfiltered and distance-filtered recover, the
// entropy filter clings to its old pose.
bool criterion_kidnap_recovery(std::string& detail) {
  const OccupancyGrid map = test::office_world();
  std::vector<double> rec_none, rec_dist, rec_entropy;
  std::vector<double> ff_dist, ff_entropy;
  int onsets = 0;
  for (int seed = 1; seed <= 12; ++seed) {
    SimConfig sim = office_sim(15, 2000 + seed, 12);
    sim.kidnap_per_meter = 0.005;
    const SimResult run = simulate(map, sim);
    onsets += static_cast<int>(run.kidnap_times.size());

    const auto collect = [&](FilterKind kind, std::vector<double>* rec,
                             std::vector<double>* ff) {
      const auto est = replay(map, office_config(kind), run);
      if (ff) ff->push_back(tracking_failure_fraction(est, run.truth));
      const RecoveryReport rep = recovery_times(est, run.truth, run.kidnap_times);
      for (const RecoveryResult& r : rep.recoveries)
        rec->push_back(r.censored ? kInf : r.seconds);
    };
    collect(FilterKind::kNone, &rec_none, nullptr);
    collect(FilterKind::kDistance, &rec_dist, &ff_dist);
    collect(FilterKind::kEntropy, &rec_entropy, &ff_entropy);
  }
  if (onsets < 3) {
    detail = fmt("only %d kidnaps drawn; scenario too short", onsets);
    return false;
  }
  const double med_none = median(rec_none), med_dist = median(rec_dist),
               med_entropy = median(rec_entropy);
  const double ffd = mean_ci95(ff_dist).mean, ffe = mean_ci95(ff_entropy).mean;
  detail = fmt("%d kidnaps; median recovery none %.1f s, distance %.1f s, entropy %s; "
               "failure distance %.3f vs entropy %.3f",
               onsets, med_none, med_dist,
               std::isfinite(med_entropy) ? fmt("%.1f s", med_entropy).c_str() : "inf",
               ffd, ffe);
  return std::isfinite(med_none) && std::isfinite(med_dist) && med_entropy > med_dist &&
         ffe > ffd;
}

// ---------------------------------------------------------------------------
// 9. With a faithful map, converged tracking error stays below the cell size
// at 15, 30 and 60 cm grids.
bool criterion_precision(std::string& detail) {
  OccupancyGrid map = test::box_world(40, 40, 0.15);
  for (int iy = 24; iy <= 27; ++iy)
    for (int ix = 10; ix <= 12; ++ix) map.set(ix, iy, Occupancy::kOccupied);
  for (int iy = 8; iy <= 9; ++iy)
    for (int ix = 26; ix <= 28; ++ix) map.set(ix, iy, Occupancy::kOccupied);

  SimConfig sim;
  sim.start = {1.0, 1.0, 0.0};
  for (int lap = 0; lap < 2; ++lap)
    for (int side = 0; side < 4; ++side) {
      sim.script.push_back({3.6, 0.0});
      sim.script.push_back({0.0, kTau / 4});
    }
  sim.odometry_noise.trans_sigma_per_meter = 0.03;
  sim.odometry_noise.rot_sigma_per_meter = 0.02;
  sim.odometry_noise.rot_sigma_per_radian = 0.03;
  sim.bearings = ring_bearings(16);
  sim.sensor_true = BeamModelParams::create(0.05, 0.005, 0.98, 64, 5.0);
  sim.seed = 99;

  LocalizerConfig base;
  base.theta_res_deg = 5.0;
  base.trans_sigma_per_meter = 0.05;
  base.rot_sigma_per_meter = 0.03;
  base.sensor_sigma = 0.05;
  base.sensor_c_r = 0.005;
  base.sensor_c_d = 0.98;
  base.sensor_n_bins = 64;
  base.sensor_max_range = 5.0;
  base.prior = PriorKind::kGaussian;
  base.prior_x = 1.0;
  base.prior_y = 1.0;
  base.prior_theta = 0.0;
  base.prior_sigma_xy = 0.25;
  base.prior_sigma_theta = 0.25;

  const double cells[] = {0.15, 0.30, 0.60};
  const auto rows = resolution_sweep(map, sim, base, cells);
  std::string parts;
  bool ok = true;
  for (const SweepRow& r : rows) {
    parts += fmt("%s%.0fcm: %.3f m", parts.empty() ? "" : ", ", r.cell_size * 100,
                 r.mean_error);
    ok = ok && r.localized && r.mean_error <= r.cell_size;
  }
  detail = "mean converged error " + parts;
  return ok;
}

// ---------------------------------------------------------------------------
// 10. Grid sizing arithmetic.
bool criterion_state_count(std::string& detail) {
  const std::size_t n = state_count(30.0, 30.0, 0.15, 2.0);
  detail = fmt("state_count(30 m, 30 m, 0.15 m, 2 deg) = %zu", n);
  return n == 7200000;
}

// ---------------------------------------------------------------------------
// 11. Re-running the command-line pipeline with the same seed reproduces
// every output byte for byte.
std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

bool criterion_determinism(const std::string& cli, std::string& detail) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gridloc_accept";
  fs::create_directories(dir);
  const auto path = [&](const char* name) { return (dir / name).string(); };

  {
    std::ofstream m(path("map.txt"));
    test::office_world().save(m);
    std::ofstream s(path("script.txt"));
    for (const ScriptCommand& c : office_patrol(2)) s << c.translate << ' ' << c.rotate << "\n";
  }

  const auto run = [&](const std::string& args, const std::string& out) {
    const std::string cmd = "\"" + cli + "\" " + args + " > " + out + " 2>/dev/null";
    return std::system(cmd.c_str()) == 0;
  };

  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    if (!run("simulate --map " + path("map.txt") + " --script " + path("script.txt") +
                 " --out-log " + path(("log_" + t + ".txt").c_str()) + " --out-truth " +
                 path(("truth_" + t + ".csv").c_str()) + " --out-flags " +
                 path(("flags_" + t + ".csv").c_str()) +
                 " --start-x 2 --start-y 1 --beams 12 --crowd-fraction 0.3"
                 " --kidnap-per-meter 0.01 --seed 5",
             path(("sim_" + t + ".json").c_str())) ||
        !run("localize --map " + path("map.txt") + " --log " +
                 path(("log_" + t + ".txt").c_str()) +
                 " --filter distance --cell-size 0.3 --out-trajectory " +
                 path(("traj_" + t + ".csv").c_str()) + " --out-beams " +
                 path(("beams_" + t + ".csv").c_str()) + " --out-snapshot " +
                 path(("snap_" + t + ".pgm").c_str()),
             path(("loc_" + t + ".json").c_str())) ||
        !run("build-table --map " + path("map.txt") +
                 " --theta-bins 24 --cell-size 0.3 --out " +
                 path(("table_" + t + ".bin").c_str()),
             path(("bt_" + t + ".json").c_str()))) {
      detail = "pipeline command failed (run " + t + ")";
      return false;
    }
  }

  const char* stems[] = {"log",  "truth", "flags", "sim",  "traj",
                         "beams", "snap",  "loc",   "table", "bt"};
  const char* exts[] = {".txt", ".csv", ".csv", ".json", ".csv",
                        ".csv", ".pgm", ".json", ".bin",  ".json"};
  for (int i = 0; i < 10; ++i) {
    const std::string a = path((std::string(stems[i]) + "_a" + exts[i]).c_str());
    const std::string b = path((std::string(stems[i]) + "_b" + exts[i]).c_str());
    const std::string ca = slurp(a), cb = slurp(b);
    if (ca.empty() || ca != cb) {
      detail = std::string(stems[i]) + " outputs differ between reruns";
      return false;
    }
  }
  detail = "simulate, localize and build-table reruns byte-identical (10 artifacts)";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  struct Row {
    const char* name;
    bool ok;
    std::string detail;
  };
  std::vector<Row> rows;

  const auto add = [&](const char* name, auto&& fn) {
    Row row{name, false, {}};
    try {
      row.ok = fn(row.detail);
    } catch (const std::exception& e) {
      row.detail = std::string("exception: ") + e.what();
    }
    rows.push_back(row);
    std::printf("%s  %2zu. %s (%s)\n", row.ok ? "PASS" : "FAIL", rows.size(), name,
                row.detail.c_str());
    std::fflush(stdout);
  };

  add("beam distributions sum to one across the parameter grid", criterion_normalization);
  add("incremental beam walk equals the event-tree reference", criterion_event_tree);
  add("sensor parameters recovered from sampled data within 10%", criterion_fit_round_trip);
  add("door corridor: uniform, split, shifted, then one mode at the right door",
      criterion_door_corridor);
  add("selective updates match full updates and converge sparse",
      criterion_selective_fidelity);
  add("table lookups at least 3x faster than ray-trace queries",
      criterion_lookup_speedup);
  add("distance filter survives a 50%-corrupting crowd that breaks no-filter",
      criterion_crowd_filters);
  add("kidnap runs: no-filter and distance recover, entropy clings",
      criterion_kidnap_recovery);
  add("converged error below the cell size at 15/30/60 cm", criterion_precision);
  add("grid sizing arithmetic", criterion_state_count);
  add("fixed-seed pipeline reruns are byte-identical",
      [&](std::string& d) { return criterion_determinism(cli, d); });

  int failures = 0;
  for (const Row& r : rows)
    if (!r.ok) ++failures;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(rows.size()) - failures,
              rows.size());
  return failures == 0 ? 0 : 1;
}
