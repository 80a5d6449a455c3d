#include "gridloc/sensor_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gridloc/util.hpp"

namespace gridloc {

namespace {

constexpr char kTableMagic[8] = {'G', 'L', 'O', 'C', 'S', 'T', 'B', 'L'};
constexpr std::uint32_t kTableVersion = 1;

double gaussian_cdf(double x, double mean, double sigma) {
  return 0.5 * (1.0 + std::erf((x - mean) / (sigma * std::numbers::sqrt2_v<double>)));
}

}  // namespace

BeamModelParams BeamModelParams::create(double sigma, double c_r, double c_d, int n_bins,
                                        double max_range) {
  if (n_bins < 2) throw std::invalid_argument("beam model needs at least 2 bins");
  if (max_range <= 0.0) throw std::invalid_argument("max_range must be positive");
  BeamModelParams p;
  p.sigma = sigma;
  p.c_r = c_r;
  p.c_d = c_d;
  p.n_bins = n_bins;
  p.delta_d = max_range / n_bins;
  p.validate();
  return p;
}

void BeamModelParams::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
  if (c_r < 0.0 || c_r > 1.0) throw std::invalid_argument("c_r must be in [0, 1]");
  if (c_d < 0.0 || c_d > 1.0) throw std::invalid_argument("c_d must be in [0, 1]");
  if (n_bins < 2) throw std::invalid_argument("n_bins must be at least 2");
  if (delta_d <= 0.0) throw std::invalid_argument("delta_d must be positive");
}

int BeamModelParams::measured_bin(double d) const {
  const int raw = static_cast<int>(d / delta_d) + 1;
  return std::clamp(raw, 1, n_bins);
}

double BeamModelParams::bin_center(int bin) const {
  if (bin >= n_bins) return max_range();
  return (bin - 0.5) * delta_d;
}

std::vector<double> unknown_obstacle_mass(const BeamModelParams& params) {
  std::vector<double> mass(params.n_bins, 0.0);
  double remaining = 1.0;  // probability that no unmapped return happened yet
  for (int i = 0; i < params.n_bins; ++i) {
    mass[i] = params.c_r * remaining;
    remaining -= mass[i];
  }
  return mass;
}

std::vector<double> known_obstacle_density(const BeamModelParams& params, double expected) {
  std::vector<double> density(params.n_bins, 0.0);
  double total = 0.0;
  for (int i = 0; i < params.n_bins; ++i) {
    const double lo = i * params.delta_d;
    const double hi = (i + 1) * params.delta_d;
    density[i] = gaussian_cdf(hi, expected, params.sigma) -
                 gaussian_cdf(lo, expected, params.sigma);
    total += density[i];
  }
  if (total <= 0.0) {
    // Expected distance so far outside the range window that every bin
    // underflows; park the mass in the nearest end bin.
    density[expected <= 0.0 ? 0 : params.n_bins - 1] = 1.0;
    return density;
  }
  for (double& d : density) d /= total;
  return density;
}

BeamDistribution beam_distribution(const BeamModelParams& params, double expected) {
  params.validate();
  const int n = params.n_bins;
  const std::vector<double> p_m = known_obstacle_density(params, expected);

  BeamDistribution dist;
  dist.probs.assign(n, 0.0);

  double cum_unknown = 0.0;   // unmapped-return mass before the current bin
  double cum_combined = 0.0;  // combined mass before the current bin
  for (int i = 0; i < n - 1; ++i) {
    const double a1 = 1.0 - cum_unknown;         // no unmapped return yet
    const double a2 = params.c_d * p_m[i];       // mapped detection lands here
    const double b1 = 1.0 - cum_combined;        // no return of any kind yet
    const double b2 = params.c_r;                // unmapped return hazard
    const double p = 1.0 - (1.0 - a1 * a2) * (1.0 - b1 * b2);
    dist.probs[i] = p;
    cum_combined += p;
    cum_unknown += params.c_r * (1.0 - cum_unknown);
  }
  dist.probs[n - 1] = 1.0 - cum_combined;  // residual: at or beyond max range

  double negative = 0.0;
  for (double p : dist.probs)
    if (p < 0.0) negative += p;
  if (negative < 0.0) {
    double total = 0.0;
    for (double& p : dist.probs) {
      if (p < 0.0) p = 0.0;
      total += p;
    }
    for (double& p : dist.probs) p /= total;
  }
  return dist;
}

namespace {

// Negative log-likelihood of the binned histogram under candidate parameters.
// counts[k][i]: measurements in bin i+1 whose expected distance fell in bin
// k+1; expected distances are collapsed to bin representatives.
double fit_nll(const std::vector<std::vector<std::int64_t>>& counts,
               const BeamModelParams& params) {
  double nll = 0.0;
  for (int k = 0; k < params.n_bins; ++k) {
    const auto& row = counts[k];
    if (row.empty()) continue;
    const BeamDistribution dist = beam_distribution(params, params.bin_center(k + 1));
    for (int i = 0; i < params.n_bins; ++i) {
      if (row[i] == 0) continue;
      if (dist.probs[i] <= 0.0) return std::numeric_limits<double>::infinity();
      nll -= static_cast<double>(row[i]) * std::log(dist.probs[i]);
    }
  }
  return nll;
}

double golden_section(double lo, double hi, double tol,
                      const std::function<double(double)>& f, double* best_val) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  const double fx = f(x);
  if (best_val) *best_val = fx;
  return x;
}

}  // namespace

FitResult fit_parameters(std::span<const std::pair<double, double>> pairs, int n_bins,
                         double max_range) {
  if (pairs.size() < 1000)
    throw std::invalid_argument("sensor fit needs at least 1000 (expected, measured) pairs");
  const auto& first = pairs.front();
  bool degenerate = true;
  for (const auto& p : pairs) {
    if (p.first != first.first || p.second != first.second) {
      degenerate = false;
      break;
    }
  }
  if (degenerate)
    throw std::invalid_argument("sensor fit data is degenerate: all pairs identical");

  BeamModelParams base = BeamModelParams::create(0.2, 0.01, 0.9, n_bins, max_range);
  std::vector<std::vector<std::int64_t>> counts(
      n_bins, std::vector<std::int64_t>(n_bins, 0));
  for (const auto& [expected, measured] : pairs) {
    if (expected < 0.0 || measured < 0.0)
      throw std::invalid_argument("sensor fit distances must be non-negative");
    if (expected > max_range || measured > max_range)
      throw std::invalid_argument("sensor fit distance exceeds max_range");
    counts[base.measured_bin(expected) - 1][base.measured_bin(measured) - 1]++;
  }

  const double sigma_lo = 0.25 * base.delta_d, sigma_hi = 0.5 * max_range;
  const double cr_lo = 0.0, cr_hi = 0.5;
  const double cd_lo = 0.0, cd_hi = 1.0;

  BeamModelParams cur = base;
  double cur_nll = fit_nll(counts, cur);
  int sweeps = 0;
  for (; sweeps < 12; ++sweeps) {
    const double before = cur_nll;

    cur.sigma = golden_section(
        sigma_lo, sigma_hi, 1e-5 * (sigma_hi - sigma_lo),
        [&](double s) {
          BeamModelParams p = cur;
          p.sigma = s;
          return fit_nll(counts, p);
        },
        &cur_nll);
    cur.c_r = golden_section(
        cr_lo, cr_hi, 1e-6 * (cr_hi - cr_lo),
        [&](double v) {
          BeamModelParams p = cur;
          p.c_r = v;
          return fit_nll(counts, p);
        },
        &cur_nll);
    cur.c_d = golden_section(
        cd_lo, cd_hi, 1e-6 * (cd_hi - cd_lo),
        [&](double v) {
          BeamModelParams p = cur;
          p.c_d = v;
          return fit_nll(counts, p);
        },
        &cur_nll);

    if (sweeps >= 2 && before - cur_nll < 1e-7 * (1.0 + std::abs(before))) {
      ++sweeps;
      break;
    }
  }

  FitResult result;
  result.params = cur;
  result.nll = cur_nll;
  result.sweeps = sweeps;
  return result;
}

FitResult fit_parameters(std::span<const std::pair<double, double>> pairs) {
  double top = 0.0;
  for (const auto& p : pairs) top = std::max({top, p.first, p.second});
  const double max_range = std::max(0.5, std::ceil(top * 2.0) / 2.0);
  return fit_parameters(pairs, 64, max_range);
}

SensorTable SensorTable::build(const OccupancyGrid& map, const BeamModelParams& params,
                               int theta_bins, double cell_size, std::size_t max_entries) {
  params.validate();
  if (theta_bins < 1) throw std::invalid_argument("theta_bins must be at least 1");
  if (params.n_bins > 256)
    throw std::invalid_argument("sensor table stores one byte per entry; n_bins must be <= 256");
  if (cell_size <= 0.0) cell_size = map.resolution();

  SensorTable table;
  table.cell_ = cell_size;
  table.ox_ = map.origin_x();
  table.oy_ = map.origin_y();
  table.nx_ = std::max(1, static_cast<int>(std::llround(map.width_m() / cell_size)));
  table.ny_ = std::max(1, static_cast<int>(std::llround(map.height_m() / cell_size)));
  table.ntheta_ = theta_bins;
  table.params_ = params;

  const std::size_t entries = static_cast<std::size_t>(table.nx_) * table.ny_ * theta_bins;
  if (entries > max_entries)
    throw std::invalid_argument("sensor table would exceed the configured memory cap");
  table.expected_.assign(entries, 0);

  const double theta_res = kTau / theta_bins;
  for (int tb = 0; tb < theta_bins; ++tb) {
    const double angle = tb * theta_res;
    for (int iy = 0; iy < table.ny_; ++iy) {
      for (int ix = 0; ix < table.nx_; ++ix) {
        Pose pose{table.ox_ + (ix + 0.5) * cell_size, table.oy_ + (iy + 0.5) * cell_size,
                  angle};
        const double d = ray_cast(map, pose, 0.0, params.max_range());
        table.expected_[(static_cast<std::size_t>(tb) * table.ny_ + iy) * table.nx_ + ix] =
            static_cast<std::uint8_t>(params.measured_bin(d) - 1);
      }
    }
  }

  table.compute_rows();
  table.attach_map(map);
  return table;
}

void SensorTable::compute_rows() {
  const int n = params_.n_bins;
  like_.assign(static_cast<std::size_t>(n) * n, 0.0);
  pshort_.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double expected = params_.bin_center(k + 1);
    const BeamDistribution dist = beam_distribution(params_, expected);
    std::copy(dist.probs.begin(), dist.probs.end(),
              like_.begin() + static_cast<std::size_t>(k) * n);
    const std::vector<double> p_m = known_obstacle_density(params_, expected);
    double tail = 0.0;
    for (int i = n - 1; i >= 0; --i) {
      pshort_[static_cast<std::size_t>(k) * n + i] = tail;
      tail += p_m[i];
    }
  }
}

int SensorTable::theta_bin(double angle) const {
  const double theta_res = kTau / ntheta_;
  const long long k = std::llround(wrap_angle(angle) / theta_res);
  return static_cast<int>(k % ntheta_);
}

bool SensorTable::cell_of(const Pose& pose, int& ix, int& iy) const {
  ix = static_cast<int>(std::floor((pose.x - ox_) / cell_));
  iy = static_cast<int>(std::floor((pose.y - oy_) / cell_));
  return ix >= 0 && iy >= 0 && ix < nx_ && iy < ny_;
}

double SensorTable::lookup_likelihood(const Pose& pose, const Beam& beam,
                                      double measured) const {
  int ix = 0, iy = 0;
  if (!cell_of(pose, ix, iy))
    throw std::out_of_range("lookup_likelihood pose outside table bounds");
  const int tb = theta_bin(pose.theta + beam.bearing);
  return likelihood(expected_bin(ix, iy, tb), params_.measured_bin(measured));
}

double SensorTable::average_likelihood(int measured_bin) const {
  return average_likelihood_row()[measured_bin - 1];
}

const std::vector<double>& SensorTable::average_likelihood_row() const {
  if (!has_avg_)
    throw std::logic_error("average likelihood needs a map; call attach_map first");
  return avg_;
}

void SensorTable::attach_map(const OccupancyGrid& map) {
  if (std::abs(map.width_m() - nx_ * cell_) > 0.5 * cell_ ||
      std::abs(map.height_m() - ny_ * cell_) > 0.5 * cell_ ||
      std::abs(map.origin_x() - ox_) > 1e-9 || std::abs(map.origin_y() - oy_) > 1e-9)
    throw std::invalid_argument("sensor table geometry does not match the map");

  const int n = params_.n_bins;
  std::vector<std::int64_t> hist(n, 0);
  std::int64_t total = 0;
  for (int tb = 0; tb < ntheta_; ++tb) {
    for (int iy = 0; iy < ny_; ++iy) {
      for (int ix = 0; ix < nx_; ++ix) {
        const double cx = ox_ + (ix + 0.5) * cell_;
        const double cy = oy_ + (iy + 0.5) * cell_;
        if (!map.contains(cx, cy) || !map.traversable(map.cell_x(cx), map.cell_y(cy)))
          continue;
        hist[expected_bin(ix, iy, tb) - 1]++;
        ++total;
      }
    }
  }
  if (total == 0) throw std::invalid_argument("map has no free cells");

  avg_.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    if (hist[k] == 0) continue;
    const double w = static_cast<double>(hist[k]) / static_cast<double>(total);
    for (int i = 0; i < n; ++i)
      avg_[i] += w * like_[static_cast<std::size_t>(k) * n + i];
  }
  has_avg_ = true;
}

void SensorTable::save(std::ostream& os) const {
  os.write(kTableMagic, sizeof(kTableMagic));
  write_u32(os, kTableVersion);
  write_u32(os, static_cast<std::uint32_t>(nx_));
  write_u32(os, static_cast<std::uint32_t>(ny_));
  write_u32(os, static_cast<std::uint32_t>(ntheta_));
  write_u32(os, static_cast<std::uint32_t>(params_.n_bins));
  write_f64(os, params_.delta_d);
  write_f64(os, cell_);
  write_f64(os, ox_);
  write_f64(os, oy_);
  write_f64(os, params_.sigma);
  write_f64(os, params_.c_r);
  write_f64(os, params_.c_d);
  os.write(reinterpret_cast<const char*>(expected_.data()),
           static_cast<std::streamsize>(expected_.size()));
  for (double v : like_) write_f64(os, v);
  if (!os) throw std::runtime_error("failed writing sensor table blob");
}

SensorTable SensorTable::load(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kTableMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a sensor table blob (bad magic)");
  const std::uint32_t version = read_u32(is);
  if (version != kTableVersion)
    throw std::runtime_error("unsupported sensor table version " + std::to_string(version));

  SensorTable table;
  table.nx_ = static_cast<int>(read_u32(is));
  table.ny_ = static_cast<int>(read_u32(is));
  table.ntheta_ = static_cast<int>(read_u32(is));
  const int n = static_cast<int>(read_u32(is));
  const double delta_d = read_f64(is);
  table.cell_ = read_f64(is);
  table.ox_ = read_f64(is);
  table.oy_ = read_f64(is);
  table.params_.sigma = read_f64(is);
  table.params_.c_r = read_f64(is);
  table.params_.c_d = read_f64(is);
  table.params_.n_bins = n;
  table.params_.delta_d = delta_d;
  table.params_.validate();
  if (table.nx_ < 1 || table.ny_ < 1 || table.ntheta_ < 1 || n < 2 || n > 256)
    throw std::runtime_error("sensor table blob has implausible dimensions");

  const std::size_t entries =
      static_cast<std::size_t>(table.nx_) * table.ny_ * table.ntheta_;
  table.expected_.resize(entries);
  is.read(reinterpret_cast<char*>(table.expected_.data()),
          static_cast<std::streamsize>(entries));
  if (!is) throw std::runtime_error("truncated sensor table blob (expected indices)");
  for (std::uint8_t b : table.expected_)
    if (b >= n) throw std::runtime_error("sensor table blob has out-of-range bin index");

  table.like_.resize(static_cast<std::size_t>(n) * n);
  for (double& v : table.like_) v = read_f64(is);

  // Likelihood rows are carried verbatim; the known-density tails are cheap
  // to recompute from the stored parameters.
  std::vector<double> like = std::move(table.like_);
  table.compute_rows();
  table.like_ = std::move(like);
  return table;
}

}  // namespace gridloc
