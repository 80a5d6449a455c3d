#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "gridloc/grid_map.hpp"

namespace gridloc {

// Range measurements are discretized into n uniform bins of width delta_d.
// Bin i (1-based) covers [(i-1)*delta_d, i*delta_d) with representative
// distance (i - 1/2)*delta_d for i < n; bin n means "at or beyond max range"
// and max_range = n * delta_d by construction.
struct BeamModelParams {
  double sigma = 0.15;  // std-dev of the measurement Gaussian around the expected distance
  double c_r = 0.01;    // per-bin chance of a return from an unmapped obstacle
  double c_d = 0.9;     // chance the mapped obstacle produces a detection at all
  int n_bins = 64;
  double delta_d = 5.0 / 64.0;

  double max_range() const { return n_bins * delta_d; }

  static BeamModelParams create(double sigma, double c_r, double c_d, int n_bins,
                                double max_range);

  void validate() const;

  // 1-based bin of a measured distance, clamped into [1, n_bins].
  int measured_bin(double d) const;
  // Representative distance of a bin: center for 1..n-1, max_range for bin n.
  double bin_center(int bin) const;
};

// Discrete distribution over the n range bins for one expected distance.
struct BeamDistribution {
  std::vector<double> probs;  // probs[i] is bin i+1; sums to 1

  int n() const { return static_cast<int>(probs.size()); }
};

// Per-bin probability of a return caused by an unmapped obstacle, assuming a
// constant per-bin hazard: mass[i] = c_r * (1 - c_r)^i for bin i+1. The series
// is deliberately not normalized; the remainder is "no unmapped return".
std::vector<double> unknown_obstacle_mass(const BeamModelParams& params);

// Gaussian around the expected distance, integrated over each bin and
// renormalized over bins 1..n (out-of-range tails folded back in).
std::vector<double> known_obstacle_density(const BeamModelParams& params, double expected);

// Full per-bin measurement distribution for one expected distance: walks the
// bins combining "first unmapped return here" and "mapped detection here"
// events, then closes the final bin with the residual mass so the result sums
// to exactly 1. Tiny negative residuals from the independence approximation
// in extreme parameter corners are clamped to zero and renormalized.
BeamDistribution beam_distribution(const BeamModelParams& params, double expected);

struct FitResult {
  BeamModelParams params;
  double nll = 0.0;  // negative log-likelihood at the optimum
  int sweeps = 0;    // coordinate-descent sweeps performed
};

// Fits (sigma, c_r, c_d) to (expected, measured) distance pairs by maximum
// likelihood over the binned distribution, using coordinate descent with a
// golden-section line search per coordinate. Requires at least 1000 pairs;
// rejects degenerate data (all pairs identical).
FitResult fit_parameters(std::span<const std::pair<double, double>> pairs, int n_bins,
                         double max_range);
// Variant that picks max_range as the largest observed distance rounded up to
// half a meter (n_bins = 64).
FitResult fit_parameters(std::span<const std::pair<double, double>> pairs);

// Precomputed lookup structure: a 3-D table of expected-distance bins (one
// byte per entry) over (x cell, y cell, direction bin), plus an n x n
// likelihood table indexed by [expected bin][measured bin]. A likelihood
// query is two nested lookups instead of a ray cast.
class SensorTable {
 public:
  // Builds the table for a grid of cell_size-sized cells covering the map
  // extent, with theta_bins uniformly spaced direction bins (bin k centered
  // at k * tau / theta_bins). Requires n_bins <= 256. Refuses tables above
  // max_entries (memory guard).
  static SensorTable build(const OccupancyGrid& map, const BeamModelParams& params,
                           int theta_bins, double cell_size = 0.0,
                           std::size_t max_entries = std::size_t(1) << 26);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int theta_bins() const { return ntheta_; }
  double cell_size() const { return cell_; }
  double origin_x() const { return ox_; }
  double origin_y() const { return oy_; }
  const BeamModelParams& params() const { return params_; }

  // Nearest direction bin for an absolute angle.
  int theta_bin(double angle) const;

  // 1-based expected-distance bin stored for a cell and direction bin.
  int expected_bin(int ix, int iy, int tbin) const {
    return 1 + expected_[(static_cast<std::size_t>(tbin) * ny_ + iy) * nx_ + ix];
  }

  double likelihood(int expected_bin, int measured_bin) const {
    return like_[static_cast<std::size_t>(expected_bin - 1) * params_.n_bins +
                 (measured_bin - 1)];
  }

  // Probability that the mapped obstacle alone would have produced a reading
  // strictly beyond measured_bin (upper tail of the known-obstacle density).
  double p_beyond(int expected_bin, int measured_bin) const {
    return pshort_[static_cast<std::size_t>(expected_bin - 1) * params_.n_bins +
                   (measured_bin - 1)];
  }

  // Full query: resolves the pose to a cell, the absolute beam direction
  // (pose.theta + bearing) to a direction bin, the measurement to a bin, and
  // chains the two table lookups. Throws std::out_of_range off-map.
  double lookup_likelihood(const Pose& pose, const Beam& beam, double measured) const;

  // Likelihood of a measured bin averaged over a uniform prior on free-space
  // states. Requires attach_map (or build) to have seen the map.
  double average_likelihood(int measured_bin) const;
  const std::vector<double>& average_likelihood_row() const;

  // Recomputes the free-state average after load(); verifies geometry.
  void attach_map(const OccupancyGrid& map);

  // Binary blob: versioned little-endian header (magic, version, grid dims
  // and geometry, n, delta_d, beam parameters), then the expected-index bytes,
  // then the likelihood rows as 64-bit floats.
  void save(std::ostream& os) const;
  static SensorTable load(std::istream& is);

  bool cell_of(const Pose& pose, int& ix, int& iy) const;

 private:
  SensorTable() = default;
  void compute_rows();

  int nx_ = 0, ny_ = 0, ntheta_ = 0;
  double cell_ = 0.0, ox_ = 0.0, oy_ = 0.0;
  BeamModelParams params_;
  std::vector<std::uint8_t> expected_;  // bin-1 per (tbin, iy, ix)
  std::vector<double> like_;            // n x n, row = expected bin
  std::vector<double> pshort_;          // n x n upper tails of the known density
  std::vector<double> avg_;             // free-state average likelihood per bin
  bool has_avg_ = false;
};

}  // namespace gridloc
