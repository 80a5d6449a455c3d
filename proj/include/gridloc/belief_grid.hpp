#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "gridloc/grid_map.hpp"
#include "gridloc/motion_model.hpp"
#include "gridloc/util.hpp"

namespace gridloc {

struct PerceptionStats {
  bool ok = true;          // false on underflow; the belief is left untouched
  double alpha = 0.0;      // normalizer applied to every state
  int reactivated = 0;     // partitions brought back this update
  int active_partitions = 0;
  double active_mass = 0.0;      // mass in states above epsilon
  double active_fraction = 0.0;  // states above epsilon / all states
  double max_value = 0.0;
};

struct CellRef {
  int ix = 0, iy = 0, itheta = 0;
  double value = 0.0;
};

// Histogram over poses (x, y, theta). The theta axis is stored relative to
// the accumulated commanded rotation: a single scalar heading offset advances
// with odometry, so commanded turns cost nothing and never alias to the grid,
// while rotational noise diffuses across neighboring layers. Each theta layer
// is an update partition that can be switched passive; a passive layer keeps
// its values frozen and tracks the product of the normalizers it skipped in
// log space (beta), so a cell's effective probability is stored * beta.
class BeliefGrid {
 public:
  // Uniform over free states; epsilon defaults to 1% of the uniform prior.
  static BeliefGrid uniform(const OccupancyGrid& map, int theta_bins,
                            double cell_size = 0.0);
  // Separable Gaussian around a mean pose (per-cell integrals, wrapped in
  // theta), masked to free space and normalized.
  static BeliefGrid gaussian(const OccupancyGrid& map, int theta_bins, const Pose& mean,
                             double sigma_xy, double sigma_theta, double cell_size = 0.0);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int ntheta() const { return ntheta_; }
  double cell_size() const { return cell_; }
  double origin_x() const { return ox_; }
  double origin_y() const { return oy_; }
  double theta_res() const { return theta_res_; }
  std::size_t state_count() const { return values_.size(); }

  double heading_offset() const { return heading_offset_; }
  // Absolute heading represented by a layer right now.
  double layer_heading(int it) const { return wrap_angle(it * theta_res_ + heading_offset_); }
  Pose cell_pose(int ix, int iy, int it) const {
    return {ox_ + (ix + 0.5) * cell_, oy_ + (iy + 0.5) * cell_, layer_heading(it)};
  }

  std::size_t linear_index(int ix, int iy, int it) const {
    return (static_cast<std::size_t>(it) * ny_ + iy) * nx_ + ix;
  }

  double epsilon() const { return eps_; }
  void set_epsilon(double eps) { eps_ = eps; }
  void set_replay_noise(const MotionNoise& noise) { replay_noise_ = noise; }

  bool free_at(int ix, int iy) const { return free_[static_cast<std::size_t>(iy) * nx_ + ix] != 0; }
  int free_cell_count() const { return free_count_; }

  // Stored value, ignoring the passive-layer scale factor.
  double value_at(int ix, int iy, int it) const { return values_[linear_index(ix, iy, it)]; }
  void set_value(int ix, int iy, int it, double v);
  // Probability of a state, beta applied for passive layers.
  double effective_value(int ix, int iy, int it) const {
    const auto& p = partitions_[it];
    const double v = values_[linear_index(ix, iy, it)];
    return p.active ? v : v * std::exp(p.log_beta);
  }

  bool layer_active(int it) const { return partitions_[it].active; }
  double layer_beta(int it) const { return std::exp(partitions_[it].log_beta); }
  int active_partition_count() const;

  double total_mass() const;
  // Scales every state by factor (active values directly, passive via beta).
  void scale_all(double factor);
  // Rescales so the total mass is exactly 1. Throws if the mass underflows.
  void renormalize();

  double entropy() const;

  struct MaxPosterior {
    Pose pose;
    double prob = 0.0;
    std::size_t index = 0;
  };
  // Most probable state; ties resolve to the lowest linear index.
  MaxPosterior max_posterior() const;

  // One measurement update. likelihood(ix, iy, it) is evaluated only for
  // active-layer cells above epsilon; those are reweighted by
  // likelihood / p_avg, everything else shares the plain normalizer, and
  // passive partitions just fold the normalizer into beta. Afterwards,
  // partitions whose cells all dropped to epsilon or below are parked, and
  // passive partitions whose best cell climbed back over epsilon are revived
  // (pending motion replayed as one composed step, then values scaled by
  // beta). If the pre-normalization mass underflows (likelihood incompatible
  // with the belief everywhere), reports failure and leaves the belief as it
  // was; resetting is the caller's decision.
  template <class Fn>
  PerceptionStats apply_perception(Fn&& likelihood, double p_avg) {
    if (!(p_avg > 0.0)) throw std::invalid_argument("p_avg must be positive");
    scratch_.resize(values_.size());

    double s_active = 0.0;
    for (int it = 0; it < ntheta_; ++it) {
      if (!partitions_[it].active) continue;
      const std::size_t base = linear_index(0, 0, it);
      for (int iy = 0; iy < ny_; ++iy) {
        for (int ix = 0; ix < nx_; ++ix) {
          const std::size_t idx = base + static_cast<std::size_t>(iy) * nx_ + ix;
          const double v = values_[idx];
          const double nv = v > eps_ ? v * (likelihood(ix, iy, it) / p_avg) : v;
          scratch_[idx] = nv;
          s_active += nv;
        }
      }
    }
    double s_passive = 0.0;
    for (const auto& p : partitions_)
      if (!p.active) s_passive += p.stored_sum * std::exp(p.log_beta);

    PerceptionStats stats;
    const double s = s_active + s_passive;
    if (!(s >= kUnderflowLimit)) {
      stats.ok = false;
      return stats;
    }
    const double alpha = 1.0 / s;
    stats.alpha = alpha;

    for (int it = 0; it < ntheta_; ++it) {
      auto& p = partitions_[it];
      if (!p.active) {
        p.log_beta += std::log(alpha);
        continue;
      }
      const std::size_t base = linear_index(0, 0, it);
      const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
      for (std::size_t i = 0; i < count; ++i) values_[base + i] = scratch_[base + i] * alpha;
    }

    run_partition_sweeps(stats);
    collect_active_stats(stats);
    return stats;
  }

  // Entropy the belief would have after a measurement update, without
  // touching the belief. Same reweighting rule as apply_perception; passive
  // partitions enter through their cached sums in O(1).
  template <class Fn>
  bool trial_entropy(Fn&& likelihood, double p_avg, double* h_after) const {
    if (!(p_avg > 0.0)) throw std::invalid_argument("p_avg must be positive");
    double s = 0.0, t = 0.0;  // sum of v and of v*log(v) over unnormalized posterior
    for (int it = 0; it < ntheta_; ++it) {
      if (!partitions_[it].active) continue;
      const std::size_t base = linear_index(0, 0, it);
      for (int iy = 0; iy < ny_; ++iy) {
        for (int ix = 0; ix < nx_; ++ix) {
          const double v = values_[base + static_cast<std::size_t>(iy) * nx_ + ix];
          const double nv = v > eps_ ? v * (likelihood(ix, iy, it) / p_avg) : v;
          if (nv > 0.0) {
            s += nv;
            t += nv * std::log(nv);
          }
        }
      }
    }
    const auto [ps, pt] = passive_sums();
    s += ps;
    t += pt;
    if (!(s >= kUnderflowLimit)) return false;
    *h_after = std::log(s) - t / s;
    return true;
  }

  // (sum of effective values, sum of v*log(v)) over all passive layers,
  // computed from the per-partition caches.
  std::pair<double, double> passive_sums() const;

  // Visits active-layer cells (stored value == effective value there).
  template <class Fn>
  void for_each_active_cell(Fn&& fn) const {
    for (int it = 0; it < ntheta_; ++it) {
      if (!partitions_[it].active) continue;
      const std::size_t base = linear_index(0, 0, it);
      for (int iy = 0; iy < ny_; ++iy)
        for (int ix = 0; ix < nx_; ++ix)
          fn(ix, iy, it, values_[base + static_cast<std::size_t>(iy) * nx_ + ix]);
    }
  }

  // Visits passive-layer cells with their effective (beta-scaled) values.
  template <class Fn>
  void for_each_passive_cell(Fn&& fn) const {
    for (int it = 0; it < ntheta_; ++it) {
      const auto& p = partitions_[it];
      if (p.active) continue;
      const double beta = std::exp(p.log_beta);
      if (beta <= 0.0) continue;
      const std::size_t base = linear_index(0, 0, it);
      for (int iy = 0; iy < ny_; ++iy)
        for (int ix = 0; ix < nx_; ++ix)
          fn(ix, iy, it, values_[base + static_cast<std::size_t>(iy) * nx_ + ix] * beta);
    }
  }

  struct ActiveCellStats {
    std::size_t cells = 0;
    double mass = 0.0;
    double fraction = 0.0;
  };
  ActiveCellStats active_cell_stats() const;

  // Max-over-theta projection as an ASCII portable graymap; darker is more
  // likely. Rows are written north-up (maximum y first).
  void write_snapshot_pgm(std::ostream& os) const;
  // Top-k states by effective probability, descending (ties by index).
  std::vector<CellRef> top_cells(int k) const;

  friend PredictStats predict(BeliefGrid&, const OdometryReading&, const MotionNoise&,
                              Boundary);

 private:
  static constexpr double kUnderflowLimit = 1e-300;
  static constexpr double kFlattenLogBeta = -575.0;  // ~1e-250

  struct Partition {
    bool active = true;
    double log_beta = 0.0;
    double p_max = 0.0;          // best cell value at deactivation (or via inflow)
    std::size_t p_max_index = 0;
    double stored_sum = 0.0;     // cache of the frozen layer mass
    double stored_vlogv = 0.0;   // cache of sum v*log(v) over the frozen layer
    double a_deact = 0.0;        // heading offset snapshot
    Vec2 ref_deact;              // reference displacement snapshot
    double len_deact = 0.0;      // path length snapshot
  };

  BeliefGrid() = default;
  static BeliefGrid make_frame(const OccupancyGrid& map, int theta_bins, double cell_size);

  void run_partition_sweeps(PerceptionStats& stats);
  void deactivate_layer(int it, double layer_max, std::size_t argmax);
  // Returns mass lost to boundaries during replay.
  double reactivate_layer(int it);
  void refresh_partition_cache(int it);
  // Folds beta into the stored values of a deeply decayed passive layer.
  void flatten_partition(int it);

  int nx_ = 0, ny_ = 0, ntheta_ = 0;
  double cell_ = 0.0, ox_ = 0.0, oy_ = 0.0, theta_res_ = 0.0;
  double eps_ = 0.0;
  double heading_offset_ = 0.0;
  Vec2 ref_disp_;
  double path_len_ = 0.0;
  int free_count_ = 0;
  MotionNoise replay_noise_;
  std::vector<double> values_;
  std::vector<std::uint8_t> free_;
  std::vector<Partition> partitions_;
  mutable std::vector<double> scratch_;

  void collect_active_stats(PerceptionStats& stats) const;
};

}  // namespace gridloc
