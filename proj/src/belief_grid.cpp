#include "gridloc/belief_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gridloc {

namespace {

double normal_cdf(double x, double mean, double sigma) {
  return 0.5 * (1.0 + std::erf((x - mean) / (sigma * std::numbers::sqrt2_v<double>)));
}

// Integer offsets with Gaussian-integrated weights around a continuous
// displacement, tails cut at cutoff sigmas, renormalized.
struct OffsetWeights {
  int lo = 0;
  std::vector<double> w;
};

OffsetWeights gaussian_offsets(double displacement, double sigma, double cutoff,
                               double cell) {
  OffsetWeights out;
  if (sigma <= 0.0) {
    out.lo = static_cast<int>(std::llround(displacement / cell));
    out.w = {1.0};
    return out;
  }
  const double span = cutoff * sigma;
  const int lo = static_cast<int>(std::llround((displacement - span) / cell)) - 1;
  const int hi = static_cast<int>(std::llround((displacement + span) / cell)) + 1;
  out.lo = lo;
  out.w.resize(hi - lo + 1);
  double total = 0.0;
  for (int o = lo; o <= hi; ++o) {
    const double a = (o - 0.5) * cell;
    const double b = (o + 0.5) * cell;
    const double m = normal_cdf(b, displacement, sigma) - normal_cdf(a, displacement, sigma);
    out.w[o - lo] = m;
    total += m;
  }
  for (double& v : out.w) v /= total;
  return out;
}

}  // namespace

BeliefGrid BeliefGrid::make_frame(const OccupancyGrid& map, int theta_bins,
                                  double cell_size) {
  if (theta_bins < 1) throw std::invalid_argument("theta_bins must be at least 1");
  if (cell_size <= 0.0) cell_size = map.resolution();

  BeliefGrid b;
  b.cell_ = cell_size;
  b.ox_ = map.origin_x();
  b.oy_ = map.origin_y();
  b.nx_ = std::max(1, static_cast<int>(std::llround(map.width_m() / cell_size)));
  b.ny_ = std::max(1, static_cast<int>(std::llround(map.height_m() / cell_size)));
  b.ntheta_ = theta_bins;
  b.theta_res_ = kTau / theta_bins;
  b.values_.assign(static_cast<std::size_t>(b.nx_) * b.ny_ * theta_bins, 0.0);
  b.free_.assign(static_cast<std::size_t>(b.nx_) * b.ny_, 0);
  b.partitions_.assign(theta_bins, Partition{});

  for (int iy = 0; iy < b.ny_; ++iy) {
    for (int ix = 0; ix < b.nx_; ++ix) {
      const double cx = b.ox_ + (ix + 0.5) * cell_size;
      const double cy = b.oy_ + (iy + 0.5) * cell_size;
      const bool free = map.contains(cx, cy) &&
                        map.traversable(map.cell_x(cx), map.cell_y(cy));
      b.free_[static_cast<std::size_t>(iy) * b.nx_ + ix] = free ? 1 : 0;
      if (free) ++b.free_count_;
    }
  }
  if (b.free_count_ == 0) throw std::invalid_argument("map has no free cells");
  return b;
}

BeliefGrid BeliefGrid::uniform(const OccupancyGrid& map, int theta_bins, double cell_size) {
  BeliefGrid b = make_frame(map, theta_bins, cell_size);
  const double p = 1.0 / (static_cast<double>(b.free_count_) * theta_bins);
  for (int it = 0; it < theta_bins; ++it)
    for (int iy = 0; iy < b.ny_; ++iy)
      for (int ix = 0; ix < b.nx_; ++ix)
        if (b.free_at(ix, iy)) b.values_[b.linear_index(ix, iy, it)] = p;
  b.eps_ = 0.01 * p;
  return b;
}

BeliefGrid BeliefGrid::gaussian(const OccupancyGrid& map, int theta_bins, const Pose& mean,
                                double sigma_xy, double sigma_theta, double cell_size) {
  BeliefGrid b = make_frame(map, theta_bins, cell_size);
  if (sigma_xy <= 0.0 || sigma_theta <= 0.0)
    throw std::invalid_argument("gaussian prior needs positive sigmas");
  if (!map.contains(mean.x, mean.y))
    throw std::invalid_argument("gaussian prior mean outside the map");

  std::vector<double> gx(b.nx_), gy(b.ny_), gt(theta_bins);
  for (int ix = 0; ix < b.nx_; ++ix) {
    const double lo = b.ox_ + ix * b.cell_;
    gx[ix] = normal_cdf(lo + b.cell_, mean.x, sigma_xy) - normal_cdf(lo, mean.x, sigma_xy);
  }
  for (int iy = 0; iy < b.ny_; ++iy) {
    const double lo = b.oy_ + iy * b.cell_;
    gy[iy] = normal_cdf(lo + b.cell_, mean.y, sigma_xy) - normal_cdf(lo, mean.y, sigma_xy);
  }
  for (int it = 0; it < theta_bins; ++it) {
    const double lo = (it - 0.5) * b.theta_res_;
    double mass = 0.0;
    for (int k = -2; k <= 2; ++k) {
      const double m = wrap_angle(mean.theta) + k * kTau;
      mass += normal_cdf(lo + b.theta_res_, m, sigma_theta) - normal_cdf(lo, m, sigma_theta);
    }
    gt[it] = mass;
  }

  double total = 0.0;
  for (int it = 0; it < theta_bins; ++it)
    for (int iy = 0; iy < b.ny_; ++iy)
      for (int ix = 0; ix < b.nx_; ++ix)
        if (b.free_at(ix, iy)) {
          const double v = gx[ix] * gy[iy] * gt[it];
          b.values_[b.linear_index(ix, iy, it)] = v;
          total += v;
        }
  if (total <= 0.0)
    throw std::invalid_argument("gaussian prior has no mass on free cells");
  for (double& v : b.values_) v /= total;
  b.eps_ = 0.01 / (static_cast<double>(b.free_count_) * theta_bins);
  return b;
}

void BeliefGrid::set_value(int ix, int iy, int it, double v) {
  values_[linear_index(ix, iy, it)] = v;
  if (!partitions_[it].active) refresh_partition_cache(it);
}

int BeliefGrid::active_partition_count() const {
  int n = 0;
  for (const auto& p : partitions_)
    if (p.active) ++n;
  return n;
}

double BeliefGrid::total_mass() const {
  double s = 0.0;
  for (int it = 0; it < ntheta_; ++it) {
    const auto& p = partitions_[it];
    const double f = p.active ? 1.0 : std::exp(p.log_beta);
    if (f <= 0.0) continue;
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) s += values_[base + i] * f;
  }
  return s;
}

void BeliefGrid::scale_all(double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
  const double log_f = std::log(factor);
  for (int it = 0; it < ntheta_; ++it) {
    auto& p = partitions_[it];
    if (!p.active) {
      p.log_beta += log_f;
      continue;
    }
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) values_[base + i] *= factor;
  }
}

void BeliefGrid::renormalize() {
  const double s = total_mass();
  if (!(s >= kUnderflowLimit)) throw std::runtime_error("belief mass underflow");
  scale_all(1.0 / s);
}

std::pair<double, double> BeliefGrid::passive_sums() const {
  double s = 0.0, t = 0.0;
  for (const auto& p : partitions_) {
    if (p.active) continue;
    const double beta = std::exp(p.log_beta);
    if (beta <= 0.0 || p.stored_sum <= 0.0) continue;
    s += beta * p.stored_sum;
    t += beta * p.stored_vlogv + beta * p.log_beta * p.stored_sum;
  }
  return {s, t};
}

double BeliefGrid::entropy() const {
  double h = 0.0;
  for (int it = 0; it < ntheta_; ++it) {
    if (!partitions_[it].active) continue;
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = values_[base + i];
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  const auto [s, t] = passive_sums();
  (void)s;
  h -= t;
  return h;
}

BeliefGrid::MaxPosterior BeliefGrid::max_posterior() const {
  MaxPosterior best;
  best.prob = -1.0;
  for (int it = 0; it < ntheta_; ++it) {
    const auto& p = partitions_[it];
    const double f = p.active ? 1.0 : std::exp(p.log_beta);
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = values_[base + i] * f;
      if (v > best.prob) {
        best.prob = v;
        best.index = base + i;
      }
    }
  }
  const std::size_t layer_cells = static_cast<std::size_t>(nx_) * ny_;
  const int it = static_cast<int>(best.index / layer_cells);
  const std::size_t rem = best.index % layer_cells;
  const int iy = static_cast<int>(rem / nx_);
  const int ix = static_cast<int>(rem % nx_);
  best.pose = cell_pose(ix, iy, it);
  return best;
}

BeliefGrid::ActiveCellStats BeliefGrid::active_cell_stats() const {
  ActiveCellStats stats;
  for (int it = 0; it < ntheta_; ++it) {
    if (!partitions_[it].active) continue;
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = values_[base + i];
      if (v > eps_) {
        ++stats.cells;
        stats.mass += v;
      }
    }
  }
  stats.fraction = static_cast<double>(stats.cells) / static_cast<double>(state_count());
  return stats;
}

void BeliefGrid::collect_active_stats(PerceptionStats& stats) const {
  const ActiveCellStats a = active_cell_stats();
  stats.active_mass = a.mass;
  stats.active_fraction = a.fraction;
  stats.active_partitions = active_partition_count();
  stats.max_value = max_posterior().prob;
}

void BeliefGrid::refresh_partition_cache(int it) {
  auto& p = partitions_[it];
  const std::size_t base = linear_index(0, 0, it);
  const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
  double sum = 0.0, vlogv = 0.0, vmax = 0.0;
  std::size_t argmax = base;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = values_[base + i];
    sum += v;
    if (v > 0.0) vlogv += v * std::log(v);
    if (v > vmax) {
      vmax = v;
      argmax = base + i;
    }
  }
  p.stored_sum = sum;
  p.stored_vlogv = vlogv;
  p.p_max = vmax;
  p.p_max_index = argmax;
}

void BeliefGrid::deactivate_layer(int it, double layer_max, std::size_t argmax) {
  auto& p = partitions_[it];
  p.active = false;
  p.log_beta = 0.0;
  p.p_max = layer_max;
  p.p_max_index = argmax;
  p.a_deact = heading_offset_;
  p.ref_deact = ref_disp_;
  p.len_deact = path_len_;
  const std::size_t base = linear_index(0, 0, it);
  const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
  double sum = 0.0, vlogv = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = values_[base + i];
    sum += v;
    if (v > 0.0) vlogv += v * std::log(v);
  }
  p.stored_sum = sum;
  p.stored_vlogv = vlogv;
}

void BeliefGrid::flatten_partition(int it) {
  auto& p = partitions_[it];
  const double beta = std::exp(p.log_beta);
  const std::size_t base = linear_index(0, 0, it);
  const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
  for (std::size_t i = 0; i < count; ++i) values_[base + i] *= beta;
  p.log_beta = 0.0;
  refresh_partition_cache(it);
}

double BeliefGrid::reactivate_layer(int it) {
  auto& p = partitions_[it];
  const double beta = std::exp(p.log_beta);
  const double dlen = path_len_ - p.len_deact;
  const Vec2 dref{ref_disp_.x - p.ref_deact.x, ref_disp_.y - p.ref_deact.y};
  const std::size_t base = linear_index(0, 0, it);
  const std::size_t count = static_cast<std::size_t>(nx_) * ny_;

  double lost = 0.0;
  if (dlen > 1e-12 || dref.norm() > 1e-12) {
    // Replay the motion accumulated while passive as one composed step: a
    // shift by the dead-reckoned displacement rotated into this layer, plus a
    // Gaussian blur grown from the pending path length. Rotational noise that
    // would have spread into neighboring layers is folded into the blur.
    const double center = it * theta_res_;
    const Vec2 d = dref.rotated(center);
    const double da = heading_offset_ - p.a_deact;
    const double sigma = replay_noise_.trans_sigma_per_meter * dlen +
                         0.5 *
                             (replay_noise_.rot_sigma_per_meter * dlen +
                              replay_noise_.rot_sigma_per_radian * std::abs(da)) *
                             d.norm();
    const OffsetWeights wx = gaussian_offsets(d.x, sigma, replay_noise_.cutoff, cell_);
    const OffsetWeights wy = gaussian_offsets(d.y, sigma, replay_noise_.cutoff, cell_);

    scratch_.assign(values_.size(), 0.0);
    double lost_rel = 0.0;
    for (int iy = 0; iy < ny_; ++iy) {
      for (int ix = 0; ix < nx_; ++ix) {
        const double v = values_[base + static_cast<std::size_t>(iy) * nx_ + ix];
        if (v <= 0.0) continue;
        for (std::size_t a = 0; a < wx.w.size(); ++a) {
          const int tx = ix + wx.lo + static_cast<int>(a);
          if (tx < 0 || tx >= nx_) {
            lost_rel += v * wx.w[a];
            continue;
          }
          for (std::size_t c = 0; c < wy.w.size(); ++c) {
            const int ty = iy + wy.lo + static_cast<int>(c);
            const double m = v * wx.w[a] * wy.w[c];
            if (ty < 0 || ty >= ny_ || !free_at(tx, ty))
              lost_rel += m;
            else
              scratch_[base + static_cast<std::size_t>(ty) * nx_ + tx] += m;
          }
        }
      }
    }
    for (std::size_t i = 0; i < count; ++i) values_[base + i] = scratch_[base + i] * beta;
    lost = lost_rel * beta;
  } else {
    // Nothing pending: pure restore. beta == 1 keeps values bit-identical.
    for (std::size_t i = 0; i < count; ++i) values_[base + i] *= beta;
  }

  p.active = true;
  p.log_beta = 0.0;
  p.stored_sum = 0.0;
  p.stored_vlogv = 0.0;
  return lost;
}

void BeliefGrid::run_partition_sweeps(PerceptionStats& stats) {
  if (eps_ <= 0.0) return;

  // Park partitions whose every cell fell to epsilon or below. Keep at least
  // one partition active.
  for (int it = 0; it < ntheta_; ++it) {
    auto& p = partitions_[it];
    if (!p.active) continue;
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    double vmax = 0.0;
    std::size_t argmax = base;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = values_[base + i];
      if (v > vmax) {
        vmax = v;
        argmax = base + i;
      }
    }
    if (vmax <= eps_ && active_partition_count() > 1) deactivate_layer(it, vmax, argmax);
  }

  // Revive partitions whose scaled best cell climbed back over epsilon.
  double lost = 0.0;
  for (int it = 0; it < ntheta_; ++it) {
    auto& p = partitions_[it];
    if (p.active) continue;
    if (p.p_max * std::exp(p.log_beta) > eps_) {
      lost += reactivate_layer(it);
      ++stats.reactivated;
    }
  }
  if (stats.reactivated > 0 && lost > 0.0) renormalize();
}

void BeliefGrid::write_snapshot_pgm(std::ostream& os) const {
  std::vector<double> proj(static_cast<std::size_t>(nx_) * ny_, 0.0);
  double vmax = 0.0;
  for (int it = 0; it < ntheta_; ++it) {
    const auto& p = partitions_[it];
    const double f = p.active ? 1.0 : std::exp(p.log_beta);
    if (f <= 0.0) continue;
    const std::size_t base = linear_index(0, 0, it);
    for (int iy = 0; iy < ny_; ++iy)
      for (int ix = 0; ix < nx_; ++ix) {
        const double v = values_[base + static_cast<std::size_t>(iy) * nx_ + ix] * f;
        auto& cell = proj[static_cast<std::size_t>(iy) * nx_ + ix];
        if (v > cell) cell = v;
        if (v > vmax) vmax = v;
      }
  }
  os << "P2\n" << nx_ << ' ' << ny_ << "\n255\n";
  for (int iy = ny_ - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < nx_; ++ix) {
      const double v = proj[static_cast<std::size_t>(iy) * nx_ + ix];
      const int gray = vmax > 0.0 ? 255 - static_cast<int>(std::lround(255.0 * v / vmax)) : 255;
      os << gray << (ix + 1 < nx_ ? ' ' : '\n');
    }
  }
}

std::vector<CellRef> BeliefGrid::top_cells(int k) const {
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(state_count());
  for (int it = 0; it < ntheta_; ++it) {
    const auto& p = partitions_[it];
    const double f = p.active ? 1.0 : std::exp(p.log_beta);
    const std::size_t base = linear_index(0, 0, it);
    const std::size_t count = static_cast<std::size_t>(nx_) * ny_;
    for (std::size_t i = 0; i < count; ++i) all.emplace_back(values_[base + i] * f, base + i);
  }
  const std::size_t take = std::min<std::size_t>(k < 0 ? 0 : k, all.size());
  std::partial_sort(all.begin(), all.begin() + take, all.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<CellRef> out;
  out.reserve(take);
  const std::size_t layer_cells = static_cast<std::size_t>(nx_) * ny_;
  for (std::size_t i = 0; i < take; ++i) {
    CellRef ref;
    ref.itheta = static_cast<int>(all[i].second / layer_cells);
    const std::size_t rem = all[i].second % layer_cells;
    ref.iy = static_cast<int>(rem / nx_);
    ref.ix = static_cast<int>(rem % nx_);
    ref.value = all[i].first;
    out.push_back(ref);
  }
  return out;
}

}  // namespace gridloc
